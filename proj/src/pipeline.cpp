#include "olg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "olg/errors.hpp"
#include "olg/welfare.hpp"

namespace olg {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fam(PolicyFamily f) { return std::string(family_name(f)); }

std::string ckpt_file(PolicyFamily f) { return "ckpt_" + fam(f) + ".bin"; }
std::string tag(PolicyFamily f, SurrogateMode m) { return fam(f) + "_" + mode_name(m); }

std::ofstream open_out(const fs::path& p) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ProvenanceError("cannot write " + p.string());
    out.precision(17);
    return out;
}

std::ifstream open_in(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ProvenanceError("cannot read " + p.string());
    return in;
}

std::string birth_label(std::size_t b) { return std::to_string(kFirstBirth + static_cast<int>(b)); }

std::string join(const std::vector<double>& v) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
    return os.str();
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

}  // namespace

std::string train_stage(PolicyFamily family) { return "train/" + fam(family); }
std::string metrics_stage(PolicyFamily family) { return "metrics/" + fam(family); }
std::string surrogate_stage(PolicyFamily family, SurrogateMode mode) {
    return "surrogate/" + fam(family) + "/" + mode_name(mode);
}
std::string optimize_stage(PolicyFamily family, SurrogateMode mode) {
    return "optimize/" + fam(family) + "/" + mode_name(mode);
}
std::string simulate_stage(PolicyFamily family, std::optional<SurrogateMode> mode) {
    return "simulate/" + fam(family) + (mode ? "/" + mode_name(*mode) : std::string("/manual"));
}

DeqnModel load_model(const Manifest& manifest, PolicyFamily family, const RunConfig& config) {
    manifest.require(train_stage(family));
    const Checkpoint ck = load_checkpoint(manifest.dir() / ckpt_file(family));
    DeqnModel model = DeqnModel::from_checkpoint(ck, config.econ, config.climate);
    if (model.family() != family) throw ProvenanceError("checkpoint " + ckpt_file(family) + " holds another family");
    return model;
}

CohortVector load_baseline(const Manifest& manifest) {
    manifest.require(kBaselineStage);
    auto in = open_in(manifest.dir() / "u_bau.csv");
    std::string line;
    std::getline(in, line);
    CohortVector u{};
    for (std::size_t b = 0; b < kBirthCohorts; ++b) {
        if (!std::getline(in, line)) throw ProvenanceError("u_bau.csv is truncated");
        const auto cells = split_csv(line);
        if (cells.size() != 2 || cells[0] != birth_label(b)) throw ProvenanceError("u_bau.csv row " + birth_label(b) + " is malformed");
        u[b] = std::stod(cells[1]);
    }
    return u;
}

std::vector<GpModel> load_surrogates(const Manifest& manifest, PolicyFamily family, SurrogateMode mode) {
    manifest.require(surrogate_stage(family, mode));
    auto in = open_in(manifest.dir() / ("gp_" + tag(family, mode) + ".gp"));
    std::string head;
    std::size_t n = 0;
    in >> head >> n;
    in.get();
    if (head != "OLGGPSET" || n == 0) throw ProvenanceError("GP model file has no model set header");
    std::vector<GpModel> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(GpModel::load(in));
    return out;
}

std::vector<double> load_optimum(const Manifest& manifest, PolicyFamily family, SurrogateMode mode) {
    manifest.require(optimize_stage(family, mode));
    auto in = open_in(manifest.dir() / ("opt_" + tag(family, mode) + ".json"));
    try {
        return json::parse(in).at("theta_star").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ProvenanceError(std::string("optimizer result is malformed: ") + e.what());
    }
}

void cmd_train(const RunConfig& config, PolicyFamily family, std::ostream& log) {
    Manifest manifest = Manifest::open(config.out_dir);
    const SamplingSpec spec = config.sampling_for(family);
    const std::string log_name = "train_log_" + fam(family) + ".csv";
    auto csv = open_out(config.out_dir / log_name);
    csv << "episode,loss,drops,penalized,aborted\n";
    const auto cb = [&](const EpisodeLog& e, const DeqnModel&, const AdamState&) {
        csv << e.episode << ',' << e.loss << ',' << e.drops << ',' << e.penalized << ',' << (e.aborted ? 1 : 0) << '\n';
        if (e.episode % 50 == 0 || e.aborted) {
            log << "  episode " << e.episode << " loss " << e.loss << " drops " << e.drops
                << (e.aborted ? " (skipped)" : "") << std::endl;
        }
    };
    TrainResult res;
    {
        TrainConfig tc = config.train;
        // Pseudo-state families and BAU share the training settings; only the box differs.
        res = train(tc, spec, config.train_seed, cb);
    }
    csv.close();
    const std::uint64_t episodes = res.log.empty() ? 0 : res.log.back().episode + 1;
    save_checkpoint(config.out_dir / ckpt_file(family), res.model.net(), res.adam,
                    res.model.meta(config.train_seed, episodes));
    const std::string status = res.aborted ? "aborted" : (res.converged ? "converged" : "budget");
    manifest.record(train_stage(family), config_hash(config), {ckpt_file(family), log_name}, {},
                    {{"train_seed", std::to_string(config.train_seed)},
                     {"episodes", std::to_string(episodes)},
                     {"status", status},
                     {"message", res.message}});
    log << "train " << fam(family) << ": " << status << " after " << episodes << " episodes; " << res.message << "\n";
    if (res.aborted) throw NumericalError("training aborted: " + res.message);
}

void cmd_metrics(const RunConfig& config, PolicyFamily family, std::ostream& log) {
    Manifest manifest = Manifest::open(config.out_dir);
    const DeqnModel model = load_model(manifest, family, config);
    const AccuracyReport rep = accuracy_metrics(model, config.sampling_for(family), config.metrics.n_paths,
                                                config.metrics.horizon_periods, config.sim_seed);
    const std::string name = "metrics_" + fam(family) + ".csv";
    auto csv = open_out(config.out_dir / name);
    csv << "generation,ee_mean,ee_p999,v_mean,v_p999\n";
    for (std::size_t j = 0; j < kChoices; ++j) {
        const auto& g = rep.generations[j];
        csv << j + 1 << ',' << g.ee_mean << ',' << g.ee_p999 << ',' << g.v_mean << ',' << g.v_p999 << '\n';
        log << "  generation " << j + 1 << " ee mean " << g.ee_mean << " p99.9 " << g.ee_p999 << "\n";
    }
    csv.close();
    manifest.record(metrics_stage(family), config_hash(config), {name}, {train_stage(family)},
                    {{"sim_seed", std::to_string(config.sim_seed)},
                     {"n_paths", std::to_string(config.metrics.n_paths)},
                     {"states", std::to_string(rep.states)},
                     {"penalized", std::to_string(rep.penalized)}});
}

void cmd_baseline(const RunConfig& config, std::ostream& log) {
    Manifest manifest = Manifest::open(config.out_dir);
    const DeqnModel model = load_model(manifest, PolicyFamily::Bau, config);
    const PathEnsemble ens = simulate_paths(model, {}, config.sim.n_paths, kWelfareHorizon, config.sim_seed);
    const CohortVector u = cohort_utilities(ens, config.econ);
    auto csv = open_out(config.out_dir / "u_bau.csv");
    csv << "birth_period,u_bau\n";
    for (std::size_t b = 0; b < kBirthCohorts; ++b) csv << birth_label(b) << ',' << u[b] << '\n';
    csv.close();
    manifest.record(kBaselineStage, config_hash(config), {"u_bau.csv"}, {train_stage(PolicyFamily::Bau)},
                    {{"sim_seed", std::to_string(config.sim_seed)},
                     {"n_paths", std::to_string(config.sim.n_paths)},
                     {"excluded", std::to_string(ens.excluded)}});
    log << "baseline: " << config.sim.n_paths << " paths, " << ens.excluded << " excluded\n";
}

void cmd_surrogate(const RunConfig& config, std::ostream& log) {
    if (config.scheme == PolicyFamily::Bau) throw ConfigError("surrogate: BAU has no policy parameters");
    Manifest manifest = Manifest::open(config.out_dir);
    const PolicyFamily family = config.scheme;
    const SurrogateMode mode = config.surrogate.mode;
    const DeqnModel model = load_model(manifest, family, config);
    const std::string ckpt_hash = manifest.require(train_stage(family)).files.at(ckpt_file(family));
    const SamplingSpec& spec = config.sampling;
    const CohortVector gamma = config.gamma();

    const ObjectiveOracle oracle = [&](const std::vector<double>& theta) -> std::optional<std::vector<double>> {
        try {
            const PathEnsemble ens =
                simulate_paths(model, theta, config.surrogate.oracle_paths, kWelfareHorizon, config.sim_seed);
            const CohortVector u = cohort_utilities(ens, config.econ);
            std::vector<double> out{swf(u, gamma)};
            out.insert(out.end(), u.begin(), u.end());
            return out;
        } catch (const NumericalError& e) {
            log << "  oracle skipped a point: " << e.what() << "\n";
            return std::nullopt;
        }
    };
    const DomainSampler sampler = [&](std::size_t n, RngStream& rng) { return sample_pseudo_states(spec, n, rng); };
    BalConfig bal = config.surrogate.bal;
    bal.fit.seed = config.gp_seed;
    RngStream rng(config.gp_seed, 0);
    const BalResult res = bal_loop(oracle, sampler, spec.theta_lo(), spec.theta_hi(), bal, rng);
    log << "surrogate " << tag(family, mode) << ": " << res.inputs.size() << " points, " << res.acquired
        << " acquired, " << res.skipped << " skipped, final LOO " << res.loo_history.back() << "\n";

    std::vector<GpModel> models{res.model};
    if (mode == SurrogateMode::Pareto) {
        // One GP per birth cohort over the same design, warm-started from the aggregate fit.
        models.clear();
        const auto n = static_cast<Eigen::Index>(res.inputs.size());
        Eigen::MatrixXd X(n, static_cast<Eigen::Index>(spec.theta_lo().size()));
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index q = 0; q < X.cols(); ++q) X(i, q) = res.inputs[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)];
        }
        GpFitOptions fit = bal.fit;
        fit.restarts = config.surrogate.cohort_fit_restarts;
        fit.warm_start = res.model.hyperparams();
        for (std::size_t b = 0; b < kBirthCohorts; ++b) {
            Eigen::VectorXd y(n);
            for (Eigen::Index i = 0; i < n; ++i) y(i) = res.outputs[static_cast<std::size_t>(i)][1 + b];
            fit.seed = config.gp_seed + 1 + b;
            models.push_back(fit_gp(X, y, spec.theta_lo(), spec.theta_hi(), fit));
        }
        double worst = 0.0;
        for (const auto& m : models) worst = std::max(worst, m.loo_cv_error());
        log << "  fitted 40 cohort GPs, worst LOO " << worst << "\n";
    }

    const std::string data_name = "gp_data_" + tag(family, mode) + ".csv";
    auto csv = open_out(config.out_dir / data_name);
    for (const auto& nm : theta_names(family)) csv << nm << ',';
    csv << "swf";
    if (mode == SurrogateMode::Pareto) {
        for (std::size_t b = 0; b < kBirthCohorts; ++b) csv << ",u_" << birth_label(b);
    }
    csv << ",sim_seed,n_paths,checkpoint_sha256\n";
    for (std::size_t i = 0; i < res.inputs.size(); ++i) {
        for (double x : res.inputs[i]) csv << x << ',';
        csv << res.outputs[i][0];
        if (mode == SurrogateMode::Pareto) {
            for (std::size_t b = 0; b < kBirthCohorts; ++b) csv << ',' << res.outputs[i][1 + b];
        }
        csv << ',' << config.sim_seed << ',' << config.surrogate.oracle_paths << ',' << ckpt_hash << '\n';
    }
    csv.close();
    const std::string model_name = "gp_" + tag(family, mode) + ".gp";
    auto gp = open_out(config.out_dir / model_name);
    gp << "OLGGPSET " << models.size() << "\n";
    for (const auto& m : models) m.save(gp);
    gp.close();

    std::ostringstream loo;
    loo.precision(6);
    for (std::size_t i = 0; i < res.loo_history.size(); ++i) loo << (i ? " " : "") << res.loo_history[i];
    manifest.record(surrogate_stage(family, mode), config_hash(config), {data_name, model_name}, {train_stage(family)},
                    {{"gp_seed", std::to_string(config.gp_seed)},
                     {"sim_seed", std::to_string(config.sim_seed)},
                     {"oracle_paths", std::to_string(config.surrogate.oracle_paths)},
                     {"loo_history", loo.str()}});
}

void cmd_optimize(const RunConfig& config, std::ostream& log) {
    Manifest manifest = Manifest::open(config.out_dir);
    const PolicyFamily family = config.scheme;
    const SurrogateMode mode = config.surrogate.mode;
    const auto models = load_surrogates(manifest, family, mode);
    const SamplingSpec& spec = config.sampling;
    RngStream rng(config.opt_seed, 0);
    const auto starts = generate_starts(spec, config.optimizer.n_starts, rng);
    const ConstraintSet cs = policy_constraints(spec);
    std::vector<std::string> upstream{surrogate_stage(family, mode)};
    OptResult res;
    if (mode == SurrogateMode::Welfare) {
        res = maximize_welfare(gp_mean_objective(models.front()), cs, starts, config.optimizer.options);
    } else {
        const CohortVector ub = load_baseline(manifest);
        const CohortVector g = config.gamma();
        res = maximize_pareto(models, {g.begin(), g.end()}, {ub.begin(), ub.end()}, cs, starts, spec, rng,
                              config.optimizer.options);
        upstream.push_back(kBaselineStage);
    }
    json starts_json = json::array();
    for (const auto& s : res.starts) {
        starts_json.push_back({{"start", s.start}, {"x", s.x}, {"f", s.f}, {"converged", s.converged},
                               {"feasible", s.feasible}, {"iterations", s.iterations}});
    }
    const json doc{{"scheme", fam(family)},
                   {"mode", mode_name(mode)},
                   {"theta_names", theta_names(family)},
                   {"theta_star", res.theta_star},
                   {"objective", res.objective},
                   {"max_violation", res.feasibility.max_violation},
                   {"worst_constraint", res.feasibility.worst},
                   {"consensus", res.consensus},
                   {"consensus_spread", res.consensus_spread},
                   {"converged_starts", res.converged_starts},
                   {"starts", starts_json}};
    const std::string name = "opt_" + tag(family, mode) + ".json";
    auto out = open_out(config.out_dir / name);
    out << doc.dump(2) << "\n";
    out.close();
    manifest.record(optimize_stage(family, mode), config_hash(config), {name}, upstream,
                    {{"opt_seed", std::to_string(config.opt_seed)}, {"n_starts", std::to_string(starts.size())}});
    log << "optimize " << tag(family, mode) << ": theta* = [" << join(res.theta_star) << "], objective "
        << res.objective << ", consensus " << (res.consensus ? "yes" : "no") << " (" << res.converged_starts
        << " converged starts)\n";
}

void cmd_simulate(const RunConfig& config, PolicyFamily family, const std::optional<std::vector<double>>& theta,
                  std::ostream& log) {
    Manifest manifest = Manifest::open(config.out_dir);
    const DeqnModel model = load_model(manifest, family, config);
    std::vector<std::string> upstream{train_stage(family)};
    std::optional<SurrogateMode> mode;
    std::vector<double> th;
    if (family == PolicyFamily::Bau) {
        if (theta && !theta->empty()) throw ConfigError("simulate: BAU takes no theta");
        mode = std::nullopt;
    } else if (theta) {
        th = *theta;
    } else {
        mode = config.surrogate.mode;
        th = load_optimum(manifest, family, *mode);
        upstream.push_back(optimize_stage(family, *mode));
    }
    const PathEnsemble ens = simulate_paths(model, th, config.sim.n_paths, config.sim.horizon_periods, config.sim_seed);
    const std::string label =
        family == PolicyFamily::Bau ? std::string("bau") : (mode ? tag(family, *mode) : fam(family) + "_manual");
    const std::string stage = family == PolicyFamily::Bau ? std::string("simulate/bau") : simulate_stage(family, mode);

    std::vector<std::string> files{"fan_" + label + ".csv"};
    {
        auto out = open_out(config.out_dir / files[0]);
        write_fan_csv(out, fan_stats(ens), config.climate.period_years);
    }
    std::map<std::string, std::string> info{{"sim_seed", std::to_string(config.sim_seed)},
                                            {"n_paths", std::to_string(config.sim.n_paths)},
                                            {"excluded", std::to_string(ens.excluded)},
                                            {"theta", join(th)}};
    if (manifest.has(kBaselineStage)) {
        const CohortVector ub = load_baseline(manifest);
        const CohortWelfare w = compare_welfare(cohort_utilities(ens, config.econ), ub, config.gamma(), config.econ);
        files.push_back("cohorts_" + label + ".csv");
        auto out = open_out(config.out_dir / files[1]);
        write_cohort_csv(out, w);
        upstream.push_back(kBaselineStage);
        std::ostringstream agg;
        agg.precision(17);
        agg << w.aggregate_cev;
        info["aggregate_cev"] = agg.str();
        log << "simulate " << label << ": aggregate CEV " << 100.0 * w.aggregate_cev << "%, worst cohort CEV "
            << 100.0 * *std::min_element(w.cev.begin(), w.cev.end()) << "%\n";
    } else {
        log << "simulate " << label << ": no baseline yet, cohort CSV skipped\n";
    }
    manifest.record(stage, config_hash(config), files, upstream, info);
}

std::string cmd_report(const fs::path& run_dir, std::ostream& log) {
    Manifest manifest = Manifest::open(run_dir);
    if (manifest.records().empty()) throw ProvenanceError("no manifest in " + run_dir.string());
    const auto problems = manifest.verify_all();
    if (!problems.empty()) {
        for (const auto& p : problems) log << "provenance: " << p << "\n";
        throw ProvenanceError(std::to_string(problems.size()) + " broken provenance link(s); first: " + problems.front());
    }
    std::ostringstream rep;
    rep << std::fixed;
    rep << "run directory " << run_dir.string() << "\n";
    rep << "manifest sha256 " << sha256_file(run_dir / "manifest.json") << "\n\n";
    for (const auto& [stage, rec] : manifest.records()) {
        rep << stage << "  digest " << rec.digest().substr(0, 16) << "  created " << rec.created << "\n";
    }
    rep << "\n";

    struct Row {
        std::string label;
        double aggregate = 0.0;
        double worst = 0.0;
        int worst_birth = 0;
        double tau0 = 0.0;
        std::string theta;
    };
    std::vector<Row> rows;
    for (const auto& [stage, rec] : manifest.records()) {
        if (stage.rfind("simulate/", 0) != 0) continue;
        std::string cohort_file;
        for (const auto& [f, h] : rec.files) {
            if (f.rfind("cohorts_", 0) == 0) cohort_file = f;
        }
        if (cohort_file.empty()) continue;
        Row row;
        row.label = stage.substr(9);
        row.theta = rec.info.count("theta") ? rec.info.at("theta") : "";
        row.aggregate = rec.info.count("aggregate_cev") ? std::stod(rec.info.at("aggregate_cev")) : 0.0;
        auto in = open_in(run_dir / cohort_file);
        std::string line;
        std::getline(in, line);
        row.worst = INFINITY;
        rep << "per-cohort CEV (%) for " << row.label << ":\n";
        int k = 0;
        while (std::getline(in, line)) {
            const auto cells = split_csv(line);
            const double c = std::stod(cells.at(3));
            if (c < row.worst) {
                row.worst = c;
                row.worst_birth = std::stoi(cells.at(0));
            }
            rep << std::setw(5) << cells.at(0) << std::setw(9) << std::setprecision(3) << 100.0 * c
                << ((++k % 5 == 0) ? "\n" : "  ");
        }
        std::string fan_file;
        for (const auto& [f, h] : rec.files) {
            if (f.rfind("fan_", 0) == 0) fan_file = f;
        }
        auto fin = open_in(run_dir / fan_file);
        while (std::getline(fin, line)) {
            const auto cells = split_csv(line);
            if (cells.size() > 3 && cells[0] == "0" && cells[2] == "tax") row.tau0 = std::stod(cells[3]);
        }
        rep << "\n";
        rows.push_back(row);
    }
    if (!rows.empty()) {
        rep << "welfare comparison\n";
        rep << std::left << std::setw(34) << "policy" << std::right << std::setw(14) << "aggregate CEV" << std::setw(14)
            << "worst cohort" << std::setw(8) << "birth" << std::setw(12) << "tax t=0" << std::setw(14) << "Pareto check"
            << "\n";
        for (const auto& r : rows) {
            const bool pareto = r.label.find("/pareto") != std::string::npos;
            rep << std::left << std::setw(34) << r.label << std::right << std::setw(13) << std::setprecision(3)
                << 100.0 * r.aggregate << "%" << std::setw(13) << 100.0 * r.worst << "%" << std::setw(8) << r.worst_birth
                << std::setw(12) << std::setprecision(4) << r.tau0 << std::setw(14)
                << (pareto ? (r.worst >= kParetoCevTolerance ? "pass" : "FAIL") : "-") << "\n";
        }
        const auto find = [&](const std::string& l) -> const Row* {
            for (const auto& r : rows) {
                if (r.label == l) return &r;
            }
            return nullptr;
        };
        const Row* two = find("linear_e_transfers/pareto");
        const Row* four = find("full_linear/pareto");
        if (two && four) {
            rep << "\nPareto-improving policies\n" << std::setw(20) << "" << std::setw(16) << "2 instruments"
                << std::setw(16) << "4 instruments" << "\n"
                << std::left << std::setw(20) << "aggregate CEV" << std::right << std::setw(15) << std::setprecision(3)
                << 100.0 * two->aggregate << "%" << std::setw(15) << 100.0 * four->aggregate << "%\n";
        }
    }
    const std::string text = rep.str();
    {
        auto out = open_out(run_dir / "report.txt");
        out << text;
    }
    log << text;
    return text;
}

}  // namespace olg
