#include "olg/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "olg/errors.hpp"
#include "olg/manifest.hpp"

namespace olg {

namespace {

using nlohmann::json;

struct Field {
    std::string key;
    std::function<json(const RunConfig&)> get;
    std::function<void(RunConfig&, const json&)> set;
};

double as_double(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError(key + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(key + ": must be finite");
    return x;
}

std::uint64_t as_uint(const json& v, const std::string& key) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        throw ConfigError(key + ": expected a nonnegative integer");
    }
    return v.get<std::uint64_t>();
}

std::vector<double> as_doubles(const json& v, const std::string& key) {
    if (!v.is_array()) throw ConfigError(key + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) out.push_back(as_double(x, key));
    return out;
}

template <class Access>
Field real(std::string key, Access acc) {
    return {key, [acc](const RunConfig& c) { return json(acc(const_cast<RunConfig&>(c))); },
            [acc, key](RunConfig& c, const json& v) { acc(c) = as_double(v, key); }};
}

template <class Access>
Field count(std::string key, Access acc) {
    return {key, [acc](const RunConfig& c) { return json(static_cast<std::uint64_t>(acc(const_cast<RunConfig&>(c)))); },
            [acc, key](RunConfig& c, const json& v) {
                using T = std::remove_reference_t<decltype(acc(c))>;
                acc(c) = static_cast<T>(as_uint(v, key));
            }};
}

template <class Access>
Field flag(std::string key, Access acc) {
    return {key, [acc](const RunConfig& c) { return json(acc(const_cast<RunConfig&>(c))); },
            [acc, key](RunConfig& c, const json& v) {
                if (!v.is_boolean()) throw ConfigError(key + ": expected true or false");
                acc(c) = v.get<bool>();
            }};
}

template <class Access>
Field reals(std::string key, Access acc) {
    return {key, [acc](const RunConfig& c) { return json(acc(const_cast<RunConfig&>(c))); },
            [acc, key](RunConfig& c, const json& v) { acc(c) = as_doubles(v, key); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"scheme", [](const RunConfig& c) { return json(std::string(family_name(c.scheme))); },
                     [](RunConfig& c, const json& v) {
                         if (!v.is_string()) throw ConfigError("scheme: expected a string");
                         c.scheme = parse_family(v.get<std::string>());
                     }});
        f.push_back({"out_dir", [](const RunConfig& c) { return json(c.out_dir.generic_string()); },
                     [](RunConfig& c, const json& v) {
                         if (!v.is_string() || v.get<std::string>().empty()) {
                             throw ConfigError("out_dir: expected a non-empty string");
                         }
                         c.out_dir = v.get<std::string>();
                     }});
        f.push_back(flag("desk_scale", [](RunConfig& c) -> bool& { return c.desk_scale; }));

        f.push_back(real("econ.beta", [](RunConfig& c) -> double& { return c.econ.beta; }));
        f.push_back(real("econ.sigma", [](RunConfig& c) -> double& { return c.econ.sigma; }));
        f.push_back(real("econ.alpha", [](RunConfig& c) -> double& { return c.econ.alpha; }));
        f.push_back(real("econ.delta_per_period", [](RunConfig& c) -> double& { return c.econ.delta; }));
        f.push_back(real("econ.theta1", [](RunConfig& c) -> double& { return c.econ.theta1; }));
        f.push_back(real("econ.theta2", [](RunConfig& c) -> double& { return c.econ.theta2; }));
        f.push_back(real("econ.L_scale", [](RunConfig& c) -> double& { return c.econ.L_scale; }));
        f.push_back(real("econ.B_util", [](RunConfig& c) -> double& { return c.econ.B_util; }));

        f.push_back(real("climate.sigma_ccr_degC_per_TtC", [](RunConfig& c) -> double& { return c.climate.sigma_ccr; }));
        f.push_back(real("climate.psi1", [](RunConfig& c) -> double& { return c.climate.psi1; }));
        f.push_back(real("climate.E0_TtC", [](RunConfig& c) -> double& { return c.climate.E0; }));
        f.push_back(real("climate.TP_min_degC", [](RunConfig& c) -> double& { return c.climate.TP_min; }));
        f.push_back(real("climate.TP_max_degC", [](RunConfig& c) -> double& { return c.climate.TP_max; }));
        f.push_back(real("climate.TP0_degC", [](RunConfig& c) -> double& { return c.climate.TP0; }));
        f.push_back(real("climate.tip_exponent", [](RunConfig& c) -> double& { return c.climate.tip_exponent; }));
        f.push_back(real("climate.kappa0", [](RunConfig& c) -> double& { return c.climate.kappa0; }));
        f.push_back(real("climate.rho0", [](RunConfig& c) -> double& { return c.climate.rho0; }));
        f.push_back(real("climate.rho_inf", [](RunConfig& c) -> double& { return c.climate.rho_inf; }));
        f.push_back(real("climate.delta_rho_per_year", [](RunConfig& c) -> double& { return c.climate.delta_rho; }));
        f.push_back(real("climate.period_years", [](RunConfig& c) -> double& { return c.climate.period_years; }));
        f.push_back(real("climate.kappa_shock", [](RunConfig& c) -> double& { return c.climate.kappa_shock; }));
        f.push_back(real("climate.tp_shock_degC", [](RunConfig& c) -> double& { return c.climate.tp_shock; }));
        f.push_back(real("climate.zeta_per_year", [](RunConfig& c) -> double& { return c.climate.zeta; }));

        f.push_back(count("train.parallel_paths", [](RunConfig& c) -> std::size_t& { return c.train.parallel_paths; }));
        f.push_back(count("train.path_length_periods", [](RunConfig& c) -> std::size_t& { return c.train.path_length; }));
        f.push_back(count("train.minibatch", [](RunConfig& c) -> std::size_t& { return c.train.minibatch; }));
        f.push_back(real("train.lr", [](RunConfig& c) -> double& { return c.train.lr; }));
        f.push_back(count("train.episodes_max", [](RunConfig& c) -> std::size_t& { return c.train.episodes_max; }));
        f.push_back(real("train.loss_tol", [](RunConfig& c) -> double& { return c.train.loss_tol; }));
        f.push_back(count("train.hidden_width", [](RunConfig& c) -> std::size_t& { return c.train.hidden_width; }));
        f.push_back(count("train.hidden_layers", [](RunConfig& c) -> std::size_t& { return c.train.hidden_layers; }));
        f.push_back(count("train.epochs_per_episode",
                          [](RunConfig& c) -> std::size_t& { return c.train.epochs_per_episode; }));
        f.push_back(real("train.max_drop_fraction", [](RunConfig& c) -> double& { return c.train.max_drop_fraction; }));

        f.push_back(real("sampling.tax_cap", [](RunConfig& c) -> double& { return c.sampling.tax_cap; }));
        f.push_back(reals("sampling.coef_lo", [](RunConfig& c) -> std::vector<double>& { return c.sampling.coef_lo; }));
        f.push_back(reals("sampling.coef_hi", [](RunConfig& c) -> std::vector<double>& { return c.sampling.coef_hi; }));

        f.push_back({"surrogate.mode", [](const RunConfig& c) { return json(mode_name(c.surrogate.mode)); },
                     [](RunConfig& c, const json& v) {
                         c.surrogate.mode = parse_mode(v.is_string() ? v.get<std::string>() : "");
                     }});
        f.push_back(count("surrogate.oracle_paths", [](RunConfig& c) -> std::size_t& { return c.surrogate.oracle_paths; }));
        f.push_back(count("surrogate.initial_n", [](RunConfig& c) -> std::size_t& { return c.surrogate.bal.initial_n; }));
        f.push_back(count("surrogate.acquisitions",
                          [](RunConfig& c) -> std::size_t& { return c.surrogate.bal.acquisitions; }));
        f.push_back(count("surrogate.candidate_pool",
                          [](RunConfig& c) -> std::size_t& { return c.surrogate.bal.candidate_pool; }));
        f.push_back(real("surrogate.alpha_ucb", [](RunConfig& c) -> double& { return c.surrogate.bal.alpha_ucb; }));
        f.push_back(real("surrogate.kappa_ucb", [](RunConfig& c) -> double& { return c.surrogate.bal.kappa_ucb; }));
        f.push_back(real("surrogate.loo_tol", [](RunConfig& c) -> double& { return c.surrogate.bal.loo_tol; }));
        f.push_back(count("surrogate.refit_every", [](RunConfig& c) -> std::size_t& { return c.surrogate.bal.refit_every; }));
        f.push_back(count("surrogate.gp_restarts", [](RunConfig& c) -> std::size_t& { return c.surrogate.bal.fit.restarts; }));
        f.push_back(count("surrogate.gp_iterations",
                          [](RunConfig& c) -> std::size_t& { return c.surrogate.bal.fit.iterations; }));
        f.push_back(real("surrogate.gp_lr", [](RunConfig& c) -> double& { return c.surrogate.bal.fit.learning_rate; }));
        f.push_back(flag("surrogate.gp_standardize", [](RunConfig& c) -> bool& { return c.surrogate.bal.fit.standardize; }));
        f.push_back({"surrogate.gp_optimizer",
                     [](const RunConfig& c) {
                         return json(c.surrogate.bal.fit.optimizer == MllOptimizer::Adam ? "adam" : "sqp");
                     },
                     [](RunConfig& c, const json& v) {
                         const std::string s = v.is_string() ? v.get<std::string>() : "";
                         if (s == "adam") c.surrogate.bal.fit.optimizer = MllOptimizer::Adam;
                         else if (s == "sqp") c.surrogate.bal.fit.optimizer = MllOptimizer::Sqp;
                         else throw ConfigError("surrogate.gp_optimizer: expected \"adam\" or \"sqp\"");
                     }});
        f.push_back(count("surrogate.cohort_fit_restarts",
                          [](RunConfig& c) -> std::size_t& { return c.surrogate.cohort_fit_restarts; }));

        f.push_back(count("opt.n_starts", [](RunConfig& c) -> std::size_t& { return c.optimizer.n_starts; }));
        f.push_back(count("opt.max_iter", [](RunConfig& c) -> std::size_t& { return c.optimizer.options.sqp.max_iter; }));
        f.push_back(real("opt.tol", [](RunConfig& c) -> double& { return c.optimizer.options.sqp.tol; }));
        f.push_back(real("opt.feas_tol", [](RunConfig& c) -> double& { return c.optimizer.options.feas_tol; }));
        f.push_back(real("opt.consensus_tol", [](RunConfig& c) -> double& { return c.optimizer.options.consensus_tol; }));

        f.push_back(count("sim.n_paths", [](RunConfig& c) -> std::size_t& { return c.sim.n_paths; }));
        f.push_back(count("sim.horizon_periods", [](RunConfig& c) -> std::size_t& { return c.sim.horizon_periods; }));
        f.push_back(count("metrics.n_paths", [](RunConfig& c) -> std::size_t& { return c.metrics.n_paths; }));
        f.push_back(count("metrics.horizon_periods", [](RunConfig& c) -> std::size_t& { return c.metrics.horizon_periods; }));
        f.push_back(reals("welfare.gamma", [](RunConfig& c) -> std::vector<double>& { return c.welfare_gamma; }));

        f.push_back(count("train_seed", [](RunConfig& c) -> std::uint64_t& { return c.train_seed; }));
        f.push_back(count("sim_seed", [](RunConfig& c) -> std::uint64_t& { return c.sim_seed; }));
        f.push_back(count("gp_seed", [](RunConfig& c) -> std::uint64_t& { return c.gp_seed; }));
        f.push_back(count("opt_seed", [](RunConfig& c) -> std::uint64_t& { return c.opt_seed; }));
        return f;
    }();
    return table;
}

const Field* find_field(const std::string& key) {
    for (const auto& f : fields()) {
        if (f.key == key) return &f;
    }
    return nullptr;
}

// Defaults depend on the scheme and the scale flag; overrides are applied on top.
RunConfig defaults(PolicyFamily scheme, bool desk) {
    RunConfig c;
    c.scheme = scheme;
    c.desk_scale = desk;
    c.sampling = default_sampling_spec(scheme);
    c.train.lr = 3e-4;
    c.train.episodes_max = desk ? 400 : 20000;
    if (desk) {
        c.sim.n_paths = 1000;
        c.metrics.n_paths = 2000;
        c.surrogate.oracle_paths = 200;
        c.surrogate.bal.initial_n = 100;
        c.surrogate.bal.acquisitions = 20;
        c.surrogate.bal.fit.restarts = 3;
        c.surrogate.bal.fit.iterations = 150;
        c.optimizer.n_starts = 16;
    } else {
        c.sim.n_paths = 10000;
        c.metrics.n_paths = 10000;
        c.surrogate.oracle_paths = 10000;
        c.surrogate.bal.initial_n = 450;
        c.surrogate.bal.acquisitions = 50;
        c.optimizer.n_starts = 100;
    }
    return c;
}

void wrap(const std::function<void()>& f, const std::string& what) {
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

}  // namespace

std::string mode_name(SurrogateMode mode) { return mode == SurrogateMode::Welfare ? "welfare" : "pareto"; }

SurrogateMode parse_mode(const std::string& name) {
    if (name == "welfare") return SurrogateMode::Welfare;
    if (name == "pareto") return SurrogateMode::Pareto;
    throw ConfigError("surrogate mode must be \"welfare\" or \"pareto\", got '" + name + "'");
}

CohortVector RunConfig::gamma() const {
    if (welfare_gamma.empty()) return uniform_weights();
    CohortVector g{};
    std::copy(welfare_gamma.begin(), welfare_gamma.end(), g.begin());
    return g;
}

SamplingSpec RunConfig::sampling_for(PolicyFamily family) const {
    return family == scheme ? sampling : default_sampling_spec(family);
}

void RunConfig::validate() const {
    wrap([&] { econ.validate(); }, "econ");
    wrap([&] { climate.validate(); }, "climate");
    wrap([&] { train.validate(); }, "train");
    wrap([&] { sampling.validate(); }, "sampling");
    wrap([&] { surrogate.bal.validate(); }, "surrogate");
    if (sampling.family != scheme) throw ConfigError("sampling box belongs to a different scheme");
    if (!(train.max_drop_fraction > 0.0 && train.max_drop_fraction < 1.0)) {
        throw ConfigError("train.max_drop_fraction must lie in (0,1)");
    }
    if (train.minibatch > train.parallel_paths * train.path_length) {
        throw ConfigError("train.minibatch exceeds the states simulated per episode");
    }
    if (surrogate.oracle_paths == 0 || surrogate.bal.fit.iterations == 0 || surrogate.bal.fit.restarts == 0 ||
        surrogate.cohort_fit_restarts == 0) {
        throw ConfigError("surrogate sizes must be positive");
    }
    if (!(surrogate.bal.fit.learning_rate > 0.0)) throw ConfigError("surrogate.gp_lr must be positive");
    if (optimizer.n_starts == 0 || optimizer.options.sqp.max_iter == 0) throw ConfigError("opt sizes must be positive");
    if (!(optimizer.options.sqp.tol > 0.0) || !(optimizer.options.feas_tol > 0.0) ||
        !(optimizer.options.consensus_tol > 0.0)) {
        throw ConfigError("opt tolerances must be positive");
    }
    if (sim.n_paths == 0 || metrics.n_paths == 0 || metrics.horizon_periods == 0) {
        throw ConfigError("simulation sizes must be positive");
    }
    if (sim.horizon_periods < kWelfareHorizon) {
        throw ConfigError("sim.horizon_periods must be at least 30 to score cohorts born up to t = 29");
    }
    if (!welfare_gamma.empty()) {
        if (welfare_gamma.size() != kBirthCohorts) throw ConfigError("welfare.gamma must have 40 entries");
        double s = 0.0;
        for (double g : welfare_gamma) {
            if (g < 0.0) throw ConfigError("welfare.gamma entries must be nonnegative");
            s += g;
        }
        if (std::abs(s - 1.0) > 1e-9) throw ConfigError("welfare.gamma must sum to one");
    }
}

RunConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!find_field(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
    }
    PolicyFamily scheme = PolicyFamily::LinearE;
    bool desk = true;
    RunConfig probe;
    if (doc.contains("scheme")) {
        find_field("scheme")->set(probe, doc["scheme"]);
        scheme = probe.scheme;
    }
    if (doc.contains("desk_scale")) {
        find_field("desk_scale")->set(probe, doc["desk_scale"]);
        desk = probe.desk_scale;
    }
    RunConfig c = defaults(scheme, desk);
    for (auto it = doc.begin(); it != doc.end(); ++it) find_field(it.key())->set(c, it.value());
    c.sampling.family = c.scheme;
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& config) {
    json doc = json::object();
    for (const auto& f : fields()) doc[f.key] = f.get(config);
    return doc.dump(2) + "\n";
}

std::string config_hash(const RunConfig& config) { return sha256_hex(serialize_config(config)); }

}  // namespace olg
