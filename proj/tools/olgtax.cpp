#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "olg/config.hpp"
#include "olg/errors.hpp"
#include "olg/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitProvenance = 3;
constexpr int kExitNumerical = 4;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Carbon-tax policy pipeline for a stochastic OLG climate economy"};
    app.require_subcommand(1);
    std::string config_path;
    std::string family_name;
    std::string run_dir;
    std::vector<double> theta;

    auto with_config = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    };
    auto* train = app.add_subcommand("train", "Train the equilibrium network for a scheme");
    with_config(train);
    train->add_option("--family", family_name, "Scheme to train (default: the config's scheme)");
    auto* metrics = app.add_subcommand("metrics", "Euler and value accuracy per generation");
    with_config(metrics);
    metrics->add_option("--family", family_name, "Scheme to evaluate (default: the config's scheme)");
    auto* baseline = app.add_subcommand("baseline", "Cohort utilities under business as usual");
    with_config(baseline);
    auto* surrogate = app.add_subcommand("surrogate", "Build the Gaussian-process welfare surrogate(s)");
    with_config(surrogate);
    auto* optimize = app.add_subcommand("optimize", "Maximize welfare on the surrogate");
    with_config(optimize);
    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo verification and fan charts");
    with_config(simulate);
    simulate->add_option("--family", family_name, "Scheme to simulate (bau for the baseline paths)");
    simulate->add_option("--theta", theta, "Explicit policy parameters instead of the optimizer's result");
    auto* report = app.add_subcommand("report", "Verify provenance and summarize a run");
    report->add_option("run_dir", run_dir, "Run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (report->parsed()) {
            olg::cmd_report(run_dir, std::cout);
            return 0;
        }
        const olg::RunConfig config = olg::load_config(config_path);
        const olg::PolicyFamily family = family_name.empty() ? config.scheme : olg::parse_family(family_name);
        if (train->parsed()) olg::cmd_train(config, family, std::cout);
        if (metrics->parsed()) olg::cmd_metrics(config, family, std::cout);
        if (baseline->parsed()) olg::cmd_baseline(config, std::cout);
        if (surrogate->parsed()) olg::cmd_surrogate(config, std::cout);
        if (optimize->parsed()) olg::cmd_optimize(config, std::cout);
        if (simulate->parsed()) {
            std::optional<std::vector<double>> th;
            if (simulate->count("--theta") > 0) th = theta;
            olg::cmd_simulate(config, family, th, std::cout);
        }
    } catch (const olg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const olg::ProvenanceError& e) {
        std::cerr << "provenance error: " << e.what() << "\n";
        return kExitProvenance;
    } catch (const olg::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const olg::DomainError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
