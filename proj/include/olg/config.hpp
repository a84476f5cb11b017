#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "olg/gp.hpp"
#include "olg/params.hpp"
#include "olg/policy_opt.hpp"
#include "olg/sampling.hpp"
#include "olg/trainer.hpp"
#include "olg/welfare.hpp"

namespace olg {

enum class SurrogateMode { Welfare, Pareto };

std::string mode_name(SurrogateMode mode);
SurrogateMode parse_mode(const std::string& name);

struct SimConfig {
    std::size_t n_paths = 1000;
    std::size_t horizon_periods = kWelfareHorizon;
};

struct MetricsConfig {
    std::size_t n_paths = 2000;
    std::size_t horizon_periods = 30;
};

struct SurrogateConfig {
    SurrogateMode mode = SurrogateMode::Welfare;
    std::size_t oracle_paths = 200;  // Monte-Carlo paths per surrogate evaluation
    BalConfig bal;
    std::size_t cohort_fit_restarts = 1;  // per-cohort fits in Pareto mode start from the aggregate fit
};

struct OptimizerConfig {
    std::size_t n_starts = 16;
    OptOptions options;
};

/// Everything one pipeline run needs. Keys are flat and dotted; see README for the list.
struct RunConfig {
    PolicyFamily scheme = PolicyFamily::LinearE;
    std::filesystem::path out_dir = "run";
    bool desk_scale = true;
    EconParams econ;
    ClimateParams climate;
    TrainConfig train;
    SamplingSpec sampling;  // for the selected scheme
    SurrogateConfig surrogate;
    OptimizerConfig optimizer;
    SimConfig sim;
    MetricsConfig metrics;
    std::vector<double> welfare_gamma;  // 40 cohort weights; empty means uniform
    std::uint64_t train_seed = 1;
    std::uint64_t sim_seed = 2;
    std::uint64_t gp_seed = 3;
    std::uint64_t opt_seed = 4;

    CohortVector gamma() const;
    // Sampling box for another family with this run's tax cap.
    SamplingSpec sampling_for(PolicyFamily family) const;
    void validate() const;
};

// Unknown keys, wrong types and out-of-range values throw ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Normalized form: every key present, sorted, fixed formatting.
std::string serialize_config(const RunConfig& config);
// SHA-256 of the normalized form.
std::string config_hash(const RunConfig& config);

}  // namespace olg
