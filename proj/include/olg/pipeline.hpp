#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "olg/config.hpp"
#include "olg/manifest.hpp"

namespace olg {

// Stage names as they appear in the manifest.
std::string train_stage(PolicyFamily family);
std::string metrics_stage(PolicyFamily family);
inline const std::string kBaselineStage = "baseline";
std::string surrogate_stage(PolicyFamily family, SurrogateMode mode);
std::string optimize_stage(PolicyFamily family, SurrogateMode mode);
std::string simulate_stage(PolicyFamily family, std::optional<SurrogateMode> mode);

// Every command reads and extends <out_dir>/manifest.json and refuses to run on a broken
// upstream link. Progress goes to log.
void cmd_train(const RunConfig& config, PolicyFamily family, std::ostream& log);
void cmd_metrics(const RunConfig& config, PolicyFamily family, std::ostream& log);
void cmd_baseline(const RunConfig& config, std::ostream& log);
void cmd_surrogate(const RunConfig& config, std::ostream& log);
void cmd_optimize(const RunConfig& config, std::ostream& log);
// Simulates the scheme at the optimizer's theta, or at an explicit theta when given. BAU
// is simulated with family = bau and no theta.
void cmd_simulate(const RunConfig& config, PolicyFamily family, const std::optional<std::vector<double>>& theta,
                  std::ostream& log);
// Verifies the whole provenance chain (ProvenanceError on any break) and writes report.txt.
std::string cmd_report(const std::filesystem::path& run_dir, std::ostream& log);

// Artifact readers shared with the acceptance suite.
DeqnModel load_model(const Manifest& manifest, PolicyFamily family, const RunConfig& config);
CohortVector load_baseline(const Manifest& manifest);
std::vector<GpModel> load_surrogates(const Manifest& manifest, PolicyFamily family, SurrogateMode mode);
std::vector<double> load_optimum(const Manifest& manifest, PolicyFamily family, SurrogateMode mode);

// Verification tolerance applied to simulated per-cohort CEVs of Pareto policies.
inline constexpr double kParetoCevTolerance = -0.002;

}  // namespace olg
