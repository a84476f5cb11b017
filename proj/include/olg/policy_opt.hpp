#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "olg/gp.hpp"
#include "olg/rng.hpp"
#include "olg/sampling.hpp"
#include "olg/sqp.hpp"

namespace olg {

// Box = sampling box, endpoint taxes in [0, tax_cap], shares on the simplex when present.
ConstraintSet policy_constraints(const SamplingSpec& spec);

// Fixes the given pseudo-state coordinates (lo = hi = value).
ConstraintSet with_fixed(ConstraintSet cs, const std::vector<std::pair<std::size_t, double>>& fixed);

// Surrogate posterior mean as an objective with its analytic gradient.
Objective gp_mean_objective(const GpModel& model);
// sum_t gamma_t mu_t(theta)
Objective weighted_gp_objective(const std::vector<GpModel>& models, const std::vector<double>& gamma);
// Adds mu_t(theta) - u_bau[t] >= 0 for every cohort.
void add_pareto_constraints(ConstraintSet& cs, const std::vector<GpModel>& models, const std::vector<double>& u_bau);

// Euclidean projection onto {s >= 0, sum s = 1}.
std::vector<double> project_simplex(std::span<const double> v);

// Separate from the solver's row assembly: evaluates every constraint directly.
struct FeasibilityReport {
    double max_violation = 0.0;
    std::string worst;  // name of the most violated constraint
    std::vector<std::pair<std::string, double>> residuals;  // >= 0 means satisfied
    bool ok(double tol) const { return max_violation <= tol; }
};
FeasibilityReport recheck_feasibility(const ConstraintSet& cs, std::span<const double> theta);

struct StartRecord {
    std::vector<double> start;
    std::vector<double> x;
    double f = 0.0;
    bool converged = false;
    bool feasible = false;
    std::size_t iterations = 0;
};

struct OptResult {
    std::vector<double> theta_star;
    double objective = 0.0;
    FeasibilityReport feasibility;
    std::vector<StartRecord> starts;
    bool consensus = false;
    double consensus_spread = 0.0;  // relative objective spread among the best two-thirds
    std::size_t converged_starts = 0;
};

struct OptOptions {
    SqpOptions sqp{300, 1e-8, 1e-13};
    double feas_tol = 1e-8;
    double consensus_tol = 1e-5;
};

// n starts: the BAU point first, then n - 1 draws from the pseudo-state filter distribution.
std::vector<std::vector<double>> generate_starts(const SamplingSpec& spec, std::size_t n, RngStream& rng);

// Throws NumericalError if no start yields a feasible point.
OptResult maximize_welfare(const Objective& objective, const ConstraintSet& cs,
                           const std::vector<std::vector<double>>& starts, const OptOptions& opts = {});

// Pareto problem; on failure probes n_probes filter draws and throws NumericalError naming
// the most violated cohorts.
OptResult maximize_pareto(const std::vector<GpModel>& models, const std::vector<double>& gamma,
                          const std::vector<double>& u_bau, const ConstraintSet& base,
                          const std::vector<std::vector<double>>& starts, const SamplingSpec& spec, RngStream& rng,
                          const OptOptions& opts = {}, std::size_t n_probes = 100000);

struct ConcavityReport {
    std::size_t pairs = 0;
    std::size_t violations = 0;
    double worst = 0.0;  // largest (f(a)+f(b))/2 - f(mid)
};

// Midpoint concavity over all pairs of a grid_n x grid_n lattice on [lo, hi].
ConcavityReport concavity_probe(const std::function<double(double, double)>& f, std::array<double, 2> lo,
                                std::array<double, 2> hi, std::size_t grid_n, double tol);

}  // namespace olg
