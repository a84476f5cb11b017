#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "olg/climate.hpp"
#include "olg/econ.hpp"
#include "olg/network.hpp"
#include "olg/params.hpp"
#include "olg/sampling.hpp"
#include "olg/scheme.hpp"

namespace olg {

inline constexpr std::size_t kResiduals = 3 * kChoices + 1;  // 11 Euler, 12 budget, 11 value
inline constexpr std::size_t kBudgetOffset = kChoices;
inline constexpr std::size_t kValueOffset = kChoices + kCohorts;
// Residual substituted for an equation whose consumption is infeasible.
inline constexpr double kPenaltyBase = 10.0;

using ResidualVector = std::array<double, kResiduals>;

struct Policy {
    ChoiceArray savings{};  // a'_{j+1} for cohorts j = 1..11
    ChoiceArray values{};   // v_j for cohorts j = 1..11
};

/// Affine maps between raw network outputs and economic quantities. Savings are centred
/// on the initial asset table, values on the steady-state value profile.
struct OutputScaling {
    ChoiceArray savings_ref{};
    double savings_scale = 0.02;
    ChoiceArray value_ref{};
    ChoiceArray value_scale{};
};

OutputScaling default_output_scaling(const EconParams& ep, const ClimateParams& cp);

/// Everything the economy determines at one state once aggregate capital is known.
struct Prices {
    double k = 0.0;
    double omega = 1.0;
    double tau = 0.0;
    double mu = 0.0;
    double r = 0.0;
    double w = 0.0;
    double e = 0.0;
    CohortArray transfers{};
    // Sensitivities to k, used by the successor-state adjoint.
    double dr_dk = 0.0;
    double dw_dk = 0.0;
    CohortArray dtransfers_dk{};
};

Prices prices_at(const AugmentedState& s, const TaxScheme& scheme, double k, const EconParams& ep,
                 const ClimateParams& cp);

/// A network plus the encodings that turn it into a policy for one family.
class DeqnModel {
public:
    DeqnModel() = default;
    DeqnModel(Network net, PolicyFamily family, std::vector<double> theta_lo, std::vector<double> theta_hi,
              EconParams ep = {}, ClimateParams cp = {});

    static DeqnModel init(PolicyFamily family, std::size_t hidden_width, std::size_t hidden_layers,
                          std::uint64_t seed, const SamplingSpec& spec, EconParams ep = {},
                          ClimateParams cp = {});

    static constexpr double kAssetInputScale = 10.0;
    static constexpr std::size_t kAssetSlot = 4;

    std::size_t input_dim() const { return kStateInputs + theta_lo_.size(); }
    PolicyFamily family() const { return family_; }
    const Network& net() const { return net_; }
    Network& net() { return net_; }
    const EconParams& econ() const { return ep_; }
    const ClimateParams& climate() const { return cp_; }
    const CohortArray& labor() const { return labor_; }
    const OutputScaling& scaling() const { return scaling_; }
    const std::vector<double>& theta_lo() const { return theta_lo_; }
    const std::vector<double>& theta_hi() const { return theta_hi_; }

    void encode(const AugmentedState& s, double* column) const;
    Policy decode(const double* column) const;
    Policy policy(const AugmentedState& s) const;
    std::vector<Policy> policies(std::span<const AugmentedState> states) const;

    CheckpointMeta meta(std::uint64_t seed, std::uint64_t episode) const;
    static DeqnModel from_checkpoint(const Checkpoint& ck, EconParams ep = {}, ClimateParams cp = {});

private:
    Network net_;
    PolicyFamily family_ = PolicyFamily::Bau;
    std::vector<double> theta_lo_;
    std::vector<double> theta_hi_;
    EconParams ep_;
    ClimateParams cp_;
    CohortArray labor_{};
    OutputScaling scaling_;
};

// Relative Euler residual given the expectation M = E[(1+r') u'(c')] in c^{-sigma} units.
double euler_residual(double c, double expected_marginal, const EconParams& ep);
// Relative value-recursion residual.
double value_residual(double u, double expected_next_value, double v, const EconParams& ep);

struct BatchResult {
    std::vector<ResidualVector> residuals;
    std::vector<bool> penalized;
    double loss = 0.0;  // mean over states of the summed squared residuals
};

/// Residuals at a batch of states with exact nine-branch expectations. If grad is non-null,
/// it receives d loss / d params (overwritten).
BatchResult evaluate_batch(const DeqnModel& model, std::span<const AugmentedState> states,
                           std::vector<double>* grad = nullptr);

ResidualVector residuals(const AugmentedState& s, const DeqnModel& model);

// Monte-Carlo variant of the expectations, used to check the exact enumeration.
ResidualVector residuals_monte_carlo(const AugmentedState& s, const DeqnModel& model, std::size_t draws,
                                     RngStream& rng, ResidualVector* std_error);

/// Deterministic steady state with damages frozen at the initial climate, solved by damped
/// fixed-point iteration on capital.
struct SteadyState {
    CohortArray assets{};
    CohortArray consumption{};
    double k = 0.0;
    double r = 0.0;
    double w = 0.0;
    int iterations = 0;
};
SteadyState solve_steady_state(const EconParams& ep, const ClimateParams& cp, double damping = 0.5,
                               double tol = 1e-13, int max_iter = 10000);

}  // namespace olg
