#pragma once

#include <array>
#include <span>
#include <vector>

#include "olg/params.hpp"
#include "olg/rng.hpp"
#include "olg/scheme.hpp"

namespace olg {

// Representative states at which candidate rules must imply sensible taxes.
struct HeuristicStates {
    double E0 = 0.851;
    double E29 = 1.6;
    double kappa0 = 0.35032;
    double kappa29 = 0.05;
    // Values of (1 - D_TP) entering the tipping term at t = 0 and t = 29.
    double tip0 = 0.2435;
    double tip29 = 1.0;
};

inline constexpr CohortArray kDirichletAlpha = {1.33, 1.25, 1.22, 0.61, 2.7,  1.83,
                                                0.61, 1.79, 1.16, 0.65, 0.67, 1.08};

struct SamplingSpec {
    PolicyFamily family = PolicyFamily::Bau;
    std::vector<double> coef_lo;  // tax-rule coefficients only, shares excluded
    std::vector<double> coef_hi;
    double tax_cap = 0.8;
    CohortArray alpha = kDirichletAlpha;
    HeuristicStates heuristics;
    double min_acceptance = 1e-3;

    void validate() const;
    std::size_t coef_dim() const { return coef_lo.size(); }
    bool has_shares() const;
    // Full pseudo-state bounds with shares in [0, 1]; used for input and GP scaling.
    std::vector<double> theta_lo() const;
    std::vector<double> theta_hi() const;
};

SamplingSpec default_sampling_spec(PolicyFamily family);

struct EndpointTaxes {
    double tau0 = 0.0;
    double tau29 = 0.0;
};

// Taxes at the two heuristic endpoint states; linear in theta.
EndpointTaxes endpoint_taxes(const SamplingSpec& spec, std::span<const double> theta);
// Gradients of tau0 and tau29 with respect to the full pseudo-state.
std::array<std::vector<double>, 2> endpoint_tax_gradients(const SamplingSpec& spec);

bool passes_filter(const SamplingSpec& spec, std::span<const double> theta);

CohortArray dirichlet_sample(const CohortArray& alpha, RngStream& rng);

// Rejection sampler; every returned vector passes the feasibility filter.
std::vector<std::vector<double>> sample_pseudo_states(const SamplingSpec& spec, std::size_t n, RngStream& rng);

}  // namespace olg
