#pragma once

#include <array>
#include <span>
#include <vector>

#include "olg/params.hpp"
#include "olg/scheme.hpp"

namespace olg {

struct AugmentedState {
    int t = 0;
    double t_comp = 0.0;
    double TP = 3.0;
    bool tp_reached = false;
    double kappa = 0.0;
    CohortArray assets{};
    double E = 0.0;
    double T_at = 0.0;  // always sigma_ccr * E
    std::vector<double> theta;

    double capital() const;
};

struct ShockOutcome {
    double eps_kappa = 0.0;
    double eps_tp = 0.0;
    double prob = 1.0 / 9.0;
};

inline constexpr std::size_t kShocks = 9;

double rho_t(int t, const ClimateParams& cp);
double kappa_next(double kappa, int t, double eps_kappa, const ClimateParams& cp);

struct TippingState {
    double TP = 3.0;
    bool reached = false;
};
TippingState tp_next(double TP, double T_at, bool tp_reached, double eps_tp, const ClimateParams& cp);

struct ClimateState {
    double E = 0.0;
    double T_at = 0.0;
};
// e is in GtCO2 per period; E in thousand GtC.
ClimateState climate_next(double E, double e, const ClimateParams& cp);

double time_encode(double t_period, const ClimateParams& cp);
double time_decode(double t_comp, const ClimateParams& cp);

AugmentedState step(const AugmentedState& s, std::span<const double> savings, double e,
                    const ShockOutcome& shock, const ClimateParams& cp);

// Ordered kappa-major: index = 3 * kappa_branch + tp_branch with branches (+, 0, -).
std::array<ShockOutcome, kShocks> enumerate_shocks(const ClimateParams& cp);

AugmentedState initial_state(const TaxScheme& scheme, std::span<const double> theta,
                             const ClimateParams& cp,
                             const CohortArray& assets = kInitialAssets);

// Throws DomainError if TP is not on the 0.1 grid inside the barriers.
void check_tp_grid(double TP, const ClimateParams& cp);

}  // namespace olg
