#include "olg/climate.hpp"

#include <cmath>
#include <numeric>

#include "olg/errors.hpp"

namespace olg {

double AugmentedState::capital() const {
    return std::accumulate(assets.begin(), assets.end(), 0.0);
}

double rho_t(int t, const ClimateParams& cp) {
    const double years = cp.period_years * static_cast<double>(t);
    return cp.rho0 + (cp.rho_inf - cp.rho0) * (1.0 - std::exp(-cp.delta_rho * years));
}

double kappa_next(double kappa, int t, double eps_kappa, const ClimateParams& cp) {
    if (kappa < 0.0) throw DomainError("kappa_next: negative carbon intensity");
    if (kappa == 0.0) return 0.0;
    return std::max(rho_t(t, cp) * kappa + eps_kappa, 0.0);
}

void check_tp_grid(double TP, const ClimateParams& cp) {
    const double steps = (TP - cp.TP_min) / cp.tp_shock;
    if (TP < cp.TP_min - 1e-9 || TP > cp.TP_max + 1e-9 || std::abs(steps - std::round(steps)) > 1e-6) {
        throw DomainError("tipping threshold off the grid");
    }
}

TippingState tp_next(double TP, double T_at, bool tp_reached, double eps_tp, const ClimateParams& cp) {
    check_tp_grid(TP, cp);
    const bool reached = tp_reached || T_at >= TP;
    if (reached) return {TP, true};
    double next = TP + eps_tp;
    if (next > cp.TP_max + 1e-9) next = cp.TP_max - cp.tp_shock;
    if (next < cp.TP_min - 1e-9) next = cp.TP_min + cp.tp_shock;
    // Snap to the grid so repeated additions never drift.
    next = cp.TP_min + std::round((next - cp.TP_min) / cp.tp_shock) * cp.tp_shock;
    return {next, false};
}

ClimateState climate_next(double E, double e, const ClimateParams& cp) {
    if (e < 0.0) throw DomainError("climate_next: negative emissions");
    const double E1 = E + e / (cp.c2co2 * 1000.0);
    return {E1, cp.sigma_ccr * E1};
}

double time_encode(double t_period, const ClimateParams& cp) {
    if (t_period < 0.0) throw DomainError("time_encode: negative time");
    return 1.0 - std::exp(-cp.zeta * cp.period_years * t_period);
}

double time_decode(double t_comp, const ClimateParams& cp) {
    return -std::log1p(-t_comp) / (cp.zeta * cp.period_years);
}

AugmentedState step(const AugmentedState& s, std::span<const double> savings, double e,
                    const ShockOutcome& shock, const ClimateParams& cp) {
    if (savings.size() != kChoices) throw DomainError("step: expected 11 savings choices");
    AugmentedState n;
    n.assets[0] = 0.0;
    for (std::size_t j = 0; j < kChoices; ++j) {
        if (!std::isfinite(savings[j])) throw NumericalError("step: non-finite savings; network diverged");
        n.assets[j + 1] = savings[j];
    }
    n.t = s.t + 1;
    n.t_comp = time_encode(n.t, cp);
    const auto tip = tp_next(s.TP, s.T_at, s.tp_reached, shock.eps_tp, cp);
    n.TP = tip.TP;
    n.tp_reached = tip.reached;
    n.kappa = kappa_next(s.kappa, s.t, shock.eps_kappa, cp);
    const auto clim = climate_next(s.E, e, cp);
    n.E = clim.E;
    n.T_at = clim.T_at;
    n.theta = s.theta;
    return n;
}

std::array<ShockOutcome, kShocks> enumerate_shocks(const ClimateParams& cp) {
    std::array<ShockOutcome, kShocks> out{};
    const std::array<double, 3> dir = {1.0, 0.0, -1.0};
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = 0; b < 3; ++b) {
            out[3 * a + b] = {dir[a] * cp.kappa_shock, dir[b] * cp.tp_shock, 1.0 / 9.0};
        }
    }
    return out;
}

AugmentedState initial_state(const TaxScheme& scheme, std::span<const double> theta,
                             const ClimateParams& cp, const CohortArray& assets) {
    if (theta.size() != theta_dim(scheme.family())) {
        throw DomainError("initial_state: pseudo-state dimension does not match scheme");
    }
    AugmentedState s;
    s.t = 0;
    s.t_comp = 0.0;
    s.TP = cp.TP0;
    s.tp_reached = false;
    s.kappa = cp.kappa0;
    s.assets = assets;
    s.E = cp.E0;
    s.T_at = cp.T0();
    s.theta.assign(theta.begin(), theta.end());
    return s;
}

}  // namespace olg
