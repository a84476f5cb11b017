#include "olg/econ.hpp"

#include <cmath>
#include <variant>

#include "olg/errors.hpp"

namespace olg {

double damage(double T_at, double TP, const ClimateParams& cp) {
    if (!(T_at >= 0.0)) throw DomainError("damage: negative temperature");
    if (TP < cp.TP_min - 1e-12 || TP > cp.TP_max + 1e-12) {
        throw DomainError("damage: tipping threshold outside barriers");
    }
    const double quad = T_at / cp.psi1;
    const double tip = std::pow(T_at / (2.0 * TP), cp.tip_exponent);
    return 1.0 / (1.0 + quad * quad + tip);
}

double abatement_from_tax(double tau, double kappa, double omega, const EconParams& p) {
    if (tau < 0.0) throw DomainError("abatement_from_tax: negative tax");
    if (kappa <= 0.0 || tau == 0.0) return 0.0;
    const double ratio = tau * kappa / (omega * p.theta1 * p.theta2);
    // Treat the boundary within rounding as full abatement.
    if (ratio >= 1.0 - 1e-12) return 1.0;
    return std::pow(ratio, 1.0 / (p.theta2 - 1.0));
}

double net_productivity(double mu, double tau, double kappa, double omega, const EconParams& p) {
    return omega * (1.0 - p.theta1 * std::pow(mu, p.theta2)) - tau * kappa * (1.0 - mu);
}

FactorPrices factor_prices(double k, double mu, double tau, double kappa, double omega,
                           const EconParams& p) {
    if (!(k > 0.0)) throw DomainError("factor_prices: capital must be positive");
    const double prod = net_productivity(mu, tau, kappa, omega, p);
    const double ka = std::pow(k, p.alpha);
    return {p.alpha * ka / k * prod - p.delta, (1.0 - p.alpha) * ka * prod};
}

double emissions(double k, double mu, double kappa, const EconParams& p) {
    return (1.0 - mu) * kappa * p.L_scale * std::pow(k, p.alpha);
}

double tax_rate(const TaxScheme& scheme, double E, double kappa, double T_at, double TP,
                const EconParams&, const ClimateParams& cp) {
    return std::visit(
        [&](const auto& s) -> double {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, Bau>) {
                return 0.0;
            } else if constexpr (std::is_same_v<S, FullLinear>) {
                return s.theta0 + s.thetaE * E / cp.E0 + s.thetaKappa * kappa / cp.kappa0 +
                       s.thetaTP * (1.0 - distance_to_tipping(T_at, TP, cp));
            } else {
                return s.theta0 + s.thetaE * E;
            }
        },
        scheme.rule);
}

double distance_to_tipping(double T_at, double TP, const ClimateParams& cp) {
    const double gap = TP - T_at;
    if (gap <= 0.0) return 0.0;
    return std::min(1.0, gap / (cp.TP_max - cp.T0()));
}

CohortArray transfer_shares(const TaxScheme& scheme) {
    CohortArray shares{};
    switch (scheme.transfer_rule) {
        case TransferRule::None:
            break;
        case TransferRule::GeometricExogenous: {
            // 0.1 / (1 - 0.9^12) is the exact normalizer behind the rounded 0.1394.
            const double norm = 0.1 / (1.0 - std::pow(0.9, static_cast<double>(kCohorts)));
            double g = 1.0;
            for (auto& s : shares) {
                s = norm * g;
                g *= 0.9;
            }
            break;
        }
        case TransferRule::PlannerShares:
            if (const auto* s = std::get_if<LinearETransfers>(&scheme.rule)) shares = s->shares;
            else if (const auto* s = std::get_if<FullLinear>(&scheme.rule)) shares = s->shares;
            else throw DomainError("planner shares require a transfer-carrying scheme");
            break;
    }
    return shares;
}

CohortArray transfers(const TaxScheme& scheme, double tau, double e, const EconParams& p) {
    if (tau < 0.0 || e < 0.0) throw DomainError("transfers: negative tax or emissions");
    if (scheme.transfer_rule == TransferRule::PlannerShares) scheme.validate();
    CohortArray out = transfer_shares(scheme);
    const double revenue = tau * e / p.L_scale;
    for (auto& x : out) x *= revenue;
    return out;
}

double period_utility(double c, const EconParams& p) {
    if (!(c > 0.0)) throw DomainError("period_utility: nonpositive consumption");
    return std::pow(p.B_util * c, 1.0 - p.sigma) / (1.0 - p.sigma);
}

double marginal_utility(double c, const EconParams& p) {
    if (!(c > 0.0)) throw DomainError("marginal_utility: nonpositive consumption");
    return p.B_util * std::pow(p.B_util * c, -p.sigma);
}

double cev(double u_policy, double u_bau, const EconParams& p) {
    if (!(u_policy < 0.0 && u_bau < 0.0) && !(u_policy > 0.0 && u_bau > 0.0)) {
        throw DomainError("cev: utilities must share a strict sign");
    }
    return std::pow(u_policy / u_bau, 1.0 / (1.0 - p.sigma)) - 1.0;
}

CohortArray labor_profile(const EconParams&) {
    // Annual ages 1..40 work, 41..60 are retired at a third of the age-40 endowment.
    constexpr int kWorkYears = 40;
    constexpr int kYears = 60;
    auto annual = [](int j) {
        const double x = static_cast<double>(j);
        return std::exp(4.47 + 0.033 * x - 0.00067 * x * x);
    };
    const double retired = annual(kWorkYears) / 3.0;
    CohortArray out{};
    for (int y = 1; y <= kYears; ++y) {
        out[static_cast<std::size_t>((y - 1) / 5)] += (y <= kWorkYears ? annual(y) : retired) / 5.0;
    }
    double total = 0.0;
    for (double l : out) total += l;
    for (auto& l : out) l /= total;
    return out;
}

double denormalize_value(double v, const EconParams& p) {
    // v = V / L^{1/(1-sigma)} and utilities carry the factor B^{1-sigma}.
    return v * std::pow(p.L_scale, 1.0 / (1.0 - p.sigma)) * std::pow(p.B_util, p.sigma - 1.0);
}

}  // namespace olg
