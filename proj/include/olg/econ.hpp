#pragma once

#include "olg/params.hpp"
#include "olg/scheme.hpp"

namespace olg {

struct FactorPrices {
    double r = 0.0;
    double w = 0.0;
};

// Damage multiplier Omega(T, TP) in (0, 1].
double damage(double T_at, double TP, const ClimateParams& cp);

// Firm abatement implied by the tax first-order condition, clamped to [0, 1].
double abatement_from_tax(double tau, double kappa, double omega, const EconParams& p);

// Output net of damages, abatement cost and tax per unit of k^alpha.
double net_productivity(double mu, double tau, double kappa, double omega, const EconParams& p);

FactorPrices factor_prices(double k, double mu, double tau, double kappa, double omega,
                           const EconParams& p);

// Physical emissions in GtCO2 per period.
double emissions(double k, double mu, double kappa, const EconParams& p);

// Raw value of the linear tax rule; callers clamp via effective_tax().
double tax_rate(const TaxScheme& scheme, double E, double kappa, double T_at, double TP,
                const EconParams& p, const ClimateParams& cp);

// Negative rule values would subsidize emissions; the economy never sees them.
inline double effective_tax(double raw) { return raw > 0.0 ? raw : 0.0; }

double distance_to_tipping(double T_at, double TP, const ClimateParams& cp);

// Per-cohort transfers in effective-labour units; they sum to tau * e / L_scale.
CohortArray transfers(const TaxScheme& scheme, double tau, double e, const EconParams& p);

// Shares of revenue per cohort implied by the scheme's transfer rule.
CohortArray transfer_shares(const TaxScheme& scheme);

double period_utility(double c, const EconParams& p);
double marginal_utility(double c, const EconParams& p);

// Consumption-equivalent variation of u_policy relative to u_bau.
double cev(double u_policy, double u_bau, const EconParams& p);

// Normalized labour endowments per model period (sum to one).
CohortArray labor_profile(const EconParams& p);

// Lifetime value in the unscaled units of the original household problem.
double denormalize_value(double v, const EconParams& p);

}  // namespace olg
