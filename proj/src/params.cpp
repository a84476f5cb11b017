#include "olg/params.hpp"

#include <cmath>
#include <string>

#include "olg/econ.hpp"
#include "olg/errors.hpp"

namespace olg {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("invalid parameter: ") + what);
}

}  // namespace

void EconParams::validate() const {
    require(beta > 0.0 && beta < 1.0, "beta must lie in (0,1)");
    require(sigma > 1.0, "sigma must exceed 1");
    require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
    require(delta > 0.0 && delta <= 1.0, "delta must lie in (0,1]");
    require(theta1 > 0.0 && theta1 <= 1.0, "theta1 must lie in (0,1]");
    require(theta2 > 1.0, "theta2 must exceed 1");
    require(L_scale > 0.0, "L_scale must be positive");
    require(B_util > 0.0, "B_util must be positive");
    require(A == kCohorts, "A must equal 12");
}

void ClimateParams::validate() const {
    require(sigma_ccr > 0.0, "sigma_ccr must be positive");
    require(psi1 > 0.0, "psi1 must be positive");
    require(TP_min < TP_max, "TP_min must be below TP_max");
    require(TP0 >= TP_min && TP0 <= TP_max, "TP0 outside tipping barriers");
    require(E0 > 0.0, "E0 must be positive");
    require(c2co2 == 3.666, "c2co2 is fixed at 3.666");
    require(kappa0 > 0.0, "kappa0 must be positive");
    require(zeta > 0.0, "zeta must be positive");
    require(period_years > 0.0, "period_years must be positive");
}

void CohortProfile::validate() const {
    double total = 0.0;
    for (double l : labor) {
        if (!(l > 0.0)) throw DomainError("labor endowments must be positive");
        total += l;
    }
    if (std::abs(total - 1.0) > 1e-12) throw DomainError("labor endowments must sum to one");
    if (initial_assets[0] != 0.0) throw DomainError("newborns hold no assets");
    for (double a : initial_assets) {
        if (a < 0.0) throw DomainError("initial assets must be nonnegative");
    }
}

CohortProfile default_cohort_profile(const EconParams& params) {
    return {labor_profile(params), kInitialAssets};
}

}  // namespace olg
