#pragma once

#include <array>
#include <cstddef>

namespace olg {

inline constexpr std::size_t kCohorts = 12;
inline constexpr std::size_t kChoices = kCohorts - 1;   // savings / value heads
inline constexpr std::size_t kOutputs = 2 * kChoices;   // 22 network outputs
inline constexpr std::size_t kStateInputs = kCohorts + 5;  // t, TP, reached, kappa, assets, E
inline constexpr std::size_t kBirthCohorts = 40;       // births t = -10 ... 29
inline constexpr int kFirstBirth = -10;

using CohortArray = std::array<double, kCohorts>;
using ChoiceArray = std::array<double, kChoices>;

/// Household, production and abatement-cost calibration (5-year periods).
struct EconParams {
    double beta = 0.9;
    double sigma = 3.0;
    double alpha = 0.3;
    double delta = 0.2;
    double theta1 = 0.7;
    double theta2 = 2.6;
    double L_scale = 600.0;  // aggregate labour scale matching base-year emissions
    double B_util = 20.0;    // utility scaling constant
    std::size_t A = kCohorts;

    void validate() const;
};

/// Climate emulator, damage function and the two exogenous shock processes.
struct ClimateParams {
    double sigma_ccr = 1.7;   // degC per thousand GtC
    double psi1 = 13.16;
    double c2co2 = 3.666;
    double E0 = 0.851;        // thousand GtC
    double TP_min = 2.5;
    double TP_max = 3.5;
    double TP0 = 3.0;
    double tip_exponent = 6.754;

    double kappa0 = 0.35032;
    double rho0 = 1.08;
    double rho_inf = 0.91;
    double delta_rho = 0.04;  // per year
    double period_years = 5.0;
    double kappa_shock = 0.03;
    double tp_shock = 0.1;
    double zeta = 0.015;      // time-encoding rate per year

    double T0() const { return sigma_ccr * E0; }
    void validate() const;
};

struct CohortProfile {
    CohortArray labor{};
    CohortArray initial_assets{};

    void validate() const;
};

/// Asset holdings at t = 0 in effective-labour units.
inline constexpr CohortArray kInitialAssets = {0.0,   0.002, 0.009, 0.021, 0.037, 0.056,
                                               0.076, 0.095, 0.111, 0.093, 0.070, 0.039};

CohortProfile default_cohort_profile(const EconParams& params);

}  // namespace olg
