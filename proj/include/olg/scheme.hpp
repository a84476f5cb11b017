#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "olg/params.hpp"

namespace olg {

/// Policy families; each fixes the layout of the pseudo-state vector.
enum class PolicyFamily { Bau, LinearE, LinearETransfers, FullLinear };

enum class TransferRule { None, GeometricExogenous, PlannerShares };

struct Bau {};

// tau = theta0 + thetaE * E
struct LinearE {
    double theta0 = 0.0;
    double thetaE = 0.0;
};

struct LinearETransfers {
    double theta0 = 0.0;
    double thetaE = 0.0;
    CohortArray shares{};
};

// tau = theta0 + thetaE E/E0 + thetaKappa kappa/kappa0 + thetaTP (1 - D_TP)
struct FullLinear {
    double theta0 = 0.0;
    double thetaE = 0.0;
    double thetaKappa = 0.0;
    double thetaTP = 0.0;
    CohortArray shares{};
};

struct TaxScheme {
    std::variant<Bau, LinearE, LinearETransfers, FullLinear> rule = Bau{};
    TransferRule transfer_rule = TransferRule::None;

    static TaxScheme bau() { return {}; }
    static TaxScheme linear_e(double theta0, double thetaE);
    static TaxScheme linear_e_transfers(double theta0, double thetaE, const CohortArray& shares);
    static TaxScheme full_linear(double theta0, double thetaE, double thetaKappa, double thetaTP,
                                 const CohortArray& shares);
    // Inverse of theta(): builds the scheme encoded by a pseudo-state vector.
    static TaxScheme from_theta(PolicyFamily family, std::span<const double> theta);

    PolicyFamily family() const;
    std::vector<double> theta() const;
    void validate() const;
};

std::size_t theta_dim(PolicyFamily family);
// Rescales nonnegative shares to sum to one (rounded published shares do not).
CohortArray normalize_shares(const CohortArray& shares);
std::string_view family_name(PolicyFamily family);
PolicyFamily parse_family(std::string_view name);
// Human-readable pseudo-state names, used as CSV column headers.
std::vector<std::string> theta_names(PolicyFamily family);

}  // namespace olg
