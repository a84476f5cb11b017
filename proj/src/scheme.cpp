#include "olg/scheme.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "olg/errors.hpp"

namespace olg {

namespace {

CohortArray shares_from(std::span<const double> theta, std::size_t offset) {
    CohortArray shares{};
    std::copy_n(theta.begin() + static_cast<std::ptrdiff_t>(offset), kCohorts, shares.begin());
    return shares;
}

void validate_shares(const CohortArray& shares) {
    double total = 0.0;
    for (double s : shares) {
        if (!(s >= 0.0)) throw DomainError("transfer shares must be nonnegative");
        total += s;
    }
    if (std::abs(total - 1.0) > 1e-10) throw DomainError("transfer shares must sum to one");
}

}  // namespace

TaxScheme TaxScheme::linear_e(double theta0, double thetaE) {
    return {LinearE{theta0, thetaE}, TransferRule::GeometricExogenous};
}

TaxScheme TaxScheme::linear_e_transfers(double theta0, double thetaE, const CohortArray& shares) {
    return {LinearETransfers{theta0, thetaE, shares}, TransferRule::PlannerShares};
}

TaxScheme TaxScheme::full_linear(double theta0, double thetaE, double thetaKappa, double thetaTP,
                                 const CohortArray& shares) {
    return {FullLinear{theta0, thetaE, thetaKappa, thetaTP, shares}, TransferRule::PlannerShares};
}

TaxScheme TaxScheme::from_theta(PolicyFamily family, std::span<const double> theta) {
    if (theta.size() != theta_dim(family)) {
        throw DomainError("pseudo-state dimension " + std::to_string(theta.size()) +
                          " does not match family " + std::string(family_name(family)));
    }
    switch (family) {
        case PolicyFamily::Bau:
            return bau();
        case PolicyFamily::LinearE:
            return linear_e(theta[0], theta[1]);
        case PolicyFamily::LinearETransfers:
            return linear_e_transfers(theta[0], theta[1], shares_from(theta, 2));
        case PolicyFamily::FullLinear:
            return full_linear(theta[0], theta[1], theta[2], theta[3], shares_from(theta, 4));
    }
    throw DomainError("unknown policy family");
}

PolicyFamily TaxScheme::family() const {
    return static_cast<PolicyFamily>(rule.index());
}

std::vector<double> TaxScheme::theta() const {
    std::vector<double> out;
    if (const auto* s = std::get_if<LinearE>(&rule)) {
        out = {s->theta0, s->thetaE};
    } else if (const auto* s = std::get_if<LinearETransfers>(&rule)) {
        out = {s->theta0, s->thetaE};
        out.insert(out.end(), s->shares.begin(), s->shares.end());
    } else if (const auto* s = std::get_if<FullLinear>(&rule)) {
        out = {s->theta0, s->thetaE, s->thetaKappa, s->thetaTP};
        out.insert(out.end(), s->shares.begin(), s->shares.end());
    }
    return out;
}

void TaxScheme::validate() const {
    if (std::holds_alternative<Bau>(rule) && transfer_rule != TransferRule::None) {
        throw DomainError("BAU carries no transfers");
    }
    if (transfer_rule == TransferRule::PlannerShares) {
        if (const auto* s = std::get_if<LinearETransfers>(&rule)) validate_shares(s->shares);
        else if (const auto* s = std::get_if<FullLinear>(&rule)) validate_shares(s->shares);
        else throw DomainError("planner shares require a transfer-carrying scheme");
    }
}

CohortArray normalize_shares(const CohortArray& shares) {
    double total = 0.0;
    for (double s : shares) {
        if (!(s >= 0.0)) throw DomainError("normalize_shares: negative share");
        total += s;
    }
    if (!(total > 0.0)) throw DomainError("normalize_shares: shares sum to zero");
    CohortArray out = shares;
    for (auto& s : out) s /= total;
    return out;
}

std::size_t theta_dim(PolicyFamily family) {
    switch (family) {
        case PolicyFamily::Bau: return 0;
        case PolicyFamily::LinearE: return 2;
        case PolicyFamily::LinearETransfers: return 2 + kCohorts;
        case PolicyFamily::FullLinear: return 4 + kCohorts;
    }
    return 0;
}

std::string_view family_name(PolicyFamily family) {
    switch (family) {
        case PolicyFamily::Bau: return "bau";
        case PolicyFamily::LinearE: return "linear_e";
        case PolicyFamily::LinearETransfers: return "linear_e_transfers";
        case PolicyFamily::FullLinear: return "full_linear";
    }
    return "unknown";
}

PolicyFamily parse_family(std::string_view name) {
    for (auto f : {PolicyFamily::Bau, PolicyFamily::LinearE, PolicyFamily::LinearETransfers,
                   PolicyFamily::FullLinear}) {
        if (family_name(f) == name) return f;
    }
    throw ConfigError("unknown policy family '" + std::string(name) + "'");
}

std::vector<std::string> theta_names(PolicyFamily family) {
    std::vector<std::string> names;
    switch (family) {
        case PolicyFamily::Bau: return names;
        case PolicyFamily::LinearE: return {"theta0", "thetaE"};
        case PolicyFamily::LinearETransfers: names = {"theta0", "thetaE"}; break;
        case PolicyFamily::FullLinear: names = {"theta0", "thetaE", "thetaKappa", "thetaTP"}; break;
    }
    for (std::size_t j = 1; j <= kCohorts; ++j) names.push_back("share" + std::to_string(j));
    return names;
}

}  // namespace olg
