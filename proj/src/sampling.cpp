#include "olg/sampling.hpp"

#include <cmath>
#include <random>
#include <string>

#include "olg/errors.hpp"

namespace olg {

bool SamplingSpec::has_shares() const {
    return family == PolicyFamily::LinearETransfers || family == PolicyFamily::FullLinear;
}

void SamplingSpec::validate() const {
    const std::size_t coefs = theta_dim(family) - (has_shares() ? kCohorts : 0);
    if (coef_lo.size() != coefs || coef_hi.size() != coefs) {
        throw ConfigError("sampling bounds do not match the family's coefficient count");
    }
    for (std::size_t i = 0; i < coefs; ++i) {
        if (!std::isfinite(coef_lo[i]) || !std::isfinite(coef_hi[i]) || !(coef_lo[i] < coef_hi[i])) {
            throw ConfigError("sampling bound " + std::to_string(i) + " must satisfy lo < hi");
        }
    }
    if (!(tax_cap > 0.0)) throw ConfigError("tax_cap must be positive");
    for (double a : alpha) {
        if (!(a > 0.0)) throw ConfigError("Dirichlet concentrations must be positive");
    }
}

std::vector<double> SamplingSpec::theta_lo() const {
    auto v = coef_lo;
    if (has_shares()) v.insert(v.end(), kCohorts, 0.0);
    return v;
}

std::vector<double> SamplingSpec::theta_hi() const {
    auto v = coef_hi;
    if (has_shares()) v.insert(v.end(), kCohorts, 1.0);
    return v;
}

SamplingSpec default_sampling_spec(PolicyFamily family) {
    SamplingSpec s;
    s.family = family;
    switch (family) {
        case PolicyFamily::Bau:
            break;
        case PolicyFamily::LinearE:
            s.coef_lo = {-2.0, -2.0};
            s.coef_hi = {2.0, 2.0};
            s.tax_cap = 1.5;
            break;
        case PolicyFamily::LinearETransfers:
            s.coef_lo = {-0.5, 0.0};
            s.coef_hi = {0.1, 0.5};
            s.tax_cap = 0.8;
            break;
        case PolicyFamily::FullLinear:
            s.coef_lo = {-1.0, -0.5, -0.6, -1.0};
            s.coef_hi = {0.5, 1.0, 0.6, 1.0};
            s.tax_cap = 0.8;
            break;
    }
    return s;
}

std::array<std::vector<double>, 2> endpoint_tax_gradients(const SamplingSpec& spec) {
    const auto& h = spec.heuristics;
    const std::size_t d = theta_dim(spec.family);
    std::vector<double> g0(d, 0.0), g29(d, 0.0);
    switch (spec.family) {
        case PolicyFamily::Bau:
            break;
        case PolicyFamily::LinearE:
        case PolicyFamily::LinearETransfers:
            g0[0] = g29[0] = 1.0;
            g0[1] = h.E0;
            g29[1] = h.E29;
            break;
        case PolicyFamily::FullLinear:
            g0[0] = g29[0] = 1.0;
            g0[1] = h.E0 / h.E0;
            g29[1] = h.E29 / h.E0;
            g0[2] = h.kappa0 / h.kappa0;
            g29[2] = h.kappa29 / h.kappa0;
            g0[3] = h.tip0;
            g29[3] = h.tip29;
            break;
    }
    return {g0, g29};
}

EndpointTaxes endpoint_taxes(const SamplingSpec& spec, std::span<const double> theta) {
    if (theta.size() != theta_dim(spec.family)) throw DomainError("endpoint_taxes: dimension mismatch");
    const auto g = endpoint_tax_gradients(spec);
    EndpointTaxes out;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        out.tau0 += g[0][i] * theta[i];
        out.tau29 += g[1][i] * theta[i];
    }
    return out;
}

bool passes_filter(const SamplingSpec& spec, std::span<const double> theta) {
    if (spec.family == PolicyFamily::Bau) return true;
    const auto tax = endpoint_taxes(spec, theta);
    return tax.tau0 >= 0.0 && tax.tau0 <= spec.tax_cap && tax.tau29 > 0.0 && tax.tau29 <= spec.tax_cap;
}

CohortArray dirichlet_sample(const CohortArray& alpha, RngStream& rng) {
    CohortArray x{};
    double total = 0.0;
    for (std::size_t j = 0; j < kCohorts; ++j) {
        if (!(alpha[j] > 0.0)) throw DomainError("dirichlet_sample: concentrations must be positive");
        std::gamma_distribution<double> gamma(alpha[j], 1.0);
        x[j] = gamma(rng);
        total += x[j];
    }
    if (!(total > 0.0)) {
        // All draws underflowed (tiny alpha); fall back to the mean.
        double a = 0.0;
        for (double v : alpha) a += v;
        for (std::size_t j = 0; j < kCohorts; ++j) x[j] = alpha[j] / a;
        return x;
    }
    for (auto& v : x) v /= total;
    return x;
}

std::vector<std::vector<double>> sample_pseudo_states(const SamplingSpec& spec, std::size_t n, RngStream& rng) {
    if (n == 0) throw ConfigError("sample_pseudo_states: n must be positive");
    std::vector<std::vector<double>> out;
    out.reserve(n);
    if (spec.family == PolicyFamily::Bau) {
        out.assign(n, {});
        return out;
    }
    spec.validate();
    const std::size_t coefs = spec.coef_dim();
    std::size_t tries = 0;
    // Past this many draws the acceptance rate is certainly below the configured floor.
    const std::size_t check_after = static_cast<std::size_t>(10.0 / spec.min_acceptance);
    while (out.size() < n) {
        std::vector<double> theta(theta_dim(spec.family));
        for (std::size_t i = 0; i < coefs; ++i) {
            std::uniform_real_distribution<double> u(spec.coef_lo[i], spec.coef_hi[i]);
            theta[i] = u(rng);
        }
        if (spec.has_shares()) {
            const auto shares = dirichlet_sample(spec.alpha, rng);
            std::copy(shares.begin(), shares.end(), theta.begin() + static_cast<std::ptrdiff_t>(coefs));
        }
        ++tries;
        if (passes_filter(spec, theta)) out.push_back(std::move(theta));
        if (tries >= check_after &&
            static_cast<double>(out.size()) < spec.min_acceptance * static_cast<double>(tries)) {
            throw ConfigError("pseudo-state acceptance rate below " + std::to_string(spec.min_acceptance) +
                              "; sampling bounds are inconsistent with the tax cap");
        }
    }
    return out;
}

}  // namespace olg
