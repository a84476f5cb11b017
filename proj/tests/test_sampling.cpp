#include <doctest.h>

#include <cmath>
#include <numeric>

#include "olg/errors.hpp"
#include "olg/sampling.hpp"

using namespace olg;

TEST_CASE("default sampling boxes") {
    const auto le = default_sampling_spec(PolicyFamily::LinearE);
    CHECK(le.coef_lo == std::vector<double>{-2.0, -2.0});
    CHECK(le.coef_hi == std::vector<double>{2.0, 2.0});
    CHECK(le.tax_cap == 1.5);
    CHECK_FALSE(le.has_shares());
    const auto fl = default_sampling_spec(PolicyFamily::FullLinear);
    CHECK(fl.theta_lo().size() == 16);
    CHECK(fl.tax_cap == 0.8);
    for (PolicyFamily f : {PolicyFamily::LinearE, PolicyFamily::LinearETransfers, PolicyFamily::FullLinear}) {
        CHECK_NOTHROW(default_sampling_spec(f).validate());
    }
}

TEST_CASE("filter rejects a negative initial tax") {
    const auto spec = default_sampling_spec(PolicyFamily::LinearE);
    const std::vector<double> theta{-2.0, 0.0};
    CHECK(endpoint_taxes(spec, theta).tau0 == -2.0);
    CHECK_FALSE(passes_filter(spec, theta));
    CHECK(passes_filter(spec, std::vector<double>{0.1, 0.1}));
    // tau29 must be strictly positive
    CHECK_FALSE(passes_filter(spec, std::vector<double>{0.0, 0.0}));
}

TEST_CASE("filter soundness over many draws") {
    for (PolicyFamily f : {PolicyFamily::LinearE, PolicyFamily::LinearETransfers, PolicyFamily::FullLinear}) {
        const auto spec = default_sampling_spec(f);
        RngStream rng(5, static_cast<std::uint64_t>(f));
        const auto draws = sample_pseudo_states(spec, 20000, rng);
        REQUIRE(draws.size() == 20000);
        std::size_t bad = 0;
        for (const auto& th : draws) {
            const auto t = endpoint_taxes(spec, th);
            if (t.tau0 < 0.0 || t.tau0 > spec.tax_cap || !(t.tau29 > 0.0) || t.tau29 > spec.tax_cap) ++bad;
            for (std::size_t i = 0; i < spec.coef_dim(); ++i) {
                if (th[i] < spec.coef_lo[i] || th[i] > spec.coef_hi[i]) ++bad;
            }
            if (spec.has_shares()) {
                const double s = std::accumulate(th.begin() + static_cast<std::ptrdiff_t>(spec.coef_dim()), th.end(), 0.0);
                if (std::abs(s - 1.0) > 1e-12) ++bad;
            }
        }
        CHECK(bad == 0);
    }
}

TEST_CASE("inconsistent bounds are reported as a configuration error") {
    auto spec = default_sampling_spec(PolicyFamily::LinearE);
    spec.coef_lo = {-2.0, -2.0};
    spec.coef_hi = {-1.0, -1.0};  // every tax is negative
    RngStream rng(1, 0);
    CHECK_THROWS_AS(sample_pseudo_states(spec, 10, rng), ConfigError);
    spec.coef_hi = {-2.0, 1.0};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = default_sampling_spec(PolicyFamily::LinearE);
    spec.tax_cap = 0.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("Dirichlet moments") {
    const CohortArray& a = kDirichletAlpha;
    const double a0 = std::accumulate(a.begin(), a.end(), 0.0);
    RngStream rng(12, 0);
    constexpr std::size_t n = 200000;
    CohortArray mean{}, sq{};
    std::size_t negative = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = dirichlet_sample(a, rng);
        double s = 0.0;
        for (std::size_t j = 0; j < kCohorts; ++j) {
            if (x[j] < 0.0) ++negative;
            s += x[j];
            mean[j] += x[j];
            sq[j] += x[j] * x[j];
        }
        if (std::abs(s - 1.0) > 1e-12) FAIL("shares do not sum to one");
    }
    CHECK(negative == 0);
    for (std::size_t j = 0; j < kCohorts; ++j) {
        const double m = a[j] / a0;
        const double var = a[j] * (a0 - a[j]) / (a0 * a0 * (a0 + 1.0));
        const double emp_mean = mean[j] / n;
        const double emp_var = sq[j] / n - emp_mean * emp_mean;
        CHECK(std::abs(emp_mean - m) < 5.0 * std::sqrt(var / n));
        // Var of the sample variance is bounded by E[x^4] / n <= E[x^2] / n for x in [0, 1].
        CHECK(std::abs(emp_var - var) < 5.0 * std::sqrt((var + m * m) / n));
    }
}

TEST_CASE("Dirichlet concentration limit and domain") {
    CohortArray big;
    big.fill(1e6);
    RngStream rng(2, 0);
    const auto x = dirichlet_sample(big, rng);
    for (double v : x) CHECK(v == doctest::Approx(1.0 / 12.0).epsilon(0.01));
    CohortArray bad = kDirichletAlpha;
    bad[3] = 0.0;
    CHECK_THROWS_AS(dirichlet_sample(bad, rng), DomainError);
}

TEST_CASE("BAU needs no pseudo-states") {
    const auto spec = default_sampling_spec(PolicyFamily::Bau);
    RngStream rng(1, 0);
    const auto d = sample_pseudo_states(spec, 3, rng);
    REQUIRE(d.size() == 3);
    for (const auto& v : d) CHECK(v.empty());
}
