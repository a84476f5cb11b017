#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "olg/econ.hpp"
#include "olg/errors.hpp"

using namespace olg;

namespace {

const EconParams ep;
const ClimateParams cp;

constexpr CohortArray kPublishedShares = {0.128, 0.051, 0.058, 0.089, 0.149, 0.09,
                                          0.066, 0.143, 0.076, 0.048, 0.039, 0.061};

}  // namespace

TEST_CASE("damage multiplier") {
    CHECK(damage(0.0, 3.0, cp) == 1.0);
    // Oracle in extended precision.
    const long double T = 3.0L;
    const long double oracle = 1.0L / (1.0L + (T / 13.16L) * (T / 13.16L) + std::pow(T / 6.0L, 6.754L));
    CHECK(damage(3.0, 3.0, cp) == doctest::Approx(static_cast<double>(oracle)).epsilon(1e-14));
    CHECK(damage(3.0, 3.0, cp) == doctest::Approx(0.9423).epsilon(1e-4));
    CHECK(damage(2.0, 2.5, cp) < damage(2.0, 3.5, cp));
    CHECK_THROWS_AS(damage(-0.1, 3.0, cp), DomainError);
    CHECK_THROWS_AS(damage(1.0, 3.7, cp), DomainError);
}

TEST_CASE("damage bounds and monotonicity on a grid") {
    for (double T = 0.0; T <= 10.0; T += 0.05) {
        for (double TP = 2.5; TP <= 3.5 + 1e-9; TP += 0.1) {
            const double o = damage(T, TP, cp);
            CHECK(o > 0.0);
            CHECK(o <= 1.0);
            if (T > 0.0) CHECK(damage(T + 0.05, TP, cp) < o);
        }
    }
}

TEST_CASE("abatement from the firm's first-order condition") {
    CHECK(abatement_from_tax(0.0, 0.35, 1.0, ep) == 0.0);
    const double kappa = 0.35, omega = 0.97;
    const double tau_full = omega * ep.theta1 * ep.theta2 / kappa;
    CHECK(abatement_from_tax(tau_full, kappa, omega, ep) == 1.0);
    CHECK(abatement_from_tax(2.0 * tau_full, kappa, omega, ep) == 1.0);
    CHECK(abatement_from_tax(0.4, 0.0, omega, ep) == 0.0);
    CHECK_THROWS_AS(abatement_from_tax(-0.1, kappa, omega, ep), DomainError);

    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double tau = 1.5 * U(gen), k = 0.01 + 0.5 * U(gen), om = 0.5 + 0.5 * U(gen);
        const double mu = abatement_from_tax(tau, k, om, ep);
        if (mu > 0.0 && mu < 1.0) {
            const double lhs = om * ep.theta1 * ep.theta2 * std::pow(mu, ep.theta2 - 1.0);
            CHECK(std::abs(lhs - tau * k) <= 1e-12 * std::max(1.0, tau * k));
        }
    }
}

TEST_CASE("abatement monotonicity") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        const double tau = U(gen), k = 0.5 * U(gen), om = 0.3 + 0.7 * U(gen), d = 0.05 * U(gen);
        const double mu = abatement_from_tax(tau, k, om, ep);
        CHECK(abatement_from_tax(tau + d, k, om, ep) >= mu);
        CHECK(abatement_from_tax(tau, k + d, om, ep) >= mu);
        CHECK(abatement_from_tax(tau, k, std::min(1.0, om + d), ep) <= mu);
        CHECK(mu <= 1.0);
    }
}

TEST_CASE("factor prices") {
    const double k = 0.5;
    const auto bau = factor_prices(k, 0.0, 0.0, 0.35, 1.0, ep);
    CHECK(bau.r == doctest::Approx(ep.alpha * std::pow(k, ep.alpha - 1.0) - ep.delta).epsilon(1e-15));
    CHECK(bau.w == doctest::Approx((1.0 - ep.alpha) * std::pow(k, ep.alpha)).epsilon(1e-15));
    CHECK_THROWS_AS(factor_prices(0.0, 0.0, 0.0, 0.35, 1.0, ep), DomainError);

    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double kk = 0.05 + U(gen), mu = U(gen), tau = U(gen), kap = 0.4 * U(gen), om = 0.5 + 0.5 * U(gen);
        const auto fp = factor_prices(kk, mu, tau, kap, om, ep);
        const double prod = om * (1.0 - ep.theta1 * std::pow(mu, ep.theta2)) - tau * kap * (1.0 - mu);
        // Euler's theorem with unit labour.
        CHECK(fp.r * kk + fp.w + ep.delta * kk == doctest::Approx(std::pow(kk, ep.alpha) * prod).epsilon(1e-12));
        // Homogeneity: both r + delta and w are proportional to the productivity term.
        const auto unit = factor_prices(kk, 0.0, 0.0, 0.0, 1.0, ep);
        CHECK((fp.r + ep.delta) == doctest::Approx((unit.r + ep.delta) * prod).epsilon(1e-12));
        CHECK(fp.w == doctest::Approx(unit.w * prod).epsilon(1e-12));
    }
}

TEST_CASE("emissions") {
    CHECK(emissions(0.4, 1.0, 0.35, ep) == 0.0);
    CHECK(emissions(0.4, 0.0, 0.0, ep) == 0.0);
    const double e0 = emissions(0.4, 0.0, 0.35, ep);
    CHECK(e0 > 0.0);
    for (double mu : {0.1, 0.3, 0.77}) CHECK(emissions(0.4, mu, 0.35, ep) == doctest::Approx((1.0 - mu) * e0).epsilon(1e-14));
}

TEST_CASE("tax rules") {
    CHECK(tax_rate(TaxScheme::bau(), 1.3, 0.2, 2.0, 3.0, ep, cp) == 0.0);
    CHECK(tax_rate(TaxScheme::linear_e(-0.01, 0.43), 0.851, 0.35, 1.4467, 3.0, ep, cp) ==
          doctest::Approx(-0.01 + 0.43 * 0.851).epsilon(1e-15));
    CHECK(tax_rate(TaxScheme::linear_e(-0.01, 0.43), 0.851, 0.35, 1.4467, 3.0, ep, cp) == doctest::Approx(0.3559).epsilon(1e-4));
    const CohortArray shares = normalize_shares(kPublishedShares);
    const auto full = TaxScheme::full_linear(0.1, 0.2, 0.3, 0.4, shares);
    const double tipped = tax_rate(full, 1.7, 0.2, 3.1, 3.0, ep, cp);
    CHECK(tipped == doctest::Approx(0.1 + 0.2 * 1.7 / cp.E0 + 0.3 * 0.2 / cp.kappa0 + 0.4).epsilon(1e-14));
    CHECK(effective_tax(-0.2) == 0.0);
    CHECK(effective_tax(0.2) == 0.2);
}

TEST_CASE("distance to tipping") {
    CHECK(distance_to_tipping(3.0, 3.0, cp) == 0.0);
    CHECK(distance_to_tipping(3.2, 3.0, cp) == 0.0);
    CHECK(distance_to_tipping(cp.T0(), 3.5, cp) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cp.T0() == doctest::Approx(1.4467).epsilon(1e-12));
    CHECK(distance_to_tipping(cp.T0(), 3.0, cp) == doctest::Approx((3.0 - 1.4467) / (3.5 - 1.4467)).epsilon(1e-12));
    CHECK(distance_to_tipping(cp.T0(), 3.0, cp) == doctest::Approx(0.7565).epsilon(1e-4));
    for (double T = 0.0; T < 5.0; T += 0.1) {
        const double d = distance_to_tipping(T, 2.5, cp);
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
    }
}

TEST_CASE("transfers") {
    for (double x : transfers(TaxScheme::linear_e(0.1, 0.2), 0.0, 150.0, ep)) CHECK(x == 0.0);
    for (double x : transfers(TaxScheme::bau(), 0.0, 150.0, ep)) CHECK(x == 0.0);

    const auto geo = transfers(TaxScheme::linear_e(0.1, 0.2), 0.3, 150.0, ep);
    for (std::size_t j = 0; j + 1 < kCohorts; ++j) CHECK(geo[j] / geo[j + 1] == doctest::Approx(1.0 / 0.9).epsilon(1e-13));
    const double revenue = 0.3 * 150.0 / ep.L_scale;
    CHECK(std::abs(std::accumulate(geo.begin(), geo.end(), 0.0) - revenue) < 1e-10);
    CHECK(transfer_shares(TaxScheme::linear_e(0.1, 0.2))[0] == doctest::Approx(0.1394).epsilon(1e-3));

    // Published planner shares are rounded to three decimals and sum to 0.998.
    TaxScheme raw = TaxScheme::linear_e_transfers(-0.186, 0.225, kPublishedShares);
    const auto s = transfer_shares(raw);
    CHECK(std::accumulate(s.begin(), s.end(), 0.0) == doctest::Approx(0.998).epsilon(1e-12));
    CHECK_THROWS_AS(transfers(raw, 0.3, 150.0, ep), DomainError);
    const auto fixed = transfers(TaxScheme::linear_e_transfers(-0.186, 0.225, normalize_shares(kPublishedShares)), 0.3, 150.0, ep);
    CHECK(std::abs(std::accumulate(fixed.begin(), fixed.end(), 0.0) - revenue) < 1e-10);
}

TEST_CASE("utility and marginal utility") {
    CHECK(period_utility(1.0 / ep.B_util, ep) == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK_THROWS_AS(period_utility(0.0, ep), DomainError);
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> U(0.01, 1.0);
    for (int i = 0; i < 200; ++i) {
        const double c = U(gen);
        CHECK(period_utility(2.0 * c, ep) > period_utility(c, ep));
        CHECK(period_utility(c, ep) < 0.0);
        const double h = 1e-6 * c;
        const double fd = (period_utility(c + h, ep) - period_utility(c - h, ep)) / (2.0 * h);
        CHECK(marginal_utility(c, ep) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("consumption-equivalent variation") {
    CHECK(cev(-3.0, -3.0, ep) == 0.0);
    CHECK(cev(-3.0 / 1.21, -3.0, ep) == doctest::Approx(0.10).epsilon(1e-12));
    CHECK_THROWS_AS(cev(-1.0, 1.0, ep), DomainError);
    std::mt19937_64 gen(23);
    std::uniform_real_distribution<double> U(0.1, 10.0);
    for (int i = 0; i < 1000; ++i) {
        const double a = -U(gen), b = -U(gen);
        const double g = cev(a, b, ep);
        if (a > b) CHECK(g > 0.0);
        if (a < b) CHECK(g < 0.0);
        CHECK(cev(a + 0.01, b, ep) > g);
    }
    // Scaling both utilities by the same positive constant leaves the CEV unchanged.
    CHECK(cev(denormalize_value(-2.0, ep), denormalize_value(-2.5, ep), ep) == doctest::Approx(cev(-2.0, -2.5, ep)).epsilon(1e-13));
}

TEST_CASE("labour profile") {
    const auto l = labor_profile(ep);
    CHECK(std::accumulate(l.begin(), l.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    for (double x : l) CHECK(x > 0.0);
    for (std::size_t j = 9; j < kCohorts; ++j) CHECK(l[j] == doctest::Approx(l[8]).epsilon(1e-14));
    // Retired annual endowment is a third of the annual endowment at age 40.
    auto annual = [](double j) { return std::exp(4.47 + 0.033 * j - 0.00067 * j * j); };
    double last_working = 0.0;
    for (int y = 36; y <= 40; ++y) last_working += annual(y) / 5.0;
    CHECK(l[8] / l[7] == doctest::Approx((annual(40.0) / 3.0) / last_working).epsilon(1e-12));
    // Annual peak at 0.033 / 0.00134 = 24.6 years lies in period 5 (ages 21..25).
    const auto peak = static_cast<std::size_t>(std::max_element(l.begin(), l.begin() + 8) - l.begin());
    CHECK(peak == 4);
    CHECK(0.033 / (2.0 * 0.00067) == doctest::Approx(24.63).epsilon(1e-3));
}

TEST_CASE("parameter validation") {
    CHECK_NOTHROW(ep.validate());
    CHECK_NOTHROW(cp.validate());
    EconParams bad = ep;
    bad.sigma = 0.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    const auto prof = default_cohort_profile(ep);
    CHECK_NOTHROW(prof.validate());
    CohortProfile p2 = prof;
    p2.initial_assets[0] = 0.01;
    CHECK_THROWS_AS(p2.validate(), DomainError);
}
