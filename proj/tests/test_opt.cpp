#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "olg/errors.hpp"
#include "olg/policy_opt.hpp"
#include "olg/sampling.hpp"
#include "olg/sqp.hpp"

using namespace olg;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Objective neg_sq_dist(std::vector<double> c, std::vector<double> w = {}) {
    if (w.empty()) w.assign(c.size(), 1.0);
    return [c, w](std::span<const double> x, std::vector<double>* g) {
        double f = 0.0;
        if (g) g->assign(x.size(), 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            f -= w[i] * (x[i] - c[i]) * (x[i] - c[i]);
            if (g) (*g)[i] = -2.0 * w[i] * (x[i] - c[i]);
        }
        return f;
    };
}

ConstraintSet box(std::size_t n, double lo, double hi) {
    ConstraintSet cs;
    cs.lo.assign(n, lo);
    cs.hi.assign(n, hi);
    return cs;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// GP fitted to samples of a smooth concave function on [lo, hi]^d.
GpModel fitted_surrogate(const std::function<double(const std::vector<double>&)>& f, std::size_t d, double lo,
                         double hi, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        std::vector<double> x(d);
        for (std::size_t q = 0; q < d; ++q) X(i, static_cast<Eigen::Index>(q)) = x[q] = u(g);
        y(i) = f(x);
    }
    GpFitOptions o;
    o.restarts = 2;
    o.iterations = 150;
    o.seed = seed;
    return fit_gp(X, y, std::vector<double>(d, lo), std::vector<double>(d, hi), o);
}

}  // namespace

TEST_CASE("QP solver: equality-constrained least norm") {
    // min 0.5|z|^2 s.t. z1 + z2 = 2, z >= 0  ->  z = (1, 1)
    const Eigen::MatrixXd H = Eigen::MatrixXd::Identity(2, 2);
    const Eigen::VectorXd h = Eigen::VectorXd::Zero(2);
    Eigen::MatrixXd E(1, 2);
    E << 1, 1;
    Eigen::VectorXd e(1);
    e << 2;
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(2, 2);
    const Eigen::VectorXd b = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd z0(2);
    z0 << 2, 0;
    const auto r = solve_qp(H, h, E, e, A, b, z0);
    CHECK(r.optimal);
    CHECK(r.z(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.z(1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.nu(0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("QP solver: active bound has the right multiplier") {
    // min 0.5 (z - 3)^2 s.t. z <= 1  ->  z = 1, multiplier 2
    Eigen::MatrixXd H(1, 1);
    H << 1;
    Eigen::VectorXd h(1);
    h << -3;
    Eigen::MatrixXd A(1, 1);
    A << -1;
    Eigen::VectorXd b(1);
    b << -1;
    const auto r = solve_qp(H, h, Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), A, b, Eigen::VectorXd::Zero(1));
    CHECK(r.optimal);
    CHECK(r.z(0) == doctest::Approx(1.0));
    CHECK(r.lambda(0) == doctest::Approx(2.0));
    CHECK_THROWS_AS(solve_qp(H, h, Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), A, b, Eigen::VectorXd::Constant(1, 5.0)),
                    DomainError);
}

TEST_CASE("SQP: interior maximum of a concave quadratic") {
    const std::vector<double> c{0.3, -0.7, 1.2};
    const auto sol = solve_constrained(neg_sq_dist(c, {1.0, 4.0, 0.5}), box(3, -5.0, 5.0), std::vector<double>{0, 0, 0});
    CHECK(sol.converged);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(sol.x[i] - c[i]) <= 1e-6);
}

TEST_CASE("SQP: binding slab constraint lands on the projection") {
    ConstraintSet cs = box(2, -10.0, 10.0);
    const std::vector<double> a{1.0, 2.0};
    cs.linear.push_back({a, 0.0, 1.5, "slab"});
    const std::vector<double> c{2.0, 3.0};  // a.c = 8 > 1.5
    const auto sol = solve_constrained(neg_sq_dist(c), cs, std::vector<double>{0.1, 0.1});
    const double t = (dot(a, c) - 1.5) / dot(a, a);
    CHECK(sol.converged);
    CHECK(sol.x[0] == doctest::Approx(c[0] - t * a[0]).epsilon(1e-7));
    CHECK(sol.x[1] == doctest::Approx(c[1] - t * a[1]).epsilon(1e-7));
    CHECK(sol.stationarity < 1e-6);
    CHECK(sol.max_violation < 1e-6);
    CHECK(sol.complementarity < 1e-6);
}

TEST_CASE("SQP: linear objective over a slab polygon lands on a vertex") {
    std::mt19937_64 g(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        ConstraintSet cs = box(2, -1.0, 1.0);
        const std::vector<double> a{u(g), u(g)};
        cs.linear.push_back({a, -0.3, 0.4, "slab"});
        const std::vector<double> w{u(g), u(g)};
        Objective f = [w](std::span<const double> x, std::vector<double>* gr) {
            if (gr) *gr = w;
            return w[0] * x[0] + w[1] * x[1];
        };
        // Vertex enumeration over all pairs of the six boundary lines.
        std::vector<std::pair<std::vector<double>, double>> lines{{{1, 0}, -1}, {{1, 0}, 1}, {{0, 1}, -1},
                                                                  {{0, 1}, 1},  {a, -0.3},  {a, 0.4}};
        double best = -kInf;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            for (std::size_t j = i + 1; j < lines.size(); ++j) {
                const auto& [p, pb] = lines[i];
                const auto& [q, qb] = lines[j];
                const double det = p[0] * q[1] - p[1] * q[0];
                if (std::fabs(det) < 1e-12) continue;
                const std::vector<double> v{(pb * q[1] - p[1] * qb) / det, (p[0] * qb - pb * q[0]) / det};
                const double av = dot(a, v);
                if (std::fabs(v[0]) > 1 + 1e-12 || std::fabs(v[1]) > 1 + 1e-12 || av < -0.3 - 1e-12 || av > 0.4 + 1e-12) continue;
                best = std::max(best, dot(w, v));
            }
        }
        const auto sol = solve_constrained(f, cs, std::vector<double>{0.0, 0.0});
        CHECK(sol.converged);
        CHECK(sol.f == doctest::Approx(best).epsilon(1e-8));
    }
}

TEST_CASE("SQP: simplex solution invariant under elimination of one share") {
    const std::vector<double> t{0.5, 0.3, -0.1, 0.4, 0.05};
    const std::vector<double> w{1.0, 2.0, 0.5, 3.0, 1.5};
    ConstraintSet full = box(5, 0.0, 1.0);
    full.equalities.push_back({std::vector<double>(5, 1.0), 1.0, "simplex"});
    const auto a = solve_constrained(neg_sq_dist(t, w), full, std::vector<double>(5, 0.2));
    REQUIRE(a.converged);

    // Four free shares, the fifth is 1 - sum.
    Objective reduced = [&](std::span<const double> x, std::vector<double>* g) {
        std::vector<double> s(x.begin(), x.end());
        s.push_back(1.0 - std::accumulate(x.begin(), x.end(), 0.0));
        std::vector<double> gs;
        const double f = neg_sq_dist(t, w)(s, g ? &gs : nullptr);
        if (g) {
            g->resize(4);
            for (std::size_t i = 0; i < 4; ++i) (*g)[i] = gs[i] - gs[4];
        }
        return f;
    };
    ConstraintSet red = box(4, 0.0, 1.0);
    red.linear.push_back({std::vector<double>(4, 1.0), 0.0, 1.0, "last share"});
    const auto b = solve_constrained(reduced, red, std::vector<double>(4, 0.2));
    REQUIRE(b.converged);
    double last = 1.0;
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(a.x[i] == doctest::Approx(b.x[i]).epsilon(1e-7).scale(1.0));
        last -= b.x[i];
    }
    CHECK(a.x[4] == doctest::Approx(last).epsilon(1e-7).scale(1.0));
    CHECK(std::accumulate(a.x.begin(), a.x.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("SQP: nonlinear constraint and elastic recovery from a violated start") {
    ConstraintSet cs = box(2, -2.0, 2.0);
    cs.nonlinear.push_back({[](std::span<const double> x, std::vector<double>* g) {
                                if (g) *g = {-2.0 * x[0], -2.0 * x[1]};
                                return 1.0 - x[0] * x[0] - x[1] * x[1];
                            },
                            "disk"});
    Objective f = [](std::span<const double> x, std::vector<double>* g) {
        if (g) *g = {1.0, 1.0};
        return x[0] + x[1];
    };
    for (const std::vector<double>& start : {std::vector<double>{0.0, 0.0}, std::vector<double>{1.8, -1.9}}) {
        const auto sol = solve_constrained(f, cs, start);
        CHECK(sol.converged);
        CHECK(sol.x[0] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-7));
        CHECK(sol.x[1] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-7));
    }
}

TEST_CASE("SQP: fixed coordinates are eliminated") {
    ConstraintSet cs = box(3, -1.0, 1.0);
    cs.lo[1] = cs.hi[1] = 0.25;
    const auto sol = solve_constrained(neg_sq_dist({0.5, -0.5, 0.1}), cs, std::vector<double>{0.0, 0.25, 0.0});
    CHECK(sol.converged);
    CHECK(sol.x[1] == 0.25);
    CHECK(sol.x[0] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(sol.x[2] == doctest::Approx(0.1).epsilon(1e-8));
    CHECK_THROWS_AS(solve_constrained(neg_sq_dist({0, 0, 0}), cs, std::vector<double>{0.0, 2.0, 0.0}), DomainError);
}

TEST_CASE("SQP: iteration cap flags non-convergence") {
    SqpOptions o;
    o.max_iter = 1;
    const auto sol = solve_constrained(neg_sq_dist({0.3, 0.9}, {1.0, 100.0}), box(2, -5.0, 5.0),
                                       std::vector<double>{-4.0, 4.0}, o);
    CHECK_FALSE(sol.converged);
}

TEST_CASE("simplex projection") {
    std::mt19937_64 g(1);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> v(12);
        for (auto& x : v) x = n(g);
        const auto p = project_simplex(v);
        double s = 0.0;
        for (double x : p) {
            CHECK(x >= 0.0);
            s += x;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
        // Optimality: the projection is no farther than 200 random simplex points.
        double dp = 0.0;
        for (std::size_t i = 0; i < 12; ++i) dp += (p[i] - v[i]) * (p[i] - v[i]);
        RngStream rng(static_cast<std::uint64_t>(rep), 9);
        for (int k = 0; k < 200; ++k) {
            const auto q = dirichlet_sample(kDirichletAlpha, rng);
            double dq = 0.0;
            for (std::size_t i = 0; i < 12; ++i) dq += (q[i] - v[i]) * (q[i] - v[i]);
            CHECK(dp <= dq + 1e-12);
        }
        const auto pp = project_simplex(p);
        CHECK(std::equal(pp.begin(), pp.end(), p.begin()));
    }
    const std::vector<double> feasible{0.25, 0.25, 0.5};
    CHECK(project_simplex(feasible) == feasible);
}

TEST_CASE("policy constraints match the endpoint tax rows") {
    for (PolicyFamily fam : {PolicyFamily::LinearE, PolicyFamily::LinearETransfers, PolicyFamily::FullLinear}) {
        const auto spec = default_sampling_spec(fam);
        const auto cs = policy_constraints(spec);
        CHECK(cs.dim() == theta_dim(fam));
        CHECK(cs.equalities.size() == (spec.has_shares() ? 1u : 0u));
        RngStream rng(4, 1);
        const auto starts = generate_starts(spec, 64, rng);
        CHECK(starts.size() == 64);
        for (std::size_t i = 0; i < 6; ++i) CHECK(starts[0][i % spec.coef_dim()] == 0.0);
        for (const auto& s : starts) {
            CHECK(recheck_feasibility(cs, s).ok(1e-12));
            const auto taxes = endpoint_taxes(spec, s);
            CHECK(dot(cs.linear[0].a, s) == doctest::Approx(taxes.tau0).epsilon(1e-13).scale(1.0));
            CHECK(dot(cs.linear[1].a, s) == doctest::Approx(taxes.tau29).epsilon(1e-13).scale(1.0));
        }
        std::vector<double> bad = starts[1];
        bad[0] = spec.coef_hi[0] + 0.1;
        const auto rep = recheck_feasibility(cs, bad);
        CHECK_FALSE(rep.ok(1e-8));
        CHECK_FALSE(rep.worst.empty());
        const auto it = std::find_if(rep.residuals.begin(), rep.residuals.end(),
                                     [](const auto& r) { return r.first == "upper:0"; });
        REQUIRE(it != rep.residuals.end());
        CHECK(it->second == doctest::Approx(-0.1));
    }
}

TEST_CASE("welfare maximization on a surrogate recovers an interior optimum") {
    const std::vector<double> c{-0.2, 0.4};
    auto truth = [&](const std::vector<double>& x) { return -(x[0] - c[0]) * (x[0] - c[0]) - 2.0 * (x[1] - c[1]) * (x[1] - c[1]); };
    const GpModel m = fitted_surrogate(truth, 2, -2.0, 2.0, 80, 3);
    auto spec = default_sampling_spec(PolicyFamily::LinearE);
    const auto cs = policy_constraints(spec);
    RngStream rng(2, 2);
    const auto starts = generate_starts(spec, 16, rng);
    const auto res = maximize_welfare(gp_mean_objective(m), cs, starts);
    CHECK(res.consensus);
    CHECK(res.feasibility.ok(1e-8));
    CHECK(res.theta_star[0] == doctest::Approx(c[0]).epsilon(0.02).scale(1.0));
    CHECK(res.theta_star[1] == doctest::Approx(c[1]).epsilon(0.02).scale(1.0));
    for (const auto& s : res.starts) {
        if (s.converged && s.feasible) CHECK(s.f <= res.objective + 1e-12);
    }

    // Exact objective, tight tolerance.
    Objective exact = neg_sq_dist(c, {1.0, 2.0});
    const auto r2 = maximize_welfare(exact, cs, starts);
    CHECK(std::fabs(r2.theta_star[0] - c[0]) <= 1e-6);
    CHECK(std::fabs(r2.theta_star[1] - c[1]) <= 1e-6);
}

TEST_CASE("equal optima resolve to the smallest-norm point") {
    Objective flat = [](std::span<const double> x, std::vector<double>* g) {
        if (g) g->assign(x.size(), 0.0);
        return 1.0;
    };
    const auto cs = box(2, -1.0, 1.0);
    const std::vector<std::vector<double>> starts{{0.9, 0.9}, {0.1, -0.2}, {-0.5, 0.0}};
    const auto r = maximize_welfare(flat, cs, starts);
    CHECK(r.theta_star == std::vector<double>{0.1, -0.2});
}

TEST_CASE("more instruments never lower the surrogate optimum") {
    auto spec = default_sampling_spec(PolicyFamily::FullLinear);
    spec.coef_lo = {-1.0, -0.5, -0.6, -1.0};
    const auto cs = policy_constraints(spec);
    const std::vector<double> c{0.1, 0.2, 0.3, -0.2};
    Objective f = [&](std::span<const double> x, std::vector<double>* g) {
        double v = 0.0;
        if (g) g->assign(x.size(), 0.0);
        for (std::size_t i = 0; i < 4; ++i) {
            v -= (x[i] - c[i]) * (x[i] - c[i]);
            if (g) (*g)[i] = -2.0 * (x[i] - c[i]);
        }
        for (std::size_t i = 4; i < x.size(); ++i) {
            v -= 0.1 * (x[i] - 1.0 / 12.0) * (x[i] - 1.0 / 12.0);
            if (g) (*g)[i] = -0.2 * (x[i] - 1.0 / 12.0);
        }
        return v;
    };
    RngStream rng(8, 0);
    auto starts = generate_starts(spec, 12, rng);
    const auto two = maximize_welfare(f, with_fixed(cs, {{2, 0.0}, {3, 0.0}}), starts);
    CHECK(two.theta_star[2] == 0.0);
    CHECK(two.theta_star[3] == 0.0);
    starts.push_back(two.theta_star);
    const auto four = maximize_welfare(f, cs, starts);
    CHECK(four.objective >= two.objective);
    double s = 0.0;
    for (std::size_t i = 4; i < 16; ++i) s += four.theta_star[i];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("Pareto maximization keeps every cohort above its baseline") {
    // Three cohorts with different preferred points; baselines at the BAU value.
    std::vector<GpModel> models;
    const std::vector<std::vector<double>> prefs{{0.0, 0.5}, {0.3, 0.2}, {-0.4, 0.6}};
    for (std::size_t t = 0; t < prefs.size(); ++t) {
        const auto p = prefs[t];
        models.push_back(fitted_surrogate(
            [p](const std::vector<double>& x) { return 1.0 - (x[0] - p[0]) * (x[0] - p[0]) - (x[1] - p[1]) * (x[1] - p[1]); },
            2, -2.0, 2.0, 70, 10 + t));
    }
    const std::vector<double> bau{0.0, 0.0};
    std::vector<double> u_bau;
    for (const auto& m : models) u_bau.push_back(m.predict(bau).mean);
    auto spec = default_sampling_spec(PolicyFamily::LinearE);
    const auto base = policy_constraints(spec);
    RngStream rng(6, 0);
    const auto starts = generate_starts(spec, 12, rng);
    const std::vector<double> gamma{0.6, 0.3, 0.1};
    const auto r = maximize_pareto(models, gamma, u_bau, base, starts, spec, rng);
    for (std::size_t t = 0; t < models.size(); ++t) CHECK(models[t].predict(r.theta_star).mean - u_bau[t] >= -1e-8);
    CHECK(r.objective >= dot(gamma, u_bau) - 1e-12);

    // BAU itself satisfies every Pareto row with equality.
    ConstraintSet with = base;
    add_pareto_constraints(with, models, u_bau);
    CHECK(recheck_feasibility(with, bau).max_violation <= 1e-12);

    // Unreachable baselines are reported with the worst cohorts.
    std::vector<double> impossible = u_bau;
    impossible[1] += 100.0;
    try {
        (void)maximize_pareto(models, gamma, impossible, base, starts, spec, rng, {}, 2000);
        FAIL("expected infeasibility");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("cohort #1") != std::string::npos);
    }
}

TEST_CASE("concavity probe") {
    const auto conc = concavity_probe([](double a, double b) { return -(a * a) - 2 * b * b + a * b; }, {-1, -1}, {1, 1}, 9, 1e-12);
    CHECK(conc.violations == 0);
    CHECK(conc.pairs == 81 * 80 / 2);
    const auto conv = concavity_probe([](double a, double b) { return a * a + b * b; }, {-1, -1}, {1, 1}, 9, 1e-12);
    CHECK(conv.violations == conv.pairs);
}
