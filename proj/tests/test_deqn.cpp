#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "olg/deqn.hpp"
#include "olg/errors.hpp"
#include "olg/trainer.hpp"
#include "olg/welfare.hpp"

using namespace olg;

TEST_CASE("full loss gradient matches finite differences") {
    const auto spec = default_sampling_spec(PolicyFamily::FullLinear);
    auto model = DeqnModel::init(PolicyFamily::FullLinear, 12, 2, 7, spec);
    RngStream rng(3, 0);
    auto thetas = sample_pseudo_states(spec, 3, rng);
    std::vector<AugmentedState> states;
    for (auto& th : thetas) {
        auto s = initial_state(TaxScheme::from_theta(spec.family, th), th, model.climate());
        states.push_back(s);
        auto pol = model.policy(s);
        auto s1 = step(s, pol.savings, 180.0, {0.03, 0.1, 1.0 / 9}, model.climate());
        states.push_back(s1);
    }
    std::vector<double> grad;
    auto base = evaluate_batch(model, states, &grad);
    MESSAGE("loss " << base.loss);
    double worst = 0.0;
    auto& p = model.net().params();
    for (std::size_t idx = 0; idx < p.size(); idx += 37) {
        const double h = 1e-6;
        const double keep = p[idx];
        p[idx] = keep + h;
        const double lp = evaluate_batch(model, states).loss;
        p[idx] = keep - h;
        const double lm = evaluate_batch(model, states).loss;
        p[idx] = keep;
        const double fd = (lp - lm) / (2 * h);
        const double rel = std::abs(fd - grad[idx]) / std::max(1e-6, std::abs(fd) + std::abs(grad[idx]));
        worst = std::max(worst, rel);
    }
    MESSAGE("worst rel err " << worst);
    CHECK(worst < 1e-5);
}

namespace {

// Network whose outputs ignore the input: savings and values fixed at the given levels.
DeqnModel constant_model(PolicyFamily fam, const ChoiceArray& savings, const ChoiceArray& values) {
    auto model = DeqnModel::init(fam, 8, 2, 1, default_sampling_spec(fam));
    auto& p = model.net().params();
    const auto& a = model.net().arch();
    const std::size_t out = a.output_dim;
    const std::size_t last_w = p.size() - out - out * a.hidden_width;
    std::fill(p.begin() + static_cast<std::ptrdiff_t>(last_w), p.end(), 0.0);
    const auto& sc = model.scaling();
    for (std::size_t j = 0; j < kChoices; ++j) {
        p[p.size() - out + j] = (savings[j] - sc.savings_ref[j]) / sc.savings_scale;
        p[p.size() - out + kChoices + j] = (values[j] - sc.value_ref[j]) / sc.value_scale[j];
    }
    return model;
}

std::vector<AugmentedState> sample_states(const DeqnModel& model, const SamplingSpec& spec, std::size_t paths,
                                          std::size_t length, std::uint64_t seed) {
    RngStream rng(seed, 0);
    const auto thetas = sample_pseudo_states(spec, paths, rng);
    return simulate_training_paths(model, thetas, length, seed, 0).states;
}

}  // namespace

TEST_CASE("two-period toy: closed-form policy zeroes Euler and value residuals") {
    const EconParams ep;
    for (double R : {0.8, 1.0, 1.7, 2.4}) {
        for (double w : {0.3, 1.0, 5.0}) {
            // max u(c1) + beta u(c2), c2 = R (w - c1): c2/c1 = (beta R)^{1/sigma}
            const double g = std::pow(ep.beta * R, 1.0 / ep.sigma);
            const double c1 = w / (1.0 + g / R);
            const double c2 = R * (w - c1);
            CHECK(c2 / c1 == doctest::Approx(g).epsilon(1e-14));
            CHECK(std::abs(euler_residual(c1, R * std::pow(c2, -ep.sigma), ep)) < 1e-10);
            const double u1 = period_utility(c1, ep), u2 = period_utility(c2, ep);
            CHECK(std::abs(value_residual(u1, u2, u1 + ep.beta * u2, ep)) < 1e-10);
            // a perturbed policy is detected
            CHECK(std::abs(euler_residual(1.01 * c1, R * std::pow(c2, -ep.sigma), ep)) > 1e-3);
        }
    }
}

TEST_CASE("budget: newborn with zero savings consumes the wage") {
    ChoiceArray zero{};
    ChoiceArray v;
    v.fill(-5.0);
    const auto model = constant_model(PolicyFamily::Bau, zero, v);
    const auto pol = model.policy(initial_state(TaxScheme::bau(), {}, model.climate()));
    for (double s : pol.savings) CHECK(std::abs(s) < 1e-15);
    const auto ens = simulate_paths(model, {}, 1, 1, 3, 1.0);
    const auto& r = ens.at(0, 0);
    CHECK(r.c[0] == doctest::Approx(r.w * model.labor()[0]).epsilon(1e-14));
    CHECK(r.transfers[0] == 0.0);
}

TEST_CASE("paths with negative capital are excluded and fail the run") {
    ChoiceArray neg;
    neg.fill(-0.01);
    ChoiceArray v;
    v.fill(-5.0);
    const auto model = constant_model(PolicyFamily::Bau, neg, v);
    const auto ens = simulate_paths(model, {}, 4, 2, 3, 1.0);
    CHECK(ens.excluded == 4);
    CHECK_THROWS_AS(simulate_paths(model, {}, 4, 2, 3), NumericalError);
}

TEST_CASE("residual vector layout and penalties") {
    const auto spec = default_sampling_spec(PolicyFamily::LinearETransfers);
    const auto model = DeqnModel::init(spec.family, 16, 2, 5, spec);
    const auto states = sample_states(model, spec, 4, 6, 2);
    REQUIRE(states.size() == 24);
    const auto br = evaluate_batch(model, states);
    for (std::size_t i = 0; i < states.size(); ++i) {
        CHECK_FALSE(br.penalized[i]);
        for (double r : br.residuals[i]) CHECK(std::isfinite(r));
        // consumption is defined from the budget, so its residual vanishes
        for (std::size_t j = 0; j < kCohorts; ++j) CHECK(br.residuals[i][kBudgetOffset + j] == 0.0);
    }
    // Savings that exhaust resources are penalized, not NaN.
    ChoiceArray huge;
    huge.fill(5.0);
    ChoiceArray v;
    v.fill(-5.0);
    const auto bad = constant_model(PolicyFamily::Bau, huge, v);
    const auto s0 = initial_state(TaxScheme::bau(), {}, bad.climate());
    const auto r = residuals(s0, bad);
    bool penalty = false;
    for (double x : r) {
        CHECK(std::isfinite(x));
        penalty = penalty || x >= kPenaltyBase;
    }
    CHECK(penalty);
}

TEST_CASE("loss equals a naive re-summation bit for bit") {
    const auto spec = default_sampling_spec(PolicyFamily::FullLinear);
    const auto model = DeqnModel::init(spec.family, 16, 2, 9, spec);
    const auto states = sample_states(model, spec, 5, 7, 4);
    const auto br = evaluate_batch(model, states);
    double total = 0.0;
    for (const auto& res : br.residuals) {
        double s = 0.0;
        for (double r : res) s += r * r;
        total += s;
    }
    CHECK(br.loss == total / static_cast<double>(states.size()));
    // per-state residuals agree with the batched path
    for (std::size_t i = 0; i < states.size(); i += 5) {
        const auto single = residuals(states[i], model);
        for (std::size_t m = 0; m < kResiduals; ++m) CHECK(single[m] == doctest::Approx(br.residuals[i][m]).epsilon(1e-12).scale(1e-14));
    }
}

TEST_CASE("nine-branch expectation agrees with Monte Carlo within three standard errors") {
    const auto spec = default_sampling_spec(PolicyFamily::FullLinear);
    const auto model = DeqnModel::init(spec.family, 16, 2, 13, spec);
    const auto states = sample_states(model, spec, 3, 10, 8);
    RngStream rng(77, 0);
    std::size_t checked = 0;
    for (std::size_t i = 0; i < states.size(); i += 7) {
        const auto exact = residuals(states[i], model);
        ResidualVector se;
        const auto mc = residuals_monte_carlo(states[i], model, 100000, rng, &se);
        for (std::size_t j = 0; j < kChoices; ++j) {
            for (std::size_t m : {j, kValueOffset + j}) {
                CHECK(std::abs(mc[m] - exact[m]) <= 3.0 * se[m] + 1e-13);
                ++checked;
            }
        }
    }
    CHECK(checked >= 60);
}

TEST_CASE("training paths start together and hold theta fixed") {
    const auto spec = default_sampling_spec(PolicyFamily::LinearE);
    const auto model = DeqnModel::init(spec.family, 16, 2, 3, spec);
    RngStream rng(1, 0);
    const auto thetas = sample_pseudo_states(spec, 6, rng);
    const auto batch = simulate_training_paths(model, thetas, 9, 1, 0);
    REQUIRE(batch.drops == 0);
    REQUIRE(batch.states.size() == 6 * 9);
    for (std::size_t p = 0; p < 6; ++p) {
        const auto& s0 = batch.states[p * 9];
        CHECK(s0.t == 0);
        CHECK(s0.E == batch.states[0].E);
        CHECK(s0.assets == batch.states[0].assets);
        for (std::size_t t = 0; t < 9; ++t) CHECK(batch.states[p * 9 + t].theta == thetas[p]);
    }
}

TEST_CASE("training is deterministic given the seed") {
    TrainConfig cfg;
    cfg.parallel_paths = 6;
    cfg.path_length = 5;
    cfg.minibatch = 8;
    cfg.episodes_max = 3;
    cfg.hidden_width = 8;
    cfg.lr = 1e-3;
    const auto spec = default_sampling_spec(PolicyFamily::LinearETransfers);
    const auto a = train(cfg, spec, 42);
    const auto b = train(cfg, spec, 42);
    REQUIRE(a.log.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(a.log[i].loss == b.log[i].loss);
    CHECK(a.model.net().params() == b.model.net().params());
    const auto c = train(cfg, spec, 43);
    CHECK(c.model.net().params() != a.model.net().params());

    // Resuming from episode 2 replays the last episode exactly.
    auto cfg1 = cfg;
    cfg1.episodes_max = 2;
    const auto first = train(cfg1, spec, 42);
    cfg1.episodes_max = 1;
    const auto rest = resume_training(cfg1, spec, 42, first.model, first.adam, 2);
    CHECK(rest.model.net().params() == a.model.net().params());
}

TEST_CASE("training configuration is validated") {
    TrainConfig cfg;
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.loss_tol = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.parallel_paths = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("checkpointed model reproduces the policy") {
    const auto spec = default_sampling_spec(PolicyFamily::FullLinear);
    const auto model = DeqnModel::init(spec.family, 16, 2, 21, spec);
    Checkpoint ck{model.net(), AdamState::for_params(model.net().params().size(), 1e-4), model.meta(21, 5)};
    const auto back = DeqnModel::from_checkpoint(ck);
    const auto states = sample_states(model, spec, 2, 3, 1);
    for (const auto& s : states) {
        const auto a = model.policy(s), b = back.policy(s);
        CHECK(a.savings == b.savings);
        CHECK(a.values == b.values);
    }
}

TEST_CASE("steady state reproduces the initial asset table") {
    const EconParams ep;
    const ClimateParams cp;
    const auto ss = solve_steady_state(ep, cp);
    double worst = 0.0, k = 0.0;
    for (std::size_t j = 0; j < kCohorts; ++j) {
        worst = std::max(worst, std::abs(ss.assets[j] - kInitialAssets[j]));
        k += ss.assets[j];
    }
    MESSAGE("largest deviation from the table " << worst);
    CHECK(worst <= 0.01);
    CHECK(ss.assets[0] == 0.0);
    CHECK(k == doctest::Approx(ss.k).epsilon(1e-10));
    // Deterministic Euler equation holds along the profile.
    const double g = std::pow(ep.beta * (1.0 + ss.r), 1.0 / ep.sigma);
    for (std::size_t j = 0; j + 1 < kCohorts; ++j) CHECK(ss.consumption[j + 1] / ss.consumption[j] == doctest::Approx(g).epsilon(1e-12));
    // Terminal cohort consumes everything.
    const auto l = labor_profile(ep);
    CHECK(ss.consumption[11] == doctest::Approx((1.0 + ss.r) * ss.assets[11] + ss.w * l[11]).epsilon(1e-10));
}
