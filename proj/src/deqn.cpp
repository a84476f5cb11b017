#include "olg/deqn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "olg/errors.hpp"

namespace olg {

namespace {

using BranchArray = std::array<double, kShocks>;

struct StateEval {
    TaxScheme scheme;
    Policy pol;
    Prices pr;
    CohortArray c{};
    double k_next = 0.0;
    bool bad_k = false;
    std::array<AugmentedState, kShocks> next;
    std::array<Policy, kShocks> pol_next;
    std::array<Prices, kShocks> pr_next;
    std::array<CohortArray, kShocks> c_next{};  // entries 1..11 are used
};

// Adjoints of the loss with respect to everything a state's residuals touch.
struct StateAdjoint {
    ChoiceArray g_savings{};
    ChoiceArray g_values{};
    std::array<ChoiceArray, kShocks> g_savings_next{};
    std::array<ChoiceArray, kShocks> g_values_next{};
};

CohortArray consumption(const CohortArray& a, const ChoiceArray& savings, const Prices& pr, const CohortArray& l) {
    CohortArray c{};
    for (std::size_t j = 0; j < kCohorts; ++j) {
        c[j] = (1.0 + pr.r) * a[j] + pr.w * l[j] + pr.transfers[j] - (j < kChoices ? savings[j] : 0.0);
    }
    return c;
}

void fill_current(StateEval& ev, const AugmentedState& s, const DeqnModel& m) {
    ev.scheme = TaxScheme::from_theta(m.family(), s.theta);
    const double k = s.capital();
    if (!(k > 0.0) || !std::isfinite(k)) throw DomainError("residuals: state capital must be positive");
    ev.pr = prices_at(s, ev.scheme, k, m.econ(), m.climate());
    ev.c = consumption(s.assets, ev.pol.savings, ev.pr, m.labor());
    ev.k_next = std::accumulate(ev.pol.savings.begin(), ev.pol.savings.end(), 0.0);
    ev.bad_k = !(ev.k_next > 0.0);
    const auto shocks = enumerate_shocks(m.climate());
    for (std::size_t b = 0; b < kShocks; ++b) ev.next[b] = step(s, ev.pol.savings, ev.pr.e, shocks[b], m.climate());
}

void fill_successors(StateEval& ev, const DeqnModel& m) {
    if (ev.bad_k) return;
    for (std::size_t b = 0; b < kShocks; ++b) {
        ev.pr_next[b] = prices_at(ev.next[b], ev.scheme, ev.k_next, m.econ(), m.climate());
        ev.c_next[b] = consumption(ev.next[b].assets, ev.pol_next[b].savings, ev.pr_next[b], m.labor());
    }
}

// Residuals from per-branch quantities with branch weights wts. If upstream is non-null,
// adj receives the loss adjoints given d loss / d residual = upstream.
bool compute_residuals(const StateEval& ev, const BranchArray& wts, const DeqnModel& m, ResidualVector& res,
                       const ResidualVector* upstream, StateAdjoint* adj) {
    const EconParams& ep = m.econ();
    const CohortArray& l = m.labor();
    const double sigma = ep.sigma;
    res.fill(0.0);
    bool penalized = false;

    CohortArray gc{};
    std::array<CohortArray, kShocks> gcn{};
    BranchArray gr{};
    double gk_direct = 0.0;

    for (std::size_t j = 0; j < kCohorts; ++j) {
        if (ev.c[j] <= 0.0) {
            penalized = true;
            res[kBudgetOffset + j] = kPenaltyBase + std::abs(ev.c[j]);
            if (upstream) gc[j] += -(*upstream)[kBudgetOffset + j];
        }
    }

    for (std::size_t j = 0; j < kChoices; ++j) {
        const bool c_ok = ev.c[j] > 0.0;
        const double up_ee = upstream ? (*upstream)[j] : 0.0;
        const double up_vr = upstream ? (*upstream)[kValueOffset + j] : 0.0;
        if (ev.bad_k) {
            penalized = true;
            res[j] = kPenaltyBase + std::abs(ev.k_next);
            gk_direct += -up_ee;
            continue;
        }
        // Euler equation of cohort j.
        double bad_sum = 0.0;
        bool next_bad = false;
        for (std::size_t b = 0; b < kShocks; ++b) {
            if (wts[b] > 0.0 && ev.c_next[b][j + 1] <= 0.0) {
                next_bad = true;
                bad_sum += std::abs(ev.c_next[b][j + 1]);
            }
        }
        if (next_bad) {
            penalized = true;
            res[j] = kPenaltyBase + bad_sum;
            for (std::size_t b = 0; b < kShocks; ++b) {
                if (wts[b] > 0.0 && ev.c_next[b][j + 1] <= 0.0) gcn[b][j + 1] += -up_ee;
            }
        } else if (c_ok) {
            double M = 0.0;
            for (std::size_t b = 0; b < kShocks; ++b) {
                M += wts[b] * (1.0 + ev.pr_next[b].r) * std::pow(ev.c_next[b][j + 1], -sigma);
            }
            const double X = std::pow(ep.beta * M, -1.0 / sigma);
            res[j] = X / ev.c[j] - 1.0;
            if (upstream) {
                gc[j] += up_ee * (-X / (ev.c[j] * ev.c[j]));
                const double gM = up_ee * (X / ev.c[j]) * (-1.0 / sigma) / M;
                for (std::size_t b = 0; b < kShocks; ++b) {
                    if (wts[b] == 0.0) continue;
                    const double cn = ev.c_next[b][j + 1];
                    gcn[b][j + 1] += gM * wts[b] * (1.0 + ev.pr_next[b].r) * (-sigma) * std::pow(cn, -sigma - 1.0);
                    gr[b] += gM * wts[b] * std::pow(cn, -sigma);
                }
            }
        }
        // Value recursion of cohort j; the oldest successor value is u(c') analytically.
        if (!c_ok) continue;
        const bool terminal = j + 1 == kChoices;
        if (terminal) {
            double bad = 0.0;
            bool any_bad = false;
            for (std::size_t b = 0; b < kShocks; ++b) {
                if (wts[b] > 0.0 && ev.c_next[b][kChoices] <= 0.0) {
                    any_bad = true;
                    bad += std::abs(ev.c_next[b][kChoices]);
                }
            }
            if (any_bad) {
                penalized = true;
                res[kValueOffset + j] = kPenaltyBase + bad;
                for (std::size_t b = 0; b < kShocks; ++b) {
                    if (wts[b] > 0.0 && ev.c_next[b][kChoices] <= 0.0) gcn[b][kChoices] += -up_vr;
                }
                continue;
            }
        }
        double Ev = 0.0;
        for (std::size_t b = 0; b < kShocks; ++b) {
            if (wts[b] == 0.0) continue;
            Ev += wts[b] * (terminal ? period_utility(ev.c_next[b][kChoices], ep) : ev.pol_next[b].values[j + 1]);
        }
        const double v = ev.pol.values[j];
        const double u = period_utility(ev.c[j], ep);
        const double num = u + ep.beta * Ev;
        res[kValueOffset + j] = num / v - 1.0;
        if (upstream && adj) {
            adj->g_values[j] += up_vr * (-num / (v * v));
            gc[j] += up_vr * marginal_utility(ev.c[j], ep) / v;
            for (std::size_t b = 0; b < kShocks; ++b) {
                if (wts[b] == 0.0) continue;
                const double g = up_vr * ep.beta * wts[b] / v;
                if (terminal) gcn[b][kChoices] += g * marginal_utility(ev.c_next[b][kChoices], ep);
                else adj->g_values_next[b][j + 1] += g;
            }
        }
    }

    if (!upstream || !adj) return penalized;

    // Current consumption: c_j = ... - s_j.
    for (std::size_t j = 0; j < kChoices; ++j) adj->g_savings[j] += -gc[j];

    // Successor consumption depends on s through a'_m = s_{m-1} and through k' = sum(s).
    double gk = gk_direct;
    if (!ev.bad_k) {
        for (std::size_t b = 0; b < kShocks; ++b) {
            const Prices& pn = ev.pr_next[b];
            const auto& a = ev.next[b].assets;
            double g_r = gr[b];
            double g_w = 0.0;
            for (std::size_t mi = 1; mi < kCohorts; ++mi) {
                const double g = gcn[b][mi];
                if (g == 0.0) continue;
                if (mi < kChoices) adj->g_savings_next[b][mi] += -g;
                adj->g_savings[mi - 1] += g * (1.0 + pn.r);
                g_r += g * a[mi];
                g_w += g * l[mi];
                gk += g * pn.dtransfers_dk[mi];
            }
            gk += g_r * pn.dr_dk + g_w * pn.dw_dk;
        }
    }
    for (auto& g : adj->g_savings) g += gk;
    return penalized;
}

}  // namespace

double euler_residual(double c, double expected_marginal, const EconParams& ep) {
    return std::pow(ep.beta * expected_marginal, -1.0 / ep.sigma) / c - 1.0;
}

double value_residual(double u, double expected_next_value, double v, const EconParams& ep) {
    return (u + ep.beta * expected_next_value) / v - 1.0;
}

Prices prices_at(const AugmentedState& s, const TaxScheme& scheme, double k, const EconParams& ep,
                 const ClimateParams& cp) {
    Prices p;
    p.k = k;
    p.omega = damage(s.T_at, s.TP, cp);
    p.tau = effective_tax(tax_rate(scheme, s.E, s.kappa, s.T_at, s.TP, ep, cp));
    p.mu = abatement_from_tax(p.tau, s.kappa, p.omega, ep);
    const auto fp = factor_prices(k, p.mu, p.tau, s.kappa, p.omega, ep);
    p.r = fp.r;
    p.w = fp.w;
    p.e = emissions(k, p.mu, s.kappa, ep);
    const double prod = net_productivity(p.mu, p.tau, s.kappa, p.omega, ep);
    const double ka = std::pow(k, ep.alpha);
    p.dr_dk = ep.alpha * (ep.alpha - 1.0) * ka / (k * k) * prod;
    p.dw_dk = ep.alpha * (1.0 - ep.alpha) * ka / k * prod;
    const CohortArray shares = transfer_shares(scheme);
    const double revenue = p.tau * p.e / ep.L_scale;
    const double drevenue = p.tau * ep.alpha * p.e / k / ep.L_scale;
    for (std::size_t j = 0; j < kCohorts; ++j) {
        p.transfers[j] = shares[j] * revenue;
        p.dtransfers_dk[j] = shares[j] * drevenue;
    }
    return p;
}

OutputScaling default_output_scaling(const EconParams& ep, const ClimateParams& cp) {
    OutputScaling sc;
    const CohortArray& a = kInitialAssets;
    for (std::size_t j = 0; j < kChoices; ++j) sc.savings_ref[j] = a[j + 1];
    // Values along the initial asset profile at t = 0 prices.
    AugmentedState s0 = initial_state(TaxScheme::bau(), {}, cp);
    const Prices pr = prices_at(s0, TaxScheme::bau(), s0.capital(), ep, cp);
    const CohortArray l = labor_profile(ep);
    CohortArray c{};
    for (std::size_t j = 0; j < kCohorts; ++j) {
        c[j] = (1.0 + pr.r) * a[j] + pr.w * l[j] - (j < kChoices ? a[j + 1] : 0.0);
        if (!(c[j] > 0.0)) throw NumericalError("initial asset profile implies nonpositive consumption");
    }
    double v = period_utility(c[kCohorts - 1], ep);
    for (std::size_t j = kChoices; j-- > 0;) {
        v = period_utility(c[j], ep) + ep.beta * v;
        sc.value_ref[j] = v;
        sc.value_scale[j] = 0.1 * std::abs(v);
    }
    return sc;
}

DeqnModel::DeqnModel(Network net, PolicyFamily family, std::vector<double> theta_lo, std::vector<double> theta_hi,
                     EconParams ep, ClimateParams cp)
    : net_(std::move(net)),
      family_(family),
      theta_lo_(std::move(theta_lo)),
      theta_hi_(std::move(theta_hi)),
      ep_(ep),
      cp_(cp),
      labor_(labor_profile(ep)),
      scaling_(default_output_scaling(ep, cp)) {
    if (theta_lo_.size() != theta_dim(family_) || theta_hi_.size() != theta_dim(family_)) {
        throw ConfigError("pseudo-state scaling bounds do not match the policy family");
    }
    if (net_.arch().input_dim != input_dim() || net_.arch().output_dim != kOutputs) {
        throw ConfigError("network shape does not match the policy family");
    }
}

DeqnModel DeqnModel::init(PolicyFamily family, std::size_t hidden_width, std::size_t hidden_layers,
                          std::uint64_t seed, const SamplingSpec& spec, EconParams ep, ClimateParams cp) {
    NetworkArch arch;
    arch.input_dim = kStateInputs + theta_dim(family);
    arch.hidden_width = hidden_width;
    arch.hidden_layers = hidden_layers;
    arch.output_dim = kOutputs;
    std::vector<double> lo = family == PolicyFamily::Bau ? std::vector<double>{} : spec.theta_lo();
    std::vector<double> hi = family == PolicyFamily::Bau ? std::vector<double>{} : spec.theta_hi();
    return {Network::init(arch, seed), family, std::move(lo), std::move(hi), ep, cp};
}

void DeqnModel::encode(const AugmentedState& s, double* col) const {
    col[0] = s.t_comp;
    col[1] = s.TP - cp_.TP_min;
    col[2] = s.tp_reached ? 1.0 : 0.0;
    col[3] = s.kappa / cp_.kappa0;
    for (std::size_t j = 0; j < kCohorts; ++j) col[kAssetSlot + j] = kAssetInputScale * s.assets[j];
    col[kAssetSlot + kCohorts] = s.E / cp_.E0;
    if (s.theta.size() != theta_lo_.size()) throw DomainError("state pseudo-state dimension mismatch");
    for (std::size_t i = 0; i < theta_lo_.size(); ++i) {
        col[kStateInputs + i] = (s.theta[i] - theta_lo_[i]) / (theta_hi_[i] - theta_lo_[i]);
    }
}

Policy DeqnModel::decode(const double* col) const {
    Policy p;
    for (std::size_t j = 0; j < kChoices; ++j) {
        p.savings[j] = scaling_.savings_ref[j] + scaling_.savings_scale * col[j];
        p.values[j] = scaling_.value_ref[j] + scaling_.value_scale[j] * col[kChoices + j];
    }
    return p;
}

std::vector<Policy> DeqnModel::policies(std::span<const AugmentedState> states) const {
    Matrix X(static_cast<Eigen::Index>(input_dim()), static_cast<Eigen::Index>(states.size()));
    for (std::size_t i = 0; i < states.size(); ++i) encode(states[i], X.col(static_cast<Eigen::Index>(i)).data());
    const Matrix out = net_.forward(X);
    std::vector<Policy> pols(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) pols[i] = decode(out.col(static_cast<Eigen::Index>(i)).data());
    return pols;
}

Policy DeqnModel::policy(const AugmentedState& s) const {
    return policies(std::span<const AugmentedState>(&s, 1))[0];
}

CheckpointMeta DeqnModel::meta(std::uint64_t seed, std::uint64_t episode) const {
    return {seed, episode, static_cast<std::uint32_t>(family_), theta_lo_, theta_hi_};
}

DeqnModel DeqnModel::from_checkpoint(const Checkpoint& ck, EconParams ep, ClimateParams cp) {
    if (ck.meta.family > static_cast<std::uint32_t>(PolicyFamily::FullLinear)) {
        throw ProvenanceError("checkpoint names an unknown policy family");
    }
    return {ck.net, static_cast<PolicyFamily>(ck.meta.family), ck.meta.theta_lo, ck.meta.theta_hi, ep, cp};
}

BatchResult evaluate_batch(const DeqnModel& model, std::span<const AugmentedState> states,
                           std::vector<double>* grad) {
    const std::size_t B = states.size();
    BatchResult result;
    result.residuals.resize(B);
    result.penalized.assign(B, false);
    if (B == 0) return result;
    const auto in = static_cast<Eigen::Index>(model.input_dim());
    const Network& net = model.net();

    Matrix X0(in, static_cast<Eigen::Index>(B));
    for (std::size_t i = 0; i < B; ++i) model.encode(states[i], X0.col(static_cast<Eigen::Index>(i)).data());
    ForwardCache c0;
    net.forward(X0, c0);

    std::vector<StateEval> evs(B);
    Matrix X1(in, static_cast<Eigen::Index>(B * kShocks));
    for (std::size_t i = 0; i < B; ++i) {
        evs[i].pol = model.decode(c0.out.col(static_cast<Eigen::Index>(i)).data());
        fill_current(evs[i], states[i], model);
        for (std::size_t b = 0; b < kShocks; ++b) {
            model.encode(evs[i].next[b], X1.col(static_cast<Eigen::Index>(i * kShocks + b)).data());
        }
    }
    ForwardCache c1;
    net.forward(X1, c1);

    BranchArray wts;
    wts.fill(1.0 / static_cast<double>(kShocks));
    std::vector<StateAdjoint> adjs(grad ? B : 0);
    const double inv_b = 1.0 / static_cast<double>(B);
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t b = 0; b < kShocks; ++b) {
            evs[i].pol_next[b] = model.decode(c1.out.col(static_cast<Eigen::Index>(i * kShocks + b)).data());
        }
        fill_successors(evs[i], model);
        ResidualVector& res = result.residuals[i];
        // Residual values do not depend on the upstream, so evaluate first, then adjoints.
        result.penalized[i] = compute_residuals(evs[i], wts, model, res, nullptr, nullptr);
        double sq = 0.0;
        for (double r : res) sq += r * r;
        result.loss += sq;
        if (grad) {
            ResidualVector up;
            for (std::size_t m = 0; m < kResiduals; ++m) up[m] = 2.0 * res[m] * inv_b;
            ResidualVector scratch;
            compute_residuals(evs[i], wts, model, scratch, &up, &adjs[i]);
        }
    }
    result.loss /= static_cast<double>(B);
    if (!grad) return result;

    const OutputScaling& sc = model.scaling();
    grad->assign(net.params().size(), 0.0);
    Matrix d1 = Matrix::Zero(kOutputs, static_cast<Eigen::Index>(B * kShocks));
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t b = 0; b < kShocks; ++b) {
            const auto col = static_cast<Eigen::Index>(i * kShocks + b);
            for (std::size_t j = 0; j < kChoices; ++j) {
                d1(static_cast<Eigen::Index>(j), col) = adjs[i].g_savings_next[b][j] * sc.savings_scale;
                d1(static_cast<Eigen::Index>(kChoices + j), col) = adjs[i].g_values_next[b][j] * sc.value_scale[j];
            }
        }
    }
    Matrix dX1;
    net.backward(c1, d1, *grad, &dX1);

    Matrix d0 = Matrix::Zero(kOutputs, static_cast<Eigen::Index>(B));
    for (std::size_t i = 0; i < B; ++i) {
        auto& g = adjs[i].g_savings;
        for (std::size_t b = 0; b < kShocks; ++b) {
            const auto col = static_cast<Eigen::Index>(i * kShocks + b);
            // Successor asset input slot m holds 10 * s_{m-1}.
            for (std::size_t m = 1; m < kCohorts; ++m) {
                g[m - 1] += dX1(static_cast<Eigen::Index>(DeqnModel::kAssetSlot + m), col) *
                            DeqnModel::kAssetInputScale;
            }
        }
        for (std::size_t j = 0; j < kChoices; ++j) {
            d0(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = g[j] * sc.savings_scale;
            d0(static_cast<Eigen::Index>(kChoices + j), static_cast<Eigen::Index>(i)) =
                adjs[i].g_values[j] * sc.value_scale[j];
        }
    }
    net.backward(c0, d0, *grad);
    return result;
}

ResidualVector residuals(const AugmentedState& s, const DeqnModel& model) {
    return evaluate_batch(model, std::span<const AugmentedState>(&s, 1)).residuals[0];
}

ResidualVector residuals_monte_carlo(const AugmentedState& s, const DeqnModel& model, std::size_t draws,
                                     RngStream& rng, ResidualVector* std_error) {
    if (draws < 2) throw DomainError("residuals_monte_carlo: need at least two draws");
    StateEval ev;
    ev.pol = model.policy(s);
    fill_current(ev, s, model);
    const auto next_pols = model.policies(ev.next);
    for (std::size_t b = 0; b < kShocks; ++b) ev.pol_next[b] = next_pols[b];
    fill_successors(ev, model);

    BranchArray wts{};
    std::array<std::size_t, kShocks> counts{};
    for (std::size_t d = 0; d < draws; ++d) {
        // Independent marginals: one uniform index per shock component.
        const std::size_t a = static_cast<std::size_t>(rng.uniform() * 3.0);
        const std::size_t b = static_cast<std::size_t>(rng.uniform() * 3.0);
        ++counts[3 * std::min<std::size_t>(a, 2) + std::min<std::size_t>(b, 2)];
    }
    for (std::size_t b = 0; b < kShocks; ++b) wts[b] = static_cast<double>(counts[b]) / static_cast<double>(draws);
    ResidualVector res;
    compute_residuals(ev, wts, model, res, nullptr, nullptr);

    if (std_error) {
        // Delta-method standard errors from the per-draw variance of each inner expectation.
        std_error->fill(0.0);
        const EconParams& ep = model.econ();
        const double n = static_cast<double>(draws);
        for (std::size_t j = 0; j < kChoices && !ev.bad_k; ++j) {
            if (!(ev.c[j] > 0.0)) continue;
            double m1 = 0.0, m2 = 0.0, v1 = 0.0, v2 = 0.0;
            for (std::size_t b = 0; b < kShocks; ++b) {
                const double cn = ev.c_next[b][j + 1];
                if (!(cn > 0.0)) continue;
                const double x = (1.0 + ev.pr_next[b].r) * std::pow(cn, -ep.sigma);
                const double y = j + 1 == kChoices ? period_utility(cn, ep) : ev.pol_next[b].values[j + 1];
                m1 += wts[b] * x;
                m2 += wts[b] * x * x;
                v1 += wts[b] * y;
                v2 += wts[b] * y * y;
            }
            const double se_m = std::sqrt(std::max(m2 - m1 * m1, 0.0) / n);
            const double se_v = std::sqrt(std::max(v2 - v1 * v1, 0.0) / n);
            const double X = std::pow(ep.beta * m1, -1.0 / ep.sigma);
            (*std_error)[j] = std::abs(X / ev.c[j] / ep.sigma / m1) * se_m;
            (*std_error)[kValueOffset + j] = ep.beta * se_v / std::abs(ev.pol.values[j]);
        }
    }
    return res;
}

SteadyState solve_steady_state(const EconParams& ep, const ClimateParams& cp, double damping, double tol,
                               int max_iter) {
    const double omega = damage(cp.T0(), cp.TP0, cp);
    const CohortArray l = labor_profile(ep);
    SteadyState ss;
    double k = std::accumulate(kInitialAssets.begin(), kInitialAssets.end(), 0.0);
    for (int it = 1; it <= max_iter; ++it) {
        const auto fp = factor_prices(k, 0.0, 0.0, 0.0, omega, ep);
        const double R = 1.0 + fp.r;
        // Lifetime budget in units of period-1 consumption with c_{j+1} = c_j (beta R)^{1/sigma}.
        const double g = std::pow(ep.beta * R, 1.0 / ep.sigma);
        double pv_income = 0.0, pv_cons = 0.0, disc = 1.0, growth = 1.0;
        for (std::size_t j = 0; j < kCohorts; ++j) {
            pv_income += fp.w * l[j] * disc;
            pv_cons += growth * disc;
            disc /= R;
            growth *= g;
        }
        const double c1 = pv_income / pv_cons;
        CohortArray a{};
        double c = c1;
        double k_new = 0.0;
        for (std::size_t j = 0; j < kCohorts; ++j) {
            ss.consumption[j] = c;
            if (j + 1 < kCohorts) a[j + 1] = R * a[j] + fp.w * l[j] - c;
            c *= g;
        }
        for (double x : a) k_new += x;
        if (!(k_new > 0.0)) throw NumericalError("steady state iteration produced nonpositive capital");
        ss.assets = a;
        ss.k = k;
        ss.r = fp.r;
        ss.w = fp.w;
        ss.iterations = it;
        if (std::abs(k_new - k) < tol) return ss;
        k = damping * k + (1.0 - damping) * k_new;
    }
    throw NumericalError("steady state did not converge in " + std::to_string(max_iter) + " iterations");
}

}  // namespace olg
