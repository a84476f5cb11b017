#include "olg/policy_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "olg/errors.hpp"
#include "olg/parallel.hpp"
#include "olg/scheme.hpp"

namespace olg {

namespace {

constexpr const char* kSimplexName = "simplex";

}  // namespace

ConstraintSet policy_constraints(const SamplingSpec& spec) {
    spec.validate();
    ConstraintSet cs;
    cs.lo = spec.theta_lo();
    cs.hi = spec.theta_hi();
    const auto grads = endpoint_tax_gradients(spec);
    cs.linear.push_back({grads[0], 0.0, spec.tax_cap, "tau0"});
    cs.linear.push_back({grads[1], 0.0, spec.tax_cap, "tau29"});
    if (spec.has_shares()) {
        std::vector<double> a(cs.dim(), 0.0);
        for (std::size_t j = spec.coef_dim(); j < cs.dim(); ++j) a[j] = 1.0;
        cs.equalities.push_back({std::move(a), 1.0, kSimplexName});
    }
    return cs;
}

ConstraintSet with_fixed(ConstraintSet cs, const std::vector<std::pair<std::size_t, double>>& fixed) {
    for (const auto& [j, v] : fixed) {
        if (j >= cs.dim()) throw DomainError("with_fixed: index out of range");
        if (v < cs.lo[j] || v > cs.hi[j]) throw DomainError("with_fixed: value outside the box");
        cs.lo[j] = cs.hi[j] = v;
    }
    return cs;
}

Objective gp_mean_objective(const GpModel& model) {
    return [&model](std::span<const double> x, std::vector<double>* g) {
        if (g) *g = model.mean_gradient(x);
        return model.predict(x).mean;
    };
}

Objective weighted_gp_objective(const std::vector<GpModel>& models, const std::vector<double>& gamma) {
    if (models.size() != gamma.size()) throw DomainError("weighted objective: models and weights differ in count");
    return [&models, &gamma](std::span<const double> x, std::vector<double>* g) {
        double f = 0.0;
        if (g) g->assign(x.size(), 0.0);
        for (std::size_t t = 0; t < models.size(); ++t) {
            f += gamma[t] * models[t].predict(x).mean;
            if (g) {
                const auto gt = models[t].mean_gradient(x);
                for (std::size_t j = 0; j < x.size(); ++j) (*g)[j] += gamma[t] * gt[j];
            }
        }
        return f;
    };
}

void add_pareto_constraints(ConstraintSet& cs, const std::vector<GpModel>& models, const std::vector<double>& u_bau) {
    if (models.size() != u_bau.size()) throw DomainError("Pareto constraints: models and baselines differ in count");
    for (std::size_t t = 0; t < models.size(); ++t) {
        const GpModel* m = &models[t];
        const double base = u_bau[t];
        cs.nonlinear.push_back({[m, base](std::span<const double> x, std::vector<double>* g) {
                                    if (g) *g = m->mean_gradient(x);
                                    return m->predict(x).mean - base;
                                },
                                "pareto:" + std::to_string(t)});
    }
}

std::vector<double> project_simplex(std::span<const double> v) {
    if (v.empty()) throw DomainError("project_simplex: empty vector");
    // Feasible vectors (sum within rounding of one) are returned untouched.
    const double sum = std::accumulate(v.begin(), v.end(), 0.0);
    if (std::all_of(v.begin(), v.end(), [](double s) { return s >= 0.0; }) &&
        std::fabs(sum - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(v.size())) {
        return {v.begin(), v.end()};
    }
    std::vector<double> u(v.begin(), v.end());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0.0, shift = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        cum += u[k];
        const double t = (cum - 1.0) / static_cast<double>(k + 1);
        if (u[k] - t > 0.0) shift = t;
    }
    std::vector<double> out(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) out[k] = std::max(0.0, v[k] - shift);
    return out;
}

FeasibilityReport recheck_feasibility(const ConstraintSet& cs, std::span<const double> theta) {
    if (theta.size() != cs.dim()) throw DomainError("recheck_feasibility: dimension mismatch");
    FeasibilityReport rep;
    auto record = [&](std::string name, double slack) {
        if (-slack > rep.max_violation) {
            rep.max_violation = -slack;
            rep.worst = name;
        }
        rep.residuals.emplace_back(std::move(name), slack);
    };
    for (std::size_t j = 0; j < cs.dim(); ++j) {
        record("lower:" + std::to_string(j), theta[j] - cs.lo[j]);
        record("upper:" + std::to_string(j), cs.hi[j] - theta[j]);
    }
    for (const auto& r : cs.linear) {
        long double ax = 0.0L;
        for (std::size_t j = 0; j < cs.dim(); ++j) ax += static_cast<long double>(r.a[j]) * theta[j];
        if (std::isfinite(r.lo)) record(r.name + ":lower", static_cast<double>(ax - r.lo));
        if (std::isfinite(r.hi)) record(r.name + ":upper", static_cast<double>(r.hi - ax));
    }
    for (const auto& r : cs.equalities) {
        long double ax = 0.0L;
        for (std::size_t j = 0; j < cs.dim(); ++j) ax += static_cast<long double>(r.a[j]) * theta[j];
        record(r.name, -std::fabs(static_cast<double>(ax - r.b)));
    }
    for (const auto& r : cs.nonlinear) record(r.name, r.g(theta, nullptr));
    return rep;
}

std::vector<std::vector<double>> generate_starts(const SamplingSpec& spec, std::size_t n, RngStream& rng) {
    if (n == 0) throw ConfigError("generate_starts: need at least one start");
    std::vector<double> bau(spec.coef_dim(), 0.0);
    if (spec.has_shares()) bau.resize(spec.coef_dim() + kCohorts, 1.0 / kCohorts);
    std::vector<std::vector<double>> starts{bau};
    if (n > 1) {
        auto draws = sample_pseudo_states(spec, n - 1, rng);
        starts.insert(starts.end(), draws.begin(), draws.end());
    }
    return starts;
}

namespace {

// Exact simplex projection of the share block named by the simplex equality, if any.
void project_shares(const ConstraintSet& cs, std::vector<double>& x) {
    for (const auto& eq : cs.equalities) {
        if (eq.name != kSimplexName) continue;
        std::vector<std::size_t> idx;
        std::vector<double> s;
        for (std::size_t j = 0; j < cs.dim(); ++j) {
            if (eq.a[j] == 1.0) {
                idx.push_back(j);
                s.push_back(x[j]);
            }
        }
        const auto p = project_simplex(s);
        for (std::size_t k = 0; k < idx.size(); ++k) x[idx[k]] = p[k];
    }
}

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

}  // namespace

OptResult maximize_welfare(const Objective& objective, const ConstraintSet& cs,
                           const std::vector<std::vector<double>>& starts, const OptOptions& opts) {
    cs.validate();
    if (starts.empty()) throw ConfigError("maximize_welfare: no starts");
    OptResult res;
    res.starts.resize(starts.size());
    parallel_for(starts.size(), [&](std::size_t i) {
        StartRecord& rec = res.starts[i];
        rec.start = starts[i];
        try {
            const auto sol = solve_constrained(objective, cs, starts[i], opts.sqp);
            rec.x = sol.x;
            rec.converged = sol.converged;
            rec.iterations = sol.iterations;
            project_shares(cs, rec.x);
            rec.f = objective(rec.x, nullptr);
            rec.feasible = recheck_feasibility(cs, rec.x).ok(opts.feas_tol);
        } catch (const DomainError&) {
            rec.x.clear();
        } catch (const NumericalError&) {
            rec.x.clear();
        }
    });

    // Converged feasible starts win; otherwise any feasible one.
    std::vector<std::size_t> pool;
    for (bool need_converged : {true, false}) {
        for (std::size_t i = 0; i < res.starts.size(); ++i) {
            const auto& r = res.starts[i];
            if (r.feasible && (r.converged || !need_converged)) pool.push_back(i);
        }
        if (!pool.empty()) break;
    }
    if (pool.empty()) throw NumericalError("maximize_welfare: no start reached a feasible point");
    std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) { return res.starts[a].f > res.starts[b].f; });
    const double best_f = res.starts[pool.front()].f;
    const double scale = std::max(1.0, std::fabs(best_f));
    // Equal objectives resolve to the smallest-norm point.
    std::size_t chosen = pool.front();
    for (std::size_t i : pool) {
        if (best_f - res.starts[i].f > 1e-12 * scale) break;
        if (norm2(res.starts[i].x) < norm2(res.starts[chosen].x)) chosen = i;
    }
    res.theta_star = res.starts[chosen].x;
    res.objective = res.starts[chosen].f;
    res.feasibility = recheck_feasibility(cs, res.theta_star);

    std::vector<double> conv;
    for (const auto& r : res.starts) {
        if (r.converged && r.feasible) conv.push_back(r.f);
    }
    res.converged_starts = conv.size();
    if (!conv.empty()) {
        std::sort(conv.begin(), conv.end(), std::greater<>());
        const std::size_t k = (2 * conv.size() + 2) / 3;
        res.consensus_spread = (conv.front() - conv[k - 1]) / std::max(1.0, std::fabs(conv.front()));
        res.consensus = res.consensus_spread <= opts.consensus_tol;
    }
    return res;
}

OptResult maximize_pareto(const std::vector<GpModel>& models, const std::vector<double>& gamma,
                          const std::vector<double>& u_bau, const ConstraintSet& base,
                          const std::vector<std::vector<double>>& starts, const SamplingSpec& spec, RngStream& rng,
                          const OptOptions& opts, std::size_t n_probes) {
    ConstraintSet cs = base;
    add_pareto_constraints(cs, models, u_bau);
    const Objective obj = weighted_gp_objective(models, gamma);
    try {
        return maximize_welfare(obj, cs, starts, opts);
    } catch (const NumericalError&) {
    }
    // Infeasibility diagnosis: the probe with the smallest worst-cohort gap.
    const auto probes = sample_pseudo_states(spec, n_probes, rng);
    double best_worst = -std::numeric_limits<double>::infinity();
    std::vector<double> best_gaps;
    for (const auto& p : probes) {
        if (!recheck_feasibility(base, p).ok(opts.feas_tol)) continue;
        std::vector<double> gaps(models.size());
        for (std::size_t t = 0; t < models.size(); ++t) gaps[t] = models[t].predict(p).mean - u_bau[t];
        const double worst = *std::min_element(gaps.begin(), gaps.end());
        if (worst > best_worst) {
            best_worst = worst;
            best_gaps = gaps;
        }
    }
    std::ostringstream msg;
    msg << "Pareto problem infeasible";
    if (best_worst >= 0.0) {
        msg << ": solver failed although a feasible probe exists";
    } else if (!best_gaps.empty()) {
        std::vector<std::size_t> order(best_gaps.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return best_gaps[a] < best_gaps[b]; });
        msg << "; most violated cohorts at the best of " << probes.size() << " probes:";
        for (std::size_t k = 0; k < std::min<std::size_t>(5, order.size()) && best_gaps[order[k]] < 0.0; ++k) {
            // With one model per birth cohort, name the birth period; otherwise the model index.
            const auto idx = static_cast<int>(order[k]);
            if (best_gaps.size() == kBirthCohorts) msg << " birth t=" << idx + kFirstBirth;
            else msg << " cohort #" << idx;
            msg << " (gap " << best_gaps[order[k]] << ")";
        }
    }
    throw NumericalError(msg.str());
}

ConcavityReport concavity_probe(const std::function<double(double, double)>& f, std::array<double, 2> lo,
                                std::array<double, 2> hi, std::size_t grid_n, double tol) {
    if (grid_n < 2) throw DomainError("concavity_probe: grid needs at least two points per side");
    std::vector<std::array<double, 2>> pts;
    std::vector<double> vals;
    for (std::size_t i = 0; i < grid_n; ++i) {
        for (std::size_t j = 0; j < grid_n; ++j) {
            const double a = lo[0] + (hi[0] - lo[0]) * static_cast<double>(i) / static_cast<double>(grid_n - 1);
            const double b = lo[1] + (hi[1] - lo[1]) * static_cast<double>(j) / static_cast<double>(grid_n - 1);
            pts.push_back({a, b});
            vals.push_back(f(a, b));
        }
    }
    ConcavityReport rep;
    for (std::size_t p = 0; p < pts.size(); ++p) {
        for (std::size_t q = p + 1; q < pts.size(); ++q) {
            const double mid = f(0.5 * (pts[p][0] + pts[q][0]), 0.5 * (pts[p][1] + pts[q][1]));
            const double gap = 0.5 * (vals[p] + vals[q]) - mid;
            ++rep.pairs;
            rep.worst = std::max(rep.worst, gap);
            if (gap > tol) ++rep.violations;
        }
    }
    return rep;
}

}  // namespace olg
