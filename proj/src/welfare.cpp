#include "olg/welfare.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "olg/errors.hpp"

namespace olg {

namespace {

constexpr std::uint64_t kPathStream = 0x70617468ULL;

double series_value(const PeriodRecord& r, std::size_t idx) {
    switch (idx) {
        case 0: return r.e;
        case 1: return r.E;
        case 2: return r.T_at;
        case 3: return 1.0 - r.omega;
        case 4: return r.tau;
        case 5: return r.mu;
        case 6: return r.k;
        case 7: return r.kappa;
        default: return r.TP;
    }
}

}  // namespace

PathEnsemble simulate_paths(const DeqnModel& model, const std::vector<double>& theta, std::size_t n_paths,
                            std::size_t horizon, std::uint64_t seed, double max_excluded_fraction) {
    if (n_paths == 0 || horizon == 0) throw ConfigError("simulate_paths: n_paths and horizon must be positive");
    const ClimateParams& cp = model.climate();
    const EconParams& ep = model.econ();
    const TaxScheme scheme = TaxScheme::from_theta(model.family(), theta);
    scheme.validate();
    const auto shocks = enumerate_shocks(cp);

    PathEnsemble ens;
    ens.n_paths = n_paths;
    ens.horizon = horizon;
    ens.theta = theta;
    ens.seed = seed;
    ens.valid.assign(n_paths, true);
    ens.records.resize(n_paths * horizon);

    std::vector<AugmentedState> state(n_paths, initial_state(scheme, theta, cp));
    std::vector<RngStream> rng;
    rng.reserve(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) rng.emplace_back(seed ^ kPathStream, p);

    for (std::size_t t = 0; t < horizon; ++t) {
        std::vector<std::size_t> idx;
        std::vector<AugmentedState> live;
        for (std::size_t p = 0; p < n_paths; ++p) {
            if (!ens.valid[p]) continue;
            idx.push_back(p);
            live.push_back(state[p]);
        }
        if (live.empty()) break;
        const auto pols = model.policies(live);
        for (std::size_t q = 0; q < idx.size(); ++q) {
            const std::size_t p = idx[q];
            const AugmentedState& s = state[p];
            const Policy& pol = pols[q];
            PeriodRecord& rec = ens.records[p * horizon + t];
            const Prices pr = prices_at(s, scheme, s.capital(), ep, cp);
            rec.e = pr.e;
            rec.E = s.E;
            rec.T_at = s.T_at;
            rec.TP = s.TP;
            rec.kappa = s.kappa;
            rec.omega = pr.omega;
            rec.tau = pr.tau;
            rec.mu = pr.mu;
            rec.k = pr.k;
            rec.r = pr.r;
            rec.w = pr.w;
            rec.transfers = pr.transfers;
            rec.savings = pol.savings;
            rec.v = pol.values;
            bool ok = true;
            for (std::size_t j = 0; j < kCohorts; ++j) {
                rec.c[j] = (1.0 + pr.r) * s.assets[j] + pr.w * model.labor()[j] + pr.transfers[j] -
                           (j < kChoices ? pol.savings[j] : 0.0);
                ok = ok && std::isfinite(rec.c[j]) && rec.c[j] > 0.0;
            }
            const double k_next = std::accumulate(pol.savings.begin(), pol.savings.end(), 0.0);
            ok = ok && std::isfinite(k_next) && k_next > 0.0;
            for (double v : pol.values) ok = ok && std::isfinite(v);
            if (!ok) {
                ens.valid[p] = false;
                ++ens.excluded;
                continue;
            }
            state[p] = step(s, pol.savings, pr.e, shocks[3 * std::min<std::size_t>(static_cast<std::size_t>(rng[p].uniform() * 3.0), 2) +
                                                          std::min<std::size_t>(static_cast<std::size_t>(rng[p].uniform() * 3.0), 2)],
                            cp);
        }
    }
    if (static_cast<double>(ens.excluded) > max_excluded_fraction * static_cast<double>(n_paths)) {
        throw NumericalError("simulate_paths: " + std::to_string(ens.excluded) + " of " + std::to_string(n_paths) +
                             " paths excluded (non-finite or infeasible)");
    }
    return ens;
}

CohortVector cohort_utilities(const PathEnsemble& ens, const EconParams& ep) {
    if (ens.horizon < kWelfareHorizon) throw DomainError("cohort_utilities: horizon must cover births up to t = 29");
    CohortVector u{};
    std::size_t n = 0;
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
        if (!ens.valid[p]) continue;
        ++n;
        for (std::size_t b = 0; b < kBirthCohorts; ++b) {
            const int birth = kFirstBirth + static_cast<int>(b);
            // Born before t = 0: cohort of age index -birth at t = 0; otherwise newborn at t = birth.
            const double v = birth < 0 ? ens.at(p, 0).v[static_cast<std::size_t>(-birth)]
                                       : ens.at(p, static_cast<std::size_t>(birth)).v[0];
            u[b] += v;
        }
    }
    if (n == 0) throw NumericalError("cohort_utilities: no valid paths");
    for (auto& x : u) x = denormalize_value(x / static_cast<double>(n), ep);
    return u;
}

CohortVector cohort_utilities_realized(const PathEnsemble& ens, const EconParams& ep) {
    if (ens.horizon < kRealizedHorizon) throw DomainError("cohort_utilities_realized: horizon must be at least 41");
    CohortVector u{};
    std::size_t n = 0;
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
        if (!ens.valid[p]) continue;
        ++n;
        for (std::size_t b = 0; b < kBirthCohorts; ++b) {
            const int birth = kFirstBirth + static_cast<int>(b);
            const int start = std::max(birth, 0);
            double disc = 1.0, total = 0.0;
            for (int t = start; t < birth + static_cast<int>(kCohorts); ++t) {
                const auto age = static_cast<std::size_t>(t - birth);
                total += disc * period_utility(ens.at(p, static_cast<std::size_t>(t)).c[age], ep);
                disc *= ep.beta;
            }
            u[b] += total;
        }
    }
    if (n == 0) throw NumericalError("cohort_utilities_realized: no valid paths");
    for (auto& x : u) x = denormalize_value(x / static_cast<double>(n), ep);
    return u;
}

CohortVector uniform_weights() {
    CohortVector g;
    g.fill(1.0 / static_cast<double>(kBirthCohorts));
    return g;
}

double swf(const CohortVector& u, const CohortVector& gamma) {
    double s = 0.0;
    for (std::size_t b = 0; b < kBirthCohorts; ++b) s += gamma[b] * u[b];
    return s;
}

CohortWelfare compare_welfare(const CohortVector& u_policy, const CohortVector& u_bau, const CohortVector& gamma,
                              const EconParams& ep) {
    CohortWelfare w;
    w.u_policy = u_policy;
    w.u_bau = u_bau;
    for (std::size_t b = 0; b < kBirthCohorts; ++b) w.cev[b] = cev(u_policy[b], u_bau[b], ep);
    w.swf_policy = swf(u_policy, gamma);
    w.swf_bau = swf(u_bau, gamma);
    // Utilities are homogeneous of degree 1 - sigma in consumption, so this is the uniform
    // consumption scaling that equates the two welfare sums.
    w.aggregate_cev = cev(w.swf_policy, w.swf_bau, ep);
    return w;
}

double percentile(std::vector<double> data, double q) {
    if (data.empty()) throw DomainError("percentile of empty data");
    std::sort(data.begin(), data.end());
    const double pos = q * static_cast<double>(data.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, data.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return frac == 0.0 ? data[lo] : data[lo] + frac * (data[hi] - data[lo]);
}

const std::vector<std::string>& fan_series() {
    static const std::vector<std::string> names = {"emissions", "carbon_stock", "temperature", "damages",
                                                   "tax",       "abatement",    "capital",     "kappa",
                                                   "tipping_threshold"};
    return names;
}

std::vector<FanRow> fan_stats(const PathEnsemble& ens) {
    std::vector<FanRow> rows;
    const auto& names = fan_series();
    for (std::size_t t = 0; t < ens.horizon; ++t) {
        for (std::size_t s = 0; s < names.size(); ++s) {
            std::vector<double> x;
            x.reserve(ens.n_paths);
            for (std::size_t p = 0; p < ens.n_paths; ++p) {
                if (ens.valid[p]) x.push_back(series_value(ens.at(p, t), s));
            }
            if (x.empty()) continue;
            FanRow row;
            row.period = t;
            row.series = names[s];
            row.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
            std::sort(x.begin(), x.end());
            row.p1 = percentile(x, 0.01);
            row.p10 = percentile(x, 0.10);
            row.p50 = percentile(x, 0.50);
            row.p90 = percentile(x, 0.90);
            row.p99 = percentile(x, 0.99);
            rows.push_back(row);
        }
    }
    return rows;
}

double max_resource_gap(const PathEnsemble& ens, const EconParams& ep) {
    double worst = 0.0;
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
        if (!ens.valid[p]) continue;
        for (std::size_t t = 0; t < ens.horizon; ++t) {
            const PeriodRecord& r = ens.at(p, t);
            double lhs = 0.0;
            for (double c : r.c) lhs += c;
            for (double a : r.savings) lhs += a;
            const double rhs = r.omega * (1.0 - ep.theta1 * std::pow(r.mu, ep.theta2)) * std::pow(r.k, ep.alpha) +
                               (1.0 - ep.delta) * r.k;
            worst = std::max(worst, std::abs(lhs - rhs));
        }
    }
    return worst;
}

void write_fan_csv(std::ostream& os, const std::vector<FanRow>& rows, double period_years, int base_year) {
    os << "period,year,series,mean,p1,p10,p50,p90,p99\n";
    os.precision(17);
    for (const auto& r : rows) {
        os << r.period << ',' << base_year + static_cast<int>(period_years * static_cast<double>(r.period)) << ','
           << r.series << ',' << r.mean << ',' << r.p1 << ',' << r.p10 << ',' << r.p50 << ',' << r.p90 << ','
           << r.p99 << '\n';
    }
}

void write_cohort_csv(std::ostream& os, const CohortWelfare& w) {
    os << "birth_period,u_policy,u_bau,cev\n";
    os.precision(17);
    for (std::size_t b = 0; b < kBirthCohorts; ++b) {
        os << kFirstBirth + static_cast<int>(b) << ',' << w.u_policy[b] << ',' << w.u_bau[b] << ',' << w.cev[b] << '\n';
    }
}

}  // namespace olg
