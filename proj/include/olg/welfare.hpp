#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "olg/deqn.hpp"

namespace olg {

struct PeriodRecord {
    double e = 0.0;
    double E = 0.0;
    double T_at = 0.0;
    double TP = 0.0;
    double kappa = 0.0;
    double omega = 1.0;
    double tau = 0.0;
    double mu = 0.0;
    double k = 0.0;
    double r = 0.0;
    double w = 0.0;
    CohortArray c{};
    CohortArray transfers{};
    ChoiceArray savings{};
    ChoiceArray v{};
};

/// Row-major records: path p, period t lives at records[p * horizon + t].
struct PathEnsemble {
    std::size_t n_paths = 0;
    std::size_t horizon = 0;
    std::size_t excluded = 0;
    std::vector<bool> valid;
    std::vector<PeriodRecord> records;
    std::vector<double> theta;
    std::uint64_t seed = 0;

    const PeriodRecord& at(std::size_t path, std::size_t t) const { return records[path * horizon + t]; }
};

inline constexpr std::size_t kWelfareHorizon = 30;
inline constexpr std::size_t kRealizedHorizon = 41;

// Paths use streams (seed, path), so identical seeds give common random numbers across policies.
PathEnsemble simulate_paths(const DeqnModel& model, const std::vector<double>& theta, std::size_t n_paths,
                            std::size_t horizon, std::uint64_t seed, double max_excluded_fraction = 0.01);

using CohortVector = std::array<double, kBirthCohorts>;  // births t = -10 .. 29

// Expected remaining-lifetime utilities read from the value heads, denormalized.
CohortVector cohort_utilities(const PathEnsemble& ens, const EconParams& ep);
// Cross-check: discounted realized period utilities; needs horizon >= 41.
CohortVector cohort_utilities_realized(const PathEnsemble& ens, const EconParams& ep);

CohortVector uniform_weights();
double swf(const CohortVector& u, const CohortVector& gamma);

struct CohortWelfare {
    CohortVector u_policy{};
    CohortVector u_bau{};
    CohortVector cev{};
    double swf_policy = 0.0;
    double swf_bau = 0.0;
    double aggregate_cev = 0.0;
};

CohortWelfare compare_welfare(const CohortVector& u_policy, const CohortVector& u_bau, const CohortVector& gamma,
                              const EconParams& ep);

struct FanRow {
    std::size_t period = 0;
    std::string series;
    double mean = 0.0;
    double p1 = 0.0, p10 = 0.0, p50 = 0.0, p90 = 0.0, p99 = 0.0;
};

// Linear-interpolation percentile of unsorted data.
double percentile(std::vector<double> data, double q);

const std::vector<std::string>& fan_series();
std::vector<FanRow> fan_stats(const PathEnsemble& ens);

// Largest per-path deviation from the aggregate resource identity.
double max_resource_gap(const PathEnsemble& ens, const EconParams& ep);

void write_fan_csv(std::ostream& os, const std::vector<FanRow>& rows, double period_years = 5.0,
                   int base_year = 2015);
void write_cohort_csv(std::ostream& os, const CohortWelfare& w);

}  // namespace olg
