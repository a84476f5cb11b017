#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace olg {

// Returns f(x); fills grad when non-null. The solver maximizes.
using Objective = std::function<double(std::span<const double> x, std::vector<double>* grad)>;

// lo <= a.x <= hi; either side may be infinite.
struct LinearRow {
    std::vector<double> a;
    double lo = 0.0;
    double hi = 0.0;
    std::string name;
};

// a.x == b
struct LinearEquality {
    std::vector<double> a;
    double b = 0.0;
    std::string name;
};

// g(x) >= 0
struct NonlinearRow {
    Objective g;
    std::string name;
};

struct ConstraintSet {
    std::vector<double> lo, hi;  // box; lo == hi fixes a variable
    std::vector<LinearRow> linear;
    std::vector<LinearEquality> equalities;
    std::vector<NonlinearRow> nonlinear;

    std::size_t dim() const { return lo.size(); }
    void validate() const;
};

struct SqpOptions {
    std::size_t max_iter = 200;
    double tol = 1e-7;           // KKT tolerance (stationarity, feasibility, complementarity)
    double step_tol = 1e-12;     // stop once steps stall at this size
};

struct LocalSolution {
    std::vector<double> x;
    double f = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    double stationarity = 0.0;
    double max_violation = 0.0;
    double complementarity = 0.0;
};

// Minimal dense convex QP: min 0.5 z'Hz + h'z s.t. Ez = e, Az >= b, from a feasible z0.
// H must be positive definite on the relevant subspace. Multipliers are nonnegative for
// inequalities at the optimum.
struct QpResult {
    Eigen::VectorXd z;
    Eigen::VectorXd lambda;  // one per inequality row
    Eigen::VectorXd nu;      // one per equality row
    bool optimal = false;
};
QpResult solve_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& h, const Eigen::MatrixXd& E, const Eigen::VectorXd& e,
                  const Eigen::MatrixXd& A, const Eigen::VectorXd& b, Eigen::VectorXd z0, std::size_t max_iter = 500);

// SQP with damped BFGS, an elastic QP subproblem and an l1 merit line search.
// Throws DomainError on a start outside the box or off the equality manifold.
LocalSolution solve_constrained(const Objective& f, const ConstraintSet& cs, std::span<const double> start,
                                const SqpOptions& opts = {});

}  // namespace olg
