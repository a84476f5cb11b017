#include "olg/sqp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "olg/errors.hpp"

namespace olg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

void ConstraintSet::validate() const {
    if (lo.size() != hi.size()) throw ConfigError("constraint box: lo and hi differ in length");
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (!(lo[i] <= hi[i])) throw ConfigError("constraint box: lo > hi");
    }
    for (const auto& r : linear) {
        if (r.a.size() != dim()) throw ConfigError("linear constraint '" + r.name + "' has the wrong dimension");
        if (!(r.lo <= r.hi)) throw ConfigError("linear constraint '" + r.name + "' has lo > hi");
    }
    for (const auto& r : equalities) {
        if (r.a.size() != dim()) throw ConfigError("equality '" + r.name + "' has the wrong dimension");
    }
    for (const auto& r : nonlinear) {
        if (!r.g) throw ConfigError("nonlinear constraint '" + r.name + "' has no function");
    }
}

QpResult solve_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& h, const Eigen::MatrixXd& E, const Eigen::VectorXd& e,
                  const Eigen::MatrixXd& A, const Eigen::VectorXd& b, Eigen::VectorXd z0, std::size_t max_iter) {
    const Eigen::Index n = H.rows();
    const Eigen::Index me = E.rows();
    const Eigen::Index mi = A.rows();
    const double feas_tol = 1e-9 * (1.0 + z0.cwiseAbs().maxCoeff());
    if (mi > 0 && ((A * z0 - b).array() < -feas_tol).any()) throw DomainError("solve_qp: start violates an inequality");
    if (me > 0 && ((E * z0 - e).cwiseAbs().array() > feas_tol).any()) throw DomainError("solve_qp: start violates an equality");

    QpResult res;
    res.z = std::move(z0);
    res.lambda = Eigen::VectorXd::Zero(mi);
    res.nu = Eigen::VectorXd::Zero(me);
    std::vector<Eigen::Index> work;
    std::vector<char> in_work(static_cast<std::size_t>(mi), 0);

    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        const Eigen::Index mw = me + static_cast<Eigen::Index>(work.size());
        Eigen::MatrixXd C(mw, n);
        if (me > 0) C.topRows(me) = E;
        for (std::size_t k = 0; k < work.size(); ++k) C.row(me + static_cast<Eigen::Index>(k)) = A.row(work[k]);
        // [H -C'; C 0][p; y] = [-g; 0]
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + mw, n + mw);
        K.topLeftCorner(n, n) = H;
        K.topRightCorner(n, mw) = -C.transpose();
        K.bottomLeftCorner(mw, n) = C;
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + mw);
        rhs.head(n) = -(H * res.z + h);
        const Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
        const Eigen::VectorXd p = sol.head(n);
        const Eigen::VectorXd y = sol.tail(mw);

        if (p.cwiseAbs().maxCoeff() <= 1e-13 * (1.0 + res.z.cwiseAbs().maxCoeff())) {
            Eigen::Index drop = -1;
            double most_negative = -1e-12;
            for (std::size_t k = 0; k < work.size(); ++k) {
                const double lam = y(me + static_cast<Eigen::Index>(k));
                if (lam < most_negative) {
                    most_negative = lam;
                    drop = static_cast<Eigen::Index>(k);
                }
            }
            if (drop < 0) {
                res.lambda.setZero();
                for (std::size_t k = 0; k < work.size(); ++k) res.lambda(work[k]) = std::max(0.0, y(me + static_cast<Eigen::Index>(k)));
                res.nu = y.head(me);
                res.optimal = true;
                return res;
            }
            in_work[static_cast<std::size_t>(work[static_cast<std::size_t>(drop)])] = 0;
            work.erase(work.begin() + drop);
            continue;
        }

        double alpha = 1.0;
        Eigen::Index block = -1;
        for (Eigen::Index i = 0; i < mi; ++i) {
            if (in_work[static_cast<std::size_t>(i)]) continue;
            const double ap = A.row(i).dot(p);
            if (ap >= -1e-14) continue;
            const double step = std::max(0.0, (b(i) - A.row(i).dot(res.z)) / ap);
            if (step < alpha) {
                alpha = step;
                block = i;
            }
        }
        res.z += alpha * p;
        if (block >= 0) {
            work.push_back(block);
            in_work[static_cast<std::size_t>(block)] = 1;
        }
    }
    return res;
}

namespace {

// Problem restricted to the free variables; inequality rows are c_i(x) >= 0.
class Reduced {
public:
    Reduced(const Objective& f, const ConstraintSet& cs) : f_(f), cs_(cs) {
        for (std::size_t j = 0; j < cs.dim(); ++j) {
            if (cs.lo[j] < cs.hi[j]) free_.push_back(j);
        }
        const auto nf = static_cast<Eigen::Index>(free_.size());
        for (std::size_t k = 0; k < free_.size(); ++k) {
            const std::size_t j = free_[k];
            if (std::isfinite(cs.lo[j])) add_linear(unit(k), -cs.lo[j]);
            if (std::isfinite(cs.hi[j])) add_linear(-unit(k), cs.hi[j]);
        }
        for (const auto& r : cs.linear) {
            Eigen::VectorXd a(nf);
            double fixed = 0.0;
            split(r.a, a, fixed);
            if (std::isfinite(r.lo)) add_linear(a, fixed - r.lo);
            if (std::isfinite(r.hi)) add_linear(-a, r.hi - fixed);
        }
        Aeq_.resize(static_cast<Eigen::Index>(cs.equalities.size()), nf);
        beq_.resize(static_cast<Eigen::Index>(cs.equalities.size()));
        for (std::size_t q = 0; q < cs.equalities.size(); ++q) {
            Eigen::VectorXd a(nf);
            double fixed = 0.0;
            split(cs.equalities[q].a, a, fixed);
            Aeq_.row(static_cast<Eigen::Index>(q)) = a.transpose();
            beq_(static_cast<Eigen::Index>(q)) = cs.equalities[q].b - fixed;
        }
    }

    Eigen::Index nf() const { return static_cast<Eigen::Index>(free_.size()); }
    Eigen::Index m() const { return static_cast<Eigen::Index>(lin_a_.size() + cs_.nonlinear.size()); }
    const Eigen::MatrixXd& Aeq() const { return Aeq_; }
    const Eigen::VectorXd& beq() const { return beq_; }

    std::vector<double> full(const Eigen::VectorXd& x) const {
        std::vector<double> out(cs_.lo);
        for (std::size_t k = 0; k < free_.size(); ++k) out[free_[k]] = x(static_cast<Eigen::Index>(k));
        return out;
    }

    Eigen::VectorXd reduce(std::span<const double> x) const {
        Eigen::VectorXd r(nf());
        for (std::size_t k = 0; k < free_.size(); ++k) r(static_cast<Eigen::Index>(k)) = x[free_[k]];
        return r;
    }

    // phi = -f (minimized), its gradient, constraint values and Jacobian.
    struct Eval {
        double phi = 0.0;
        Eigen::VectorXd grad;
        Eigen::VectorXd c;
        Eigen::MatrixXd J;
    };

    Eval eval(const Eigen::VectorXd& x) const {
        const auto xf = full(x);
        Eval ev;
        std::vector<double> g;
        ev.phi = -f_(xf, &g);
        if (!std::isfinite(ev.phi) || g.size() != cs_.dim()) throw NumericalError("SQP: objective evaluation failed");
        ev.grad = -reduce(g);
        ev.c.resize(m());
        ev.J.resize(m(), nf());
        Eigen::Index i = 0;
        for (std::size_t r = 0; r < lin_a_.size(); ++r, ++i) {
            ev.c(i) = lin_a_[r].dot(x) + lin_b_[r];
            ev.J.row(i) = lin_a_[r].transpose();
        }
        for (const auto& nl : cs_.nonlinear) {
            std::vector<double> gg;
            ev.c(i) = nl.g(xf, &gg);
            if (!std::isfinite(ev.c(i)) || gg.size() != cs_.dim()) throw NumericalError("SQP: constraint evaluation failed");
            ev.J.row(i) = reduce(gg).transpose();
            ++i;
        }
        if (!ev.grad.allFinite() || !ev.J.allFinite()) throw NumericalError("SQP: non-finite gradient");
        return ev;
    }

    double eq_violation(const Eigen::VectorXd& x) const {
        return Aeq_.rows() == 0 ? 0.0 : (Aeq_ * x - beq_).cwiseAbs().sum();
    }

private:
    Eigen::VectorXd unit(std::size_t k) const {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(nf());
        v(static_cast<Eigen::Index>(k)) = 1.0;
        return v;
    }
    void split(const std::vector<double>& a_full, Eigen::VectorXd& a, double& fixed) const {
        a = reduce(a_full);
        fixed = 0.0;
        for (std::size_t j = 0; j < cs_.dim(); ++j) {
            if (!(cs_.lo[j] < cs_.hi[j])) fixed += a_full[j] * cs_.lo[j];
        }
    }
    void add_linear(Eigen::VectorXd a, double b) {
        lin_a_.push_back(std::move(a));
        lin_b_.push_back(b);
    }

    const Objective& f_;
    const ConstraintSet& cs_;
    std::vector<std::size_t> free_;
    std::vector<Eigen::VectorXd> lin_a_;
    std::vector<double> lin_b_;
    Eigen::MatrixXd Aeq_;
    Eigen::VectorXd beq_;
};

double violation(const Eigen::VectorXd& c) { return (-c.array()).max(0.0).sum(); }

}  // namespace

LocalSolution solve_constrained(const Objective& f, const ConstraintSet& cs, std::span<const double> start,
                                const SqpOptions& opts) {
    cs.validate();
    if (start.size() != cs.dim()) throw DomainError("solve_constrained: start has the wrong dimension");
    for (std::size_t j = 0; j < cs.dim(); ++j) {
        if (start[j] < cs.lo[j] - 1e-12 || start[j] > cs.hi[j] + 1e-12) throw DomainError("solve_constrained: start outside the box");
    }
    const Reduced P(f, cs);
    const Eigen::Index nf = P.nf();
    const Eigen::Index m = P.m();
    const Eigen::Index me = P.Aeq().rows();
    Eigen::VectorXd x = P.reduce(start);
    if (me > 0) {
        const Eigen::VectorXd res = P.Aeq() * x - P.beq();
        if (res.cwiseAbs().maxCoeff() > 1e-8) throw DomainError("solve_constrained: start violates an equality");
        // Least-norm correction onto the equality manifold.
        x -= P.Aeq().transpose() * (P.Aeq() * P.Aeq().transpose()).ldlt().solve(res);
    }

    LocalSolution out;
    if (nf == 0) {
        const auto ev = P.eval(x);
        out.x = P.full(x);
        out.f = -ev.phi;
        out.max_violation = std::max(0.0, -(m > 0 ? ev.c.minCoeff() : 0.0));
        out.converged = out.max_violation <= opts.tol;
        return out;
    }

    auto ev = P.eval(x);
    Eigen::MatrixXd B = Eigen::MatrixXd::Identity(nf, nf);
    double rho = 1.0;
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(me);
    bool scaled = false;

    for (out.iterations = 0; out.iterations < opts.max_iter; ++out.iterations) {
        // Elastic QP: violated rows get a nonnegative slack penalized linearly.
        std::vector<Eigen::Index> viol;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (ev.c(i) < 0.0) viol.push_back(i);
        }
        const auto ns = static_cast<Eigen::Index>(viol.size());
        const Eigen::Index nz = nf + ns;
        const double big = std::max(1e3, 10.0 * rho);
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nz, nz);
        H.topLeftCorner(nf, nf) = B;
        for (Eigen::Index k = 0; k < ns; ++k) H(nf + k, nf + k) = 1e-8 * big;
        Eigen::VectorXd h(nz);
        h.head(nf) = ev.grad;
        h.tail(ns).setConstant(big);
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + ns, nz);
        Eigen::VectorXd b(m + ns);
        A.topLeftCorner(m, nf) = ev.J;
        b.head(m) = -ev.c;
        for (Eigen::Index k = 0; k < ns; ++k) {
            A(viol[static_cast<std::size_t>(k)], nf + k) = 1.0;
            A(m + k, nf + k) = 1.0;
            b(m + k) = 0.0;
        }
        Eigen::MatrixXd E = Eigen::MatrixXd::Zero(me, nz);
        if (me > 0) E.leftCols(nf) = P.Aeq();
        const Eigen::VectorXd e = me > 0 ? Eigen::VectorXd(P.beq() - P.Aeq() * x) : Eigen::VectorXd(0);
        Eigen::VectorXd z0 = Eigen::VectorXd::Zero(nz);
        for (Eigen::Index k = 0; k < ns; ++k) z0(nf + k) = -ev.c(viol[static_cast<std::size_t>(k)]);
        const QpResult qp = solve_qp(H, h, E, e, A, b, z0);
        const Eigen::VectorXd d = qp.z.head(nf);
        lambda = qp.lambda.head(m);
        nu = qp.nu;

        Eigen::VectorXd gradL = ev.grad - ev.J.transpose() * lambda;
        if (me > 0) gradL -= P.Aeq().transpose() * nu;
        out.stationarity = gradL.cwiseAbs().maxCoeff();
        out.max_violation = std::max(m > 0 ? std::max(0.0, -ev.c.minCoeff()) : 0.0,
                                     me > 0 ? (P.Aeq() * x - P.beq()).cwiseAbs().maxCoeff() : 0.0);
        out.complementarity = m > 0 ? (lambda.array() * ev.c.array()).abs().maxCoeff() : 0.0;
        if (out.stationarity < opts.tol && out.max_violation < opts.tol && out.complementarity < opts.tol) {
            out.converged = true;
            break;
        }
        if (d.cwiseAbs().maxCoeff() < opts.step_tol * (1.0 + x.cwiseAbs().maxCoeff())) break;

        const double lam_max = std::max(m > 0 ? lambda.maxCoeff() : 0.0, me > 0 ? nu.cwiseAbs().maxCoeff() : 0.0);
        if (rho < 1.5 * lam_max) rho = 2.0 * lam_max;
        auto merit = [&](const Reduced::Eval& v, const Eigen::VectorXd& xv) {
            return v.phi + rho * (violation(v.c) + P.eq_violation(xv));
        };
        const double m0 = merit(ev, x);
        const double slope = ev.grad.dot(d) - rho * (violation(ev.c) + P.eq_violation(x));

        double alpha = 1.0;
        bool accepted = false;
        Eigen::VectorXd xn;
        Reduced::Eval evn;
        for (int ls = 0; ls < 50; ++ls, alpha *= 0.5) {
            xn = x + alpha * d;
            try {
                evn = P.eval(xn);
            } catch (const NumericalError&) {
                continue;
            }
            if (merit(evn, xn) <= m0 + 1e-4 * alpha * std::min(slope, 0.0)) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;

        // Damped BFGS on the Lagrangian.
        const Eigen::VectorXd s = xn - x;
        Eigen::VectorXd y = (evn.grad - evn.J.transpose() * lambda) - (ev.grad - ev.J.transpose() * lambda);
        if (!scaled) {
            const double sy = s.dot(y);
            if (sy > 0.0) B *= y.squaredNorm() / sy;
            scaled = true;
        }
        const Eigen::VectorXd Bs = B * s;
        const double sBs = s.dot(Bs);
        if (sBs > 1e-300) {
            const double sy = s.dot(y);
            if (sy < 0.2 * sBs) {
                const double theta = 0.8 * sBs / (sBs - sy);
                y = theta * y + (1.0 - theta) * Bs;
            }
            B += y * y.transpose() / s.dot(y) - Bs * Bs.transpose() / sBs;
            B = 0.5 * (B + B.transpose());
        }
        x = xn;
        ev = std::move(evn);
    }
    out.x = P.full(x);
    for (std::size_t j = 0; j < cs.dim(); ++j) out.x[j] = std::clamp(out.x[j], cs.lo[j], cs.hi[j]);
    out.f = -ev.phi;
    return out;
}

}  // namespace olg
