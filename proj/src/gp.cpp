#include "olg/gp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <string>

#include "olg/errors.hpp"
#include "olg/network.hpp"
#include "olg/sqp.hpp"

namespace olg {

namespace {

const double kSqrt5 = std::sqrt(5.0);

struct Factor {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 0.0;
};

// Cholesky with the escalating jitter schedule 0, 1e-10, ..., 1e-6.
Factor factorize(Eigen::MatrixXd K) {
    Factor f;
    const Eigen::Index n = K.rows();
    for (double jitter : {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6}) {
        Eigen::MatrixXd Kj = K;
        if (jitter > 0.0) Kj.diagonal().array() += jitter;
        f.llt.compute(Kj);
        if (f.llt.info() == Eigen::Success) {
            const auto& L = f.llt.matrixLLT();
            bool ok = true;
            for (Eigen::Index i = 0; i < n && ok; ++i) ok = L(i, i) > 0.0 && std::isfinite(L(i, i));
            if (ok) {
                f.jitter = jitter;
                return f;
            }
        }
    }
    throw NumericalError("GP covariance not positive definite after maximum jitter 1e-6");
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, const GpHyperparams& hyp) {
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = hyp.signal_var;
        for (Eigen::Index j = 0; j < i; ++j) {
            double r2 = 0.0;
            for (Eigen::Index q = 0; q < d; ++q) {
                const double z = (X(i, q) - X(j, q)) / hyp.lengths[static_cast<std::size_t>(q)];
                r2 += z * z;
            }
            K(i, j) = K(j, i) = matern52_of_r(std::sqrt(r2), hyp.signal_var);
        }
    }
    return K;
}

}  // namespace

void GpHyperparams::validate() const {
    if (!(signal_var > 0.0) || !(noise_var > 0.0)) throw DomainError("GP variances must be positive");
    for (double l : lengths) {
        if (!(l > 0.0)) throw DomainError("GP length-scales must be positive");
    }
}

std::vector<double> GpHyperparams::to_log() const {
    std::vector<double> z;
    z.push_back(std::log(signal_var));
    for (double l : lengths) z.push_back(std::log(l));
    z.push_back(std::log(noise_var));
    return z;
}

GpHyperparams GpHyperparams::from_log(std::span<const double> z) {
    if (z.size() < 3) throw DomainError("log hyperparameter vector too short");
    GpHyperparams h;
    h.signal_var = std::exp(z[0]);
    for (std::size_t i = 1; i + 1 < z.size(); ++i) h.lengths.push_back(std::exp(z[i]));
    h.noise_var = std::exp(z.back());
    return h;
}

double matern52_of_r(double r, double signal_var) {
    const double s = kSqrt5 * r;
    return signal_var * (1.0 + s + 5.0 * r * r / 3.0) * std::exp(-s);
}

double matern52(std::span<const double> x, std::span<const double> xp, const GpHyperparams& hyp) {
    hyp.validate();
    if (x.size() != xp.size() || x.size() != hyp.lengths.size()) throw DomainError("matern52: dimension mismatch");
    double r2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double z = (x[i] - xp[i]) / hyp.lengths[i];
        r2 += z * z;
    }
    return matern52_of_r(std::sqrt(r2), hyp.signal_var);
}

double LogSpaceBox::lo(std::size_t i, std::size_t dim) const {
    if (i == 0) return log_signal_lo;
    if (i == dim + 1) return log_noise_lo;
    return log_length_lo;
}

double LogSpaceBox::hi(std::size_t i, std::size_t dim) const {
    if (i == 0) return log_signal_hi;
    if (i == dim + 1) return log_noise_hi;
    return log_length_hi;
}

MllResult log_marginal_likelihood(const GpHyperparams& hyp, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  bool with_grad) {
    hyp.validate();
    const Eigen::Index n = X.rows();
    const auto d = static_cast<std::size_t>(X.cols());
    if (n < 1 || hyp.lengths.size() != d) throw DomainError("log_marginal_likelihood: shape mismatch");
    Eigen::MatrixXd Kf = kernel_matrix(X, hyp);
    Eigen::MatrixXd K = Kf;
    K.diagonal().array() += hyp.noise_var;
    const Factor f = factorize(K);
    const Eigen::VectorXd alpha = f.llt.solve(y);
    const auto& L = f.llt.matrixLLT();
    double logdet_half = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet_half += std::log(L(i, i));
    MllResult out;
    out.jitter = f.jitter;
    out.value = -0.5 * y.dot(alpha) - logdet_half - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    if (!with_grad) return out;

    // d MLL / d z = 0.5 tr(W dK/dz) with W = alpha alpha^T - K^{-1}.
    Eigen::MatrixXd W = -f.llt.solve(Eigen::MatrixXd::Identity(n, n));
    W.noalias() += alpha * alpha.transpose();
    out.grad.assign(d + 2, 0.0);
    out.grad[0] = 0.5 * (W.cwiseProduct(Kf)).sum();
    out.grad[d + 1] = 0.5 * hyp.noise_var * W.trace();
    std::vector<double> z2(d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) {
            double r2 = 0.0;
            for (std::size_t q = 0; q < d; ++q) {
                const double z = (X(i, static_cast<Eigen::Index>(q)) - X(j, static_cast<Eigen::Index>(q))) / hyp.lengths[q];
                z2[q] = z * z;
                r2 += z2[q];
            }
            const double r = std::sqrt(r2);
            // d k / d log l_q = (5/3) sf2 (1 + sqrt5 r) exp(-sqrt5 r) (dx_q / l_q)^2
            const double common = 2.0 * 0.5 * W(i, j) * (5.0 / 3.0) * hyp.signal_var * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r);
            for (std::size_t q = 0; q < d; ++q) out.grad[q + 1] += common * z2[q];
        }
    }
    return out;
}

GpModel GpModel::condition(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y, std::vector<double> lo,
                           std::vector<double> hi, const GpHyperparams& hyp, bool standardize) {
    hyp.validate();
    const Eigen::Index n = X_raw.rows();
    const auto d = static_cast<std::size_t>(X_raw.cols());
    if (n < 1 || y.size() != n) throw DomainError("GpModel: inputs and targets disagree in size");
    if (lo.size() != d || hi.size() != d || hyp.lengths.size() != d) throw DomainError("GpModel: dimension mismatch");
    GpModel m;
    m.hyp_ = hyp;
    m.lo_ = std::move(lo);
    m.hi_ = std::move(hi);
    m.X_.resize(n, static_cast<Eigen::Index>(d));
    for (std::size_t q = 0; q < d; ++q) {
        if (!(m.hi_[q] > m.lo_[q])) throw DomainError("GpModel: scaling bounds need lo < hi");
        m.X_.col(static_cast<Eigen::Index>(q)) =
            (X_raw.col(static_cast<Eigen::Index>(q)).array() - m.lo_[q]) / (m.hi_[q] - m.lo_[q]);
    }
    if (standardize) {
        m.y_mean_ = y.mean();
        const double var = n > 1 ? (y.array() - m.y_mean_).square().sum() / static_cast<double>(n - 1) : 0.0;
        m.y_scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    m.y_ = (y.array() - m.y_mean_) / m.y_scale_;
    Eigen::MatrixXd K = kernel_matrix(m.X_, hyp);
    K.diagonal().array() += hyp.noise_var;
    const Factor f = factorize(K);
    m.jitter_ = f.jitter;
    m.L_ = f.llt.matrixL();
    m.alpha_ = f.llt.solve(m.y_);
    double logdet_half = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet_half += std::log(m.L_(i, i));
    m.mll_ = -0.5 * m.y_.dot(m.alpha_) - logdet_half - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    return m;
}

std::vector<double> GpModel::scale_input(std::span<const double> x_raw) const {
    if (x_raw.size() != dim()) throw DomainError("GP prediction: input dimension mismatch");
    std::vector<double> x(dim());
    for (std::size_t q = 0; q < dim(); ++q) x[q] = (x_raw[q] - lo_[q]) / (hi_[q] - lo_[q]);
    return x;
}

GpModel::Prediction GpModel::predict(std::span<const double> x_raw) const {
    const auto x = scale_input(x_raw);
    const Eigen::Index n = X_.rows();
    Eigen::VectorXd ks(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double r2 = 0.0;
        for (std::size_t q = 0; q < dim(); ++q) {
            const double z = (x[q] - X_(i, static_cast<Eigen::Index>(q))) / hyp_.lengths[q];
            r2 += z * z;
        }
        ks(i) = matern52_of_r(std::sqrt(r2), hyp_.signal_var);
    }
    const Eigen::VectorXd v = L_.triangularView<Eigen::Lower>().solve(ks);
    Prediction p;
    p.mean = y_mean_ + y_scale_ * ks.dot(alpha_);
    p.variance = std::max(0.0, hyp_.signal_var - v.squaredNorm()) * y_scale_ * y_scale_;
    return p;
}

std::vector<double> GpModel::mean_gradient(std::span<const double> x_raw) const {
    const auto x = scale_input(x_raw);
    const std::size_t d = dim();
    std::vector<double> g(d, 0.0);
    for (Eigen::Index i = 0; i < X_.rows(); ++i) {
        double r2 = 0.0;
        for (std::size_t q = 0; q < d; ++q) {
            const double z = (x[q] - X_(i, static_cast<Eigen::Index>(q))) / hyp_.lengths[q];
            r2 += z * z;
        }
        const double r = std::sqrt(r2);
        // d k / d x_q = -(5/3) sf2 (1 + sqrt5 r) exp(-sqrt5 r) dx_q / l_q^2
        const double common = -(5.0 / 3.0) * hyp_.signal_var * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r) * alpha_(i);
        for (std::size_t q = 0; q < d; ++q) {
            g[q] += common * (x[q] - X_(i, static_cast<Eigen::Index>(q))) / (hyp_.lengths[q] * hyp_.lengths[q]);
        }
    }
    for (std::size_t q = 0; q < d; ++q) g[q] *= y_scale_ / (hi_[q] - lo_[q]);
    return g;
}

std::vector<double> GpModel::loo_residuals() const {
    const Eigen::Index n = X_.rows();
    const Eigen::MatrixXd Linv = L_.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
    std::vector<double> r(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        // [K^{-1}]_ii = sum_k (L^{-1})_{ki}^2
        const double kinv_ii = Linv.col(i).squaredNorm();
        r[static_cast<std::size_t>(i)] = alpha_(i) / kinv_ii * y_scale_;
    }
    return r;
}

double GpModel::loo_cv_error() const {
    const auto r = loo_residuals();
    double s = 0.0;
    for (double x : r) s += x * x;
    return s / static_cast<double>(r.size());
}

void GpModel::save(std::ostream& os) const {
    os.precision(17);
    os << "OLGGP 1\n";
    os << "dim " << dim() << " n " << size() << "\n";
    os << "signal_var " << hyp_.signal_var << "\nnoise_var " << hyp_.noise_var << "\nlengths";
    for (double l : hyp_.lengths) os << ' ' << l;
    os << "\nlo";
    for (double v : lo_) os << ' ' << v;
    os << "\nhi";
    for (double v : hi_) os << ' ' << v;
    os << "\ny_mean " << y_mean_ << "\ny_scale " << y_scale_ << "\njitter " << jitter_ << "\nbinary\n";
    auto put = [&](const double* p, Eigen::Index count) {
        os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * static_cast<Eigen::Index>(sizeof(double))));
    };
    put(X_.data(), X_.size());
    put(y_.data(), y_.size());
    put(L_.data(), L_.size());
}

GpModel GpModel::load(std::istream& is) {
    std::string tag;
    int version = 0;
    is >> tag >> version;
    if (tag != "OLGGP" || version != 1) throw ProvenanceError("not a GP model file (or unsupported version)");
    std::size_t d = 0, n = 0;
    auto expect = [&](const char* key) {
        std::string k;
        is >> k;
        if (k != key) throw ProvenanceError(std::string("GP model file: expected key ") + key);
    };
    expect("dim");
    is >> d;
    expect("n");
    is >> n;
    GpModel m;
    expect("signal_var");
    is >> m.hyp_.signal_var;
    expect("noise_var");
    is >> m.hyp_.noise_var;
    expect("lengths");
    m.hyp_.lengths.resize(d);
    for (auto& v : m.hyp_.lengths) is >> v;
    expect("lo");
    m.lo_.resize(d);
    for (auto& v : m.lo_) is >> v;
    expect("hi");
    m.hi_.resize(d);
    for (auto& v : m.hi_) is >> v;
    expect("y_mean");
    is >> m.y_mean_;
    expect("y_scale");
    is >> m.y_scale_;
    expect("jitter");
    is >> m.jitter_;
    expect("binary");
    is.get();
    const auto N = static_cast<Eigen::Index>(n), D = static_cast<Eigen::Index>(d);
    m.X_.resize(N, D);
    m.y_.resize(N);
    m.L_.resize(N, N);
    auto get = [&](double* p, Eigen::Index count) {
        if (!is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * static_cast<Eigen::Index>(sizeof(double))))) {
            throw ProvenanceError("GP model file truncated");
        }
    };
    get(m.X_.data(), m.X_.size());
    get(m.y_.data(), m.y_.size());
    get(m.L_.data(), m.L_.size());
    m.hyp_.validate();
    m.alpha_ = m.L_.triangularView<Eigen::Lower>().transpose().solve(m.L_.triangularView<Eigen::Lower>().solve(m.y_));
    double logdet_half = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) logdet_half += std::log(m.L_(i, i));
    m.mll_ = -0.5 * m.y_.dot(m.alpha_) - logdet_half - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    return m;
}

namespace {

struct RestartOutcome {
    std::vector<double> z;
    double mll = -std::numeric_limits<double>::infinity();
};

RestartOutcome optimize_adam(std::vector<double> z, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const GpFitOptions& opts) {
    const std::size_t d = static_cast<std::size_t>(X.cols());
    AdamState st = AdamState::for_params(z.size(), opts.learning_rate);
    RestartOutcome best;
    for (std::size_t it = 0; it <= opts.iterations; ++it) {
        MllResult r;
        try {
            r = log_marginal_likelihood(GpHyperparams::from_log(z), X, y, it < opts.iterations);
        } catch (const NumericalError&) {
            break;
        }
        if (std::isfinite(r.value) && r.value > best.mll) {
            best.mll = r.value;
            best.z = z;
        }
        if (it == opts.iterations) break;
        std::vector<double> neg(r.grad.size());
        for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -r.grad[i];
        adam_step(z, neg, st);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::clamp(z[i], opts.box.lo(i, d), opts.box.hi(i, d));
    }
    return best;
}

RestartOutcome optimize_sqp(const std::vector<double>& z0, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const GpFitOptions& opts) {
    const std::size_t d = static_cast<std::size_t>(X.cols());
    ConstraintSet cs;
    for (std::size_t i = 0; i < z0.size(); ++i) {
        cs.lo.push_back(opts.box.lo(i, d));
        cs.hi.push_back(opts.box.hi(i, d));
    }
    Objective f = [&](std::span<const double> z, std::vector<double>* g) {
        const auto r = log_marginal_likelihood(GpHyperparams::from_log(z), X, y, g != nullptr);
        if (g) *g = r.grad;
        return r.value;
    };
    SqpOptions so;
    so.max_iter = opts.iterations;
    RestartOutcome out;
    try {
        const auto sol = solve_constrained(f, cs, z0, so);
        out.z = sol.x;
        out.mll = sol.f;
    } catch (const NumericalError&) {
    }
    return out;
}

}  // namespace

GpModel fit_gp(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y, std::vector<double> lo, std::vector<double> hi,
               const GpFitOptions& opts) {
    if (X_raw.rows() < 2) throw DomainError("fit_gp: need at least two points");
    if (opts.restarts == 0) throw ConfigError("fit_gp: restarts must be positive");
    const std::size_t d = static_cast<std::size_t>(X_raw.cols());
    // Condition once with placeholder hyperparameters to obtain the scaled data.
    GpHyperparams probe;
    probe.lengths.assign(d, 1.0);
    probe.noise_var = 1e-2;
    const GpModel scaled = GpModel::condition(X_raw, y, lo, hi, probe, opts.standardize);
    const Eigen::MatrixXd& X = scaled.X_scaled();
    const Eigen::VectorXd& ys = scaled.y_scaled();

    RngStream rng(opts.seed, 0x67707374ULL);
    RestartOutcome best;
    for (std::size_t r = 0; r < opts.restarts; ++r) {
        std::vector<double> z(d + 2);
        if (r == 0 && opts.warm_start) {
            z = opts.warm_start->to_log();
            if (z.size() != d + 2) throw ConfigError("fit_gp: warm start has the wrong dimension");
        } else if (r == 0) {
            z[0] = 0.0;
            for (std::size_t q = 0; q < d; ++q) z[q + 1] = std::log(0.5);
            z[d + 1] = -8.0;
        } else {
            for (std::size_t i = 0; i < z.size(); ++i) {
                z[i] = opts.box.lo(i, d) + rng.uniform() * (opts.box.hi(i, d) - opts.box.lo(i, d));
            }
        }
        const RestartOutcome o =
            opts.optimizer == MllOptimizer::Adam ? optimize_adam(z, X, ys, opts) : optimize_sqp(z, X, ys, opts);
        if (!o.z.empty() && o.mll > best.mll) best = o;
    }
    if (best.z.empty()) throw NumericalError("fit_gp: every restart failed");
    return GpModel::condition(X_raw, y, std::move(lo), std::move(hi), GpHyperparams::from_log(best.z), opts.standardize);
}

std::size_t bal_acquire(const GpModel& model, const std::vector<std::vector<double>>& candidates, double alpha_ucb,
                        double kappa_ucb) {
    if (candidates.empty()) throw DomainError("bal_acquire: no candidates");
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto p = model.predict(candidates[i]);
        const double score = alpha_ucb * p.mean + kappa_ucb * std::sqrt(p.variance);
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return best;
}

void BalConfig::validate() const {
    if (initial_n < 2 || candidate_pool == 0 || refit_every == 0) throw ConfigError("BAL sizes must be positive");
    if (alpha_ucb < 0.0 || kappa_ucb < 0.0) throw ConfigError("UCB weights must be nonnegative");
    if (!(loo_tol > 0.0)) throw ConfigError("loo_tol must be positive");
}

BalResult bal_loop(const ObjectiveOracle& oracle, const DomainSampler& sampler, std::vector<double> lo,
                   std::vector<double> hi, const BalConfig& config, RngStream& rng) {
    config.validate();
    BalResult res;
    const std::size_t d = lo.size();
    auto to_matrix = [&] {
        Eigen::MatrixXd X(static_cast<Eigen::Index>(res.inputs.size()), static_cast<Eigen::Index>(d));
        Eigen::VectorXd y(static_cast<Eigen::Index>(res.inputs.size()));
        for (std::size_t i = 0; i < res.inputs.size(); ++i) {
            for (std::size_t q = 0; q < d; ++q) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) = res.inputs[i][q];
            y(static_cast<Eigen::Index>(i)) = res.outputs[i][0];
        }
        return std::pair{X, y};
    };

    // Initial design; failed evaluations are replaced by fresh draws.
    const std::size_t max_failures = 10 * config.initial_n + 100;
    while (res.inputs.size() < config.initial_n) {
        const auto batch = sampler(config.initial_n - res.inputs.size(), rng);
        for (const auto& x : batch) {
            auto y = oracle(x);
            if (!y || y->empty() || !std::isfinite((*y)[0])) {
                if (++res.skipped > max_failures) throw NumericalError("bal_loop: oracle keeps failing on the initial design");
                continue;
            }
            res.inputs.push_back(x);
            res.outputs.push_back(std::move(*y));
        }
    }

    GpFitOptions fit = config.fit;
    auto [X, y] = to_matrix();
    res.model = fit_gp(X, y, lo, hi, fit);
    res.loo_history.push_back(res.model.loo_cv_error());

    std::size_t since_refit = 0;
    while (res.acquired < config.acquisitions && res.loo_history.back() > config.loo_tol) {
        const auto pool = sampler(config.candidate_pool, rng);
        const std::size_t pick = bal_acquire(res.model, pool, config.alpha_ucb, config.kappa_ucb);
        auto out = oracle(pool[pick]);
        if (!out || out->empty() || !std::isfinite((*out)[0])) {
            if (++res.skipped > max_failures) throw NumericalError("bal_loop: oracle keeps failing on acquisitions");
            continue;
        }
        res.inputs.push_back(pool[pick]);
        res.outputs.push_back(std::move(*out));
        ++res.acquired;
        ++since_refit;
        auto [Xn, yn] = to_matrix();
        if (since_refit >= config.refit_every) {
            fit.warm_start = res.model.hyperparams();
            fit.seed = config.fit.seed + res.acquired;
            res.model = fit_gp(Xn, yn, lo, hi, fit);
            since_refit = 0;
        } else {
            res.model = GpModel::condition(Xn, yn, lo, hi, res.model.hyperparams(), config.fit.standardize);
        }
        res.loo_history.push_back(res.model.loo_cv_error());
    }
    if (since_refit != 0) {
        auto [Xf, yf] = to_matrix();
        fit.warm_start = res.model.hyperparams();
        res.model = fit_gp(Xf, yf, lo, hi, fit);
        res.loo_history.push_back(res.model.loo_cv_error());
    }
    return res;
}

}  // namespace olg
