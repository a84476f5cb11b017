#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "olg/rng.hpp"

namespace olg {

struct GpHyperparams {
    double signal_var = 1.0;
    std::vector<double> lengths;
    double noise_var = 1e-6;

    void validate() const;
    // Log-space vector (log signal_var, log lengths..., log noise_var).
    std::vector<double> to_log() const;
    static GpHyperparams from_log(std::span<const double> z);
};

// Matern-5/2 ARD covariance between two points in the same (scaled) coordinates.
double matern52(std::span<const double> x, std::span<const double> xp, const GpHyperparams& hyp);
double matern52_of_r(double r, double signal_var);

struct LogSpaceBox {
    double log_length_lo = -4.605170185988091;  // log 0.01
    double log_length_hi = 2.302585092994046;   // log 10
    double log_signal_lo = -6.0;
    double log_signal_hi = 6.0;
    double log_noise_lo = -14.0;
    double log_noise_hi = -2.0;

    double lo(std::size_t i, std::size_t dim) const;
    double hi(std::size_t i, std::size_t dim) const;
};

struct MllResult {
    double value = 0.0;
    std::vector<double> grad;  // d MLL / d log-hyperparameters
    double jitter = 0.0;
};

// X holds one scaled input per row. Throws NumericalError if Cholesky fails at max jitter.
MllResult log_marginal_likelihood(const GpHyperparams& hyp, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  bool with_grad = true);

enum class MllOptimizer { Adam, Sqp };

struct GpFitOptions {
    std::size_t restarts = 10;
    std::size_t iterations = 200;
    double learning_rate = 0.05;
    bool standardize = true;
    MllOptimizer optimizer = MllOptimizer::Adam;
    LogSpaceBox box;
    std::uint64_t seed = 0;
    std::optional<GpHyperparams> warm_start;  // used as the first restart
};

/// Exact GP regression on inputs min-max scaled by [lo, hi] and optionally standardized targets.
class GpModel {
public:
    GpModel() = default;

    // Conditions on data at fixed hyperparameters (hyperparameters act in scaled units).
    static GpModel condition(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y, std::vector<double> lo,
                             std::vector<double> hi, const GpHyperparams& hyp, bool standardize);

    std::size_t dim() const { return lo_.size(); }
    std::size_t size() const { return static_cast<std::size_t>(X_.rows()); }
    const GpHyperparams& hyperparams() const { return hyp_; }
    double log_marginal_likelihood() const { return mll_; }
    double jitter() const { return jitter_; }
    double y_mean() const { return y_mean_; }
    double y_scale() const { return y_scale_; }
    const std::vector<double>& lo() const { return lo_; }
    const std::vector<double>& hi() const { return hi_; }
    const Eigen::MatrixXd& X_scaled() const { return X_; }
    const Eigen::VectorXd& y_scaled() const { return y_; }
    const Eigen::MatrixXd& cholesky() const { return L_; }
    const Eigen::VectorXd& weights() const { return alpha_; }

    struct Prediction {
        double mean = 0.0;
        double variance = 0.0;
    };
    Prediction predict(std::span<const double> x_raw) const;
    std::vector<double> mean_gradient(std::span<const double> x_raw) const;
    // Mean-squared leave-one-out error in target units, closed form.
    double loo_cv_error() const;
    std::vector<double> loo_residuals() const;

    void save(std::ostream& os) const;
    static GpModel load(std::istream& is);

private:
    std::vector<double> scale_input(std::span<const double> x_raw) const;

    GpHyperparams hyp_;
    std::vector<double> lo_, hi_;
    Eigen::MatrixXd X_;
    Eigen::VectorXd y_;
    Eigen::MatrixXd L_;
    Eigen::VectorXd alpha_;
    double y_mean_ = 0.0;
    double y_scale_ = 1.0;
    double mll_ = 0.0;
    double jitter_ = 0.0;
};

GpModel fit_gp(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y, std::vector<double> lo, std::vector<double> hi,
               const GpFitOptions& opts);

// argmax of alpha * mean + kappa * std over the candidates; ties go to the lowest index.
std::size_t bal_acquire(const GpModel& model, const std::vector<std::vector<double>>& candidates, double alpha_ucb,
                        double kappa_ucb);

struct BalConfig {
    std::size_t initial_n = 450;
    std::size_t acquisitions = 50;
    std::size_t candidate_pool = 1000;
    double alpha_ucb = 1.0;
    double kappa_ucb = 100.0;
    double loo_tol = 1e-4;
    std::size_t refit_every = 10;  // full hyperparameter refits; conditioning otherwise
    GpFitOptions fit;

    void validate() const;
};

// Oracle returns the acquisition target in element 0 and optional extra outputs after it,
// or nullopt when the point could not be evaluated.
using ObjectiveOracle = std::function<std::optional<std::vector<double>>(const std::vector<double>&)>;
using DomainSampler = std::function<std::vector<std::vector<double>>(std::size_t, RngStream&)>;

struct BalResult {
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> outputs;
    GpModel model;
    std::vector<double> loo_history;
    std::size_t skipped = 0;
    std::size_t acquired = 0;
};

BalResult bal_loop(const ObjectiveOracle& oracle, const DomainSampler& sampler, std::vector<double> lo,
                   std::vector<double> hi, const BalConfig& config, RngStream& rng);

}  // namespace olg
