#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace olg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct NetworkArch {
    std::size_t input_dim = 17;
    std::size_t hidden_layers = 2;
    std::size_t hidden_width = 128;
    std::size_t output_dim = 22;

    void validate() const;
    std::size_t param_count() const;
    bool operator==(const NetworkArch&) const = default;
};

double gelu(double x);
double gelu_prime(double x);

/// Cached activations of a batched forward pass (one column per sample).
struct ForwardCache {
    std::vector<Matrix> pre;   // pre-activations of each hidden layer
    std::vector<Matrix> post;  // post[0] is the input, post[l+1] = gelu(pre[l])
    Matrix out;
};

/// Dense feed-forward net with GELU hidden layers and a linear head. Parameters live in
/// one flat array: for each layer, the column-major weight matrix (out x in), then the bias.
class Network {
public:
    Network() = default;
    explicit Network(NetworkArch arch);

    static Network init(const NetworkArch& arch, std::uint64_t seed);

    const NetworkArch& arch() const { return arch_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    Vector forward(const Vector& x) const;
    Matrix forward(const Matrix& X) const;
    void forward(const Matrix& X, ForwardCache& cache) const;

    // Accumulates dL/dparams into grad (resized and zeroed if empty). If dX is non-null it
    // receives dL/dX with the shape of the input batch.
    void backward(const ForwardCache& cache, const Matrix& dOut, std::vector<double>& grad,
                  Matrix* dX = nullptr) const;

    std::vector<double> backward(const Vector& x, const Vector& upstream) const;

private:
    struct LayerView {
        std::size_t in = 0;
        std::size_t out = 0;
        std::size_t w_offset = 0;
        std::size_t b_offset = 0;
    };
    Matrix weight(const LayerView& l) const;
    Vector bias(const LayerView& l) const;
    void build_layout();
    void check_input(const Matrix& X) const;

    NetworkArch arch_;
    std::vector<LayerView> layers_;
    std::vector<double> params_;
};

struct AdamState {
    std::uint64_t step = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<double> m;
    std::vector<double> v;

    static AdamState for_params(std::size_t n, double lr);
};

// Bias-corrected Adam update in place. Throws NumericalError on non-finite gradients.
void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state);

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::uint64_t episode = 0;
    std::uint32_t family = 0;
    std::vector<double> theta_lo;  // min-max scaling bounds of the pseudo-state inputs
    std::vector<double> theta_hi;
};

struct Checkpoint {
    Network net;
    AdamState adam;
    CheckpointMeta meta;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Network& net, const AdamState& adam,
                     const CheckpointMeta& meta);
// Refuses corrupt files, future versions and, if expected_input_dim > 0, mismatched inputs.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::size_t expected_input_dim = 0);

}  // namespace olg
