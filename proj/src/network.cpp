#include "olg/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "olg/errors.hpp"
#include "olg/rng.hpp"

namespace olg {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void NetworkArch::validate() const {
    if (input_dim == 0) throw ConfigError("network input_dim must be positive");
    if (hidden_layers == 0) throw ConfigError("network needs at least one hidden layer");
    if (hidden_width < 8) throw ConfigError("hidden_width must be at least 8");
    if (output_dim == 0) throw ConfigError("network output_dim must be positive");
}

std::size_t NetworkArch::param_count() const {
    std::size_t n = 0;
    std::size_t in = input_dim;
    for (std::size_t l = 0; l <= hidden_layers; ++l) {
        const std::size_t out = l == hidden_layers ? output_dim : hidden_width;
        n += out * in + out;
        in = out;
    }
    return n;
}

double gelu(double x) {
    return 0.5 * x * std::erfc(-x * std::numbers::sqrt2 / 2.0);
}

double gelu_prime(double x) {
    const double cdf = 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
    const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
    return cdf + x * pdf;
}

Network::Network(NetworkArch arch) : arch_(arch) {
    arch_.validate();
    build_layout();
    params_.assign(arch_.param_count(), 0.0);
}

void Network::build_layout() {
    layers_.clear();
    std::size_t in = arch_.input_dim;
    std::size_t offset = 0;
    for (std::size_t l = 0; l <= arch_.hidden_layers; ++l) {
        const std::size_t out = l == arch_.hidden_layers ? arch_.output_dim : arch_.hidden_width;
        layers_.push_back({in, out, offset, offset + in * out});
        offset += in * out + out;
        in = out;
    }
}

Network Network::init(const NetworkArch& arch, std::uint64_t seed) {
    Network net(arch);
    RngStream rng(seed, 0x6e6574ULL);
    for (const auto& l : net.layers_) {
        // Var(w) = 1 / fan_in keeps pre-activation variance at the mean squared input.
        const double a = std::sqrt(3.0 / static_cast<double>(l.in));
        std::uniform_real_distribution<double> dist(-a, a);
        for (std::size_t i = 0; i < l.in * l.out; ++i) net.params_[l.w_offset + i] = dist(rng);
    }
    return net;
}

// Copies into aligned storage: vectorized products over the flat array would otherwise pick
// their summation order from its heap alignment, breaking bitwise reproducibility.
Matrix Network::weight(const LayerView& l) const {
    return Eigen::Map<const Matrix>(params_.data() + l.w_offset, static_cast<Eigen::Index>(l.out),
                                    static_cast<Eigen::Index>(l.in));
}

Vector Network::bias(const LayerView& l) const {
    return Eigen::Map<const Vector>(params_.data() + l.b_offset, static_cast<Eigen::Index>(l.out));
}

void Network::check_input(const Matrix& X) const {
    if (static_cast<std::size_t>(X.rows()) != arch_.input_dim) {
        throw DomainError("network input has " + std::to_string(X.rows()) + " rows, expected " +
                          std::to_string(arch_.input_dim));
    }
    if (!X.allFinite()) throw NumericalError("network input is not finite");
}

void Network::forward(const Matrix& X, ForwardCache& cache) const {
    check_input(X);
    const std::size_t H = arch_.hidden_layers;
    cache.pre.resize(H);
    cache.post.resize(H + 1);
    cache.post[0] = X;
    for (std::size_t l = 0; l < H; ++l) {
        cache.pre[l].noalias() = weight(layers_[l]) * cache.post[l];
        cache.pre[l].colwise() += bias(layers_[l]);
        cache.post[l + 1] = cache.pre[l].unaryExpr(&gelu);
    }
    cache.out.noalias() = weight(layers_[H]) * cache.post[H];
    cache.out.colwise() += bias(layers_[H]);
}

Matrix Network::forward(const Matrix& X) const {
    ForwardCache cache;
    forward(X, cache);
    return cache.out;
}

Vector Network::forward(const Vector& x) const {
    return forward(Matrix(x)).col(0);
}

void Network::backward(const ForwardCache& cache, const Matrix& dOut, std::vector<double>& grad,
                       Matrix* dX) const {
    if (static_cast<std::size_t>(dOut.rows()) != arch_.output_dim || dOut.cols() != cache.out.cols()) {
        throw DomainError("backward: upstream gradient shape mismatch");
    }
    if (grad.empty()) grad.assign(params_.size(), 0.0);
    if (grad.size() != params_.size()) throw DomainError("backward: gradient buffer size mismatch");

    Matrix delta = dOut;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto& L = layers_[l];
        Eigen::Map<Matrix> gW(grad.data() + L.w_offset, static_cast<Eigen::Index>(L.out),
                              static_cast<Eigen::Index>(L.in));
        Eigen::Map<Vector> gb(grad.data() + L.b_offset, static_cast<Eigen::Index>(L.out));
        const Matrix dW = delta * cache.post[l].transpose();
        const Vector db = delta.rowwise().sum();
        gW += dW;
        gb += db;
        if (l == 0 && dX == nullptr) break;
        Matrix up = weight(L).transpose() * delta;
        if (l == 0) {
            *dX = std::move(up);
            break;
        }
        delta = up.cwiseProduct(cache.pre[l - 1].unaryExpr(&gelu_prime));
    }
}

std::vector<double> Network::backward(const Vector& x, const Vector& upstream) const {
    ForwardCache cache;
    forward(Matrix(x), cache);
    std::vector<double> grad;
    backward(cache, Matrix(upstream), grad);
    return grad;
}

AdamState AdamState::for_params(std::size_t n, double lr) {
    AdamState s;
    s.lr = lr;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    return s;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state) {
    const std::size_t n = params.size();
    if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
        throw DomainError("adam_step: shape mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(grads[i])) {
            throw NumericalError("adam_step: non-finite gradient at parameter " + std::to_string(i));
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < n; ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        params[i] -= state.lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + state.eps);
    }
}

namespace {

constexpr char kMagic[8] = {'O', 'L', 'G', 'D', 'E', 'Q', 'N', '\0'};

template <class T>
void put(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_array(std::ofstream& os, const std::vector<double>& v) {
    put<std::uint64_t>(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

template <class T>
T get(std::ifstream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ProvenanceError("checkpoint truncated");
    return v;
}

std::vector<double> get_array(std::ifstream& is, std::uint64_t expected) {
    const auto n = get<std::uint64_t>(is);
    if (n != expected) throw ProvenanceError("checkpoint array length mismatch");
    std::vector<double> v(n);
    if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
        throw ProvenanceError("checkpoint truncated");
    }
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Network& net, const AdamState& adam,
                     const CheckpointMeta& meta) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ProvenanceError("cannot write checkpoint " + path.string());
    const auto& a = net.arch();
    os.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(a.input_dim));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(a.hidden_width));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(a.hidden_layers));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(a.output_dim));
    put<std::uint32_t>(os, meta.family);
    put<std::uint64_t>(os, meta.seed);
    put<std::uint64_t>(os, meta.episode);
    put_array(os, meta.theta_lo);
    put_array(os, meta.theta_hi);
    put_array(os, net.params());
    put<std::uint64_t>(os, adam.step);
    put<double>(os, adam.lr);
    put<double>(os, adam.beta1);
    put<double>(os, adam.beta2);
    put<double>(os, adam.eps);
    put_array(os, adam.m);
    put_array(os, adam.v);
    if (!os) throw ProvenanceError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::size_t expected_input_dim) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ProvenanceError("cannot open checkpoint " + path.string());
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw ProvenanceError("not a network checkpoint: " + path.string());
    }
    const auto version = get<std::uint32_t>(is);
    if (version != kCheckpointVersion) {
        throw ProvenanceError("unsupported checkpoint version " + std::to_string(version));
    }
    NetworkArch arch;
    arch.input_dim = get<std::uint32_t>(is);
    arch.hidden_width = get<std::uint32_t>(is);
    arch.hidden_layers = get<std::uint32_t>(is);
    arch.output_dim = get<std::uint32_t>(is);
    if (expected_input_dim != 0 && arch.input_dim != expected_input_dim) {
        throw ProvenanceError("checkpoint input_dim " + std::to_string(arch.input_dim) + " does not match expected " +
                              std::to_string(expected_input_dim));
    }
    try {
        arch.validate();
    } catch (const ConfigError& e) {
        throw ProvenanceError(std::string("corrupt checkpoint architecture: ") + e.what());
    }
    Checkpoint ck{Network(arch), {}, {}};
    ck.meta.family = get<std::uint32_t>(is);
    ck.meta.seed = get<std::uint64_t>(is);
    ck.meta.episode = get<std::uint64_t>(is);
    const auto peek_len = [&] {
        const auto pos = is.tellg();
        const auto n = get<std::uint64_t>(is);
        is.seekg(pos);
        return n;
    };
    ck.meta.theta_lo = get_array(is, peek_len());
    ck.meta.theta_hi = get_array(is, ck.meta.theta_lo.size());
    const std::size_t n = arch.param_count();
    ck.net.params() = get_array(is, n);
    ck.adam.step = get<std::uint64_t>(is);
    ck.adam.lr = get<double>(is);
    ck.adam.beta1 = get<double>(is);
    ck.adam.beta2 = get<double>(is);
    ck.adam.eps = get<double>(is);
    ck.adam.m = get_array(is, n);
    ck.adam.v = get_array(is, n);
    for (double p : ck.net.params()) {
        if (!std::isfinite(p)) throw ProvenanceError("checkpoint holds non-finite parameters");
    }
    return ck;
}

}  // namespace olg
