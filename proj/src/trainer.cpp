#include "olg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <string>

#include "olg/errors.hpp"

namespace olg {

namespace {

constexpr std::uint64_t kThetaStream = 0x7468657461ULL;
constexpr std::uint64_t kShockStream = 0x73686f636bULL;
constexpr std::uint64_t kShuffleStream = 0x7368756666ULL;
constexpr std::uint64_t kInitStream = 0x696e6974ULL;
constexpr std::size_t kMaxConsecutiveAborts = 5;

std::size_t draw_shock(RngStream& rng) {
    const auto a = std::min<std::size_t>(static_cast<std::size_t>(rng.uniform() * 3.0), 2);
    const auto b = std::min<std::size_t>(static_cast<std::size_t>(rng.uniform() * 3.0), 2);
    return 3 * a + b;
}

double quantile_sorted(const std::vector<double>& v, double q) {
    if (v.empty()) return 0.0;
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

void TrainConfig::validate() const {
    if (parallel_paths == 0 || path_length == 0 || minibatch == 0 || episodes_max == 0 || epochs_per_episode == 0) {
        throw ConfigError("training sizes must be positive");
    }
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(loss_tol > 0.0)) throw ConfigError("loss_tol must be positive");
    if (hidden_width < 8) throw ConfigError("hidden_width must be at least 8");
    if (hidden_layers == 0) throw ConfigError("hidden_layers must be positive");
    if (spike_factor < 0.0 || (spike_factor > 0.0 && spike_factor <= 1.0)) {
        throw ConfigError("spike_factor must be 0 (off) or exceed 1");
    }
    if (spike_factor > 0.0 && spike_window == 0) throw ConfigError("spike_window must be positive");
}

SimulatedBatch simulate_training_paths(const DeqnModel& model, const std::vector<std::vector<double>>& thetas,
                                       std::size_t path_length, std::uint64_t seed, std::uint64_t episode) {
    const ClimateParams& cp = model.climate();
    const auto shocks = enumerate_shocks(cp);
    const std::size_t n = thetas.size();
    std::vector<AugmentedState> current;
    std::vector<TaxScheme> schemes;
    std::vector<RngStream> rngs;
    current.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        schemes.push_back(TaxScheme::from_theta(model.family(), thetas[i]));
        current.push_back(initial_state(schemes.back(), thetas[i], cp));
        rngs.emplace_back(seed ^ mix64(episode + kShockStream), i);
    }
    std::vector<bool> alive(n, true);
    std::vector<std::vector<AugmentedState>> per_path(n);
    SimulatedBatch out;
    for (std::size_t t = 0; t < path_length; ++t) {
        std::vector<std::size_t> idx;
        std::vector<AugmentedState> live;
        for (std::size_t i = 0; i < n; ++i) {
            if (!alive[i]) continue;
            idx.push_back(i);
            live.push_back(current[i]);
            per_path[i].push_back(current[i]);
        }
        if (live.empty()) break;
        const auto pols = model.policies(live);
        for (std::size_t q = 0; q < idx.size(); ++q) {
            const std::size_t i = idx[q];
            const AugmentedState& s = current[i];
            const auto& sv = pols[q].savings;
            const double k_next = std::accumulate(sv.begin(), sv.end(), 0.0);
            bool finite = std::all_of(sv.begin(), sv.end(), [](double x) { return std::isfinite(x); });
            if (!finite || !(k_next > 0.0)) {
                alive[i] = false;
                continue;
            }
            const Prices pr = prices_at(s, schemes[i], s.capital(), model.econ(), cp);
            current[i] = step(s, sv, pr.e, shocks[draw_shock(rngs[i])], cp);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!alive[i]) {
            ++out.drops;
            continue;
        }
        out.states.insert(out.states.end(), per_path[i].begin(), per_path[i].end());
    }
    return out;
}

TrainResult train(const TrainConfig& config, const SamplingSpec& spec, std::uint64_t seed,
                  const EpisodeCallback& on_episode) {
    config.validate();
    DeqnModel model = DeqnModel::init(spec.family, config.hidden_width, config.hidden_layers,
                                      mix64(seed ^ kInitStream), spec);
    AdamState adam = AdamState::for_params(model.net().params().size(), config.lr);
    return resume_training(config, spec, seed, std::move(model), std::move(adam), 0, on_episode);
}

TrainResult resume_training(const TrainConfig& config, const SamplingSpec& spec, std::uint64_t seed,
                            DeqnModel model, AdamState adam, std::uint64_t first_episode,
                            const EpisodeCallback& on_episode) {
    config.validate();
    if (model.family() != spec.family) throw ConfigError("model and sampling spec disagree on the family");
    adam.lr = config.lr;
    TrainResult result{model, adam, {}, false, false, {}};
    std::vector<double> grad;
    std::size_t consecutive_aborts = 0;
    std::size_t rollbacks = 0;
    std::deque<double> recent;
    for (std::uint64_t ep = first_episode; ep < first_episode + config.episodes_max; ++ep) {
        RngStream theta_rng(seed ^ mix64(ep + kThetaStream), 0);
        const auto thetas = sample_pseudo_states(spec, config.parallel_paths, theta_rng);
        SimulatedBatch batch = simulate_training_paths(model, thetas, config.path_length, seed, ep);
        EpisodeLog entry{ep, 0.0, batch.drops, 0, false, false, adam.lr};
        if (static_cast<double>(batch.drops) > config.max_drop_fraction * static_cast<double>(config.parallel_paths)) {
            // The episode is skipped; parameters stay at the last good update.
            entry.loss = std::numeric_limits<double>::quiet_NaN();
            entry.aborted = true;
            result.log.push_back(entry);
            if (on_episode) on_episode(entry, model, adam);
            if (++consecutive_aborts >= kMaxConsecutiveAborts) {
                result.aborted = true;
                result.message = "episode " + std::to_string(ep) + " dropped " + std::to_string(batch.drops) +
                                 " diverged paths (" + std::to_string(consecutive_aborts) + " aborted episodes in a row)";
                return result;
            }
            continue;
        }
        consecutive_aborts = 0;
        RngStream shuffle_rng(seed ^ mix64(ep + kShuffleStream), 0);
        const DeqnModel snapshot_model = model;
        const AdamState snapshot_adam = adam;
        double loss_sum = 0.0;
        std::size_t n_seen = 0;
        try {
            for (std::size_t epoch = 0; epoch < config.epochs_per_episode; ++epoch) {
                std::shuffle(batch.states.begin(), batch.states.end(), shuffle_rng);
                for (std::size_t start = 0; start < batch.states.size(); start += config.minibatch) {
                    const std::size_t len = std::min(config.minibatch, batch.states.size() - start);
                    std::span<const AugmentedState> mb(batch.states.data() + start, len);
                    const BatchResult br = evaluate_batch(model, mb, &grad);
                    if (!std::isfinite(br.loss)) throw NumericalError("non-finite training loss");
                    loss_sum += br.loss * static_cast<double>(len);
                    n_seen += len;
                    entry.penalized += static_cast<std::size_t>(std::count(br.penalized.begin(), br.penalized.end(), true));
                    adam_step(model.net().params(), grad, adam);
                }
            }
        } catch (const NumericalError& e) {
            result.model = snapshot_model;
            result.adam = snapshot_adam;
            result.aborted = true;
            result.message = std::string("episode ") + std::to_string(ep) + ": " + e.what();
            return result;
        }
        entry.loss = n_seen ? loss_sum / static_cast<double>(n_seen) : 0.0;
        const double best = recent.empty() ? INFINITY : *std::min_element(recent.begin(), recent.end());
        if (config.spike_factor > 0.0 && recent.size() >= config.spike_window / 2 &&
            entry.loss > config.spike_factor * best) {
            model = snapshot_model;
            adam = snapshot_adam;
            adam.lr *= 0.5;
            entry.rolled_back = true;
            entry.lr = adam.lr;
            result.log.push_back(entry);
            result.model = model;
            result.adam = adam;
            if (on_episode) on_episode(entry, model, adam);
            if (++rollbacks > config.max_rollbacks) {
                result.aborted = true;
                result.message = "episode " + std::to_string(ep) + ": loss spike persists after " +
                                 std::to_string(config.max_rollbacks) + " learning-rate halvings";
                return result;
            }
            continue;
        }
        recent.push_back(entry.loss);
        if (recent.size() > config.spike_window) recent.pop_front();
        result.log.push_back(entry);
        result.model = model;
        result.adam = adam;
        if (on_episode) on_episode(entry, model, adam);
        if (entry.loss < config.loss_tol) {
            result.converged = true;
            break;
        }
    }
    if (!result.converged) result.message = "episodes_max reached before loss_tol";
    return result;
}

AccuracyReport accuracy_metrics(const DeqnModel& model, const SamplingSpec& spec, std::size_t n_paths,
                                std::size_t horizon, std::uint64_t seed) {
    RngStream theta_rng(seed ^ kThetaStream, 1);
    const auto thetas = sample_pseudo_states(spec, n_paths, theta_rng);
    const SimulatedBatch batch = simulate_training_paths(model, thetas, horizon, seed, 0x6d657472ULL);
    AccuracyReport rep;
    rep.states = batch.states.size();
    std::array<std::vector<double>, kChoices> ee, vv;
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < batch.states.size(); start += kChunk) {
        const std::size_t len = std::min(kChunk, batch.states.size() - start);
        const BatchResult br = evaluate_batch(model, {batch.states.data() + start, len});
        for (std::size_t i = 0; i < len; ++i) {
            if (br.penalized[i]) ++rep.penalized;
            for (std::size_t j = 0; j < kChoices; ++j) {
                ee[j].push_back(std::abs(br.residuals[i][j]));
                vv[j].push_back(std::abs(br.residuals[i][kValueOffset + j]));
            }
        }
    }
    for (std::size_t j = 0; j < kChoices; ++j) {
        auto& g = rep.generations[j];
        if (ee[j].empty()) continue;
        g.ee_mean = std::accumulate(ee[j].begin(), ee[j].end(), 0.0) / static_cast<double>(ee[j].size());
        g.v_mean = std::accumulate(vv[j].begin(), vv[j].end(), 0.0) / static_cast<double>(vv[j].size());
        std::sort(ee[j].begin(), ee[j].end());
        std::sort(vv[j].begin(), vv[j].end());
        g.ee_p999 = quantile_sorted(ee[j], 0.999);
        g.v_p999 = quantile_sorted(vv[j], 0.999);
    }
    return rep;
}

}  // namespace olg
