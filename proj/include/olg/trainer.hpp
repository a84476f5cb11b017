#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "olg/deqn.hpp"

namespace olg {

struct TrainConfig {
    std::size_t parallel_paths = 128;
    std::size_t path_length = 70;
    std::size_t minibatch = 64;
    double lr = 1e-4;
    std::size_t episodes_max = 2000;
    double loss_tol = 1e-6;
    std::size_t hidden_width = 128;
    std::size_t hidden_layers = 2;
    std::size_t epochs_per_episode = 1;
    double max_drop_fraction = 0.05;
    // An episode whose mean loss exceeds spike_factor times the best of the recent window is
    // undone and lr halved. 0 disables the guard.
    double spike_factor = 25.0;
    std::size_t spike_window = 20;
    std::size_t max_rollbacks = 8;

    void validate() const;
};

struct EpisodeLog {
    std::uint64_t episode = 0;
    double loss = 0.0;
    std::size_t drops = 0;
    std::size_t penalized = 0;
    bool aborted = false;      // too many diverged paths; no update was made
    bool rolled_back = false;  // loss spike; the episode's updates were undone
    double lr = 0.0;           // learning rate in effect after the episode
};

struct SimulatedBatch {
    std::vector<AugmentedState> states;
    std::size_t drops = 0;
};

/// Forward simulation from the common initial state with one pseudo-state draw per path.
SimulatedBatch simulate_training_paths(const DeqnModel& model, const std::vector<std::vector<double>>& thetas,
                                       std::size_t path_length, std::uint64_t seed, std::uint64_t episode);

struct TrainResult {
    DeqnModel model;
    AdamState adam;
    std::vector<EpisodeLog> log;
    bool converged = false;
    bool aborted = false;  // non-finite update or repeated divergence; model holds the last good parameters
    std::string message;
};

using EpisodeCallback = std::function<void(const EpisodeLog&, const DeqnModel&, const AdamState&)>;

TrainResult train(const TrainConfig& config, const SamplingSpec& spec, std::uint64_t seed,
                  const EpisodeCallback& on_episode = {});

// Continues training an existing model and optimizer state from episode first_episode.
TrainResult resume_training(const TrainConfig& config, const SamplingSpec& spec, std::uint64_t seed,
                            DeqnModel model, AdamState adam, std::uint64_t first_episode,
                            const EpisodeCallback& on_episode = {});

struct GenerationAccuracy {
    double ee_mean = 0.0;
    double ee_p999 = 0.0;
    double v_mean = 0.0;
    double v_p999 = 0.0;
};

struct AccuracyReport {
    std::array<GenerationAccuracy, kChoices> generations{};
    std::size_t states = 0;
    std::size_t penalized = 0;
};

// Absolute relative Euler and value errors along fresh simulated paths. Pseudo-states are
// drawn from spec (ignored for BAU).
AccuracyReport accuracy_metrics(const DeqnModel& model, const SamplingSpec& spec, std::size_t n_paths,
                                std::size_t horizon, std::uint64_t seed);

}  // namespace olg
