#pragma once

#include <cstdint>
#include <vector>

#include "qvl/env.hpp"
#include "qvl/rng.hpp"

namespace qvl {

// Experience is stored as float32: replay feeds gradient estimates, not
// exact arithmetic, and halving the footprint matters at 5000 episodes.
struct EpisodeStep {
    std::vector<float> state;
    std::vector<std::vector<float>> obs;  // n_agents x obs_dim
    std::vector<ActionMask> masks;        // masks the actions were picked under
    std::vector<int> actions;
    float reward = 0.0f;
    bool terminated = false;
    bool truncated = false;
    std::vector<ActionMask> next_masks;
};

struct EpisodeRecord {
    std::vector<EpisodeStep> steps;
    // Frame observed after the last step; only consumed when the episode was
    // truncated and the learner bootstraps past the cut.
    std::vector<float> final_state;
    std::vector<std::vector<float>> final_obs;

    int length() const { return static_cast<int>(steps.size()); }
};

// Sampled episodes are copied out of the ring (sampling is rare and copies
// keep the batch immune to later evictions). Padding to the longest episode
// happens when the learner assembles tensors; `valid` marks real steps.
struct PaddedBatch {
    int batch_size = 0;
    int max_len = 0;
    std::vector<EpisodeRecord> episodes;
    std::vector<std::vector<std::uint8_t>> valid;  // batch_size x max_len
};

class ReplayBuffer {
  public:
    // episode_limit 0 disables the length check (tests, matrix games).
    explicit ReplayBuffer(int capacity = 5000, int episode_limit = 0);

    void push_episode(EpisodeRecord episode);
    PaddedBatch sample(int batch_size, Rng& rng) const;

    int size() const { return static_cast<int>(ring_.size()); }
    std::int64_t total_pushed() const { return total_pushed_; }
    // Oldest-first access, used by tests to watch eviction.
    const EpisodeRecord& episode(int index) const;

  private:
    int capacity_;
    int episode_limit_;
    std::vector<EpisodeRecord> ring_;  // oldest at next_slot_ once full
    size_t next_slot_ = 0;
    std::int64_t total_pushed_ = 0;
};

}  // namespace qvl
