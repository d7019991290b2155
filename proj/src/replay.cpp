#include "qvl/replay.hpp"

#include <string>

#include "qvl/errors.hpp"

namespace qvl {
namespace {

void validate_episode(const EpisodeRecord& episode, int episode_limit) {
    const int T = episode.length();
    if (T < 1) throw ValidationError("episode has no steps");
    if (episode_limit > 0 && T > episode_limit)
        throw ValidationError("episode length " + std::to_string(T) + " exceeds the limit " +
                              std::to_string(episode_limit));
    const size_t n = episode.steps[0].obs.size();
    if (n == 0) throw ValidationError("episode has no agents");
    for (int t = 0; t < T; ++t) {
        const EpisodeStep& s = episode.steps[static_cast<size_t>(t)];
        if (s.obs.size() != n || s.masks.size() != n || s.actions.size() != n ||
            s.next_masks.size() != n)
            throw ValidationError("step " + std::to_string(t) + " has inconsistent agent counts");
        if (s.state.size() != episode.steps[0].state.size())
            throw ValidationError("step " + std::to_string(t) + " changed state width");
        if (s.reward < 0.0f)
            throw ValidationError("negative reward at step " + std::to_string(t));
        const bool last = t == T - 1;
        if (!last && (s.terminated || s.truncated))
            throw ValidationError("episode flagged done before its final step");
        if (last && s.terminated == s.truncated)
            throw ValidationError("final step must set exactly one of terminated/truncated");
    }
    if (episode.final_state.size() != episode.steps[0].state.size())
        throw ValidationError("final state width differs from the episode's states");
    if (episode.final_obs.size() != n)
        throw ValidationError("final obs agent count differs from the episode's steps");
}

}  // namespace

ReplayBuffer::ReplayBuffer(int capacity, int episode_limit)
    : capacity_(capacity), episode_limit_(episode_limit) {
    if (capacity < 1) throw ValidationError("replay capacity must be positive");
    if (episode_limit < 0) throw ValidationError("episode limit must be non-negative");
}

void ReplayBuffer::push_episode(EpisodeRecord episode) {
    validate_episode(episode, episode_limit_);
    if (static_cast<int>(ring_.size()) < capacity_) {
        ring_.push_back(std::move(episode));
    } else {
        ring_[next_slot_] = std::move(episode);
        next_slot_ = (next_slot_ + 1) % ring_.size();
    }
    ++total_pushed_;
}

const EpisodeRecord& ReplayBuffer::episode(int index) const {
    if (index < 0 || index >= size()) throw ValidationError("episode index out of range");
    return ring_[(next_slot_ + static_cast<size_t>(index)) % ring_.size()];
}

PaddedBatch ReplayBuffer::sample(int batch_size, Rng& rng) const {
    if (batch_size < 1) throw ValidationError("batch size must be positive");
    if (size() < batch_size)
        throw NotEnoughDataError("buffer holds " + std::to_string(size()) +
                                 " episodes, batch needs " + std::to_string(batch_size));
    PaddedBatch batch;
    batch.batch_size = batch_size;
    for (int b = 0; b < batch_size; ++b) {
        const EpisodeRecord& pick = ring_[static_cast<size_t>(rng.uniform_int(ring_.size()))];
        batch.max_len = std::max(batch.max_len, pick.length());
        batch.episodes.push_back(pick);
    }
    for (const EpisodeRecord& e : batch.episodes) {
        std::vector<std::uint8_t> row(static_cast<size_t>(batch.max_len), 0);
        for (int t = 0; t < e.length(); ++t) row[static_cast<size_t>(t)] = 1;
        batch.valid.push_back(std::move(row));
    }
    return batch;
}

}  // namespace qvl
