#include <cstdint>
#include <vector>

#include "doctest.h"
#include "qvl/errors.hpp"
#include "qvl/replay.hpp"

using namespace qvl;

namespace {

// Minimal well-formed single-agent episode; the first reward tags it.
EpisodeRecord make_episode(int length, float tag, bool truncated = false) {
    EpisodeRecord e;
    for (int t = 0; t < length; ++t) {
        EpisodeStep s;
        s.state = {static_cast<float>(t), tag};
        s.obs = {{tag, 0.5f}};
        s.masks = {{1, 1}};
        s.actions = {t % 2};
        s.reward = t == 0 ? tag : 0.0f;
        if (t == length - 1) {
            s.terminated = !truncated;
            s.truncated = truncated;
        }
        s.next_masks = {{1, 1}};
        e.steps.push_back(std::move(s));
    }
    e.final_state = {static_cast<float>(length), tag};
    e.final_obs = {{tag, 0.0f}};
    return e;
}

float tag_of(const EpisodeRecord& e) { return e.steps.at(0).reward; }

}  // namespace

TEST_CASE("pushes append and evict oldest-first") {
    ReplayBuffer buf(2);
    buf.push_episode(make_episode(3, 1.0f));
    CHECK(buf.size() == 1);
    buf.push_episode(make_episode(3, 2.0f));
    buf.push_episode(make_episode(3, 3.0f));
    CHECK(buf.size() == 2);
    CHECK(buf.total_pushed() == 3);
    CHECK(tag_of(buf.episode(0)) == 2.0f);
    CHECK(tag_of(buf.episode(1)) == 3.0f);

    SUBCASE("eviction keeps oldest-first order across wraparound") {
        ReplayBuffer ring(3);
        for (int k = 1; k <= 5; ++k) ring.push_episode(make_episode(2, static_cast<float>(k)));
        CHECK(tag_of(ring.episode(0)) == 3.0f);
        CHECK(tag_of(ring.episode(1)) == 4.0f);
        CHECK(tag_of(ring.episode(2)) == 5.0f);
    }
}

TEST_CASE("malformed episodes are rejected") {
    ReplayBuffer buf(4, /*episode_limit=*/5);

    EpisodeRecord negative = make_episode(2, 1.0f);
    negative.steps[1].reward = -0.25f;
    CHECK_THROWS_AS(buf.push_episode(negative), ValidationError);

    EpisodeRecord early_done = make_episode(3, 1.0f);
    early_done.steps[0].terminated = true;
    CHECK_THROWS_AS(buf.push_episode(early_done), ValidationError);

    EpisodeRecord no_flag = make_episode(3, 1.0f);
    no_flag.steps[2].terminated = false;
    CHECK_THROWS_AS(buf.push_episode(no_flag), ValidationError);

    EpisodeRecord both_flags = make_episode(3, 1.0f);
    both_flags.steps[2].truncated = true;
    CHECK_THROWS_AS(buf.push_episode(both_flags), ValidationError);

    CHECK_THROWS_AS(buf.push_episode(EpisodeRecord{}), ValidationError);
    CHECK_THROWS_AS(buf.push_episode(make_episode(6, 1.0f)), ValidationError);

    EpisodeRecord lopsided = make_episode(2, 1.0f);
    lopsided.steps[1].actions.push_back(0);
    CHECK_THROWS_AS(buf.push_episode(lopsided), ValidationError);

    EpisodeRecord bad_final = make_episode(2, 1.0f);
    bad_final.final_state.push_back(0.0f);
    CHECK_THROWS_AS(buf.push_episode(bad_final), ValidationError);

    // Truncated episodes are fine; they just end without a terminal flag.
    buf.push_episode(make_episode(5, 1.0f, /*truncated=*/true));
    CHECK(buf.size() == 1);
}

TEST_CASE("sampling requires enough data and returns stored episodes") {
    ReplayBuffer buf(8);
    Rng rng(3);
    CHECK_THROWS_AS(buf.sample(1, rng), NotEnoughDataError);
    buf.push_episode(make_episode(4, 9.0f));
    CHECK_THROWS_AS(buf.sample(2, rng), NotEnoughDataError);

    PaddedBatch batch = buf.sample(1, rng);
    CHECK(batch.batch_size == 1);
    CHECK(batch.max_len == 4);
    REQUIRE(batch.episodes.size() == 1);
    CHECK(tag_of(batch.episodes[0]) == 9.0f);
    CHECK(batch.valid[0] == std::vector<std::uint8_t>{1, 1, 1, 1});
}

TEST_CASE("uniform sampling hits each episode at its expected frequency") {
    ReplayBuffer buf(8);
    for (int k = 0; k < 4; ++k) buf.push_episode(make_episode(2, static_cast<float>(k + 1)));
    Rng rng(2024);
    int counts[4] = {0, 0, 0, 0};
    for (int draw = 0; draw < 10000; ++draw) {
        PaddedBatch b = buf.sample(1, rng);
        counts[static_cast<int>(tag_of(b.episodes[0])) - 1]++;
    }
    // Binomial n=10000, p=1/4: sigma = sqrt(10000*p*(1-p)) ~ 43.3.
    for (int k = 0; k < 4; ++k) {
        CHECK(counts[k] > 2500 - 130);
        CHECK(counts[k] < 2500 + 130);
    }
}

TEST_CASE("batches pad to the longest episode with per-step validity") {
    ReplayBuffer buf(8);
    for (int k = 0; k < 4; ++k) {
        buf.push_episode(make_episode(3, 1.0f));
        buf.push_episode(make_episode(5, 2.0f));
    }
    Rng rng(5);
    PaddedBatch batch = buf.sample(8, rng);
    bool saw_short = false, saw_long = false;
    for (int b = 0; b < 8; ++b) {
        const EpisodeRecord& e = batch.episodes[static_cast<size_t>(b)];
        const auto& valid = batch.valid[static_cast<size_t>(b)];
        REQUIRE(static_cast<int>(valid.size()) == batch.max_len);
        for (int t = 0; t < batch.max_len; ++t)
            CHECK(valid[static_cast<size_t>(t)] == (t < e.length() ? 1 : 0));
        (e.length() == 3 ? saw_short : saw_long) = true;
    }
    // Seeded draw picks both lengths, so the batch really is mixed-length.
    REQUIRE(saw_short);
    REQUIRE(saw_long);
    CHECK(batch.max_len == 5);
}

TEST_CASE("sampling is reproducible under a fixed seed") {
    ReplayBuffer buf(8);
    for (int k = 0; k < 6; ++k) buf.push_episode(make_episode(2, static_cast<float>(k)));
    Rng a(77), b(77);
    PaddedBatch first = buf.sample(6, a);
    PaddedBatch second = buf.sample(6, b);
    for (int i = 0; i < 6; ++i)
        CHECK(tag_of(first.episodes[static_cast<size_t>(i)]) ==
              tag_of(second.episodes[static_cast<size_t>(i)]));
}
