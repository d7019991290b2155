#pragma once

#include <array>
#include <cstdint>

namespace qvl {

// Deterministic RNG with hand-rolled distributions. The std <random> engines
// are portable but the distributions are implementation-defined, which would
// break byte-identical reruns across toolchains, so we draw bits ourselves.
// Generator: xoshiro256** seeded through splitmix64.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0, 1), 53-bit resolution.
    double uniform();

    // Uniform integer in [0, n), unbiased via rejection. n must be > 0.
    int uniform_int(int n);

    // Uniform in [lo, hi).
    double uniform_range(double lo, double hi);

    std::array<std::uint64_t, 4> state() const { return s_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

  private:
    std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state);

// Named sub-streams derived from one master seed with fixed offsets, so env
// stepping, exploration, replay sampling, parameter init and evaluation can
// never perturb each other.
enum class Stream : std::uint32_t {
    env = 1,
    exploration = 2,
    sampling = 3,
    init = 4,
    eval = 5,
};

Rng make_stream(std::uint64_t master_seed, Stream which);

}  // namespace qvl
