// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// Counter-based deterministic random source. Output i of a stream is a pure
// function of (key, i): the SplitMix64 finalizer applied to key + i * gamma.
// Everything built on top (uniforms, normals, shuffles) is implemented here
// rather than with <random> distributions, whose algorithms are
// implementation-defined; streams are therefore identical across platforms.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace trajsim {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : key_(mix(seed)) {}

    /// Independent child stream; the same (parent key, tag) gives the same child.
    Rng fork(std::uint64_t tag) const;

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);
    /// Standard normal via Box-Muller (one draw consumes two uniforms).
    double normal();

    template <typename T>
    void shuffle(std::span<T> values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(values[i - 1], values[j]);
        }
    }
    template <typename T>
    void shuffle(std::vector<T>& values) {
        shuffle(std::span<T>(values));
    }

    /// k distinct values from [0, n), in random order.
    std::vector<int> sample_without_replacement(int n, int k);

    static std::uint64_t mix(std::uint64_t z);

private:
    Rng(std::uint64_t key, bool) : key_(key) {}

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace trajsim
