/*
 * Copyright 2026 The scensim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace scensim {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed for one (scenario, iteration) run of a batch:
///
///     h0 = mix64(base_seed)
///     h1 = mix64(h0 ^ (scenario_index  * 0xd1b54a32d192ed03))
///     seed = mix64(h1 ^ (iteration_index * 0x8cb92ba72f3d8dd7 + 1))
///
/// Each stage is a bijection of its input word, so for fixed base_seed and
/// scenario_index distinct iterations never collide.
constexpr std::uint64_t derive_run_seed(std::uint64_t base_seed, std::uint64_t scenario_index,
                                        std::uint64_t iteration_index) {
    std::uint64_t h = mix64(base_seed);
    h = mix64(h ^ (scenario_index * 0xd1b54a32d192ed03ULL));
    return mix64(h ^ (iteration_index * 0x8cb92ba72f3d8dd7ULL + 1));
}

/// The single random stream of a run. Wraps std::mt19937_64, whose output
/// sequence is fixed by the standard, and derives doubles with its own
/// conversion so results do not depend on the standard library's
/// distribution implementations.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed = 0) : engine_(mix64(seed)) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// True with probability p. p <= 0 and p >= 1 consume no randomness.
    bool bernoulli(double p) {
        if (p <= 0.0) return false;
        if (p >= 1.0) return true;
        return uniform() < p;
    }

    /// Uniform index in [0, n) by rejection, n > 0.
    std::size_t index(std::size_t n) {
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    /// Index chosen with probability proportional to the cumulative
    /// distribution `cdf` (non-decreasing, last element 1). A single entry
    /// consumes no randomness.
    std::size_t pick(std::span<const double> cdf) {
        if (cdf.size() <= 1) return 0;
        const double u = uniform();
        for (std::size_t i = 0; i + 1 < cdf.size(); ++i) {
            if (u < cdf[i]) return i;
        }
        return cdf.size() - 1;
    }

    friend bool operator==(const RandomStream&, const RandomStream&) = default;

private:
    std::mt19937_64 engine_;
};

} // namespace scensim
