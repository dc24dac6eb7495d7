#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sco {

// Deterministic RNG substream derivation.
//
// Every randomized routine derives its generator from a StreamKey built as
// (master_seed, purpose_tag, index...). Two keys built from different
// (tag, index) chains are treated as independent streams; identical keys
// reproduce identical draws. This is the contract that makes parallel and
// serial execution produce bit-identical results: each work item (walk
// column, repetition, query vertex) owns a key derived from its position,
// never from scheduling order.
class StreamKey {
public:
    static_assert(sizeof(std::uint64_t) == 8);

    static StreamKey root(std::uint64_t master_seed) { return StreamKey(mix(master_seed ^ kRootSalt)); }

    StreamKey child(std::string_view tag) const { return StreamKey(mix(state_ ^ fnv1a(tag))); }

    StreamKey child(std::uint64_t index) const { return StreamKey(mix(state_ ^ (kIndexSalt * (index + 1)))); }

    // mt19937_64 is fully specified by the standard, so seeded engines are
    // portable across platforms and standard libraries.
    std::mt19937_64 engine() const { return std::mt19937_64(state_); }

    std::uint64_t raw() const { return state_; }

private:
    explicit StreamKey(std::uint64_t s) : state_(s) {}

    static constexpr std::uint64_t kRootSalt = 0x5C0C0FFEE1D5EEDULL;
    static constexpr std::uint64_t kIndexSalt = 0x9E6D62D06F6A9A9BULL;

    static constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
    static constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

    static constexpr std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = kFnvOffset;
        for (char c : s) {
            h ^= static_cast<std::uint8_t>(c);
            h *= kFnvPrime;
        }
        return h;
    }

    // splitmix64 finalizer
    static constexpr std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n) without modulo bias (Lemire reduction).
inline std::uint64_t uniform_index(std::mt19937_64& eng, std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(eng()) * n) >> 64);
}

}  // namespace sco
