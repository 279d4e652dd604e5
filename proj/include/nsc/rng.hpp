#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace nsc {

// All randomness in the pipeline flows from one user-visible seed through
// named sub-streams ("data", "init", "shuffle", "corruption", ...), so a run
// is reproducible from a single integer and adding draws to one stage never
// perturbs another.
//
// The generator is splitmix64: tiny, fast, and with explicit bit-level
// behavior so outputs are identical across platforms (std::uniform_*
// distributions are implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n >= 1. Modulo bias is ~n/2^64, irrelevant here.
    uint64_t below(uint64_t n) { return next_u64() % n; }

    // Uniform integer in [lo, hi] inclusive.
    int64_t range(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

inline uint64_t hash_name(std::string_view name) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : name) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derives the seed of a named sub-stream. `index` distinguishes items within
// a stream (epoch number, sentence id, ...), so per-item generators are
// independent of processing order.
inline uint64_t substream_seed(uint64_t base, std::string_view stream, uint64_t index = 0) {
    uint64_t x = base ^ (hash_name(stream) * 0x9e3779b97f4a7c15ULL);
    x ^= index + 0x9e3779b97f4a7c15ULL + (x << 6) + (x >> 2);
    // one splitmix round to decorrelate nearby (base, index) pairs
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline Rng substream(uint64_t base, std::string_view stream, uint64_t index = 0) {
    return Rng(substream_seed(base, stream, index));
}

}  // namespace nsc
