#pragma once

#include <cstdint>
#include <utility>

// Counter-based splittable RNG. Every draw is a pure function of
// (key, stream, counter), so parallel loops indexed by counter produce
// bit-identical output regardless of thread count or iteration order.

namespace cvqkd::rng {

// SplitMix64 finalizer; full-period bijective mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t stream_id)
        : key_(mix64(mix64(seed) ^ mix64(stream_id * 0xda942042e4dd58b5ull))) {}

    // derive an independent substream (stage/block splitting)
    Stream fork(std::uint64_t substream) const {
        Stream s = *this;
        s.key_ = mix64(key_ ^ mix64(substream + 0x632be59bd9b4e019ull));
        return s;
    }

    std::uint64_t bits_at(std::uint64_t counter) const {
        return mix64(key_ ^ mix64(counter));
    }

    // uniform in (0, 1]: never returns 0, safe for log()
    double uniform_at(std::uint64_t counter) const {
        return (static_cast<double>(bits_at(counter) >> 11) + 1.0) * 0x1.0p-53;
    }

    // sequential convenience interface
    std::uint64_t next_bits() { return bits_at(counter_++); }
    double uniform() { return uniform_at(counter_++); }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace cvqkd::rng
