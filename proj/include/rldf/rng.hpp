#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rldf {

// Seeded random stream.
//
// Every stream in a run is derived from one 64-bit master seed:
//
//     substream(seed, label, index) = Rng(mix(mix(seed ^ fnv1a(label)) + index))
//
// where mix is the splitmix64 finalizer and fnv1a the 64-bit FNV-1a hash of
// the label bytes. Streams with different (label, index) pairs are
// statistically independent for practical purposes, and a stream never
// depends on how many values another stream consumed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    static Rng derive(std::uint64_t seed, std::string_view label, std::uint64_t index = 0) {
        return Rng(derive_seed(seed, label, index));
    }

    static std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                                     std::uint64_t index = 0) {
        return mix(mix(seed ^ fnv1a(label)) + index);
    }

    Rng split(std::string_view label, std::uint64_t index = 0) const {
        return derive(seed_, label, index);
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1), never exactly zero.
    double uniform_open() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
    }

    std::mt19937_64& engine() { return engine_; }

    static constexpr std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    static constexpr std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

}  // namespace rldf
