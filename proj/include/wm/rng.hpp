#ifndef WM_RNG_HPP
#define WM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string_view>

namespace wm {

// Counter-based splitmix64 generator. State is just (seed, counter), which
// keeps world states serializable and lets every consumer fork an
// independent stream by name instead of sharing a mutable engine.
// Distributions are implemented here explicitly so draws are identical
// across standard libraries.
class Rng {
public:
    Rng() : Rng(0) {}
    explicit Rng(uint64_t seed) : seed_(seed), ctr_(0) {}
    Rng(uint64_t seed, uint64_t counter) : seed_(seed), ctr_(counter) {}

    uint64_t next_u64() {
        ++ctr_;
        return mix(seed_ + 0x9E3779B97F4A7C15ULL * ctr_);
    }

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive range
    int uniform_int(int lo, int hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    // Box-Muller; consumes two draws per call, no cached spare.
    double normal() {
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Independent stream derived from the base seed. Stable under the number
    // of draws taken from *this; include an index in the tag when forking in
    // a loop.
    Rng fork(std::string_view tag) const {
        uint64_t h = 0xCBF29CE484222325ULL;
        for (char c : tag) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ULL;
        }
        return Rng(mix(seed_ ^ mix(h)));
    }

    Rng fork(std::string_view tag, uint64_t index) const {
        Rng r = fork(tag);
        return Rng(mix(r.seed_ + 0x9E3779B97F4A7C15ULL * (index + 1)));
    }

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return ctr_; }
    void set_counter(uint64_t c) { ctr_ = c; }

    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    uint64_t seed_;
    uint64_t ctr_;
};

}  // namespace wm

#endif
