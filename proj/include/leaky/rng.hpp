#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "leaky/common.hpp"

namespace leaky {

// Deterministic RNG. mt19937_64 is fully specified by the standard; the
// distribution transforms below are written out explicitly so streams are
// bit-identical across standard libraries and platforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1). 53-bit mantissa construction.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) via rejection.
    std::uint64_t uniform_index(std::uint64_t n) {
        require(n > 0, ErrorKind::validation, "uniform_index: n must be > 0");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t v = gen_();
        while (v >= limit) v = gen_();
        return v % n;
    }

    // Standard normal via Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Named substreams: every stage/sample derives its own generator from the
// root seed, so partial reruns reproduce exactly.
inline std::uint64_t derive_seed(std::uint64_t root, const std::string& stream,
                                 std::uint64_t index = 0) {
    std::uint64_t h = fnv1a64(stream);
    h = fnv1a64(&root, sizeof root, h);
    h = fnv1a64(&index, sizeof index, h);
    // splitmix64 finalizer to spread low-entropy inputs.
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

inline Rng substream(std::uint64_t root, const std::string& stream,
                     std::uint64_t index = 0) {
    return Rng(derive_seed(root, stream, index));
}

}  // namespace leaky
