#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace keec {

// Deterministic random stream. Every stream in the program is derived from one
// root seed via split(root, tag, index); the derivation is a fixed hash
// (FNV-1a over the tag, SplitMix64 mixing), so runs with the same root seed
// reproduce bit-identical draws regardless of how many streams exist.
//
// Mapping from raw 64-bit draws to doubles is done by hand (not via
// std::uniform_real_distribution) so that generated datasets are
// bit-reproducible across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    static std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                                     std::uint64_t index);
    static Rng split(std::uint64_t root, std::string_view tag, std::uint64_t index) {
        return Rng(derive_seed(root, tag, index));
    }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on [0, 1): 53 mantissa bits of one draw.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the second deviate of each pair is cached.
    double normal();

    // Uniform integer in [0, n), n > 0. Rejection-free modulo of a 64-bit draw
    // is fine at our n (bias < 2^-50 for n < 2^14).
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(next_u64() % n);
    }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace keec
