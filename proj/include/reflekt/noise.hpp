#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "reflekt/error.hpp"

namespace reflekt {

/// Philox4x32-10 block cipher (Salmon et al., SC'11). Stateless: the output
/// depends only on (key, counter).
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, key);
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static Counter single_round(const Counter& c, const Key& k) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// Uniform in (0, 1), never 0 or 1, from 53 bits.
inline double uniform_open(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal by inverse CDF.
inline double normal_from_uniform(double u) { return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u); }

/// Keyed standard normal for (seed, path, step, component, level).
inline double keyed_normal(std::uint64_t seed, std::uint64_t path_index, std::uint64_t step, std::uint32_t component,
                           std::uint32_t level) {
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(step),
                                  (component & 0x00FFFFFFu) | (level << 24),
                                  static_cast<std::uint32_t>(path_index), static_cast<std::uint32_t>(path_index >> 32)};
    // step above 2^32 would alias; the config layer caps step counts well below
    const auto out = Philox4x32::generate(ctr, key);
    const std::uint64_t bits = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    return normal_from_uniform(uniform_open(bits));
}

struct NoiseSpec {
    std::size_t m = 1;
    double horizon = 1.0;
    std::size_t steps = 1;
    std::uint64_t master_seed = 0;

    double dt() const { return horizon / static_cast<double>(steps); }

    void validate() const {
        if (m < 1 || m > 0x00FFFFFFu) throw ValidationError("noise: M must be in [1, 2^24)");
        if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("noise: horizon must be positive");
        if (steps < 1 || steps > 0xFFFFFFFFull) throw ValidationError("noise: step count must be in [1, 2^32)");
    }
};

/// Brownian increments dW_k in R^M for k = 0..S-1, row-major (S x M).
struct NoisePath {
    NoiseSpec spec;
    std::uint64_t path_index = 0;
    std::uint32_t level = 0;  // number of bridge refinements applied
    std::vector<double> increments;

    std::size_t steps() const { return spec.steps; }
    std::size_t m() const { return spec.m; }
    double dt() const { return spec.dt(); }

    std::span<const double> increment(std::size_t k) const {
        return std::span<const double>(increments).subspan(k * spec.m, spec.m);
    }
};

inline NoisePath sample_path(const NoiseSpec& spec, std::uint64_t path_index) {
    spec.validate();
    NoisePath p{spec, path_index, 0, std::vector<double>(spec.steps * spec.m)};
    const double scale = std::sqrt(spec.dt());
    for (std::size_t k = 0; k < spec.steps; ++k)
        for (std::size_t j = 0; j < spec.m; ++j)
            p.increments[k * spec.m + j] =
                scale * keyed_normal(spec.master_seed, path_index, k, static_cast<std::uint32_t>(j), 0);
    return p;
}

/// Brownian-bridge split of every increment into two half-step increments.
/// The first half is dW/2 + sqrt(dt/4) Z with Z keyed by (path, coarse step,
/// component, new level); the second half is dW minus the first, so pairwise
/// sums reproduce the coarse path up to one rounding of the subtraction.
inline NoisePath refine(const NoisePath& path) {
    if (path.level >= 255) throw ValidationError("refine: refinement depth exhausted");
    NoisePath fine = path;
    fine.level = path.level + 1;
    fine.spec.steps = 2 * path.spec.steps;
    fine.spec.validate();
    fine.increments.assign(fine.spec.steps * fine.spec.m, 0.0);
    const std::size_t m = path.spec.m;
    const double half_sd = std::sqrt(path.dt() / 4.0);
    for (std::size_t k = 0; k < path.spec.steps; ++k)
        for (std::size_t j = 0; j < m; ++j) {
            const double dw = path.increments[k * m + j];
            const double z =
                keyed_normal(path.spec.master_seed, path.path_index, k, static_cast<std::uint32_t>(j), fine.level);
            const double first = 0.5 * dw + half_sd * z;
            fine.increments[(2 * k) * m + j] = first;
            fine.increments[(2 * k + 1) * m + j] = dw - first;
        }
    return fine;
}

}  // namespace reflekt
