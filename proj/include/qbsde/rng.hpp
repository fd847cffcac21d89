#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace qbsde {

/// Philox-4x32-10 counter-based generator. Every draw is a pure function of
/// (key, counter), so ensembles keyed by (seed, path, step, component) are
/// bit-identical no matter how the work is scheduled across threads.
class Philox4x32 {
public:
    static std::array<std::uint32_t, 4> block(std::uint64_t key,
                                              std::array<std::uint32_t, 4> ctr) {
        std::uint32_t k0 = static_cast<std::uint32_t>(key);
        std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = kMul0 * static_cast<std::uint64_t>(ctr[0]);
            const std::uint64_t p1 = kMul1 * static_cast<std::uint64_t>(ctr[2]);
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k0,
                   static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k1,
                   static_cast<std::uint32_t>(p0)};
            k0 += kWeyl0;
            k1 += kWeyl1;
        }
        return ctr;
    }

    /// One uniform draw in the open interval (0, 1).
    static double uniform(std::uint64_t key, std::array<std::uint32_t, 4> ctr) {
        const auto out = block(key, ctr);
        const std::uint64_t bits =
            (static_cast<std::uint64_t>(out[0]) << 32) | static_cast<std::uint64_t>(out[1]);
        return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    }

private:
    static constexpr std::uint64_t kMul0 = 0xD2511F53ull;
    static constexpr std::uint64_t kMul1 = 0xCD9E8D57ull;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Inverse of the standard normal CDF (Wichura's AS 241, double precision).
/// A fixed rational approximation keeps draws reproducible to the ulp across
/// platforms, unlike polar/ziggurat rejection schemes.
inline double inverse_normal_cdf(double p) {
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num =
            q * (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                      6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                    1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                  1.3314166789178437745e2) * r + 3.3871328727963666080e0);
        const double den =
            (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                  3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
              4.2313330701600911252e1) * r + 1.0);
        return num / den;
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
              4.63033784615654529590e0) * r + 1.42343711074968357734e0);
        const double den =
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
              2.05319162663775882187e0) * r + 1.0);
        val = num / den;
    } else {
        r -= 5.0;
        const double num =
            (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
              5.46378491116411436990e0) * r + 6.65790464350110377720e0);
        const double den =
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
        val = num / den;
    }
    return (q < 0.0) ? -val : val;
}

/// Standard normal draw for a (seed, path, step, component) address.
inline double normal_draw(std::uint64_t seed, std::uint64_t path, std::uint32_t step,
                          std::uint32_t component) {
    const std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(path),
                                              static_cast<std::uint32_t>(path >> 32), step,
                                              component};
    return inverse_normal_cdf(Philox4x32::uniform(seed, ctr));
}

}  // namespace qbsde
