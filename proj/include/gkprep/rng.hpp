#pragma once

// Counter-based random streams (Philox-4x32-10). A stream is addressed by
// (master seed, stream id) and every draw depends only on that address and the
// draw index, so per-trial substreams reproduce bit-identically no matter how
// trials are scheduled across workers.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "gkprep/math.hpp"

namespace gkprep {

class RandomStream {
  public:
    RandomStream(std::uint64_t master_seed, std::uint64_t stream_id)
        : key_{static_cast<std::uint32_t>(master_seed),
               static_cast<std::uint32_t>(master_seed >> 32)},
          counter_{0u, 0u, static_cast<std::uint32_t>(stream_id),
                   static_cast<std::uint32_t>(stream_id >> 32)} {}

    std::uint32_t next_u32() {
        if (avail_ == 0) refill();
        return block_[4 - avail_--];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return lo | (hi << 32);
    }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * kPi * u2;
        cached_ = r * std::sin(t);
        has_cached_ = true;
        return r * std::cos(t);
    }

    double gaussian(double sigma) { return sigma * gaussian(); }

  private:
    static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
        const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
        hi = static_cast<std::uint32_t>(p >> 32);
        lo = static_cast<std::uint32_t>(p);
    }

    void refill() {
        std::array<std::uint32_t, 4> x = counter_;
        std::uint32_t k0 = key_[0], k1 = key_[1];
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                k0 += 0x9E3779B9u;
                k1 += 0xBB67AE85u;
            }
            std::uint32_t hi0, lo0, hi1, lo1;
            mulhilo(0xD2511F53u, x[0], hi0, lo0);
            mulhilo(0xCD9E8D57u, x[2], hi1, lo1);
            x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
        }
        block_ = x;
        avail_ = 4;
        if (++counter_[0] == 0) ++counter_[1];  // 64-bit block counter
    }

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> counter_;
    std::array<std::uint32_t, 4> block_{};
    int avail_ = 0;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Gaussian displacement sample of standard deviation sigma; sigma = 0 yields
// exactly zero while consuming the same amount of stream state.
inline Shift sample_shift(double sigma, RandomStream& stream) {
    if (!(sigma >= 0.0))
        throw std::domain_error("sample_shift: sigma must be nonnegative");
    return {stream.gaussian(sigma)};
}

}  // namespace gkprep
