#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace voldiff {

// Counter-based stream: Philox4x32-10 keyed by (master_seed, stream_id).
// Replicate k of a Monte Carlo run owns stream (seed, k); streams never
// overlap and the draw sequence is independent of scheduling order.
class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id = 0) {
        std::uint64_t s = splitmix(seed);
        std::uint64_t t = splitmix(seed ^ (0x9e3779b97f4a7c15ULL + stream_id * 0xbf58476d1ce4e5b9ULL));
        key_[0] = static_cast<std::uint32_t>(s);
        key_[1] = static_cast<std::uint32_t>(s >> 32);
        ctr_hi_ = t;
        ctr_lo_ = 0;
    }

    // uniform draw in (0,1)
    double uniform() {
        if (u_avail_ == 0) refill();
        return u_buf_[--u_avail_];
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    static void round(std::uint32_t c[4], const std::uint32_t k[2]) {
        constexpr std::uint64_t m0 = 0xD2511F53ULL, m1 = 0xCD9E8D57ULL;
        std::uint64_t p0 = m0 * c[0];
        std::uint64_t p1 = m1 * c[2];
        std::uint32_t r0 = static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0];
        std::uint32_t r1 = static_cast<std::uint32_t>(p1);
        std::uint32_t r2 = static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1];
        std::uint32_t r3 = static_cast<std::uint32_t>(p0);
        c[0] = r0; c[1] = r1; c[2] = r2; c[3] = r3;
    }

    void refill() {
        std::uint32_t c[4] = {
            static_cast<std::uint32_t>(ctr_lo_), static_cast<std::uint32_t>(ctr_lo_ >> 32),
            static_cast<std::uint32_t>(ctr_hi_), static_cast<std::uint32_t>(ctr_hi_ >> 32)};
        std::uint32_t k[2] = {key_[0], key_[1]};
        constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
        for (int i = 0; i < 10; ++i) {
            round(c, k);
            k[0] += w0;
            k[1] += w1;
        }
        ++ctr_lo_;
        std::uint64_t a = (static_cast<std::uint64_t>(c[0]) << 32) | c[1];
        std::uint64_t b = (static_cast<std::uint64_t>(c[2]) << 32) | c[3];
        // 53-bit mantissas shifted into (0,1); never exactly 0, safe under log()
        u_buf_[0] = (static_cast<double>(a >> 11) + 0.5) * 0x1.0p-53;
        u_buf_[1] = (static_cast<double>(b >> 11) + 0.5) * 0x1.0p-53;
        u_avail_ = 2;
    }

    std::uint32_t key_[2];
    std::uint64_t ctr_hi_;
    std::uint64_t ctr_lo_;
    double u_buf_[2]{};
    int u_avail_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace voldiff
