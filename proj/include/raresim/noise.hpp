#ifndef RARESIM_NOISE_HPP
#define RARESIM_NOISE_HPP

#include <array>
#include <bit>
#include <cstdint>

#include "raresim/ziggurat_tables.inl"

namespace raresim {

// Philox4x64-10 counter-based block cipher (Salmon et al. constants, same
// algorithm as numpy's Philox bit generator). Stateless: output is a pure
// function of (counter, key), which is what makes sample streams reproducible
// across runs and across any parallel work assignment.
struct Philox4x64 {
    static std::array<std::uint64_t, 4> block(const std::array<std::uint64_t, 4>& counter,
                                              const std::array<std::uint64_t, 2>& key) {
        constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ull;
        constexpr std::uint64_t kMul1 = 0xCA5A826395121157ull;
        constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ull;
        constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73Bull;
        std::array<std::uint64_t, 4> c = counter;
        std::array<std::uint64_t, 2> k = key;
        for (int r = 0; r < 10; ++r) {
            const unsigned __int128 p0 = static_cast<unsigned __int128>(kMul0) * c[0];
            const unsigned __int128 p1 = static_cast<unsigned __int128>(kMul1) * c[2];
            c = {static_cast<std::uint64_t>(p1 >> 64) ^ c[1] ^ k[0],
                 static_cast<std::uint64_t>(p1),
                 static_cast<std::uint64_t>(p0 >> 64) ^ c[3] ^ k[1],
                 static_cast<std::uint64_t>(p0)};
            k[0] += kWeyl0;
            k[1] += kWeyl1;
        }
        return c;
    }
};

// One noise stream per Monte Carlo sample index. Words are consumed
// sequentially; the k-th word of stream (master_seed, sample_index) is always
// the same value no matter which worker runs the path or what else runs
// concurrently. Gaussian variates come from a 256-layer ziggurat over the
// Philox words (rejections simply consume more words of the same stream).
class NoiseStream {
public:
    NoiseStream(std::uint64_t master_seed, std::uint64_t sample_index)
        : seed_(master_seed), index_(sample_index) {}

    std::uint64_t master_seed() const { return seed_; }
    std::uint64_t sample_index() const { return index_; }
    // Number of 64-bit words consumed so far.
    std::uint64_t step_counter() const { return cursor_; }

    std::uint64_t next_word() {
        const std::uint64_t lane = cursor_ & 3;
        if (lane == 0) {
            buffer_ = Philox4x64::block({cursor_ >> 2, 0, index_, kStreamSalt}, {seed_, kStreamSalt});
        }
        ++cursor_;
        return buffer_[lane];
    }

    // Uniform on [0,1) with 53-bit resolution.
    double next_uniform() { return static_cast<double>(next_word() >> 11) * 0x1.0p-53; }

    // Standard normal variate (ziggurat; the rare wedge/tail cases take the
    // out-of-line path).
    double next_gaussian() {
        const std::uint64_t w = next_word();
        const unsigned layer = static_cast<unsigned>(w & 0xFF);
        const double u = static_cast<double>(w >> 11) * 0x1.0p-53;
        const double x = u * kZigguratEdge[layer];
        if (x < kZigguratEdge[layer + 1]) {
            // branchless sign flip: bit 8 of the word moves to the sign bit
            return std::bit_cast<double>(std::bit_cast<std::uint64_t>(x) | ((w & 0x100ull) << 55));
        }
        return gaussian_slow(w, x);
    }

    // Fills out[0..count) with independent standard normals.
    void fill_gaussians(double* out, int count) {
        for (int i = 0; i < count; ++i) out[i] = next_gaussian();
    }

private:
    double gaussian_slow(std::uint64_t w, double x);

    static constexpr std::uint64_t kStreamSalt = 0x5241524553494D31ull; // "RARESIM1"

    std::uint64_t seed_;
    std::uint64_t index_;
    std::uint64_t cursor_ = 0; // words handed out
    std::array<std::uint64_t, 4> buffer_{};
};

namespace detail {
// Box-Muller reference generator, kept for the statistical cross-check tests.
double box_muller_gaussian_pair(NoiseStream& stream, double* second);
} // namespace detail

} // namespace raresim

#endif
