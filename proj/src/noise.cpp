#include "raresim/noise.hpp"

#include <cmath>

namespace raresim {

// Continuation of next_gaussian() for draws past the fast accept: the
// base-strip tail and the layer wedges. Rejections keep consuming words from
// the same stream, so the result stays a pure function of the stream position.
double NoiseStream::gaussian_slow(std::uint64_t w, double x) {
    for (;;) {
        const double sign = (w & 0x100) ? -1.0 : 1.0;
        const unsigned layer = static_cast<unsigned>(w & 0xFF);
        if (layer == 0) {
            // Marsaglia tail sample for x >= r (the rectangle part of the base
            // strip was already accepted by the caller).
            const double r = kZigguratTailStart;
            for (;;) {
                const double u1 = 1.0 - next_uniform();
                const double u2 = 1.0 - next_uniform();
                const double xt = -std::log(u1) / r;
                const double yt = -std::log(u2);
                if (yt + yt >= xt * xt) return sign * (r + xt);
            }
        }
        const double y = kZigguratHeight[layer] +
                         next_uniform() * (kZigguratHeight[layer + 1] - kZigguratHeight[layer]);
        if (y < std::exp(-0.5 * x * x)) return sign * x;
        // wedge rejected: fresh draw
        w = next_word();
        const unsigned fresh = static_cast<unsigned>(w & 0xFF);
        const double u = static_cast<double>(w >> 11) * 0x1.0p-53;
        x = u * kZigguratEdge[fresh];
        if (x < kZigguratEdge[fresh + 1]) return ((w & 0x100) ? -1.0 : 1.0) * x;
    }
}

namespace detail {

double box_muller_gaussian_pair(NoiseStream& stream, double* second) {
    const double u1 = 1.0 - stream.next_uniform();
    const double u2 = stream.next_uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    if (second) *second = radius * std::sin(angle);
    return radius * std::cos(angle);
}

} // namespace detail

} // namespace raresim
