#ifndef RARESIM_HJB_HPP
#define RARESIM_HJB_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "raresim/model.hpp"

namespace raresim {

// Regular grid over the domain's bounding box plus a solver time-step count.
// Desk scale: at most 3 spatial axes.
struct GridSpec {
    std::vector<double> lo;
    std::vector<double> hi;
    std::vector<int> points;
    double t_start = 0.0;
    double t_end = 1.0;
    int time_steps = 0;   // solver steps over [t_start, t_end]; 0 = pick from the CFL bound
    int store_slices = 65; // stored field slices (including both endpoints)

    static GridSpec from_domain(const DomainSpec& domain, std::vector<int> points,
                                int time_steps = 0, int store_slices = 65);

    int axes() const { return static_cast<int>(points.size()); }
    std::int64_t node_count() const;
    double spacing(int axis) const {
        return (hi[static_cast<std::size_t>(axis)] - lo[static_cast<std::size_t>(axis)]) /
               (points[static_cast<std::size_t>(axis)] - 1);
    }
    double coord(int axis, int i) const {
        return lo[static_cast<std::size_t>(axis)] + spacing(axis) * i;
    }
    void node_coords(std::int64_t node, double* x) const;
    bool same_layout(const GridSpec& other) const;
};

// Grid-sampled scalar field over stored time slices (J^eps or q^eps).
struct ValueField {
    GridSpec grid;
    double eps = 0.0;
    std::string scheme;
    std::vector<double> slice_times;         // ascending, slice_times.front() == t_start
    std::vector<std::vector<double>> values; // [slice][node]

    int nearest_slice(double t) const;
    // Nearest slice in time, multilinear in space (queries clamped to the box).
    double interpolate(double t, const double* x) const;
};

// Grid-sampled feedback control v^eps (R^d per node), norm-clamped at the cap.
// evaluate() reports whether the interpolation cell touches a clamped node so
// callers can count cap activations.
struct ControlField {
    GridSpec grid;
    int d = 0;
    double eps = 0.0;
    double clamp_cap = 0.0;
    std::vector<double> slice_times;
    std::vector<std::vector<double>> values;            // [slice][node*d + c]
    std::vector<std::vector<std::uint8_t>> clamped;     // [slice][node]

    bool evaluate(double t, const double* x, double* v) const;

    static ControlField zero(const GridSpec& grid, int d, double eps, double clamp_cap);
};

struct HjbOptions {
    // Finite stand-in for the +inf branch of exit_indicator terminal data.
    double phi_cap = 5.0;
    double cfl_safety = 0.9;
    std::int64_t max_time_steps = 20'000'000;
};

// H(t, x, p) = <f_1, p> - 1/2 p^T a p with a = sigma sigma^T (p against block 1).
double hamiltonian(const ChainSystem& system, double t, const double* x, const double* p);

// L(t, x, u) = 1/2 (f_1 - u)^T a^{-1} (f_1 - u).
double running_cost(const ChainSystem& system, double t, const double* x, const double* u);

// | min_u { L + <p,u> } - H | over the candidate set. Exact (up to rounding)
// when the analytic minimizer u* = f_1 - a p is among the candidates.
double duality_gap(const ChainSystem& system, double t, const double* x, const double* p,
                   const std::vector<std::vector<double>>& candidate_us);

// Backward explicit solve of the dynamic programming equation for
// J^eps: dJ/ds + eps/2 tr(a J_x1x1) + sum_{j>=2} <f_j, J_xj> + H(s,x,J_x1) = 0
// with J = Phi on the lateral boundary and the terminal slice. The block-1
// advection lives entirely inside H (Godunov flux in 1-d blocks, local
// Lax-Friedrichs otherwise); transport in the deterministic blocks is upwinded.
ValueField solve_hjb(const ChainSystem& system, const DomainSpec& domain,
                     const TerminalFunctional& terminal, double eps, const GridSpec& grid,
                     const HjbOptions& options = {});

// Backward explicit solve of the linear exit-probability equation:
// q = 1 on the lateral boundary, q = 0 on the terminal slice.
ValueField solve_exit_bvp(const ChainSystem& system, const DomainSpec& domain, double eps,
                          const GridSpec& grid, const HjbOptions& options = {});

// v = -sigma^T grad_{x1} J, centered differences in the interior, one-sided at
// the grid edge, norm-clamped at clamp_cap.
ControlField extract_control(const ValueField& J, const ChainSystem& system, double clamp_cap);

// Default clamp cap: 10 * max grid-sampled |f_1|, with a sigma-based fallback
// when the drift vanishes identically.
double default_clamp_cap(const ChainSystem& system, const DomainSpec& domain, const GridSpec& grid);

} // namespace raresim

#endif
