#include "raresim/hjb.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "raresim/errors.hpp"

namespace raresim {

namespace {

void eval_a(const ChainSystem& system, double t, const double* x, double* a) {
    const int d = system.d;
    double sig[9];
    system.sigma(t, x, sig);
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
            double acc = 0.0;
            for (int k = 0; k < d; ++k) acc += sig[r * d + k] * sig[c * d + k];
            a[r * d + c] = acc;
        }
    }
}

} // namespace

GridSpec GridSpec::from_domain(const DomainSpec& domain, std::vector<int> points, int time_steps,
                               int store_slices) {
    GridSpec g;
    g.lo = domain.box_lo;
    g.hi = domain.box_hi;
    g.points = std::move(points);
    g.t_start = domain.time_start;
    g.t_end = domain.time_end;
    g.time_steps = time_steps;
    g.store_slices = store_slices;
    if (g.points.size() != g.lo.size()) {
        throw ConfigError("grid: points-per-axis list does not match the domain dimension");
    }
    if (g.axes() > 3) throw ConfigError("grid: desk-scale solver supports at most 3 axes (n*d <= 3)");
    for (int p : g.points) {
        if (p < 3) throw ConfigError("grid: need at least 3 points per axis");
    }
    if (g.store_slices < 2) throw ConfigError("grid: store_slices must be at least 2");
    return g;
}

std::int64_t GridSpec::node_count() const {
    std::int64_t n = 1;
    for (int p : points) n *= p;
    return n;
}

void GridSpec::node_coords(std::int64_t node, double* x) const {
    for (int a = 0; a < axes(); ++a) {
        const int p = points[static_cast<std::size_t>(a)];
        x[a] = coord(a, static_cast<int>(node % p));
        node /= p;
    }
}

bool GridSpec::same_layout(const GridSpec& other) const {
    return lo == other.lo && hi == other.hi && points == other.points &&
           t_start == other.t_start && t_end == other.t_end;
}

int ValueField::nearest_slice(double t) const {
    const double span = grid.t_end - grid.t_start;
    const int last = static_cast<int>(slice_times.size()) - 1;
    int j = static_cast<int>(std::lround((t - grid.t_start) / span * last));
    return std::clamp(j, 0, last);
}

namespace {

// Multilinear interpolation of `comps` interleaved components at x (clamped
// to the box). data layout: node-major, component-minor.
void multilinear(const GridSpec& grid, const std::vector<double>& data, int comps, const double* x,
                 double* out, const std::vector<std::uint8_t>* mask, bool* mask_hit) {
    const int axes = grid.axes();
    int base_idx[3] = {0, 0, 0};
    double w[3] = {0.0, 0.0, 0.0};
    for (int a = 0; a < axes; ++a) {
        const int pts = grid.points[static_cast<std::size_t>(a)];
        const double h = grid.spacing(a);
        double u = (x[a] - grid.lo[static_cast<std::size_t>(a)]) / h;
        u = std::clamp(u, 0.0, static_cast<double>(pts - 1));
        int i0 = static_cast<int>(u);
        if (i0 > pts - 2) i0 = pts - 2;
        base_idx[a] = i0;
        w[a] = u - i0;
    }
    std::int64_t stride[3] = {1, 1, 1};
    for (int a = 1; a < axes; ++a) {
        stride[a] = stride[a - 1] * grid.points[static_cast<std::size_t>(a - 1)];
    }
    for (int c = 0; c < comps; ++c) out[c] = 0.0;
    if (mask_hit) *mask_hit = false;
    const int corners = 1 << axes;
    for (int corner = 0; corner < corners; ++corner) {
        double weight = 1.0;
        std::int64_t idx = 0;
        for (int a = 0; a < axes; ++a) {
            const int bit = (corner >> a) & 1;
            weight *= bit ? w[a] : (1.0 - w[a]);
            idx += (base_idx[a] + bit) * stride[a];
        }
        if (weight == 0.0) continue;
        for (int c = 0; c < comps; ++c) out[c] += weight * data[static_cast<std::size_t>(idx * comps + c)];
        if (mask && mask_hit && (*mask)[static_cast<std::size_t>(idx)]) *mask_hit = true;
    }
}

} // namespace

double ValueField::interpolate(double t, const double* x) const {
    const int j = nearest_slice(t);
    double out = 0.0;
    multilinear(grid, values[static_cast<std::size_t>(j)], 1, x, &out, nullptr, nullptr);
    return out;
}

bool ControlField::evaluate(double t, const double* x, double* v) const {
    const double span = grid.t_end - grid.t_start;
    const int last = static_cast<int>(slice_times.size()) - 1;
    int j = static_cast<int>(std::lround((t - grid.t_start) / span * last));
    j = std::clamp(j, 0, last);
    bool hit = false;
    multilinear(grid, values[static_cast<std::size_t>(j)], d, x, v,
                &clamped[static_cast<std::size_t>(j)], &hit);
    return hit;
}

ControlField ControlField::zero(const GridSpec& grid, int d, double eps, double clamp_cap) {
    ControlField field;
    field.grid = grid;
    field.d = d;
    field.eps = eps;
    field.clamp_cap = clamp_cap;
    const int slices = grid.store_slices;
    const std::int64_t nodes = grid.node_count();
    field.slice_times.resize(static_cast<std::size_t>(slices));
    for (int j = 0; j < slices; ++j) {
        field.slice_times[static_cast<std::size_t>(j)] =
            grid.t_start + (grid.t_end - grid.t_start) * j / (slices - 1);
    }
    field.values.assign(static_cast<std::size_t>(slices),
                        std::vector<double>(static_cast<std::size_t>(nodes * d), 0.0));
    field.clamped.assign(static_cast<std::size_t>(slices),
                         std::vector<std::uint8_t>(static_cast<std::size_t>(nodes), 0));
    return field;
}

double hamiltonian(const ChainSystem& system, double t, const double* x, const double* p) {
    const int d = system.d;
    double f1[3];
    system.drift_blocks[0](t, x, f1);
    double a[9];
    eval_a(system, t, x, a);
    double lin = 0.0, quad = 0.0;
    for (int r = 0; r < d; ++r) {
        lin += f1[r] * p[r];
        for (int c = 0; c < d; ++c) quad += p[r] * a[r * d + c] * p[c];
    }
    return lin - 0.5 * quad;
}

double running_cost(const ChainSystem& system, double t, const double* x, const double* u) {
    const int d = system.d;
    double f1[3];
    system.drift_blocks[0](t, x, f1);
    double a[9];
    eval_a(system, t, x, a);
    double diff[3];
    for (int r = 0; r < d; ++r) diff[r] = f1[r] - u[r];
    if (d == 1) {
        if (a[0] <= 0.0 || !std::isfinite(a[0])) throw NumericalError("running_cost: singular diffusion matrix");
        return 0.5 * diff[0] * diff[0] / a[0];
    }
    Eigen::Map<const Eigen::MatrixXd> amat(a, d, d);
    Eigen::Map<const Eigen::VectorXd> dv(diff, d);
    Eigen::LLT<Eigen::MatrixXd> llt(amat);
    if (llt.info() != Eigen::Success) throw NumericalError("running_cost: singular diffusion matrix");
    return 0.5 * dv.dot(llt.solve(dv));
}

double duality_gap(const ChainSystem& system, double t, const double* x, const double* p,
                   const std::vector<std::vector<double>>& candidate_us) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& u : candidate_us) {
        double dot = 0.0;
        for (int c = 0; c < system.d; ++c) dot += p[c] * u[static_cast<std::size_t>(c)];
        best = std::min(best, running_cost(system, t, x, u.data()) + dot);
    }
    return std::abs(best - hamiltonian(system, t, x, p));
}

// --- backward marching solver ----------------------------------------------

namespace {

enum class SolveMode { linear_exit, hjb };

struct NodeData {
    std::vector<double> drift;   // node-major, dim components
    std::vector<double> a;       // node-major, d*d components (block-1 diffusion)
    std::vector<std::uint8_t> interior;
};

struct CflTerms {
    double transport = 0.0;   // sum of speed_c / h_c
    double viscosity = 0.0;   // eps * sum |a_jl| / (h_j h_l)
    int binding_axis = -1;
    double dt_bound() const { return 1.0 / (transport + viscosity); }
};

class Marcher {
public:
    Marcher(const ChainSystem& system, const DomainSpec& domain, double eps, const GridSpec& grid,
            const HjbOptions& options, SolveMode mode)
        : system_(system), domain_(domain), eps_(eps), grid_(grid), options_(options), mode_(mode) {
        if (grid.axes() != system.dim()) {
            throw ConfigError("solver grid has " + std::to_string(grid.axes()) +
                              " axes but the model state dimension is " + std::to_string(system.dim()));
        }
        if (system.dim() > 3) throw ConfigError("desk-scale solver requires n*d <= 3");
        if (!system.autonomous) {
            throw ConfigError("grid solver supports autonomous systems only (presets are autonomous)");
        }
        precompute();
    }

    ValueField solve(const TerminalFunctional* terminal) {
        const std::int64_t nodes = grid_.node_count();

        // range of the Dirichlet data, needed for the nonlinear CFL bound
        double data_min = 0.0, data_max = 0.0;
        auto phi_at = [&](double t, const double* x, bool terminal_slice) {
            if (mode_ == SolveMode::linear_exit) return terminal_slice ? 0.0 : 1.0;
            if (terminal->kind == TerminalFunctional::Kind::exit_indicator) {
                return terminal_slice ? options_.phi_cap : 0.0;
            }
            return terminal->phi(t, x);
        };

        std::vector<double> cur(static_cast<std::size_t>(nodes));
        double xbuf[3];
        for (std::int64_t i = 0; i < nodes; ++i) {
            grid_.node_coords(i, xbuf);
            const bool inside = data_.interior[static_cast<std::size_t>(i)];
            cur[static_cast<std::size_t>(i)] = phi_at(grid_.t_end, xbuf, /*terminal_slice=*/inside);
        }
        for (double v : cur) {
            data_min = std::min(data_min, v);
            data_max = std::max(data_max, v);
        }
        if (mode_ == SolveMode::hjb) {
            // lateral data can appear later in the march as well
            for (std::int64_t i = 0; i < nodes; ++i) {
                if (!data_.interior[static_cast<std::size_t>(i)]) {
                    grid_.node_coords(i, xbuf);
                    const double v = phi_at(grid_.t_start, xbuf, false);
                    data_min = std::min(data_min, v);
                    data_max = std::max(data_max, v);
                }
            }
        }

        const CflTerms cfl = cfl_terms(data_max - data_min);
        const double horizon = grid_.t_end - grid_.t_start;
        const double dt_bound = options_.cfl_safety * cfl.dt_bound();
        std::int64_t required = static_cast<std::int64_t>(std::ceil(horizon / dt_bound));
        const int stride_slices = grid_.store_slices - 1;
        required = ((required + stride_slices - 1) / stride_slices) * stride_slices;
        required = std::max<std::int64_t>(required, stride_slices);
        std::int64_t steps = grid_.time_steps;
        if (steps == 0) {
            steps = required;
        } else if (steps < required) {
            const std::string binding =
                cfl.transport >= cfl.viscosity
                    ? "transport on axis " + std::to_string(cfl.binding_axis + 1)
                    : "block-1 viscosity";
            throw ConfigError("grid time_steps=" + std::to_string(grid_.time_steps) +
                              " violates the CFL bound (need >= " + std::to_string(required) +
                              "; binding constraint: " + binding + ")");
        }
        if (steps % stride_slices != 0) {
            steps = ((steps + stride_slices - 1) / stride_slices) * stride_slices;
        }
        if (steps > options_.max_time_steps) {
            throw ConfigError("grid solve needs " + std::to_string(steps) +
                              " time steps, above the configured maximum");
        }
        const double dt = horizon / static_cast<double>(steps);
        const std::int64_t store_stride = steps / stride_slices;

        ValueField field;
        field.grid = grid_;
        field.grid.time_steps = static_cast<int>(steps);
        field.eps = eps_;
        field.scheme = (mode_ == SolveMode::linear_exit) ? "explicit-upwind-linear"
                                                         : "explicit-upwind-godunov";
        field.slice_times.resize(static_cast<std::size_t>(grid_.store_slices));
        field.values.assign(static_cast<std::size_t>(grid_.store_slices),
                            std::vector<double>(static_cast<std::size_t>(nodes)));
        auto store = [&](std::int64_t m, const std::vector<double>& slice) {
            const std::int64_t j = m / store_stride;
            field.slice_times[static_cast<std::size_t>(j)] = grid_.t_start + dt * static_cast<double>(m);
            field.values[static_cast<std::size_t>(j)] = slice;
        };
        store(steps, cur);

        std::vector<double> next(static_cast<std::size_t>(nodes));
        for (std::int64_t m = steps - 1; m >= 0; --m) {
            const double t_m = grid_.t_start + dt * static_cast<double>(m);
            step_once(cur, next, t_m, dt, phi_at);
            cur.swap(next);
            if (m % store_stride == 0) store(m, cur);
        }
        return field;
    }

private:
    void precompute() {
        const std::int64_t nodes = grid_.node_count();
        const int dim = system_.dim();
        const int d = system_.d;
        data_.drift.resize(static_cast<std::size_t>(nodes * dim));
        data_.a.resize(static_cast<std::size_t>(nodes * d * d));
        data_.interior.resize(static_cast<std::size_t>(nodes));
        double xbuf[3];
        double min_eig = std::numeric_limits<double>::infinity();
        for (std::int64_t i = 0; i < nodes; ++i) {
            grid_.node_coords(i, xbuf);
            data_.interior[static_cast<std::size_t>(i)] = domain_.signed_distance(xbuf) < 0.0;
            full_drift_into(system_, grid_.t_start, xbuf, &data_.drift[static_cast<std::size_t>(i * dim)]);
            eval_a(system_, grid_.t_start, xbuf, &data_.a[static_cast<std::size_t>(i * d * d)]);
            if (d == 1) {
                min_eig = std::min(min_eig, data_.a[static_cast<std::size_t>(i)]);
            }
        }
        if (d > 1) {
            Eigen::MatrixXd am(d, d);
            for (std::int64_t i = 0; i < nodes; ++i) {
                for (int r = 0; r < d; ++r)
                    for (int c = 0; c < d; ++c)
                        am(r, c) = data_.a[static_cast<std::size_t>(i * d * d + r * d + c)];
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(am);
                min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());
            }
        }
        // lambda_floor violations are hard errors here (the solve divides by
        // a-related quantities); the SDE engine only warns.
        if (min_eig < system_.lambda_floor) {
            throw NumericalError("ellipticity floor violated on the solver grid: min eig " +
                                 std::to_string(min_eig) + " < lambda " +
                                 std::to_string(system_.lambda_floor));
        }
        strides_[0] = 1;
        for (int a = 1; a < grid_.axes(); ++a) {
            strides_[a] = strides_[a - 1] * grid_.points[static_cast<std::size_t>(a - 1)];
        }
    }

    CflTerms cfl_terms(double data_range) const {
        const std::int64_t nodes = grid_.node_count();
        const int dim = system_.dim();
        const int d = system_.d;
        CflTerms out;
        std::vector<double> fmax(static_cast<std::size_t>(dim), 0.0);
        std::vector<double> amax(static_cast<std::size_t>(d * d), 0.0);
        for (std::int64_t i = 0; i < nodes; ++i) {
            for (int c = 0; c < dim; ++c) {
                fmax[static_cast<std::size_t>(c)] =
                    std::max(fmax[static_cast<std::size_t>(c)],
                             std::abs(data_.drift[static_cast<std::size_t>(i * dim + c)]));
            }
            for (int rc = 0; rc < d * d; ++rc) {
                amax[static_cast<std::size_t>(rc)] =
                    std::max(amax[static_cast<std::size_t>(rc)],
                             std::abs(data_.a[static_cast<std::size_t>(i * d * d + rc)]));
            }
        }
        double worst = 0.0;
        for (int c = 0; c < dim; ++c) {
            double speed = fmax[static_cast<std::size_t>(c)];
            if (mode_ == SolveMode::hjb && c < d) {
                // Worst-case one-sided gradient magnitude of the solution.
                double coupling = 0.0;
                for (int l = 0; l < d; ++l) {
                    coupling += amax[static_cast<std::size_t>(c * d + l)] * data_range / grid_.spacing(l);
                }
                speed += coupling;
            }
            const double term = speed / grid_.spacing(c);
            out.transport += term;
            if (term > worst) {
                worst = term;
                out.binding_axis = c;
            }
        }
        for (int j = 0; j < d; ++j) {
            for (int l = 0; l < d; ++l) {
                out.viscosity +=
                    eps_ * amax[static_cast<std::size_t>(j * d + l)] / (grid_.spacing(j) * grid_.spacing(l));
            }
        }
        return out;
    }

    template <typename PhiAt>
    void step_once(const std::vector<double>& cur, std::vector<double>& next, double t_m, double dt,
                   PhiAt&& phi_at) {
        const std::int64_t nodes = grid_.node_count();
        const int dim = system_.dim();
        const int d = system_.d;
        double xbuf[3];
        for (std::int64_t i = 0; i < nodes; ++i) {
            if (!data_.interior[static_cast<std::size_t>(i)]) {
                // lateral Dirichlet data (time-dependent only for bounded Phi)
                if (mode_ == SolveMode::linear_exit) {
                    next[static_cast<std::size_t>(i)] = 1.0;
                } else {
                    grid_.node_coords(i, xbuf);
                    next[static_cast<std::size_t>(i)] = phi_at(t_m, xbuf, false);
                }
                continue;
            }
            const double* f = &data_.drift[static_cast<std::size_t>(i * dim)];
            const double* a = &data_.a[static_cast<std::size_t>(i * d * d)];
            const double u0 = cur[static_cast<std::size_t>(i)];
            double rhs = 0.0;

            // viscosity on block-1 axes: eps/2 tr(a D2)
            for (int j = 0; j < d; ++j) {
                const double hj = grid_.spacing(j);
                const double upj = cur[static_cast<std::size_t>(i + strides_[j])];
                const double dnj = cur[static_cast<std::size_t>(i - strides_[j])];
                rhs += 0.5 * eps_ * a[j * d + j] * (upj - 2.0 * u0 + dnj) / (hj * hj);
                for (int l = j + 1; l < d; ++l) {
                    const double ajl = a[j * d + l];
                    if (ajl == 0.0) continue;
                    const double hl = grid_.spacing(l);
                    const double upp = cur[static_cast<std::size_t>(i + strides_[j] + strides_[l])];
                    const double upd = cur[static_cast<std::size_t>(i + strides_[j] - strides_[l])];
                    const double dnp = cur[static_cast<std::size_t>(i - strides_[j] + strides_[l])];
                    const double dnd = cur[static_cast<std::size_t>(i - strides_[j] - strides_[l])];
                    rhs += eps_ * ajl * (upp - upd - dnp + dnd) / (4.0 * hj * hl);
                }
            }

            if (mode_ == SolveMode::linear_exit) {
                // upwind transport on every axis
                for (int c = 0; c < dim; ++c) {
                    const double fc = f[c];
                    if (fc == 0.0) continue;
                    const double hc = grid_.spacing(c);
                    const double grad =
                        fc > 0.0 ? (cur[static_cast<std::size_t>(i + strides_[c])] - u0) / hc
                                 : (u0 - cur[static_cast<std::size_t>(i - strides_[c])]) / hc;
                    rhs += fc * grad;
                }
            } else {
                // deterministic blocks (transport) ...
                for (int c = d; c < dim; ++c) {
                    const double fc = f[c];
                    if (fc == 0.0) continue;
                    const double hc = grid_.spacing(c);
                    const double grad =
                        fc > 0.0 ? (cur[static_cast<std::size_t>(i + strides_[c])] - u0) / hc
                                 : (u0 - cur[static_cast<std::size_t>(i - strides_[c])]) / hc;
                    rhs += fc * grad;
                }
                // ... plus the Hamiltonian on the block-1 gradient
                double pm[3], pp[3];
                for (int c = 0; c < d; ++c) {
                    const double hc = grid_.spacing(c);
                    pm[c] = (u0 - cur[static_cast<std::size_t>(i - strides_[c])]) / hc;
                    pp[c] = (cur[static_cast<std::size_t>(i + strides_[c])] - u0) / hc;
                }
                rhs += numerical_hamiltonian(f, a, d, pm, pp);
            }

            const double vnew = u0 + dt * rhs;
            if (!std::isfinite(vnew)) {
                throw NumericalError("grid solve produced a non-finite value at t=" + std::to_string(t_m) +
                                     ", node " + std::to_string(i));
            }
            next[static_cast<std::size_t>(i)] = vnew;
        }
    }

    // Monotone numerical Hamiltonian for H(p) = <f1,p> - 1/2 p^T a p.
    // d == 1: Godunov flux of the concave scalar H. d >= 2: local
    // Lax-Friedrichs with per-axis dissipation bounds.
    double numerical_hamiltonian(const double* f, const double* a, int d, const double* pm,
                                 const double* pp) const {
        if (d == 1) {
            const double f1 = f[0], a11 = a[0];
            auto H = [&](double p) { return f1 * p - 0.5 * a11 * p * p; };
            const double pstar = f1 / a11; // argmax of concave H
            if (pm[0] <= pp[0]) {
                // G = -H is convex: min of G over [pm,pp] is at the clamped vertex
                return H(std::clamp(pstar, pm[0], pp[0]));
            }
            return std::min(H(pm[0]), H(pp[0]));
        }
        double pc[3];
        double value = 0.0;
        for (int c = 0; c < d; ++c) pc[c] = 0.5 * (pm[c] + pp[c]);
        double lin = 0.0, quad = 0.0;
        for (int r = 0; r < d; ++r) {
            lin += f[r] * pc[r];
            for (int c = 0; c < d; ++c) quad += pc[r] * a[r * d + c] * pc[c];
        }
        value = lin - 0.5 * quad;
        for (int c = 0; c < d; ++c) {
            double alpha = std::abs(f[c]);
            for (int l = 0; l < d; ++l) {
                alpha += std::abs(a[c * d + l]) * std::max(std::abs(pm[l]), std::abs(pp[l]));
            }
            value += 0.5 * alpha * (pp[c] - pm[c]);
        }
        return value;
    }

    const ChainSystem& system_;
    const DomainSpec& domain_;
    double eps_;
    GridSpec grid_;
    HjbOptions options_;
    SolveMode mode_;
    NodeData data_;
    std::int64_t strides_[3] = {1, 1, 1};
};

} // namespace

ValueField solve_hjb(const ChainSystem& system, const DomainSpec& domain,
                     const TerminalFunctional& terminal, double eps, const GridSpec& grid,
                     const HjbOptions& options) {
    Marcher marcher(system, domain, eps, grid, options, SolveMode::hjb);
    return marcher.solve(&terminal);
}

ValueField solve_exit_bvp(const ChainSystem& system, const DomainSpec& domain, double eps,
                          const GridSpec& grid, const HjbOptions& options) {
    Marcher marcher(system, domain, eps, grid, options, SolveMode::linear_exit);
    return marcher.solve(nullptr);
}

ControlField extract_control(const ValueField& J, const ChainSystem& system, double clamp_cap) {
    const GridSpec& grid = J.grid;
    const int d = system.d;
    const std::int64_t nodes = grid.node_count();
    ControlField field;
    field.grid = grid;
    field.d = d;
    field.eps = J.eps;
    field.clamp_cap = clamp_cap;
    field.slice_times = J.slice_times;
    field.values.assign(J.values.size(), std::vector<double>(static_cast<std::size_t>(nodes * d)));
    field.clamped.assign(J.values.size(), std::vector<std::uint8_t>(static_cast<std::size_t>(nodes), 0));

    std::int64_t strides[3] = {1, 1, 1};
    for (int a = 1; a < grid.axes(); ++a) strides[a] = strides[a - 1] * grid.points[static_cast<std::size_t>(a - 1)];

    double xbuf[3];
    double sig[9];
    for (std::size_t s = 0; s < J.values.size(); ++s) {
        const std::vector<double>& jv = J.values[s];
        const double t = J.slice_times[s];
        for (std::int64_t i = 0; i < nodes; ++i) {
            grid.node_coords(i, xbuf);
            double gradient[3];
            std::int64_t rem = i;
            for (int c = 0; c < d; ++c) {
                const int pts = grid.points[static_cast<std::size_t>(c)];
                const int ic = static_cast<int>(rem % pts);
                rem /= pts;
                const double h = grid.spacing(c);
                if (ic == 0) {
                    gradient[c] = (jv[static_cast<std::size_t>(i + strides[c])] - jv[static_cast<std::size_t>(i)]) / h;
                } else if (ic == pts - 1) {
                    gradient[c] = (jv[static_cast<std::size_t>(i)] - jv[static_cast<std::size_t>(i - strides[c])]) / h;
                } else {
                    gradient[c] = (jv[static_cast<std::size_t>(i + strides[c])] -
                                   jv[static_cast<std::size_t>(i - strides[c])]) /
                                  (2.0 * h);
                }
            }
            system.sigma(t, xbuf, sig);
            double v[3];
            double norm2 = 0.0;
            for (int c = 0; c < d; ++c) {
                double acc = 0.0;
                for (int r = 0; r < d; ++r) acc += sig[r * d + c] * gradient[r]; // sigma^T grad
                v[c] = -acc;
                norm2 += v[c] * v[c];
            }
            const double norm = std::sqrt(norm2);
            if (norm > clamp_cap) {
                const double scale = clamp_cap / norm;
                for (int c = 0; c < d; ++c) v[c] *= scale;
                field.clamped[s][static_cast<std::size_t>(i)] = 1;
            }
            for (int c = 0; c < d; ++c) field.values[s][static_cast<std::size_t>(i * d + c)] = v[c];
        }
    }
    return field;
}

double default_clamp_cap(const ChainSystem& system, const DomainSpec& domain, const GridSpec& grid) {
    const std::int64_t nodes = grid.node_count();
    double fmax = 0.0;
    double sig[9];
    double f1[3];
    double xbuf[3];
    double sig_norm = 0.0;
    for (std::int64_t i = 0; i < nodes; ++i) {
        grid.node_coords(i, xbuf);
        system.drift_blocks[0](grid.t_start, xbuf, f1);
        double n2 = 0.0;
        for (int c = 0; c < system.d; ++c) n2 += f1[c] * f1[c];
        fmax = std::max(fmax, std::sqrt(n2));
        if (i == 0) {
            system.sigma(grid.t_start, xbuf, sig);
            for (int rc = 0; rc < system.d * system.d; ++rc) sig_norm += sig[rc] * sig[rc];
            sig_norm = std::sqrt(sig_norm);
        }
    }
    if (fmax > 1e-12) return 10.0 * fmax;
    const double horizon = domain.time_end - domain.time_start;
    return 10.0 * sig_norm / std::sqrt(horizon);
}

} // namespace raresim
