#include "raresim/action.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "raresim/errors.hpp"
#include "raresim/hjb.hpp"
#include "raresim/noise.hpp"

namespace raresim {

namespace {

// Full state from block-1 value and slaved tail.
void assemble(const std::vector<double>& phi, const std::vector<double>& rest, double* x) {
    std::copy(phi.begin(), phi.end(), x);
    std::copy(rest.begin(), rest.end(), x + phi.size());
}

// Derivative of blocks 2..n at (t, x_full).
void slaved_rhs(const ChainSystem& system, double t, const double* x, double* out) {
    const int d = system.d;
    for (int i = 1; i < system.n; ++i) {
        system.drift_blocks[static_cast<std::size_t>(i)](t, x, out + static_cast<std::ptrdiff_t>(i - 1) * d);
    }
}

} // namespace

std::vector<double> DiscretePath::state_at(int k) const {
    std::vector<double> x(phi[static_cast<std::size_t>(k)].size() + slaved[static_cast<std::size_t>(k)].size());
    assemble(phi[static_cast<std::size_t>(k)], slaved[static_cast<std::size_t>(k)], x.data());
    return x;
}

void integrate_slaved(const ChainSystem& system, const std::vector<double>& start_rest,
                      DiscretePath& path) {
    const int d = system.d;
    const int rest_dim = (system.n - 1) * d;
    const int K = path.knots();
    path.slaved.assign(static_cast<std::size_t>(K + 1), start_rest);
    if (rest_dim == 0) return;

    std::vector<double> x(static_cast<std::size_t>(system.dim()));
    std::vector<double> rest = start_rest;
    std::vector<double> k1(rest_dim), k2(rest_dim), k3(rest_dim), k4(rest_dim), tmp(rest_dim);
    std::vector<double> phi_mid(static_cast<std::size_t>(d));

    for (int k = 0; k < K; ++k) {
        const double t0 = path.knot_times[static_cast<std::size_t>(k)];
        const double h = path.knot_times[static_cast<std::size_t>(k + 1)] - t0;
        const auto& p0 = path.phi[static_cast<std::size_t>(k)];
        const auto& p1 = path.phi[static_cast<std::size_t>(k + 1)];
        for (int c = 0; c < d; ++c) phi_mid[static_cast<std::size_t>(c)] = 0.5 * (p0[static_cast<std::size_t>(c)] + p1[static_cast<std::size_t>(c)]);

        assemble(p0, rest, x.data());
        slaved_rhs(system, t0, x.data(), k1.data());
        for (int c = 0; c < rest_dim; ++c) tmp[static_cast<std::size_t>(c)] = rest[static_cast<std::size_t>(c)] + 0.5 * h * k1[static_cast<std::size_t>(c)];
        assemble(phi_mid, tmp, x.data());
        slaved_rhs(system, t0 + 0.5 * h, x.data(), k2.data());
        for (int c = 0; c < rest_dim; ++c) tmp[static_cast<std::size_t>(c)] = rest[static_cast<std::size_t>(c)] + 0.5 * h * k2[static_cast<std::size_t>(c)];
        assemble(phi_mid, tmp, x.data());
        slaved_rhs(system, t0 + 0.5 * h, x.data(), k3.data());
        for (int c = 0; c < rest_dim; ++c) tmp[static_cast<std::size_t>(c)] = rest[static_cast<std::size_t>(c)] + h * k3[static_cast<std::size_t>(c)];
        assemble(p1, tmp, x.data());
        slaved_rhs(system, t0 + h, x.data(), k4.data());
        for (int c = 0; c < rest_dim; ++c) {
            rest[static_cast<std::size_t>(c)] +=
                h / 6.0 *
                (k1[static_cast<std::size_t>(c)] + 2.0 * k2[static_cast<std::size_t>(c)] +
                 2.0 * k3[static_cast<std::size_t>(c)] + k4[static_cast<std::size_t>(c)]);
        }
        path.slaved[static_cast<std::size_t>(k + 1)] = rest;
    }
}

double action(const ChainSystem& system, const DiscretePath& path) {
    const int d = system.d;
    const int K = path.knots();
    std::vector<double> x(static_cast<std::size_t>(system.dim()));
    std::vector<double> u(static_cast<std::size_t>(d));
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
        const double h = path.knot_times[static_cast<std::size_t>(k + 1)] - path.knot_times[static_cast<std::size_t>(k)];
        if (h <= 0.0) throw ConfigError("action: knot times must be strictly increasing");
        const auto& p0 = path.phi[static_cast<std::size_t>(k)];
        const auto& p1 = path.phi[static_cast<std::size_t>(k + 1)];
        for (int c = 0; c < d; ++c) u[static_cast<std::size_t>(c)] = (p1[static_cast<std::size_t>(c)] - p0[static_cast<std::size_t>(c)]) / h;
        assemble(p0, path.slaved[static_cast<std::size_t>(k)], x.data());
        const double l0 = running_cost(system, path.knot_times[static_cast<std::size_t>(k)], x.data(), u.data());
        assemble(p1, path.slaved[static_cast<std::size_t>(k + 1)], x.data());
        const double l1 = running_cost(system, path.knot_times[static_cast<std::size_t>(k + 1)], x.data(), u.data());
        total += 0.5 * h * (l0 + l1);
    }
    return total;
}

namespace {

class Objective {
public:
    Objective(const ChainSystem& system, const DomainSpec& domain, const std::vector<double>& start,
              int knots)
        : system_(system), domain_(domain), knots_(knots), d_(system.d) {
        start_phi_.assign(start.begin(), start.begin() + d_);
        start_rest_.assign(start.begin() + d_, start.end());
        boundary_tol_ = 1e-10 * domain.diameter();
        penalty_weight_ = 1e6 / (domain.diameter() * domain.diameter());
    }

    int params() const { return knots_ * d_ + 1; } // phi_1..phi_K then theta

    // Decision vector -> feasible path (endpoint projected onto the boundary).
    DiscretePath build(const std::vector<double>& z) const {
        DiscretePath path;
        const double s = domain_.time_start;
        double theta = std::clamp(z.back(), theta_lo(), domain_.time_end);
        path.theta = theta;
        path.knot_times.resize(static_cast<std::size_t>(knots_ + 1));
        for (int k = 0; k <= knots_; ++k) {
            path.knot_times[static_cast<std::size_t>(k)] = s + (theta - s) * k / knots_;
        }
        path.phi.resize(static_cast<std::size_t>(knots_ + 1));
        path.phi[0] = start_phi_;
        for (int k = 1; k <= knots_; ++k) {
            path.phi[static_cast<std::size_t>(k)].assign(z.begin() + (k - 1) * d_, z.begin() + k * d_);
        }
        integrate_slaved(system_, start_rest_, path);
        project_endpoint(path);
        return path;
    }

    double value(const std::vector<double>& z) const {
        const DiscretePath path = build(z);
        double v = action(system_, path);
        // Interior knots must stay inside Omega; quadratic penalty vanishes on
        // the feasible set, so the optimum is untouched.
        std::vector<double> x(static_cast<std::size_t>(system_.dim()));
        for (int k = 1; k < knots_; ++k) {
            assemble(path.phi[static_cast<std::size_t>(k)], path.slaved[static_cast<std::size_t>(k)], x.data());
            const double sd = domain_.signed_distance(x.data());
            if (sd > 0.0) v += penalty_weight_ * sd * sd;
        }
        return v;
    }

    double theta_lo() const { return domain_.time_start + 1e-3 * (domain_.time_end - domain_.time_start); }

    // Moves phi_K along the block-1 direction that increases the signed
    // distance until the assembled endpoint sits on the boundary. The slaved
    // tail is re-integrated between passes because it feeds back into the
    // endpoint position.
    void project_endpoint(DiscretePath& path) const {
        std::vector<double> x(static_cast<std::size_t>(system_.dim()));
        for (int pass = 0; pass < 8; ++pass) {
            auto& pk = path.phi[static_cast<std::size_t>(knots_)];
            assemble(pk, path.slaved[static_cast<std::size_t>(knots_)], x.data());
            double sd = domain_.signed_distance(x.data());
            if (std::abs(sd) <= boundary_tol_) return;
            // block-1 gradient of the signed distance (finite differences)
            double dir[3];
            double norm = 0.0;
            const double h = 1e-6 * (1.0 + std::abs(sd));
            for (int c = 0; c < d_; ++c) {
                x[static_cast<std::size_t>(c)] += h;
                const double up = domain_.signed_distance(x.data());
                x[static_cast<std::size_t>(c)] -= 2.0 * h;
                const double dn = domain_.signed_distance(x.data());
                x[static_cast<std::size_t>(c)] += h;
                dir[c] = (up - dn) / (2.0 * h);
                norm += dir[c] * dir[c];
            }
            norm = std::sqrt(norm);
            if (norm < 1e-12) {
                throw NumericalError("minimize_action: boundary unreachable through block-1 moves");
            }
            for (int c = 0; c < d_; ++c) dir[c] /= norm;
            // bracket the crossing along the ray phi_K + alpha * dir
            double a_lo = 0.0, a_hi = 0.0;
            double step = std::max(std::abs(sd), 1e-3 * domain_.diameter());
            if (sd < 0.0) {
                for (int it = 0; it < 60; ++it) {
                    a_hi += step;
                    if (boundary_distance(path, a_hi, dir, x) >= 0.0) break;
                    step *= 2.0;
                }
            } else {
                a_lo = -std::abs(sd) / std::max(norm, 1e-12);
                for (int it = 0; it < 60 && boundary_distance(path, a_lo, dir, x) > 0.0; ++it) {
                    a_lo *= 2.0;
                }
                a_hi = 0.0;
            }
            // bisect essentially to machine precision; projection noise feeds
            // straight into the finite-difference gradients otherwise
            for (int it = 0; it < 100 && a_hi - a_lo > 1e-16 * (1.0 + std::abs(a_lo) + std::abs(a_hi));
                 ++it) {
                const double mid = 0.5 * (a_lo + a_hi);
                const double v = boundary_distance(path, mid, dir, x);
                if (v == 0.0) {
                    a_lo = a_hi = mid;
                    break;
                }
                (v < 0.0 ? a_lo : a_hi) = mid;
            }
            const double alpha = 0.5 * (a_lo + a_hi);
            for (int c = 0; c < d_; ++c) pk[static_cast<std::size_t>(c)] += alpha * dir[c];
            integrate_slaved(system_, start_rest_, path);
        }
    }

private:
    double boundary_distance(const DiscretePath& path, double alpha, const double* dir,
                             std::vector<double>& x) const {
        auto pk = path.phi[static_cast<std::size_t>(knots_)];
        for (int c = 0; c < d_; ++c) pk[static_cast<std::size_t>(c)] += alpha * dir[c];
        assemble(pk, path.slaved[static_cast<std::size_t>(knots_)], x.data());
        return domain_.signed_distance(x.data());
    }

    const ChainSystem& system_;
    const DomainSpec& domain_;
    int knots_;
    int d_;
    std::vector<double> start_phi_;
    std::vector<double> start_rest_;
    double boundary_tol_ = 0.0;
    double penalty_weight_ = 0.0;
};

} // namespace

std::pair<DiscretePath, ActionValue> minimize_action(const ChainSystem& system,
                                                     const DomainSpec& domain,
                                                     const std::vector<double>& start, int knots,
                                                     int restarts,
                                                     const MinimizeOptions& options) {
    if (knots < 8) throw ConfigError("minimize_action: need at least 8 knots");
    if (restarts < 1) throw ConfigError("minimize_action: need at least 1 restart");
    if (!domain.inside(start.data())) throw ConfigError("minimize_action: start must be inside the domain");

    const int dim = system.dim();
    const int d = system.d;
    Objective objective(system, domain, start, knots);
    const double diam = domain.diameter();
    const double horizon = domain.time_end - domain.time_start;

    // Boundary probe points: block-1 axis directions first, then seeded
    // random directions, each ray-cast from the start onto the boundary.
    auto probe_point = [&](int r) {
        std::vector<double> dir(static_cast<std::size_t>(dim), 0.0);
        if (r < 2 * d) {
            dir[static_cast<std::size_t>(r / 2)] = (r % 2 == 0) ? 1.0 : -1.0;
        } else {
            NoiseStream stream(options.probe_seed, static_cast<std::uint64_t>(r));
            double norm = 0.0;
            for (int c = 0; c < dim; ++c) {
                dir[static_cast<std::size_t>(c)] = stream.next_gaussian();
                norm += dir[static_cast<std::size_t>(c)] * dir[static_cast<std::size_t>(c)];
            }
            norm = std::sqrt(norm);
            for (int c = 0; c < dim; ++c) dir[static_cast<std::size_t>(c)] /= norm;
        }
        double lo = 0.0, hi = 1e-3 * diam;
        std::vector<double> x(static_cast<std::size_t>(dim));
        auto sd_at = [&](double rho) {
            for (int c = 0; c < dim; ++c) x[static_cast<std::size_t>(c)] = start[static_cast<std::size_t>(c)] + rho * dir[static_cast<std::size_t>(c)];
            return domain.signed_distance(x.data());
        };
        for (int it = 0; it < 80 && sd_at(hi) < 0.0; ++it) hi *= 2.0;
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            (sd_at(mid) < 0.0 ? lo : hi) = mid;
        }
        const double rho = 0.5 * (lo + hi);
        for (int c = 0; c < dim; ++c) x[static_cast<std::size_t>(c)] = start[static_cast<std::size_t>(c)] + rho * dir[static_cast<std::size_t>(c)];
        return x;
    };

    DiscretePath best_path;
    ActionValue best{std::numeric_limits<double>::infinity(), 0.0, false, -1};
    double best_obj = std::numeric_limits<double>::infinity();

    for (int r = 0; r < restarts; ++r) {
        const std::vector<double> target = probe_point(r);
        std::vector<double> z(static_cast<std::size_t>(objective.params()));
        for (int k = 1; k <= knots; ++k) {
            const double w = static_cast<double>(k) / knots;
            for (int c = 0; c < d; ++c) {
                z[static_cast<std::size_t>((k - 1) * d + c)] =
                    (1.0 - w) * start[static_cast<std::size_t>(c)] + w * target[static_cast<std::size_t>(c)];
            }
        }
        z.back() = domain.time_start + 0.9 * horizon;

        double f = objective.value(z);
        std::vector<double> grad(z.size());
        double step_scale = 0.1;
        bool converged = false;
        double grad_norm = 0.0;

        for (int iter = 0; iter < options.max_iterations; ++iter) {
            // central finite-difference gradient, projected at the theta box
            for (std::size_t p = 0; p < z.size(); ++p) {
                const bool is_theta = (p + 1 == z.size());
                const double scale = is_theta ? horizon : diam;
                const double h = 1e-6 * scale;
                std::vector<double> zp = z;
                zp[p] = z[p] + h;
                const double fp = objective.value(zp);
                zp[p] = z[p] - h;
                const double fm = objective.value(zp);
                grad[p] = (fp - fm) / (2.0 * h);
            }
            // projected gradient at the theta bounds
            const std::size_t ti = z.size() - 1;
            if (z[ti] >= domain.time_end - 1e-14 && grad[ti] < 0.0) grad[ti] = 0.0;
            if (z[ti] <= objective.theta_lo() + 1e-14 && grad[ti] > 0.0) grad[ti] = 0.0;
            grad_norm = 0.0;
            for (double g : grad) grad_norm += g * g;
            grad_norm = std::sqrt(grad_norm);
            if (grad_norm < options.tolerance * (1.0 + std::abs(f))) {
                converged = true;
                break;
            }
            // backtracking line search
            double alpha = step_scale / (1.0 + grad_norm);
            bool improved = false;
            for (int ls = 0; ls < 40; ++ls) {
                std::vector<double> zt = z;
                for (std::size_t p = 0; p < z.size(); ++p) zt[p] = z[p] - alpha * grad[p];
                zt[ti] = std::clamp(zt[ti], objective.theta_lo(), domain.time_end);
                const double ft = objective.value(zt);
                if (ft < f - 1e-4 * alpha * grad_norm * grad_norm) {
                    z.swap(zt);
                    f = ft;
                    improved = true;
                    step_scale = std::min(step_scale * 1.5, 10.0);
                    break;
                }
                alpha *= 0.5;
            }
            if (!improved) {
                step_scale *= 0.5;
                if (step_scale < 1e-14) break;
            }
        }

        if (f < best_obj) {
            best_obj = f;
            best.grad_norm = grad_norm;
            best.converged = converged;
            best.restart_index = r;
            best_path = objective.build(z);
            // report the clean action of the built path (penalty-free value)
            best.value = action(system, best_path);
        }
    }
    return {best_path, best};
}

std::vector<double> blowup_probe(const ChainSystem& system, const DomainSpec& domain,
                                 const std::vector<double>& start,
                                 const std::function<void(double t, double* out)>& phi_fn, int knots,
                                 const std::vector<double>& horizons) {
    const int d = system.d;
    std::vector<double> out;
    out.reserve(horizons.size());
    for (double T : horizons) {
        DiscretePath path;
        path.theta = domain.time_start + T;
        path.knot_times.resize(static_cast<std::size_t>(knots + 1));
        path.phi.resize(static_cast<std::size_t>(knots + 1));
        for (int k = 0; k <= knots; ++k) {
            const double t = domain.time_start + T * k / knots;
            path.knot_times[static_cast<std::size_t>(k)] = t;
            path.phi[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(d));
            phi_fn(t, path.phi[static_cast<std::size_t>(k)].data());
        }
        std::vector<double> rest(start.begin() + d, start.end());
        integrate_slaved(system, rest, path);
        out.push_back(action(system, path));
    }
    return out;
}

std::vector<ComparisonRow> asymptotic_comparison(const std::vector<EstimateReport>& mc_sweep,
                                                 double action_value) {
    std::vector<ComparisonRow> rows;
    rows.reserve(mc_sweep.size());
    for (const EstimateReport& r : mc_sweep) {
        ComparisonRow row;
        row.eps = r.eps;
        row.action = action_value;
        if (r.degenerate || !(r.mean > 0.0)) {
            row.flagged = true;
            row.neg_eps_log_q = std::numeric_limits<double>::quiet_NaN();
            row.gap = std::numeric_limits<double>::quiet_NaN();
            row.log_se = std::numeric_limits<double>::quiet_NaN();
        } else {
            row.neg_eps_log_q = -r.eps * std::log(r.mean);
            row.gap = std::abs(row.neg_eps_log_q - action_value);
            row.log_se = r.eps * std::sqrt(r.variance) / r.mean;
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace raresim
