#include "raresim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "raresim/errors.hpp"
#include "raresim/hjb.hpp"

namespace raresim {

namespace {

inline double boundary_tolerance(const DomainSpec& domain, const SimOptions& options) {
    if (options.boundary_tol > 0.0) return options.boundary_tol;
    return 1e-10 * domain.diameter();
}

} // namespace

std::vector<double> euler_step(const ChainSystem& system, double t, const std::vector<double>& x,
                               double dt, double eps, const std::vector<double>& xi) {
    if (dt <= 0.0) throw ConfigError("euler_step: dt must be positive");
    std::vector<double> next(x.size());
    std::vector<double> drift(x.size());
    full_drift_into(system, t, x.data(), drift.data());
    std::vector<double> inj(x.size(), 0.0);
    noise_injection_into(system, t, x.data(), xi.data(), inj.data());
    const double sqrt_eps = std::sqrt(eps);
    for (std::size_t i = 0; i < x.size(); ++i) next[i] = x[i] + drift[i] * dt + sqrt_eps * inj[i];
    return next;
}

double locate_exit(const DomainSpec& domain, const std::vector<double>& prev,
                   const std::vector<double>& curr, double tol, std::vector<double>& exit_state) {
    const std::size_t dim = prev.size();
    const double sd_curr = domain.sd(curr.data());
    if (std::abs(sd_curr) <= tol) {
        exit_state = curr;
        return 1.0;
    }
    if (sd_curr < 0.0) throw NumericalError("locate_exit: current state is not outside the domain");
    double f_lo = 0.0, f_hi = 1.0;
    std::vector<double> mid(dim);
    for (int it = 0; it < 64; ++it) {
        const double f = 0.5 * (f_lo + f_hi);
        for (std::size_t i = 0; i < dim; ++i) mid[i] = prev[i] + f * (curr[i] - prev[i]);
        const double sd = domain.sd(mid.data());
        if (std::abs(sd) <= tol) {
            exit_state = mid;
            return f;
        }
        (sd < 0.0 ? f_lo : f_hi) = f;
    }
    throw NumericalError("locate_exit: bisection failed to localize the boundary in 64 iterations");
}

PathSample simulate(const ChainSystem& system, const DomainSpec& domain,
                    const std::vector<double>& start, double eps, const SimOptions& options,
                    NoiseStream& stream) {
    return simulate_controlled(system, domain, start, eps, options, stream, nullptr);
}

PathSample simulate_controlled(const ChainSystem& system, const DomainSpec& domain,
                               const std::vector<double>& start, double eps,
                               const SimOptions& options, NoiseStream& stream,
                               const ControlField* control) {
    const int dim = system.dim();
    const int d = system.d;
    if (d > 3) throw ConfigError("simulate: block dimension d > 3 not supported");
    if (static_cast<int>(start.size()) != dim) throw ConfigError("simulate: start state has wrong length");
    if (options.dt <= 0.0) throw ConfigError("simulate: dt must be positive");
    if (!domain.inside(start.data())) throw ConfigError("simulate: start state must be strictly inside the domain");

    const double t_start = domain.time_start;
    const double t_end = domain.time_end;
    const double tol = boundary_tolerance(domain, options);
    const double sqrt_eps = std::sqrt(eps);

    PathSample path;
    path.exit_state = start;
    if (options.record_trajectory) {
        path.times.push_back(t_start);
        path.states.push_back(start);
    }

    std::vector<double> x = start;
    std::vector<double> x_next(static_cast<std::size_t>(dim));
    std::vector<double> drift(static_cast<std::size_t>(dim), 0.0);
    double xi[3];
    double v[3];
    double sv[3];
    double sig[9];
    const bool cache_sigma = system.constant_sigma;
    if (cache_sigma) system.sigma(t_start, x.data(), sig);
    bool drift_is_zero = !system.zero_block.empty();
    for (std::size_t i = 0; i < system.zero_block.size() && drift_is_zero; ++i) {
        drift_is_zero = system.zero_block[i];
    }

    // Whole steps first; the final step may be shorter.
    const double horizon = t_end - t_start;
    std::int64_t full_steps = static_cast<std::int64_t>(horizon / options.dt);
    double last_dt = horizon - static_cast<double>(full_steps) * options.dt;
    if (last_dt <= options.dt * 1e-12) {
        last_dt = 0.0;
    }
    const std::int64_t total_steps = full_steps + (last_dt > 0.0 ? 1 : 0);
    if (total_steps > options.max_steps) {
        throw NumericalError("simulate: step budget exhausted (" + std::to_string(total_steps) +
                             " steps needed)");
    }
    const double sqrt_dt_full = std::sqrt(options.dt);

    double log_weight = 0.0;
    bool exited = false;
    double theta = t_end;
    double* xp = x.data();
    double* xn = x_next.data();

    std::int64_t k = 0;
    for (; k < total_steps; ++k) {
        const bool short_step = k >= full_steps;
        const double dt_k = short_step ? last_dt : options.dt;
        const double sqrt_dt = short_step ? std::sqrt(last_dt) : sqrt_dt_full;
        const double t_k = t_start + static_cast<double>(k) * options.dt;

        stream.fill_gaussians(xi, d);
        for (int c = 0; c < d; ++c) xi[c] *= sqrt_dt; // Brownian increment

        if (!drift_is_zero) {
            try {
                full_drift_into(system, t_k, xp, drift.data());
            } catch (const NumericalError& e) {
                throw NumericalError(std::string(e.what()) + " (step " + std::to_string(k) + ")");
            }
        }
        if (!cache_sigma) system.sigma(t_k, xp, sig);

        if (control) {
            ++path.control_evals;
            const bool clamped = control->evaluate(t_k, xp, v);
            if (clamped) ++path.clamp_hits;
            // Tilt enters the drift at order one: f + b sigma v.
            double vv = 0.0, vdw = 0.0;
            for (int r = 0; r < d; ++r) {
                double acc = 0.0;
                for (int c = 0; c < d; ++c) acc += sig[r * d + c] * v[c];
                sv[r] = acc;
            }
            for (int c = 0; c < d; ++c) {
                vv += v[c] * v[c];
                vdw += v[c] * xi[c];
            }
            for (int c = 0; c < d; ++c) drift[static_cast<std::size_t>(c)] += sv[c];
            log_weight -= vdw / sqrt_eps + vv * dt_k / (2.0 * eps);
        }

        if (drift_is_zero && !control) {
            for (int i = 0; i < dim; ++i) xn[i] = xp[i];
        } else {
            for (int i = 0; i < dim; ++i) xn[i] = xp[i] + drift[static_cast<std::size_t>(i)] * dt_k;
        }
        if (eps > 0.0) {
            for (int r = 0; r < d; ++r) {
                double acc = 0.0;
                for (int c = 0; c < d; ++c) acc += sig[r * d + c] * xi[c];
                xn[r] += sqrt_eps * acc;
            }
        }

        const double sd = domain.sd(xn);
        if (sd >= 0.0 || !std::isfinite(sd)) {
            if (!std::isfinite(sd)) {
                throw NumericalError("simulate: non-finite state at step " + std::to_string(k + 1));
            }
            const std::vector<double> prev(xp, xp + dim);
            const std::vector<double> curr(xn, xn + dim);
            const double frac = locate_exit(domain, prev, curr, tol, path.exit_state);
            theta = t_k + frac * dt_k;
            exited = true;
            if (options.record_trajectory) {
                path.times.push_back(theta);
                path.states.push_back(path.exit_state);
            }
            break;
        }

        std::swap(xp, xn);
        if (options.record_trajectory) {
            path.times.push_back(std::min(t_k + dt_k, t_end));
            path.states.emplace_back(xp, xp + dim);
        }
    }

    path.steps_taken = exited ? k + 1 : k;
    if (!exited) {
        theta = t_end;
        path.exit_state.assign(xp, xp + dim);
    }
    path.exited = exited;
    path.theta = theta;
    path.girsanov_log_weight = log_weight;
    if (!std::isfinite(log_weight)) {
        throw NumericalError("simulate: non-finite Girsanov weight (control field blow-up near the boundary?)");
    }
    return path;
}

} // namespace raresim
