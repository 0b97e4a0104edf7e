#ifndef RARESIM_ENGINE_HPP
#define RARESIM_ENGINE_HPP

#include <cstdint>
#include <vector>

#include "raresim/model.hpp"
#include "raresim/noise.hpp"

namespace raresim {

class ControlField; // hjb.hpp

// One simulated trajectory. For estimation runs only the endpoints are kept;
// record_trajectory fills times/states densely for dumps and tests.
struct PathSample {
    std::vector<double> times;
    std::vector<std::vector<double>> states;
    bool exited = false;
    double theta = 0.0;              // tau^eps wedge T
    std::vector<double> exit_state;  // state at theta
    double girsanov_log_weight = 0.0;
    std::int64_t steps_taken = 0;
    std::int64_t control_evals = 0;
    std::int64_t clamp_hits = 0;
};

struct SimOptions {
    double dt = 1e-3;
    std::int64_t max_steps = 200'000'000;
    bool record_trajectory = false;
    // Boundary localization tolerance; <=0 means 1e-10 * domain diameter.
    double boundary_tol = 0.0;
};

// One Euler-Maruyama step: x + f(t,x) dt + sqrt(eps) * b sigma(t,x) xi.
// xi carries the Brownian increment (per-coordinate stddev sqrt(dt)).
std::vector<double> euler_step(const ChainSystem& system, double t, const std::vector<double>& x,
                               double dt, double eps, const std::vector<double>& xi);

// Bisection along the segment prev -> curr until |signed_distance| <= tol;
// returns the crossing fraction in [0,1] and writes the crossing point.
double locate_exit(const DomainSpec& domain, const std::vector<double>& prev,
                   const std::vector<double>& curr, double tol, std::vector<double>& exit_state);

// Uncontrolled path from `start` (must be strictly inside Omega), stopped at
// the lateral boundary or at the horizon end.
PathSample simulate(const ChainSystem& system, const DomainSpec& domain,
                    const std::vector<double>& start, double eps, const SimOptions& options,
                    NoiseStream& stream);

// Tilted dynamics f + b sigma v with the Girsanov log-weight accumulated from
// the same Brownian increments that drive the path (Ito convention: v at the
// left endpoint). control == nullptr reproduces simulate() exactly.
PathSample simulate_controlled(const ChainSystem& system, const DomainSpec& domain,
                               const std::vector<double>& start, double eps,
                               const SimOptions& options, NoiseStream& stream,
                               const ControlField* control);

} // namespace raresim

#endif
