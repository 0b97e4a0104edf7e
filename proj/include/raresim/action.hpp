#ifndef RARESIM_ACTION_HPP
#define RARESIM_ACTION_HPP

#include <functional>
#include <vector>

#include "raresim/estimators.hpp"
#include "raresim/model.hpp"

namespace raresim {

// Knot-based block-1 path with free exit time. Blocks 2..n are slaved to phi
// through their ODEs (integrated along the knots), so only phi and theta are
// degrees of freedom.
struct DiscretePath {
    std::vector<double> knot_times;          // K+1 entries, front()=s, back()=theta
    std::vector<std::vector<double>> phi;    // K+1 knots in R^d
    std::vector<std::vector<double>> slaved; // K+1 states of blocks 2..n ((n-1)*d each)
    double theta = 0.0;

    int knots() const { return static_cast<int>(knot_times.size()) - 1; }
    // Full state (phi_k, slaved_k) at knot k.
    std::vector<double> state_at(int k) const;
};

struct ActionValue {
    double value = 0.0;
    double grad_norm = 0.0;
    bool converged = false;
    int restart_index = -1;
};

struct MinimizeOptions {
    int max_iterations = 1000;
    double tolerance = 1e-6;        // converged when |proj grad| < tol*(1+value)
    std::uint64_t probe_seed = 1234; // boundary probe directions
};

// Re-integrates the slaved blocks along the knots (RK4 with phi linear on
// each segment). start_rest holds blocks 2..n at t=s.
void integrate_slaved(const ChainSystem& system, const std::vector<double>& start_rest,
                      DiscretePath& path);

// Trapezoidal quadrature of L(t, x(t), phi_dot) with segment-constant knot
// velocities.
double action(const ChainSystem& system, const DiscretePath& path);

// Gradient descent with backtracking line search over the knot values and
// theta; the endpoint is projected onto the boundary every evaluation; best
// of `restarts` starts toward distinct boundary probe points.
std::pair<DiscretePath, ActionValue> minimize_action(const ChainSystem& system,
                                                     const DomainSpec& domain,
                                                     const std::vector<double>& start, int knots,
                                                     int restarts,
                                                     const MinimizeOptions& options = {});

// Action of the supplied block-1 path over each horizon (the path callable is
// sampled at `knots` segments per horizon). Used to probe the grow-without-
// bound behaviour of trajectories that never leave the domain.
std::vector<double> blowup_probe(const ChainSystem& system, const DomainSpec& domain,
                                 const std::vector<double>& start,
                                 const std::function<void(double t, double* out)>& phi_fn, int knots,
                                 const std::vector<double>& horizons);

// (eps, -eps log q_hat, action, gap) rows with the MC noise propagated
// through the log (3 SE convention left to the caller).
struct ComparisonRow {
    double eps = 0.0;
    double neg_eps_log_q = 0.0;
    double action = 0.0;
    double gap = 0.0;
    double log_se = 0.0; // one-SE uncertainty of neg_eps_log_q
    bool flagged = false;
};
std::vector<ComparisonRow> asymptotic_comparison(const std::vector<EstimateReport>& mc_sweep,
                                                 double action_value);

} // namespace raresim

#endif
