#ifndef RARESIM_MODEL_HPP
#define RARESIM_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace raresim {

// Chain of n subsystems, each block of dimension d; state lives in R^{n*d}.
// Noise enters block 1 only. Block drifts f_1, f_2 may read the whole state;
// f_i for i >= 3 must only read blocks i-1..n (checked statistically by the
// tests, not enforced at runtime).
struct ChainSystem {
    // out receives d values; x points at the full n*d state.
    using BlockDrift = std::function<void(double t, const double* x, double* out)>;
    // out receives the d x d matrix, row-major.
    using Sigma = std::function<void(double t, const double* x, double* out)>;

    int n = 0;
    int d = 0;
    std::vector<BlockDrift> drift_blocks;
    Sigma sigma;
    double lambda_floor = 0.0;

    // Evaluation hints. Presets are autonomous with constant sigma, which the
    // solvers and the SDE hot loop exploit; both flags are advisory and false
    // is always safe.
    bool autonomous = false;
    bool constant_sigma = false;
    std::vector<bool> zero_block; // drift block identically zero

    int dim() const { return n * d; }
};

// Spatial domain plus horizon. signed_distance is negative strictly inside
// Omega, zero on the boundary, positive outside. The bounding box strictly
// contains Omega and is where solver grids live.
struct DomainSpec {
    std::function<double(const double* x)> signed_distance;
    double time_start = 0.0;
    double time_end = 1.0;
    std::vector<double> box_lo;
    std::vector<double> box_hi;
    // Set by centered_box(); lets hot loops skip the type-erased call.
    bool is_centered_box = false;
    int box_dim = 0;
    double box_half_width = 0.0;

    double horizon() const { return time_end - time_start; }
    double diameter() const;
    bool inside(const double* x) const { return sd(x) < 0.0; }
    double sd(const double* x) const {
        if (is_centered_box) {
            double m = std::abs(x[0]);
            for (int i = 1; i < box_dim; ++i) m = std::max(m, std::abs(x[i]));
            return m - box_half_width;
        }
        return signed_distance(x);
    }

    // Axis-aligned box (-half_width, half_width)^dim. The bounding box pads
    // the closed box by a relative 1e-9 so Omega is strictly inside it while
    // grid end nodes still land on the boundary to machine precision.
    static DomainSpec centered_box(int dim, double half_width, double t_start, double t_end);
    // Euclidean ball of given radius about the origin.
    static DomainSpec ball(int dim, double radius, double t_start, double t_end);
};

// Terminal functional Phi evaluated at the stopping datum (theta, x_theta).
// kind == exit_indicator encodes Phi = 0 on lateral exit before T and
// Phi = +inf otherwise, so exp(-Phi/eps) is the exit indicator and the
// estimated quantity is the exit probability q^eps.
struct TerminalFunctional {
    enum class Kind { bounded_lipschitz, exit_indicator };

    Kind kind = Kind::exit_indicator;
    // Used only for bounded_lipschitz; must be nonnegative and bounded.
    std::function<double(double theta, const double* x)> phi;
    double bound = 0.0; // declared sup of phi for bounded_lipschitz

    // Phi at a stopped path datum. exited means lateral exit strictly before
    // the horizon end. Returns +inf for the non-exit branch of exit_indicator.
    double evaluate(bool exited, double theta, const double* x) const;

    static TerminalFunctional exit_indicator();
    static TerminalFunctional zero(); // Phi == 0 (weight diagnostics)
    static TerminalFunctional bounded(std::function<double(double, const double*)> phi, double bound);
};

// exp(-phi/eps) with the +inf convention mapped to exactly 0.
double exp_neg_over_eps(double phi, double eps);

// A model instance: system + domain + terminal data + start state.
struct ModelInstance {
    std::string name;
    ChainSystem system;
    DomainSpec domain;
    TerminalFunctional terminal;
    std::vector<double> start;
    std::map<std::string, double> params; // resolved preset parameters
};

// --- chain_model operations ----------------------------------------------

// Concatenation of f_1..f_n at (t, x). Throws NumericalError with the block
// index if a block evaluates non-finite.
std::vector<double> full_drift(const ChainSystem& system, double t, const std::vector<double>& x);
void full_drift_into(const ChainSystem& system, double t, const double* x, double* out);

// b * sigma(t,x) * xi: the product placed in block 1, zeros elsewhere.
// sqrt(eps) scaling is the caller's business.
std::vector<double> noise_injection(const ChainSystem& system, double t,
                                    const std::vector<double>& x, const std::vector<double>& xi);
void noise_injection_into(const ChainSystem& system, double t, const double* x,
                          const double* xi, double* out);

// Minimum eigenvalue of sigma sigma^T over the sample list; samples are
// (t, state) pairs. Violation of lambda_floor is reported by the caller.
struct EllipticityReport {
    double min_eigenvalue = std::numeric_limits<double>::infinity();
    bool violates_floor = false;
};
EllipticityReport check_ellipticity(const ChainSystem& system,
                                    const std::vector<std::pair<double, std::vector<double>>>& samples);

// --- preset catalog --------------------------------------------------------

// Named presets: "free-bm-1", "ou-chain-2x1", "ou-chain-3x1".
// Recognized parameter overrides: half_width (L), t_start, t_end,
// start_<i> (per-coordinate start state).
std::vector<std::string> builtin_model_names();
ModelInstance make_builtin_model(const std::string& name,
                                 const std::map<std::string, double>& overrides = {});

} // namespace raresim

#endif
