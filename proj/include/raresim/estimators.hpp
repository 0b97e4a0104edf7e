#ifndef RARESIM_ESTIMATORS_HPP
#define RARESIM_ESTIMATORS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "raresim/engine.hpp"
#include "raresim/model.hpp"

namespace raresim {

class ControlField;

// One (eps, N) estimation result. variance is the estimator variance
// (per-sample variance / N); delta the second moment over the squared mean.
// degenerate marks a zero mean (no successes with an exit indicator), in
// which case rel_err/delta/ci are NaN and sweeps must skip the entry.
struct EstimateReport {
    std::string kind;        // "plain" or "importance"
    double eps = 0.0;
    std::int64_t n_samples = 0;
    double mean = 0.0;
    double second_moment = 0.0;
    double variance = 0.0;
    double rel_err = 0.0;
    double delta = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::uint64_t seed = 0;
    bool degenerate = false;
    // run diagnostics
    std::int64_t control_evals = 0;
    std::int64_t clamp_hits = 0;
};

struct EstimatorOptions {
    double dt = 1e-3;
    int workers = 1;
    std::int64_t max_steps = 200'000'000;
};

// Plain Monte Carlo estimator of E[exp(-Phi/eps)] over N uncontrolled paths.
// For an exit_indicator terminal this is the MC estimate of q^eps.
EstimateReport plain_mc(const ChainSystem& system, const DomainSpec& domain,
                        const TerminalFunctional& terminal, const std::vector<double>& start,
                        double eps, std::int64_t n_samples, std::uint64_t master_seed,
                        const EstimatorOptions& options);

// Importance-sampling estimator over controlled paths with Girsanov weights.
EstimateReport importance_sampled(const ChainSystem& system, const DomainSpec& domain,
                                  const TerminalFunctional& terminal, const std::vector<double>& start,
                                  double eps, std::int64_t n_samples, std::uint64_t master_seed,
                                  const EstimatorOptions& options, const ControlField& control);

// Per-sample summands of the last two estimators are also exposed for the
// paired sample-by-sample checks.
struct SampleCampaign {
    std::vector<double> summands;      // exp(-Phi/eps) (* z for importance)
    std::vector<double> log_weights;   // 0 for plain paths
    std::int64_t control_evals = 0;
    std::int64_t clamp_hits = 0;
};
SampleCampaign run_campaign(const ChainSystem& system, const DomainSpec& domain,
                            const TerminalFunctional& terminal, const std::vector<double>& start,
                            double eps, std::int64_t n_samples, std::uint64_t master_seed,
                            const EstimatorOptions& options, const ControlField* control);

// Assembles a report from per-sample summands (compensated accumulation,
// reduced in index order, independent of worker count).
EstimateReport make_report(const std::string& kind, double eps, std::uint64_t seed,
                           const std::vector<double>& summands);

// second_moment / mean^2. Throws NumericalError for a degenerate (zero-mean)
// report.
double delta_ratio(const EstimateReport& report);

// Log-efficiency diagnostic: entries (eps, -eps log Delta) plus the relative
// error growth proxy eps*log(sqrt(N)*rel_err). Degenerate entries are skipped.
struct LogEfficiencyEntry {
    double eps = 0.0;
    double neg_eps_log_delta = 0.0;
    double eps_log_sqrtn_rerr = 0.0;
    bool skipped = false;
};
std::vector<LogEfficiencyEntry> log_efficiency_metric(const std::vector<EstimateReport>& sweep);

// Varadhan-limit diagnostics for a plain MC sweep: (eps, -eps log mean,
// -eps log second_moment); zero-mean entries are flagged.
struct VaradhanEntry {
    double eps = 0.0;
    double neg_eps_log_mean = 0.0;
    double neg_eps_log_second_moment = 0.0;
    bool flagged = false;
};
std::vector<VaradhanEntry> varadhan_check(const std::vector<EstimateReport>& sweep);

} // namespace raresim

#endif
