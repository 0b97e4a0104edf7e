#include "raresim/estimators.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "raresim/errors.hpp"
#include "raresim/hjb.hpp"
#include "raresim/parallel.hpp"

namespace raresim {

namespace {

// Kahan-compensated sum in index order.
double compensated_sum(const std::vector<double>& xs, bool squared) {
    double sum = 0.0, comp = 0.0;
    for (double x : xs) {
        const double term = squared ? x * x : x;
        const double y = term - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum;
}

constexpr double kZ95 = 1.959963984540054;

} // namespace

SampleCampaign run_campaign(const ChainSystem& system, const DomainSpec& domain,
                            const TerminalFunctional& terminal, const std::vector<double>& start,
                            double eps, std::int64_t n_samples, std::uint64_t master_seed,
                            const EstimatorOptions& options, const ControlField* control) {
    if (n_samples < 2) throw ConfigError("estimator: need at least 2 samples");
    if (eps <= 0.0) throw ConfigError("estimator: eps must be positive");

    SampleCampaign campaign;
    campaign.summands.assign(static_cast<std::size_t>(n_samples), 0.0);
    campaign.log_weights.assign(static_cast<std::size_t>(n_samples), 0.0);
    std::atomic<std::int64_t> control_evals{0};
    std::atomic<std::int64_t> clamp_hits{0};

    SimOptions sim;
    sim.dt = options.dt;
    sim.max_steps = options.max_steps;

    parallel_for(n_samples, resolve_workers(options.workers), [&](std::int64_t begin, std::int64_t end) {
        std::int64_t local_evals = 0, local_clamps = 0;
        for (std::int64_t j = begin; j < end; ++j) {
            NoiseStream stream(master_seed, static_cast<std::uint64_t>(j));
            PathSample path =
                simulate_controlled(system, domain, start, eps, sim, stream, control);
            const double phi = terminal.evaluate(path.exited, path.theta, path.exit_state.data());
            const double base = exp_neg_over_eps(phi, eps);
            const double weight = control ? std::exp(path.girsanov_log_weight) : 1.0;
            const double summand = base == 0.0 ? 0.0 : base * weight;
            if (!std::isfinite(summand)) {
                throw NumericalError("estimator: non-finite summand at sample index " + std::to_string(j));
            }
            campaign.summands[static_cast<std::size_t>(j)] = summand;
            campaign.log_weights[static_cast<std::size_t>(j)] = control ? path.girsanov_log_weight : 0.0;
            local_evals += path.control_evals;
            local_clamps += path.clamp_hits;
        }
        control_evals.fetch_add(local_evals, std::memory_order_relaxed);
        clamp_hits.fetch_add(local_clamps, std::memory_order_relaxed);
    });

    campaign.control_evals = control_evals.load();
    campaign.clamp_hits = clamp_hits.load();
    return campaign;
}

EstimateReport make_report(const std::string& kind, double eps, std::uint64_t seed,
                           const std::vector<double>& summands) {
    EstimateReport report;
    report.kind = kind;
    report.eps = eps;
    report.seed = seed;
    report.n_samples = static_cast<std::int64_t>(summands.size());
    const double n = static_cast<double>(report.n_samples);
    report.mean = compensated_sum(summands, false) / n;
    report.second_moment = compensated_sum(summands, true) / n;
    report.variance = std::max(report.second_moment - report.mean * report.mean, 0.0) / n;
    if (report.mean > 0.0) {
        report.delta = report.second_moment / (report.mean * report.mean);
        report.rel_err = std::sqrt(report.variance) / report.mean;
        const double half = kZ95 * std::sqrt(report.variance);
        report.ci_lo = report.mean - half;
        report.ci_hi = report.mean + half;
    } else {
        report.degenerate = true;
        report.delta = std::numeric_limits<double>::quiet_NaN();
        report.rel_err = std::numeric_limits<double>::quiet_NaN();
        report.ci_lo = std::numeric_limits<double>::quiet_NaN();
        report.ci_hi = std::numeric_limits<double>::quiet_NaN();
    }
    return report;
}

EstimateReport plain_mc(const ChainSystem& system, const DomainSpec& domain,
                        const TerminalFunctional& terminal, const std::vector<double>& start,
                        double eps, std::int64_t n_samples, std::uint64_t master_seed,
                        const EstimatorOptions& options) {
    const SampleCampaign campaign =
        run_campaign(system, domain, terminal, start, eps, n_samples, master_seed, options, nullptr);
    return make_report("plain", eps, master_seed, campaign.summands);
}

EstimateReport importance_sampled(const ChainSystem& system, const DomainSpec& domain,
                                  const TerminalFunctional& terminal, const std::vector<double>& start,
                                  double eps, std::int64_t n_samples, std::uint64_t master_seed,
                                  const EstimatorOptions& options, const ControlField& control) {
    const SampleCampaign campaign =
        run_campaign(system, domain, terminal, start, eps, n_samples, master_seed, options, &control);
    EstimateReport report = make_report("importance", eps, master_seed, campaign.summands);
    report.control_evals = campaign.control_evals;
    report.clamp_hits = campaign.clamp_hits;
    return report;
}

double delta_ratio(const EstimateReport& report) {
    if (!(report.mean > 0.0)) {
        throw NumericalError("delta_ratio: degenerate estimator (zero mean)");
    }
    return report.second_moment / (report.mean * report.mean);
}

std::vector<LogEfficiencyEntry> log_efficiency_metric(const std::vector<EstimateReport>& sweep) {
    std::vector<LogEfficiencyEntry> out;
    out.reserve(sweep.size());
    for (const EstimateReport& r : sweep) {
        LogEfficiencyEntry e;
        e.eps = r.eps;
        if (r.degenerate || !(r.delta > 0.0)) {
            e.skipped = true;
            e.neg_eps_log_delta = std::numeric_limits<double>::quiet_NaN();
            e.eps_log_sqrtn_rerr = std::numeric_limits<double>::quiet_NaN();
        } else {
            e.neg_eps_log_delta = -r.eps * std::log(r.delta);
            const double scaled = std::sqrt(static_cast<double>(r.n_samples)) * r.rel_err;
            e.eps_log_sqrtn_rerr =
                scaled > 0.0 ? r.eps * std::log(scaled) : -std::numeric_limits<double>::infinity();
        }
        out.push_back(e);
    }
    return out;
}

std::vector<VaradhanEntry> varadhan_check(const std::vector<EstimateReport>& sweep) {
    std::vector<VaradhanEntry> out;
    out.reserve(sweep.size());
    for (const EstimateReport& r : sweep) {
        VaradhanEntry e;
        e.eps = r.eps;
        if (r.degenerate || !(r.mean > 0.0)) {
            e.flagged = true;
            e.neg_eps_log_mean = std::numeric_limits<double>::quiet_NaN();
            e.neg_eps_log_second_moment = std::numeric_limits<double>::quiet_NaN();
        } else {
            e.neg_eps_log_mean = -r.eps * std::log(r.mean);
            e.neg_eps_log_second_moment =
                r.second_moment > 0.0 ? -r.eps * std::log(r.second_moment)
                                      : std::numeric_limits<double>::infinity();
        }
        out.push_back(e);
    }
    return out;
}

} // namespace raresim
