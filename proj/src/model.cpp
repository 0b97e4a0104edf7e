#include "raresim/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "raresim/errors.hpp"

namespace raresim {

double DomainSpec::diameter() const {
    double sum = 0.0;
    for (std::size_t i = 0; i < box_lo.size(); ++i) {
        const double w = box_hi[i] - box_lo[i];
        sum += w * w;
    }
    return std::sqrt(sum);
}

DomainSpec DomainSpec::centered_box(int dim, double half_width, double t_start, double t_end) {
    if (dim <= 0 || half_width <= 0.0) throw ConfigError("centered_box: dim and half_width must be positive");
    if (!(t_start < t_end)) throw ConfigError("centered_box: need t_start < t_end");
    DomainSpec spec;
    spec.time_start = t_start;
    spec.time_end = t_end;
    const double pad = half_width * (1.0 + 1e-9);
    spec.box_lo.assign(dim, -pad);
    spec.box_hi.assign(dim, pad);
    spec.is_centered_box = true;
    spec.box_dim = dim;
    spec.box_half_width = half_width;
    spec.signed_distance = [dim, half_width](const double* x) {
        double m = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < dim; ++i) m = std::max(m, std::abs(x[i]) - half_width);
        return m;
    };
    return spec;
}

DomainSpec DomainSpec::ball(int dim, double radius, double t_start, double t_end) {
    if (dim <= 0 || radius <= 0.0) throw ConfigError("ball: dim and radius must be positive");
    if (!(t_start < t_end)) throw ConfigError("ball: need t_start < t_end");
    DomainSpec spec;
    spec.time_start = t_start;
    spec.time_end = t_end;
    const double pad = radius * (1.0 + 1e-9) * 1.05;
    spec.box_lo.assign(dim, -pad);
    spec.box_hi.assign(dim, pad);
    spec.signed_distance = [dim, radius](const double* x) {
        double s = 0.0;
        for (int i = 0; i < dim; ++i) s += x[i] * x[i];
        return std::sqrt(s) - radius;
    };
    return spec;
}

double exp_neg_over_eps(double phi, double eps) {
    if (std::isinf(phi)) return 0.0;
    return std::exp(-phi / eps);
}

double TerminalFunctional::evaluate(bool exited, double theta, const double* x) const {
    if (kind == Kind::exit_indicator) {
        return exited ? 0.0 : std::numeric_limits<double>::infinity();
    }
    const double value = phi ? phi(theta, x) : 0.0;
    if (!(value >= 0.0)) throw NumericalError("terminal functional returned a negative or NaN value");
    return value;
}

TerminalFunctional TerminalFunctional::exit_indicator() {
    TerminalFunctional t;
    t.kind = Kind::exit_indicator;
    return t;
}

TerminalFunctional TerminalFunctional::zero() {
    TerminalFunctional t;
    t.kind = Kind::bounded_lipschitz;
    t.phi = [](double, const double*) { return 0.0; };
    t.bound = 0.0;
    return t;
}

TerminalFunctional TerminalFunctional::bounded(std::function<double(double, const double*)> phi,
                                               double bound) {
    TerminalFunctional t;
    t.kind = Kind::bounded_lipschitz;
    t.phi = std::move(phi);
    t.bound = bound;
    return t;
}

void full_drift_into(const ChainSystem& system, double t, const double* x, double* out) {
    for (int i = 0; i < system.n; ++i) {
        double* block = out + static_cast<std::ptrdiff_t>(i) * system.d;
        if (!system.zero_block.empty() && system.zero_block[static_cast<std::size_t>(i)]) {
            std::fill(block, block + system.d, 0.0);
            continue;
        }
        system.drift_blocks[static_cast<std::size_t>(i)](t, x, block);
        for (int c = 0; c < system.d; ++c) {
            if (!std::isfinite(block[c])) {
                throw NumericalError("drift block " + std::to_string(i + 1) +
                                     " evaluated non-finite at t=" + std::to_string(t));
            }
        }
    }
}

std::vector<double> full_drift(const ChainSystem& system, double t, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != system.dim()) throw ConfigError("full_drift: state has wrong length");
    std::vector<double> out(static_cast<std::size_t>(system.dim()));
    full_drift_into(system, t, x.data(), out.data());
    return out;
}

void noise_injection_into(const ChainSystem& system, double t, const double* x,
                          const double* xi, double* out) {
    const int d = system.d;
    double sig[9];
    system.sigma(t, x, sig);
    for (int r = 0; r < d; ++r) {
        double acc = 0.0;
        for (int c = 0; c < d; ++c) acc += sig[r * d + c] * xi[c];
        if (!std::isfinite(acc)) throw NumericalError("sigma evaluated non-finite");
        out[r] = acc;
    }
    std::fill(out + d, out + system.dim(), 0.0);
}

std::vector<double> noise_injection(const ChainSystem& system, double t,
                                    const std::vector<double>& x, const std::vector<double>& xi) {
    if (static_cast<int>(xi.size()) != system.d) throw ConfigError("noise_injection: xi has wrong length");
    if (system.d > 3) throw ConfigError("noise_injection: block dimension d > 3 not supported");
    std::vector<double> out(static_cast<std::size_t>(system.dim()));
    noise_injection_into(system, t, x.data(), xi.data(), out.data());
    return out;
}

EllipticityReport check_ellipticity(const ChainSystem& system,
                                    const std::vector<std::pair<double, std::vector<double>>>& samples) {
    if (samples.empty()) throw ConfigError("check_ellipticity: empty sample list");
    const int d = system.d;
    EllipticityReport report;
    Eigen::MatrixXd sig(d, d);
    double buf[9];
    for (const auto& [t, x] : samples) {
        system.sigma(t, x.data(), buf);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) sig(r, c) = buf[r * d + c];
        const Eigen::MatrixXd a = sig * sig.transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
        report.min_eigenvalue = std::min(report.min_eigenvalue, eig.eigenvalues().minCoeff());
    }
    report.violates_floor = report.min_eigenvalue < system.lambda_floor;
    return report;
}

namespace {

double param_or(const std::map<std::string, double>& overrides, const std::string& key, double fallback) {
    auto it = overrides.find(key);
    return it == overrides.end() ? fallback : it->second;
}

ChainSystem::Sigma identity_sigma(int d) {
    return [d](double, const double*, double* out) {
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) out[r * d + c] = (r == c) ? 1.0 : 0.0;
    };
}

ModelInstance finish_instance(ModelInstance inst, const std::map<std::string, double>& overrides) {
    const int dim = inst.system.dim();
    for (int i = 0; i < dim; ++i) {
        auto it = overrides.find("start_" + std::to_string(i + 1));
        if (it != overrides.end()) inst.start[static_cast<std::size_t>(i)] = it->second;
    }
    if (!inst.domain.inside(inst.start.data())) {
        throw ConfigError("preset " + inst.name + ": start state is not strictly inside the domain");
    }
    return inst;
}

} // namespace

std::vector<std::string> builtin_model_names() {
    return {"free-bm-1", "ou-chain-2x1", "ou-chain-3x1"};
}

ModelInstance make_builtin_model(const std::string& name,
                                 const std::map<std::string, double>& overrides) {
    for (const auto& [key, value] : overrides) {
        (void)value;
        if (key == "half_width" || key == "t_start" || key == "t_end") continue;
        if (key.rfind("start_", 0) == 0) continue;
        throw ConfigError("preset parameter '" + key + "' is not recognized");
    }
    const double half_width = param_or(overrides, "half_width", 1.0);
    const double t_start = param_or(overrides, "t_start", 0.0);
    const double t_end = param_or(overrides, "t_end", 1.0);

    ModelInstance inst;
    inst.name = name;
    inst.params = overrides;
    inst.params["half_width"] = half_width;
    inst.params["t_start"] = t_start;
    inst.params["t_end"] = t_end;
    inst.terminal = TerminalFunctional::exit_indicator();

    if (name == "free-bm-1") {
        ChainSystem sys;
        sys.n = 1;
        sys.d = 1;
        sys.lambda_floor = 0.5;
        sys.autonomous = true;
        sys.constant_sigma = true;
        sys.zero_block = {true};
        sys.drift_blocks.push_back([](double, const double*, double* out) { out[0] = 0.0; });
        sys.sigma = identity_sigma(1);
        inst.system = std::move(sys);
        inst.domain = DomainSpec::centered_box(1, half_width, t_start, t_end);
        inst.start = {0.0};
        return finish_instance(std::move(inst), overrides);
    }
    if (name == "ou-chain-2x1" || name == "ou-chain-3x1") {
        const int n = (name == "ou-chain-2x1") ? 2 : 3;
        ChainSystem sys;
        sys.n = n;
        sys.d = 1;
        sys.lambda_floor = 0.5;
        sys.autonomous = true;
        sys.constant_sigma = true;
        sys.zero_block.assign(static_cast<std::size_t>(n), false);
        sys.drift_blocks.push_back([](double, const double* x, double* out) { out[0] = -x[0]; });
        sys.drift_blocks.push_back([](double, const double* x, double* out) { out[0] = x[0] - x[1]; });
        if (n == 3) {
            sys.drift_blocks.push_back([](double, const double* x, double* out) { out[0] = x[1] - x[2]; });
        }
        sys.sigma = identity_sigma(1);
        inst.system = std::move(sys);
        inst.domain = DomainSpec::centered_box(n, half_width, t_start, t_end);
        inst.start.assign(static_cast<std::size_t>(n), 0.0);
        return finish_instance(std::move(inst), overrides);
    }
    throw LookupError("unknown model preset '" + name + "'");
}

} // namespace raresim
