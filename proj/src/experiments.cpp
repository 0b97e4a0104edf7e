#include "raresim/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "raresim/action.hpp"
#include "raresim/engine.hpp"
#include "raresim/errors.hpp"
#include "raresim/parallel.hpp"
#include "raresim/version.hpp"

namespace raresim {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for checksumming");
    std::uint64_t hash = 14695981039346656037ull;
    char buf[65536];
    while (in) {
        in.read(buf, sizeof(buf));
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 1099511628211ull;
        }
    }
    return hash;
}

void write_reports_csv(const std::string& path, const std::vector<EstimateReport>& reports) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "kind,eps,n,mean,second_moment,variance,rel_err,delta,ci_lo,ci_hi,seed\n";
    for (const EstimateReport& r : reports) {
        out << r.kind << ',' << format_double(r.eps) << ',' << r.n_samples << ','
            << format_double(r.mean) << ',' << format_double(r.second_moment) << ','
            << format_double(r.variance) << ',' << format_double(r.rel_err) << ','
            << format_double(r.delta) << ',' << format_double(r.ci_lo) << ','
            << format_double(r.ci_hi) << ',' << r.seed << '\n';
    }
}

namespace {

void write_field_header(std::ofstream& out, const GridSpec& grid, const std::string& field_name,
                        const std::string& preset, double eps) {
    out << "# raresim field v1\n";
    out << "# field " << field_name << "\n";
    out << "# preset " << preset << "\n";
    out << "# eps " << format_double(eps) << "\n";
    out << "# axes " << grid.axes() << "\n";
    for (int a = 0; a < grid.axes(); ++a) {
        out << "# axis" << a << ' ' << format_double(grid.lo[static_cast<std::size_t>(a)]) << ' '
            << format_double(grid.hi[static_cast<std::size_t>(a)]) << ' '
            << grid.points[static_cast<std::size_t>(a)] << "\n";
    }
    out << "# time " << format_double(grid.t_start) << ' ' << format_double(grid.t_end) << ' '
        << grid.store_slices << "\n";
}

void write_node_index(std::ofstream& out, const GridSpec& grid, std::int64_t node) {
    std::int64_t rem = node;
    for (int a = 0; a < grid.axes(); ++a) {
        const int pts = grid.points[static_cast<std::size_t>(a)];
        out << ',' << rem % pts;
        rem /= pts;
    }
}

struct FieldHeader {
    std::string field_name;
    std::string preset;
    double eps = 0.0;
    GridSpec grid;
    double clamp_cap = 0.0;
    int d = 0;
    int data_lines_start = 0;
};

FieldHeader read_field_header(std::ifstream& in, const std::string& path, int& line_no) {
    FieldHeader h;
    std::string line;
    int axes = -1;
    bool got_time = false;
    while (in.peek() == '#') {
        if (!std::getline(in, line)) break;
        ++line_no;
        std::istringstream ss(line);
        std::string hash, key;
        ss >> hash >> key;
        if (key == "raresim") continue;
        if (key == "field") {
            ss >> h.field_name;
        } else if (key == "preset") {
            ss >> h.preset;
        } else if (key == "eps") {
            ss >> h.eps;
        } else if (key == "axes") {
            ss >> axes;
        } else if (key.rfind("axis", 0) == 0) {
            double lo = 0.0, hi = 0.0;
            int pts = 0;
            ss >> lo >> hi >> pts;
            h.grid.lo.push_back(lo);
            h.grid.hi.push_back(hi);
            h.grid.points.push_back(pts);
        } else if (key == "time") {
            ss >> h.grid.t_start >> h.grid.t_end >> h.grid.store_slices;
            got_time = true;
        } else if (key == "d") {
            ss >> h.d;
        } else if (key == "clamp_cap") {
            ss >> h.clamp_cap;
        } else {
            throw IoError(path + ":" + std::to_string(line_no) + ": unknown field header '" + key + "'");
        }
        if (!ss && key != "raresim") {
            throw IoError(path + ":" + std::to_string(line_no) + ": malformed field header");
        }
    }
    if (axes < 0 || !got_time || h.grid.points.empty() ||
        static_cast<int>(h.grid.points.size()) != axes) {
        throw IoError(path + ": incomplete field header");
    }
    return h;
}

} // namespace

void write_value_field_csv(const std::string& path, const ValueField& field,
                           const std::string& field_name, const std::string& preset) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    write_field_header(out, field.grid, field_name, preset, field.eps);
    out << "t_index";
    for (int a = 0; a < field.grid.axes(); ++a) out << ",i" << a;
    out << ",value\n";
    const std::int64_t nodes = field.grid.node_count();
    for (std::size_t s = 0; s < field.values.size(); ++s) {
        for (std::int64_t i = 0; i < nodes; ++i) {
            out << s;
            write_node_index(out, field.grid, i);
            out << ',' << format_double(field.values[s][static_cast<std::size_t>(i)]) << '\n';
        }
    }
}

void write_control_field_csv(const std::string& path, const ControlField& field,
                             const std::string& preset) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    write_field_header(out, field.grid, "v", preset, field.eps);
    out << "# d " << field.d << "\n";
    out << "# clamp_cap " << format_double(field.clamp_cap) << "\n";
    out << "t_index";
    for (int a = 0; a < field.grid.axes(); ++a) out << ",i" << a;
    for (int c = 0; c < field.d; ++c) out << ",v" << c;
    out << ",clamped\n";
    const std::int64_t nodes = field.grid.node_count();
    for (std::size_t s = 0; s < field.values.size(); ++s) {
        for (std::int64_t i = 0; i < nodes; ++i) {
            out << s;
            write_node_index(out, field.grid, i);
            for (int c = 0; c < field.d; ++c) {
                out << ',' << format_double(field.values[s][static_cast<std::size_t>(i * field.d + c)]);
            }
            out << ',' << static_cast<int>(field.clamped[s][static_cast<std::size_t>(i)]) << '\n';
        }
    }
}

ControlField read_control_field_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open control field '" + path + "'");
    int line_no = 0;
    FieldHeader h = read_field_header(in, path, line_no);
    if (h.field_name != "v") throw IoError(path + ": not a control field dump (field=" + h.field_name + ")");
    if (h.d <= 0) throw IoError(path + ": missing block dimension header");

    ControlField field;
    field.grid = h.grid;
    field.grid.store_slices = h.grid.store_slices;
    field.d = h.d;
    field.eps = h.eps;
    field.clamp_cap = h.clamp_cap;
    const int slices = h.grid.store_slices;
    const std::int64_t nodes = field.grid.node_count();
    field.slice_times.resize(static_cast<std::size_t>(slices));
    for (int j = 0; j < slices; ++j) {
        field.slice_times[static_cast<std::size_t>(j)] =
            h.grid.t_start + (h.grid.t_end - h.grid.t_start) * j / (slices - 1);
    }
    field.values.assign(static_cast<std::size_t>(slices),
                        std::vector<double>(static_cast<std::size_t>(nodes * h.d), 0.0));
    field.clamped.assign(static_cast<std::size_t>(slices),
                         std::vector<std::uint8_t>(static_cast<std::size_t>(nodes), 0));

    std::string line;
    if (!std::getline(in, line)) throw IoError(path + ": missing column header");
    ++line_no;
    const std::int64_t expected_rows = static_cast<std::int64_t>(slices) * nodes;
    std::int64_t rows = 0;
    std::int64_t strides[3] = {1, 1, 1};
    for (int a = 1; a < field.grid.axes(); ++a) {
        strides[a] = strides[a - 1] * field.grid.points[static_cast<std::size_t>(a - 1)];
    }
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        auto next_cell = [&]() {
            if (!std::getline(ss, cell, ',')) {
                throw IoError(path + ":" + std::to_string(line_no) + ": truncated row");
            }
            return cell;
        };
        const int s = std::stoi(next_cell());
        if (s < 0 || s >= slices) throw IoError(path + ":" + std::to_string(line_no) + ": slice index out of range");
        std::int64_t node = 0;
        for (int a = 0; a < field.grid.axes(); ++a) {
            const int idx = std::stoi(next_cell());
            if (idx < 0 || idx >= field.grid.points[static_cast<std::size_t>(a)]) {
                throw IoError(path + ":" + std::to_string(line_no) + ": node index out of range");
            }
            node += idx * strides[a];
        }
        for (int c = 0; c < h.d; ++c) {
            field.values[static_cast<std::size_t>(s)][static_cast<std::size_t>(node * h.d + c)] =
                std::strtod(next_cell().c_str(), nullptr);
        }
        field.clamped[static_cast<std::size_t>(s)][static_cast<std::size_t>(node)] =
            static_cast<std::uint8_t>(std::stoi(next_cell()));
        ++rows;
    }
    if (rows != expected_rows) {
        throw IoError(path + ":" + std::to_string(line_no) + ": truncated control field (got " +
                      std::to_string(rows) + " rows, expected " + std::to_string(expected_rows) + ")");
    }
    return field;
}

ControlField cache_control(const std::string& path, const std::string& preset,
                           const GridSpec& grid, double eps) {
    std::ifstream probe(path);
    if (!probe) throw IoError("cannot open control cache '" + path + "'");
    int line_no = 0;
    FieldHeader h = read_field_header(probe, path, line_no);
    if (h.preset != preset) {
        throw ConfigError("control cache invalid: preset '" + h.preset + "' does not match '" + preset + "'");
    }
    if (h.eps != eps) {
        throw ConfigError("control cache invalid: eps " + format_double(h.eps) +
                          " does not match requested " + format_double(eps));
    }
    probe.close();
    ControlField field = read_control_field_csv(path);
    if (!field.grid.same_layout(grid)) {
        throw ConfigError("control cache invalid: grid metadata does not match the requested grid");
    }
    return field;
}

// --- campaign runner ---------------------------------------------------------

namespace {

class StageClock {
public:
    void record(const std::string& stage, double seconds) { stages_[stage] += seconds; }
    template <typename F>
    auto timed(const std::string& stage, F&& f) {
        const auto begin = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            record(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count());
        } else {
            auto out = f();
            record(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count());
            return out;
        }
    }
    const std::map<std::string, double>& stages() const { return stages_; }

private:
    std::map<std::string, double> stages_;
};

std::vector<int> default_grid_points(int dim) {
    switch (dim) {
        case 1: return {401};
        case 2: return {81, 81};
        default: return {41, 41, 41};
    }
}

std::uint64_t derived_seed(std::uint64_t master, std::size_t eps_index) {
    return master + 1000003ull * static_cast<std::uint64_t>(eps_index);
}

json config_echo(const ExperimentConfig& cfg) {
    json j;
    j["kind"] = cfg.kind;
    j["preset"] = cfg.preset;
    j["eps"] = cfg.eps;
    j["n_samples"] = cfg.n_samples;
    j["dt"] = cfg.dt;
    j["master_seed"] = cfg.master_seed;
    j["out_dir"] = cfg.out_dir;
    j["workers"] = cfg.workers;
    j["dump_paths"] = cfg.dump_paths;
    j["clamp_cap"] = cfg.clamp_cap;
    j["phi_cap"] = cfg.phi_cap;
    j["control_cache"] = cfg.control_cache;
    j["model"] = cfg.model_overrides;
    j["grid"] = {{"points", cfg.grid_points},
                 {"time_steps", cfg.time_steps},
                 {"store_slices", cfg.store_slices}};
    j["action"] = {{"knots", cfg.knots}, {"restarts", cfg.restarts}};
    return j;
}

// Lateral grid nodes where the drift is tangent to the boundary (the
// characteristic set); they sit in the Dirichlet data like every other
// lateral node, which the manifest records.
std::int64_t count_gamma0_nodes(const ModelInstance& model, const GridSpec& grid) {
    const std::int64_t nodes = grid.node_count();
    const int dim = model.system.dim();
    std::int64_t count = 0;
    std::vector<double> x(static_cast<std::size_t>(dim));
    std::vector<double> f(static_cast<std::size_t>(dim));
    std::vector<double> normal(static_cast<std::size_t>(dim));
    for (std::int64_t i = 0; i < nodes; ++i) {
        grid.node_coords(i, x.data());
        const double sd = model.domain.signed_distance(x.data());
        if (sd < 0.0 || sd > 0.05 * model.domain.diameter()) continue;
        full_drift_into(model.system, grid.t_start, x.data(), f.data());
        double norm = 0.0;
        for (int c = 0; c < dim; ++c) {
            const double h = 1e-6 * model.domain.diameter();
            x[static_cast<std::size_t>(c)] += h;
            const double up = model.domain.signed_distance(x.data());
            x[static_cast<std::size_t>(c)] -= 2.0 * h;
            const double dn = model.domain.signed_distance(x.data());
            x[static_cast<std::size_t>(c)] += h;
            normal[static_cast<std::size_t>(c)] = (up - dn) / (2.0 * h);
            norm += normal[static_cast<std::size_t>(c)] * normal[static_cast<std::size_t>(c)];
        }
        norm = std::sqrt(norm);
        if (norm < 1e-12) continue;
        double dot = 0.0;
        for (int c = 0; c < dim; ++c) dot += f[static_cast<std::size_t>(c)] * normal[static_cast<std::size_t>(c)] / norm;
        if (std::abs(dot) < 1e-10) ++count;
    }
    return count;
}

void dump_paths(const ExperimentConfig& cfg, const ModelInstance& model, double eps,
                std::uint64_t seed, const ControlField* control, const fs::path& dir,
                std::vector<std::string>& outputs) {
    fs::create_directories(dir);
    SimOptions sim;
    sim.dt = cfg.dt;
    sim.record_trajectory = true;
    const std::int64_t count = std::min<std::int64_t>(cfg.n_samples, 16);
    for (std::int64_t j = 0; j < count; ++j) {
        NoiseStream stream(seed, static_cast<std::uint64_t>(j));
        PathSample path = simulate_controlled(model.system, model.domain, model.start, eps, sim,
                                              stream, control);
        const fs::path file = dir / ("path_" + std::to_string(j) + ".csv");
        std::ofstream out(file);
        out << "t";
        for (int c = 0; c < model.system.dim(); ++c) out << ",x" << (c + 1);
        out << ",log_weight\n";
        for (std::size_t k = 0; k < path.times.size(); ++k) {
            out << format_double(path.times[k]);
            for (double v : path.states[k]) out << ',' << format_double(v);
            out << ',' << format_double(k + 1 == path.times.size() ? path.girsanov_log_weight : 0.0)
                << '\n';
        }
        outputs.push_back(fs::relative(file, cfg.out_dir).string());
    }
}

} // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const ModelInstance model = make_builtin_model(cfg.preset, cfg.model_overrides);
    const int dim = model.system.dim();

    const fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir);

    RunResult result;
    StageClock clock;
    json manifest;
    manifest["version"] = std::string("raresim ") + kVersion;
    manifest["config"] = config_echo(cfg);

    EstimatorOptions est;
    est.dt = cfg.dt;
    est.workers = cfg.workers;

    const bool needs_grid = cfg.kind == "is" || cfg.kind == "hjb" || cfg.kind == "compare";
    GridSpec grid;
    double clamp_cap = 0.0;
    if (needs_grid) {
        const std::vector<int> points = cfg.grid_points.empty() ? default_grid_points(dim) : cfg.grid_points;
        grid = GridSpec::from_domain(model.domain, points, cfg.time_steps, cfg.store_slices);
        clamp_cap = cfg.clamp_cap > 0.0 ? cfg.clamp_cap : default_clamp_cap(model.system, model.domain, grid);
        manifest["clamp_cap_effective"] = clamp_cap;
        manifest["gamma0_lateral_nodes"] = count_gamma0_nodes(model, grid);
    }
    HjbOptions hjb_options;
    hjb_options.phi_cap = cfg.phi_cap;

    auto emit = [&](const std::string& name) { result.output_files.push_back(name); };
    auto warn = [&](const std::string& message) { result.warnings.push_back(message); };

    auto solve_control = [&](double eps) {
        ValueField J = clock.timed("solve_hjb_eps" + format_double(eps), [&] {
            return solve_hjb(model.system, model.domain, model.terminal, eps, grid, hjb_options);
        });
        return extract_control(J, model.system, clamp_cap);
    };

    auto note_report = [&](const EstimateReport& r) {
        result.reports.push_back(r);
        if (r.degenerate) {
            warn("degenerate estimator (zero mean): kind=" + r.kind + " eps=" + format_double(r.eps));
        }
        if (r.control_evals > 0 && r.clamp_hits > 0) {
            const double frac = static_cast<double>(r.clamp_hits) / static_cast<double>(r.control_evals);
            std::ostringstream msg;
            msg << "clamp cap active on " << format_double(100.0 * frac)
                << "% of control evaluations at eps=" << format_double(r.eps);
            warn(msg.str());
        }
    };

    if (cfg.kind == "mc" || cfg.kind == "sweep") {
        for (std::size_t i = 0; i < cfg.eps.size(); ++i) {
            const double eps = cfg.eps[i];
            const std::uint64_t seed = derived_seed(cfg.master_seed, i);
            EstimateReport r = clock.timed("plain_mc_eps" + format_double(eps), [&] {
                return plain_mc(model.system, model.domain, model.terminal, model.start, eps,
                                cfg.n_samples, seed, est);
            });
            note_report(r);
            if (cfg.dump_paths) {
                dump_paths(cfg, model, eps, seed, nullptr, out_dir / "paths", result.output_files);
            }
        }
        write_reports_csv((out_dir / "reports.csv").string(), result.reports);
        emit("reports.csv");
        if (cfg.kind == "sweep") {
            const auto table = varadhan_check(result.reports);
            std::ofstream out(out_dir / "varadhan.csv", std::ios::trunc);
            out << "eps,neg_eps_log_mean,neg_eps_log_second_moment,flagged\n";
            for (const auto& e : table) {
                out << format_double(e.eps) << ',' << format_double(e.neg_eps_log_mean) << ','
                    << format_double(e.neg_eps_log_second_moment) << ',' << (e.flagged ? 1 : 0) << '\n';
                if (e.flagged) warn("varadhan entry flagged at eps=" + format_double(e.eps));
            }
            emit("varadhan.csv");
        }
    } else if (cfg.kind == "hjb") {
        const double eps = cfg.eps.front();
        ValueField q = clock.timed("solve_exit_bvp", [&] {
            return solve_exit_bvp(model.system, model.domain, eps, grid, hjb_options);
        });
        ValueField J = clock.timed("solve_hjb", [&] {
            return solve_hjb(model.system, model.domain, model.terminal, eps, grid, hjb_options);
        });
        ControlField v = extract_control(J, model.system, clamp_cap);
        write_value_field_csv((out_dir / "field_q.csv").string(), q, "q", cfg.preset);
        write_value_field_csv((out_dir / "field_J.csv").string(), J, "J", cfg.preset);
        write_control_field_csv((out_dir / "field_v.csv").string(), v, cfg.preset);
        emit("field_q.csv");
        emit("field_J.csv");
        emit("field_v.csv");
    } else if (cfg.kind == "is") {
        for (std::size_t i = 0; i < cfg.eps.size(); ++i) {
            const double eps = cfg.eps[i];
            ControlField control = [&] {
                if (!cfg.control_cache.empty()) {
                    return cache_control(cfg.control_cache, cfg.preset, grid, eps);
                }
                return solve_control(eps);
            }();
            if (cfg.eps.size() == 1 && cfg.control_cache.empty()) {
                write_control_field_csv((out_dir / "field_v.csv").string(), control, cfg.preset);
                emit("field_v.csv");
            }
            const std::uint64_t seed = derived_seed(cfg.master_seed, i);
            EstimateReport r = clock.timed("importance_eps" + format_double(eps), [&] {
                return importance_sampled(model.system, model.domain, model.terminal, model.start,
                                          eps, cfg.n_samples, seed, est, control);
            });
            note_report(r);
            if (cfg.dump_paths) {
                dump_paths(cfg, model, eps, seed, &control, out_dir / "paths", result.output_files);
            }
        }
        write_reports_csv((out_dir / "reports.csv").string(), result.reports);
        emit("reports.csv");
    } else if (cfg.kind == "compare") {
        std::ofstream cmp(out_dir / "compare.csv", std::ios::trunc);
        cmp << "eps,delta_plain,delta_is,rel_err_plain,rel_err_is,logeff_plain,logeff_is\n";
        for (std::size_t i = 0; i < cfg.eps.size(); ++i) {
            const double eps = cfg.eps[i];
            const std::uint64_t seed = derived_seed(cfg.master_seed, i);
            EstimateReport plain = clock.timed("plain_mc_eps" + format_double(eps), [&] {
                return plain_mc(model.system, model.domain, model.terminal, model.start, eps,
                                cfg.n_samples, seed, est);
            });
            ControlField control = solve_control(eps);
            EstimateReport is = clock.timed("importance_eps" + format_double(eps), [&] {
                return importance_sampled(model.system, model.domain, model.terminal, model.start,
                                          eps, cfg.n_samples, seed, est, control);
            });
            note_report(plain);
            note_report(is);
            const auto eff = log_efficiency_metric({plain, is});
            cmp << format_double(eps) << ',' << format_double(plain.delta) << ','
                << format_double(is.delta) << ',' << format_double(plain.rel_err) << ','
                << format_double(is.rel_err) << ',' << format_double(eff[0].neg_eps_log_delta) << ','
                << format_double(eff[1].neg_eps_log_delta) << '\n';
        }
        write_reports_csv((out_dir / "reports.csv").string(), result.reports);
        emit("reports.csv");
        emit("compare.csv");
    } else if (cfg.kind == "action") {
        auto [path, value] = clock.timed("minimize_action", [&] {
            MinimizeOptions options;
            options.probe_seed = cfg.master_seed + 77;
            return minimize_action(model.system, model.domain, model.start, cfg.knots, cfg.restarts,
                                   options);
        });
        manifest["action"] = {{"value", value.value},
                              {"grad_norm", value.grad_norm},
                              {"converged", value.converged},
                              {"restart_index", value.restart_index},
                              {"theta", path.theta}};
        if (!value.converged) warn("action minimization did not converge");
        {
            std::ofstream out(out_dir / "action_path.csv", std::ios::trunc);
            out << "t";
            for (int c = 0; c < model.system.d; ++c) out << ",phi" << c;
            for (int c = model.system.d; c < dim; ++c) out << ",x" << (c + 1);
            out << '\n';
            for (std::size_t k = 0; k < path.knot_times.size(); ++k) {
                out << format_double(path.knot_times[k]);
                for (double v : path.phi[k]) out << ',' << format_double(v);
                for (double v : path.slaved[k]) out << ',' << format_double(v);
                out << '\n';
            }
            emit("action_path.csv");
        }
        for (std::size_t i = 0; i < cfg.eps.size(); ++i) {
            const double eps = cfg.eps[i];
            EstimateReport r = clock.timed("plain_mc_eps" + format_double(eps), [&] {
                return plain_mc(model.system, model.domain, model.terminal, model.start, eps,
                                cfg.n_samples, derived_seed(cfg.master_seed, i), est);
            });
            note_report(r);
        }
        write_reports_csv((out_dir / "reports.csv").string(), result.reports);
        emit("reports.csv");
        const auto rows = asymptotic_comparison(result.reports, value.value);
        std::ofstream out(out_dir / "action.csv", std::ios::trunc);
        out << "eps,neg_eps_log_q,action,gap,log_se,flagged\n";
        for (const auto& row : rows) {
            out << format_double(row.eps) << ',' << format_double(row.neg_eps_log_q) << ','
                << format_double(row.action) << ',' << format_double(row.gap) << ','
                << format_double(row.log_se) << ',' << (row.flagged ? 1 : 0) << '\n';
            if (row.flagged) warn("asymptotic comparison flagged at eps=" + format_double(row.eps));
        }
        emit("action.csv");
    }

    manifest["stages"] = clock.stages();
    manifest["warnings"] = result.warnings;
    json outputs = json::array();
    for (const std::string& name : result.output_files) {
        char hex[24];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(fnv1a64_file((out_dir / name).string())));
        outputs.push_back({{"file", name}, {"fnv1a64", hex}});
    }
    manifest["outputs"] = outputs;
    std::ofstream mout(out_dir / "manifest.json", std::ios::trunc);
    mout << manifest.dump(2) << '\n';
    result.output_files.push_back("manifest.json");
    return result;
}

} // namespace raresim
