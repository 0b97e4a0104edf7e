#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "raresim/config.hpp"
#include "raresim/errors.hpp"
#include "raresim/experiments.hpp"
#include "raresim/hjb.hpp"
#include "raresim/model.hpp"

using namespace raresim;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "raresim_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

constexpr const char* kSampleConfig = R"(# sample experiment
kind = "mc"
preset = "free-bm-1"
eps = [1.0, 0.5]
n_samples = 200
dt = 0.01          # coarse but fine for a smoke run
master_seed = 99
workers = 1

[model]
half_width = 1.0
t_end = 1.0

[grid]
points = [21]
store_slices = 3

[action]
knots = 12
restarts = 2
)";

} // namespace

TEST_CASE("config parsing") {
    const ExperimentConfig cfg = ExperimentConfig::from_string(kSampleConfig, "sample");
    CHECK(cfg.kind == "mc");
    CHECK(cfg.preset == "free-bm-1");
    CHECK(cfg.eps == std::vector<double>{1.0, 0.5});
    CHECK(cfg.n_samples == 200);
    CHECK(cfg.dt == 0.01);
    CHECK(cfg.master_seed == 99);
    CHECK(cfg.model_overrides.at("half_width") == 1.0);
    CHECK(cfg.model_overrides.at("t_end") == 1.0);
    CHECK(cfg.grid_points == std::vector<int>{21});
    CHECK(cfg.store_slices == 3);
    CHECK(cfg.knots == 12);
    cfg.validate();
}

TEST_CASE("config errors name the offending field or line") {
    auto expect_error = [](const std::string& text, const std::string& needle) {
        try {
            ExperimentConfig cfg = ExperimentConfig::from_string(text, "cfg");
            cfg.validate();
            FAIL("expected a ConfigError for: ", text);
        } catch (const ConfigError& e) {
            INFO(e.what());
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_error("kind = \"mc\"\npreset = \"free-bm-1\"\neps = [-1.0]\n", "eps[0]");
    expect_error("kind = \"mc\"\npreset = \"free-bm-1\"\neps = [0.5]\nn_samples = 1\n", "n_samples");
    expect_error("kind = \"bogus\"\npreset = \"free-bm-1\"\neps = [0.5]\n", "kind");
    expect_error("kind = \"mc\"\neps = [0.5]\n", "preset");
    expect_error("mystery = 3\nkind = \"mc\"\npreset = \"free-bm-1\"\neps = [0.5]\n",
                 "cfg:1: unknown field 'mystery'");
    expect_error("kind = \"mc\"\npreset = \"free-bm-1\"\neps = [0.5]\ndt = \"fast\"\n",
                 "'dt' must be a number");
    expect_error("kind = \"mc\"\nkind = \"is\"\npreset = \"p\"\neps = [0.5]\n", "duplicate key");
    CHECK_THROWS_AS((void)ExperimentConfig::from_string("just nonsense\n", "cfg"), ConfigError);
    CHECK_THROWS_AS((void)ExperimentConfig::from_file("/nonexistent/raresim.toml"), IoError);
}

TEST_CASE("mc run writes reports and a checksummed manifest") {
    const fs::path dir = fresh_dir("mc_smoke");
    ExperimentConfig cfg = ExperimentConfig::from_string(kSampleConfig, "sample");
    cfg.out_dir = dir.string();
    const RunResult result = run_experiment(cfg);
    CHECK(fs::exists(dir / "reports.csv"));
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(result.reports.size() == 2);

    const std::string reports = slurp(dir / "reports.csv");
    CHECK(reports.rfind("kind,eps,n,mean,second_moment,variance,rel_err,delta,ci_lo,ci_hi,seed\n", 0) == 0);
    CHECK(std::count(reports.begin(), reports.end(), '\n') == 3);

    const std::string manifest = slurp(dir / "manifest.json");
    char hex[24];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64_file((dir / "reports.csv").string())));
    CHECK(manifest.find(hex) != std::string::npos);
}

TEST_CASE("sweep run emits the varadhan table") {
    const fs::path dir = fresh_dir("sweep_smoke");
    ExperimentConfig cfg = ExperimentConfig::from_string(kSampleConfig, "sample");
    cfg.kind = "sweep";
    cfg.out_dir = dir.string();
    run_experiment(cfg);
    const std::string table = slurp(dir / "varadhan.csv");
    CHECK(table.rfind("eps,neg_eps_log_mean,neg_eps_log_second_moment,flagged\n", 0) == 0);
    CHECK(std::count(table.begin(), table.end(), '\n') == 3);
}

TEST_CASE("hjb run dumps the three fields") {
    const fs::path dir = fresh_dir("hjb_smoke");
    ExperimentConfig cfg;
    cfg.kind = "hjb";
    cfg.preset = "free-bm-1";
    cfg.eps = {0.5};
    cfg.grid_points = {41};
    cfg.store_slices = 3;
    cfg.out_dir = dir.string();
    run_experiment(cfg);
    for (const char* name : {"field_J.csv", "field_q.csv", "field_v.csv"}) {
        CHECK(fs::exists(dir / name));
    }
    const std::string field = slurp(dir / "field_q.csv");
    CHECK(field.rfind("# raresim field v1\n", 0) == 0);
    CHECK(field.find("# eps 0.5\n") != std::string::npos);
}

TEST_CASE("control cache round-trips bit-exactly and validates metadata") {
    const ModelInstance bm = make_builtin_model("free-bm-1");
    const GridSpec grid = GridSpec::from_domain(bm.domain, {31}, 0, 4);
    const ValueField J = solve_hjb(bm.system, bm.domain, bm.terminal, 0.5, grid);
    const ControlField v = extract_control(J, bm.system, 10.0);

    const fs::path dir = fresh_dir("cache");
    const std::string path = (dir / "field_v.csv").string();
    write_control_field_csv(path, v, "free-bm-1");

    const ControlField back = cache_control(path, "free-bm-1", grid, 0.5);
    REQUIRE(back.values.size() == v.values.size());
    for (std::size_t s = 0; s < v.values.size(); ++s) {
        CHECK(back.values[s] == v.values[s]); // %.17g round-trip is exact
        CHECK(back.clamped[s] == v.clamped[s]);
    }
    CHECK(back.clamp_cap == v.clamp_cap);

    CHECK_THROWS_AS((void)cache_control(path, "free-bm-1", grid, 0.25), ConfigError);
    CHECK_THROWS_AS((void)cache_control(path, "ou-chain-2x1", grid, 0.5), ConfigError);
    const GridSpec other = GridSpec::from_domain(bm.domain, {21}, 0, 4);
    CHECK_THROWS_AS((void)cache_control(path, "free-bm-1", other, 0.5), ConfigError);

    // truncated file: parse error carrying a line count
    const std::string full = slurp(path);
    const std::string chopped = full.substr(0, full.size() * 2 / 3);
    const std::string broken = (dir / "broken.csv").string();
    std::ofstream(broken, std::ios::trunc) << chopped;
    try {
        (void)read_control_field_csv(broken);
        FAIL("expected IoError for the truncated dump");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("truncated") != std::string::npos);
        CHECK(std::string(e.what()).find(":") != std::string::npos);
    }
}

TEST_CASE("compare campaign is byte-deterministic across worker counts") {
    auto run_with_workers = [&](int workers, const std::string& name) {
        const fs::path dir = fresh_dir(name);
        ExperimentConfig cfg;
        cfg.kind = "compare";
        cfg.preset = "ou-chain-2x1";
        cfg.eps = {0.5};
        cfg.n_samples = 1500;
        cfg.dt = 2e-3;
        cfg.master_seed = 31337;
        cfg.workers = workers;
        cfg.grid_points = {21, 21};
        cfg.store_slices = 5;
        cfg.out_dir = dir.string();
        run_experiment(cfg);
        return slurp(dir / "reports.csv");
    };
    const std::string one = run_with_workers(1, "det_w1");
    const std::string four = run_with_workers(4, "det_w4");
    CHECK(one == four);
    CHECK(one.find("importance") != std::string::npos);
}

TEST_CASE("action campaign emits the comparison table and the minimizer path") {
    const fs::path dir = fresh_dir("action_smoke");
    ExperimentConfig cfg;
    cfg.kind = "action";
    cfg.preset = "free-bm-1";
    cfg.eps = {1.0};
    cfg.n_samples = 500;
    cfg.dt = 0.005;
    cfg.knots = 12;
    cfg.restarts = 2;
    cfg.out_dir = dir.string();
    run_experiment(cfg);
    CHECK(fs::exists(dir / "action.csv"));
    CHECK(fs::exists(dir / "action_path.csv"));
    CHECK(fs::exists(dir / "reports.csv"));
    const std::string table = slurp(dir / "action.csv");
    CHECK(table.rfind("eps,neg_eps_log_q,action,gap,log_se,flagged\n", 0) == 0);
}

TEST_CASE("dump_paths writes per-path trajectories") {
    const fs::path dir = fresh_dir("dumps");
    ExperimentConfig cfg = ExperimentConfig::from_string(kSampleConfig, "sample");
    cfg.out_dir = dir.string();
    cfg.eps = {1.0};
    cfg.n_samples = 8;
    cfg.dump_paths = true;
    run_experiment(cfg);
    CHECK(fs::exists(dir / "paths" / "path_0.csv"));
    const std::string path0 = slurp(dir / "paths" / "path_0.csv");
    CHECK(path0.rfind("t,x1,log_weight\n", 0) == 0);
}
