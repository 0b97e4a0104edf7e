#include <doctest.h>

#include <cmath>

#include "raresim/errors.hpp"
#include "raresim/hjb.hpp"
#include "raresim/model.hpp"
#include "raresim/noise.hpp"

using namespace raresim;

namespace {

// n=1, d=2 test system with a fixed SPD sigma.
ChainSystem planar_system(double s00, double s01, double s10, double s11, double f0, double f1) {
    ChainSystem sys;
    sys.n = 1;
    sys.d = 2;
    sys.lambda_floor = 1e-6;
    sys.autonomous = true;
    sys.constant_sigma = true;
    sys.zero_block = {false};
    sys.drift_blocks.push_back([f0, f1](double, const double*, double* out) {
        out[0] = f0;
        out[1] = f1;
    });
    sys.sigma = [s00, s01, s10, s11](double, const double*, double* out) {
        out[0] = s00; out[1] = s01;
        out[2] = s10; out[3] = s11;
    };
    return sys;
}

} // namespace

TEST_CASE("hamiltonian values") {
    // f1 = 1, a = 1, p = 2 -> <f,p> - a p^2/2 = 2 - 2 = 0
    ChainSystem sys;
    sys.n = 1;
    sys.d = 1;
    sys.autonomous = true;
    sys.constant_sigma = true;
    sys.zero_block = {false};
    sys.drift_blocks.push_back([](double, const double*, double* out) { out[0] = 1.0; });
    sys.sigma = [](double, const double*, double* out) { out[0] = 1.0; };
    const double x = 0.0;
    double p = 2.0;
    CHECK(hamiltonian(sys, 0.0, &x, &p) == doctest::Approx(0.0).epsilon(1e-15));
    p = 0.0;
    CHECK(hamiltonian(sys, 0.0, &x, &p) == 0.0);

    const ChainSystem planar = planar_system(1, 0, 0, 1, 0, 0);
    const double x2[2] = {0.0, 0.0};
    const double p2[2] = {3.0, 4.0};
    CHECK(hamiltonian(planar, 0.0, x2, p2) == doctest::Approx(-12.5).epsilon(1e-15));
}

TEST_CASE("running cost values") {
    ChainSystem sys;
    sys.n = 1;
    sys.d = 1;
    sys.autonomous = true;
    sys.drift_blocks.push_back([](double, const double*, double* out) { out[0] = 0.7; });
    sys.sigma = [](double, const double*, double* out) { out[0] = 1.0; };
    const double x = 0.0;
    double u = 0.7;
    CHECK(running_cost(sys, 0.0, &x, &u) == 0.0);
    sys.drift_blocks[0] = [](double, const double*, double* out) { out[0] = 0.0; };
    u = 2.0;
    CHECK(running_cost(sys, 0.0, &x, &u) == doctest::Approx(2.0).epsilon(1e-15));

    // f = (1,0), a = diag(2, 1/2), u = 0 -> 1/2 * 1/2 = 0.25
    const ChainSystem planar = planar_system(std::sqrt(2.0), 0, 0, std::sqrt(0.5), 1.0, 0.0);
    const double x2[2] = {0.0, 0.0};
    const double u2[2] = {0.0, 0.0};
    CHECK(running_cost(planar, 0.0, x2, u2) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("duality: gap vanishes when the analytic minimizer is a candidate") {
    // 1-d complete-the-square cases
    ChainSystem sys;
    sys.n = 1;
    sys.d = 1;
    sys.autonomous = true;
    sys.drift_blocks.push_back([](double, const double*, double* out) { out[0] = 0.0; });
    sys.sigma = [](double, const double*, double* out) { out[0] = 1.0; };
    const double x = 0.0;
    for (double p : {-1.3, 0.0, 0.8, 2.5}) {
        const std::vector<std::vector<double>> candidates = {{-p}, {0.0}, {1.0}};
        CHECK(duality_gap(sys, 0.0, &x, &p, candidates) < 1e-14);
    }

    // randomized SPD 2-d cases: u* = f1 - a p included
    NoiseStream stream(606, 0);
    for (int trial = 0; trial < 50; ++trial) {
        const double g1 = stream.next_gaussian(), g2 = stream.next_gaussian();
        const double g3 = 0.2 * stream.next_gaussian();
        // sigma lower-triangular with positive diagonal -> a = sigma sigma^T SPD
        const double s00 = 0.5 + std::abs(g1), s11 = 0.5 + std::abs(g2);
        const ChainSystem planar = planar_system(s00, 0.0, g3, s11, stream.next_gaussian(),
                                                 stream.next_gaussian());
        const double x2[2] = {0.0, 0.0};
        const double p2[2] = {stream.next_gaussian(), stream.next_gaussian()};
        double f[2], a[4];
        planar.drift_blocks[0](0.0, x2, f);
        a[0] = s00 * s00 + 0.0;
        a[1] = s00 * g3;
        a[2] = g3 * s00;
        a[3] = g3 * g3 + s11 * s11;
        std::vector<std::vector<double>> candidates;
        candidates.push_back({f[0] - (a[0] * p2[0] + a[1] * p2[1]),
                              f[1] - (a[2] * p2[0] + a[3] * p2[1])});
        for (int i = 0; i < 50; ++i) {
            candidates.push_back({2.0 * stream.next_gaussian(), 2.0 * stream.next_gaussian()});
        }
        const double h = hamiltonian(planar, 0.0, x2, p2);
        CHECK(duality_gap(planar, 0.0, x2, p2, candidates) <= 1e-8 * (1.0 + std::abs(h)));
    }
}

TEST_CASE("duality: grid search refines toward the analytic minimizer") {
    ChainSystem sys;
    sys.n = 1;
    sys.d = 1;
    sys.autonomous = true;
    sys.drift_blocks.push_back([](double, const double*, double* out) { out[0] = 0.4; });
    sys.sigma = [](double, const double*, double* out) { out[0] = 1.2; };
    const double x = 0.0, p = 0.9;
    double prev_gap = 1e100;
    for (int levels = 8; levels <= 512; levels *= 4) {
        std::vector<std::vector<double>> candidates;
        for (int i = 0; i <= levels; ++i) {
            candidates.push_back({-4.0 + 8.0 * i / levels});
        }
        const double gap = duality_gap(sys, 0.0, &x, &p, candidates);
        CHECK(gap <= prev_gap + 1e-15);
        prev_gap = gap;
    }
    CHECK(prev_gap < 1e-3);
}

TEST_CASE("grid construction guards") {
    const DomainSpec box = DomainSpec::centered_box(2, 1.0, 0.0, 1.0);
    CHECK_THROWS_AS((void)GridSpec::from_domain(box, {5}, 0, 65), ConfigError);
    CHECK_THROWS_AS((void)GridSpec::from_domain(box, {2, 5}, 0, 65), ConfigError);
    const DomainSpec box4 = DomainSpec::centered_box(4, 1.0, 0.0, 1.0);
    CHECK_THROWS_AS((void)GridSpec::from_domain(box4, {5, 5, 5, 5}, 0, 65), ConfigError);

    // explicit time_steps below the CFL requirement names the constraint
    const ModelInstance bm = make_builtin_model("free-bm-1");
    const GridSpec bad = GridSpec::from_domain(bm.domain, {101}, 8, 3);
    try {
        (void)solve_exit_bvp(bm.system, bm.domain, 1.0, bad);
        FAIL("expected a CFL configuration error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("CFL") != std::string::npos);
    }
}

TEST_CASE("zero terminal data solves to the zero field") {
    const ModelInstance ou = make_builtin_model("ou-chain-2x1");
    const GridSpec grid = GridSpec::from_domain(ou.domain, {21, 21}, 0, 5);
    const ValueField J = solve_hjb(ou.system, ou.domain, TerminalFunctional::zero(), 0.5, grid);
    for (const auto& slice : J.values) {
        for (double v : slice) CHECK(v == 0.0);
    }
}

TEST_CASE("exit BVP: boundary data and the maximum principle") {
    const ModelInstance bm = make_builtin_model("free-bm-1");
    const GridSpec grid = GridSpec::from_domain(bm.domain, {101}, 0, 5);
    const ValueField q = solve_exit_bvp(bm.system, bm.domain, 1.0, grid);
    // terminal slice: interior exactly 0, lateral exactly 1
    const auto& terminal = q.values.back();
    CHECK(terminal.front() == 1.0);
    CHECK(terminal.back() == 1.0);
    CHECK(terminal[50] == 0.0);
    for (const auto& slice : q.values) {
        for (double v : slice) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        CHECK(slice.front() == 1.0);
        CHECK(slice.back() == 1.0);
    }
    // interior value at (t=0, x=0) near the analytic exit probability
    const double x0 = 0.0;
    CHECK(q.values.front()[50] == doctest::Approx(0.629222570200476).epsilon(2e-3));
    CHECK(q.interpolate(0.0, &x0) == doctest::Approx(q.values.front()[50]).epsilon(1e-12));
}

TEST_CASE("log-transform consistency: exp(-J/eps) tracks q on the grid") {
    const ModelInstance bm = make_builtin_model("free-bm-1");
    const GridSpec grid = GridSpec::from_domain(bm.domain, {201}, 0, 9);
    const double eps = 0.5;
    const ValueField q = solve_exit_bvp(bm.system, bm.domain, eps, grid);
    const ValueField J = solve_hjb(bm.system, bm.domain, bm.terminal, eps, grid);
    double worst = 0.0;
    double xbuf[1];
    for (std::size_t s = 0; s < q.values.size(); ++s) {
        for (std::int64_t i = 0; i < grid.node_count(); ++i) {
            grid.node_coords(i, xbuf);
            if (!bm.domain.inside(xbuf)) continue;
            const double diff = std::abs(std::exp(-J.values[s][static_cast<std::size_t>(i)] / eps) -
                                         q.values[s][static_cast<std::size_t>(i)]);
            worst = std::max(worst, diff);
        }
    }
    CHECK(worst < 0.02);
}

TEST_CASE("grid refinement: first-order self-convergence of J") {
    const ModelInstance bm = make_builtin_model("free-bm-1");
    const double eps = 0.5;
    auto solve_at = [&](int points) {
        const GridSpec grid = GridSpec::from_domain(bm.domain, {points}, 0, 3);
        return solve_hjb(bm.system, bm.domain, bm.terminal, eps, grid);
    };
    const ValueField j1 = solve_at(51);
    const ValueField j2 = solve_at(101);
    const ValueField j3 = solve_at(201);
    double d12 = 0.0, d23 = 0.0;
    for (double x : {-0.45, -0.15, 0.0, 0.3, 0.6}) {
        d12 = std::max(d12, std::abs(j1.interpolate(0.0, &x) - j2.interpolate(0.0, &x)));
        d23 = std::max(d23, std::abs(j2.interpolate(0.0, &x) - j3.interpolate(0.0, &x)));
    }
    const double ratio = d12 / d23;
    CHECK(ratio > 1.5);
    CHECK(ratio < 2.5);
}

TEST_CASE("extract_control") {
    const ModelInstance bm = make_builtin_model("free-bm-1");
    const GridSpec grid = GridSpec::from_domain(bm.domain, {41}, 0, 3);

    // J == 0 -> v == 0
    ValueField zero;
    zero.grid = grid;
    zero.eps = 0.5;
    zero.slice_times = {0.0, 0.5, 1.0};
    zero.values.assign(3, std::vector<double>(41, 0.0));
    ControlField v0 = extract_control(zero, bm.system, 10.0);
    for (const auto& slice : v0.values) {
        for (double v : slice) CHECK(v == 0.0);
    }

    // J linear in x1 with slope g: centered differences are exact, v = -sigma^T g
    ValueField lin = zero;
    const double slope = 0.7;
    for (auto& slice : lin.values) {
        for (int i = 0; i < 41; ++i) slice[static_cast<std::size_t>(i)] = slope * grid.coord(0, i);
    }
    ControlField vlin = extract_control(lin, bm.system, 10.0);
    for (const auto& slice : vlin.values) {
        for (int i = 1; i < 40; ++i) {
            CHECK(slice[static_cast<std::size_t>(i)] == doctest::Approx(-slope).epsilon(1e-12));
        }
    }

    // sigma = 2, J_x = 0.5 -> v = -1
    ChainSystem wide;
    wide.n = 1;
    wide.d = 1;
    wide.autonomous = true;
    wide.constant_sigma = true;
    wide.zero_block = {true};
    wide.drift_blocks.push_back([](double, const double*, double* out) { out[0] = 0.0; });
    wide.sigma = [](double, const double*, double* out) { out[0] = 2.0; };
    ValueField half = zero;
    for (auto& slice : half.values) {
        for (int i = 0; i < 41; ++i) slice[static_cast<std::size_t>(i)] = 0.5 * grid.coord(0, i);
    }
    ControlField vhalf = extract_control(half, wide, 10.0);
    CHECK(vhalf.values[0][20] == doctest::Approx(-1.0).epsilon(1e-12));

    // tight cap: clamped nodes flagged, norms bounded, evaluate reports the cell
    ControlField vclamped = extract_control(lin, bm.system, 0.3);
    bool any_clamped = false;
    for (std::size_t s = 0; s < vclamped.values.size(); ++s) {
        for (int i = 0; i < 41; ++i) {
            CHECK(std::abs(vclamped.values[s][static_cast<std::size_t>(i)]) <= 0.3 + 1e-15);
            any_clamped |= vclamped.clamped[s][static_cast<std::size_t>(i)] != 0;
        }
    }
    CHECK(any_clamped);
    double vq[1];
    CHECK(vclamped.evaluate(0.0, &grid.lo[0], vq));
}

TEST_CASE("default clamp cap") {
    const ModelInstance ou = make_builtin_model("ou-chain-2x1");
    const GridSpec grid2 = GridSpec::from_domain(ou.domain, {21, 21}, 0, 3);
    CHECK(default_clamp_cap(ou.system, ou.domain, grid2) == doctest::Approx(10.0).epsilon(1e-6));
    const ModelInstance bm = make_builtin_model("free-bm-1");
    const GridSpec grid1 = GridSpec::from_domain(bm.domain, {21}, 0, 3);
    CHECK(default_clamp_cap(bm.system, bm.domain, grid1) == doctest::Approx(10.0).epsilon(1e-6));
}

TEST_CASE("solver guards: ellipticity floor and autonomy") {
    ModelInstance bm = make_builtin_model("free-bm-1");
    ChainSystem weak = bm.system;
    weak.lambda_floor = 0.5;
    weak.sigma = [](double, const double*, double* out) { out[0] = 0.1; };
    const GridSpec grid = GridSpec::from_domain(bm.domain, {21}, 0, 3);
    CHECK_THROWS_AS((void)solve_exit_bvp(weak, bm.domain, 1.0, grid), NumericalError);

    ChainSystem nonauto = bm.system;
    nonauto.autonomous = false;
    CHECK_THROWS_AS((void)solve_exit_bvp(nonauto, bm.domain, 1.0, grid), ConfigError);
}
