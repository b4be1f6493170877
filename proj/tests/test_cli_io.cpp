#include <catch_amalgamated.hpp>

#include <cstdio>
#include <unistd.h>
#include <filesystem>
#include <fstream>

#include "locbayes/locbayes.hpp"
#include "oracles.hpp"

using namespace locbayes;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("locbayes_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace

TEST_CASE("csv ingestion") {
    TempDir dir;
    SECTION("two-point file") {
        std::ofstream(dir.file("a.csv")) << "x,y\n0,1\n1,2\n";
        Dataset d = ingest_csv(dir.file("a.csv"));
        CHECK(d.size() == 2);
        CHECK(d.dim() == 1);
        CHECK(d.xv(1) == 1.0);
        CHECK(d.y[1] == 2.0);
    }
    SECTION("two covariates") {
        std::ofstream(dir.file("b.csv")) << "x1,x2,y\n0,1,2\n3,4,5\n";
        Dataset d = ingest_csv(dir.file("b.csv"));
        CHECK(d.dim() == 2);
        CHECK(d.xv(1, 0) == 3.0);
        CHECK(d.xv(1, 1) == 4.0);
    }
    SECTION("malformed rows name the line") {
        std::ofstream(dir.file("c.csv")) << "x,y\na,b\n";
        try {
            ingest_csv(dir.file("c.csv"));
            FAIL("expected a parse error");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    SECTION("empty and header-only files are errors") {
        std::ofstream(dir.file("d.csv")) << "";
        CHECK_THROWS_AS(ingest_csv(dir.file("d.csv")), std::runtime_error);
        std::ofstream(dir.file("e.csv")) << "x,y\n";
        CHECK_THROWS_AS(ingest_csv(dir.file("e.csv")), std::runtime_error);
    }
    SECTION("non-finite values are rejected") {
        std::ofstream(dir.file("f.csv")) << "x,y\n0,nan\n";
        CHECK_THROWS_AS(ingest_csv(dir.file("f.csv")), std::runtime_error);
    }
    SECTION("round trip reproduces the dataset exactly") {
        Rng rng(3);
        std::vector<double> xs(25), ys(25);
        for (int i = 0; i < 25; ++i) {
            xs[i] = rng.normal(0.0, 1e3);
            ys[i] = rng.normal(0.0, 1e-3);
        }
        Dataset d(xs, ys);
        write_dataset_csv(dir.file("g.csv"), d);
        Dataset back = ingest_csv(dir.file("g.csv"));
        REQUIRE(back.size() == d.size());
        for (int i = 0; i < d.size(); ++i) {
            CHECK(back.xv(i) == d.xv(i)); // exact: 17 significant digits
            CHECK(back.y[i] == d.y[i]);
        }
    }
}

TEST_CASE("config parsing and validation") {
    TempDir dir;
    SECTION("key = value file with overrides") {
        std::ofstream(dir.file("run.cfg")) << "model = normal-linear\n"
                                           << "# comment\n"
                                           << "cells = 12\n"
                                           << "eb = profile-w0\n";
        RunConfig cfg;
        cfg.load_file(dir.file("run.cfg"));
        CHECK(cfg.model == Model::NormalLinear);
        CHECK(cfg.cells == 12);
        cfg.set("cells", "6");
        CHECK(cfg.cells == 6);
        cfg.validate();
        std::string resolved = cfg.resolved();
        CHECK(resolved.find("model = normal-linear") != std::string::npos);
        CHECK(resolved.find("cells = 6") != std::string::npos);
    }
    SECTION("invalid combinations are rejected") {
        RunConfig cfg;
        cfg.model = Model::NormalLevel;
        cfg.eb = "profile-w0";
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
        cfg.model = Model::NormalLinear;
        cfg.eb = "stein";
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
        cfg.eb = "global";
        cfg.hierarchical = "mc";
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
        cfg.eb = "profile-w0";
        cfg.validate();
    }
    SECTION("bandwidth specifications") {
        RunConfig cfg;
        cfg.bandwidth = "fixed:0.25";
        CHECK(cfg.bandwidth_rule().fixed_h == Catch::Approx(0.25));
        cfg.bandwidth = "adaptive:0.9";
        CHECK(cfg.bandwidth_rule().mode == BandwidthRule::Mode::Adaptive);
        CHECK(cfg.bandwidth_rule().level == Catch::Approx(0.9));
        cfg.bandwidth = "nonsense";
        CHECK_THROWS_AS(cfg.bandwidth_rule(), std::invalid_argument);
    }
}

TEST_CASE("run_fit on the level model") {
    Dataset data = simulate_dataset("sine:1,1", 120, 0.3, 11);
    RunConfig cfg;
    cfg.model = Model::NormalLevel;
    cfg.cells = 6;
    cfg.grid_points = 41;

    SECTION("flat prior reproduces the locally weighted mean curve") {
        cfg.eb = "flat";
        FitResult fit = run_fit(cfg, data);
        Kernel k = Kernel::parse(cfg.kernel);
        double h = (data.x_max() - data.x_min()) / cfg.cells;
        for (int i = 0; i < 41; ++i) {
            double x = fit.x_columns[0][i];
            double nw = nw_fit(local_design(data, x, h, k, 0));
            CHECK(fit.estimate[i] == Catch::Approx(nw).margin(1e-12));
            CHECK(fit.prior_weight[i] == 0.0);
        }
    }
    SECTION("bands are ordered around the estimate") {
        cfg.eb = "local";
        FitResult fit = run_fit(cfg, data);
        for (int i = 0; i < 41; ++i) {
            CHECK(fit.lower[i] <= fit.estimate[i] + 1e-12);
            CHECK(fit.upper[i] >= fit.estimate[i] - 1e-12);
            if (fit.sd[i] > 0.0) {
                CHECK(fit.lower[i] < fit.estimate[i]);
                CHECK(fit.upper[i] > fit.estimate[i]);
            }
        }
    }
    SECTION("summary carries scale and cell information") {
        cfg.eb = "local";
        FitResult fit = run_fit(cfg, data);
        CHECK(fit.summary.count("sigma2") == 1);
        CHECK(fit.summary.count("nu") == 1);
        CHECK(fit.summary.at("k") == "6");
    }
    SECTION("adaptive windows vary over the grid and are recorded") {
        cfg.eb = "local";
        cfg.bandwidth = "adaptive:0.8";
        FitResult fit = run_fit(cfg, data);
        REQUIRE(fit.h_used.size() == 41u);
        double hmin = fit.h_used[0], hmax = fit.h_used[0];
        for (double h : fit.h_used) {
            CHECK(h > 0.0);
            hmin = std::min(hmin, h);
            hmax = std::max(hmax, h);
        }
        CHECK(hmax > hmin); // the sine truth forces unequal widths
        CHECK(fit.summary.count("pilot_sigma2") == 1);
        CHECK(fit.summary.at("h_min") == format_g17(hmin));
        CHECK(fit.summary.at("h_max") == format_g17(hmax));
    }
}

TEST_CASE("run_fit writes byte-identical outputs under a fixed seed") {
    TempDir dir;
    Dataset data = simulate_dataset("sine:1,1", 150, 0.4, 5);
    RunConfig cfg;
    cfg.model = Model::NormalLevel;
    cfg.eb = "local";
    cfg.hierarchical = "mc";
    cfg.draws = 50;
    cfg.seed = 7;
    cfg.cells = 6;
    cfg.grid_points = 31;

    cfg.out = dir.file("run1.csv");
    write_fit_outputs(cfg, data, run_fit(cfg, data));
    std::string first = slurp(dir.file("run1.csv"));
    std::string first_summary = slurp(dir.file("run1_summary.txt"));

    cfg.out = dir.file("run2.csv");
    write_fit_outputs(cfg, data, run_fit(cfg, data));
    std::string second = slurp(dir.file("run2.csv"));

    CHECK(first == second);
    CHECK(first_summary.find("model = normal-level") != std::string::npos);
    CHECK(first_summary.find("draws_used = 50") != std::string::npos);
    CHECK(std::filesystem::exists(dir.file("run1_estimate.dat")));
    CHECK(std::filesystem::exists(dir.file("run1_band_lower.dat")));
    CHECK(std::filesystem::exists(dir.file("run1_start.dat")));
    CHECK(std::filesystem::exists(dir.file("run1_data.dat")));
}

TEST_CASE("run_fit over the other models smoke-checks") {
    SECTION("normal-linear with profile precision") {
        Dataset data = simulate_dataset("line:1,2", 200, 0.3, 3);
        RunConfig cfg;
        cfg.model = Model::NormalLinear;
        cfg.eb = "profile-w0";
        cfg.cells = 8;
        cfg.grid_points = 21;
        FitResult fit = run_fit(cfg, data);
        CHECK(fit.slope.size() == 21u);
        // truth is a straight line, the prior should dominate
        for (int i = 5; i < 16; ++i)
            CHECK(std::fabs(fit.estimate[i] - (1.0 + 2.0 * fit.x_columns[0][i])) < 0.2);
    }
    SECTION("normal-mult stays near a good start curve") {
        Dataset data = simulate_dataset("const:4", 150, 0.2, 9);
        RunConfig cfg;
        cfg.model = Model::NormalMult;
        cfg.eb = "local";
        cfg.cells = 5;
        cfg.grid_points = 11;
        FitResult fit = run_fit(cfg, data);
        for (double v : fit.estimate) CHECK(std::fabs(v - 4.0) < 0.5);
    }
    SECTION("poisson-level with hierarchical averaging") {
        Dataset data = simulate_dataset("exp:1,0.5", 250, 0.0, 13, /*poisson=*/true);
        RunConfig cfg;
        cfg.model = Model::PoissonLevel;
        cfg.eb = "local";
        cfg.hierarchical = "mc";
        cfg.draws = 40;
        cfg.seed = 3;
        cfg.cells = 5;
        cfg.grid_points = 15;
        FitResult fit = run_fit(cfg, data);
        for (int i = 0; i < 15; ++i) {
            CHECK(fit.estimate[i] > 0.0);
            CHECK(fit.lower[i] <= fit.estimate[i] + 1e-9);
            CHECK(fit.upper[i] >= fit.estimate[i] - 1e-9);
        }
    }
    SECTION("poisson models reject non-count data") {
        Dataset data = simulate_dataset("sine:1,1", 50, 0.3, 21);
        RunConfig cfg;
        cfg.model = Model::PoissonLevel;
        CHECK_THROWS_AS(run_fit(cfg, data), std::invalid_argument);
    }
    SECTION("poisson-loglinear-local produces finite bands") {
        Dataset data = simulate_dataset("exp:1,1", 200, 0.0, 17, /*poisson=*/true);
        RunConfig cfg;
        cfg.model = Model::PoissonLoglinearLocal;
        cfg.eb = "local";
        cfg.cells = 5;
        cfg.grid_points = 9;
        FitResult fit = run_fit(cfg, data);
        for (int i = 0; i < 9; ++i) CHECK(std::isfinite(fit.estimate[i]));
    }
    SECTION("poisson-mult tracks an exponential truth") {
        Dataset data = simulate_dataset("exp:0.5,1", 300, 0.0, 19, /*poisson=*/true);
        RunConfig cfg;
        cfg.model = Model::PoissonMult;
        cfg.eb = "local";
        cfg.cells = 6;
        cfg.grid_points = 11;
        FitResult fit = run_fit(cfg, data);
        for (int i = 0; i < 11; ++i) {
            double truth = std::exp(0.5 + fit.x_columns[0][i]);
            CHECK(std::fabs(fit.estimate[i] - truth) / truth < 0.5);
        }
    }
    SECTION("multivariate-linear evaluates at the data points") {
        Rng rng(23);
        int n = 120;
        std::vector<double> xs(2 * n), ys(n);
        for (int i = 0; i < n; ++i) {
            double x1 = rng.uniform(0.0, 1.0), x2 = rng.uniform(0.0, 1.0);
            xs[2 * i] = x1;
            xs[2 * i + 1] = x2;
            ys[i] = 1.0 + x1 + 2.0 * x2 + 0.2 * rng.normal();
        }
        Dataset data(xs, 2, ys);
        RunConfig cfg;
        cfg.model = Model::MultivariateLinear;
        cfg.eb = "global";
        cfg.dims = 2;
        cfg.cells = 3;
        FitResult fit = run_fit(cfg, data);
        REQUIRE(fit.estimate.size() == static_cast<std::size_t>(n));
        double err = 0.0;
        for (int i = 0; i < n; ++i)
            err += std::fabs(fit.estimate[i] -
                             (1.0 + data.xv(i, 0) + 2.0 * data.xv(i, 1)));
        CHECK(err / n < 0.25);
        CHECK(fit.x_columns.size() == 2u);
    }
}

TEST_CASE("risk simulation ranks estimators sensibly") {
    RiskScenario sc;
    sc.truth = "const:2";
    sc.m0 = "const:2";
    sc.sigma = 0.0;
    sc.n = 100;
    sc.reps = 4;
    sc.cells = 5;
    auto rows = run_risk_sim(sc);
    REQUIRE(rows.size() == 4u);
    double nw_loss = 0.0, eb_loss = 0.0, stein_loss = 0.0;
    for (const auto& r : rows) {
        if (r.estimator == "nw") nw_loss = r.mean_loss;
        if (r.estimator == "eb-local") eb_loss = r.mean_loss;
        if (r.estimator == "stein") stein_loss = r.mean_loss;
    }
    CHECK(eb_loss <= nw_loss + 1e-12);
    CHECK(stein_loss <= nw_loss + 1e-12);
    CHECK(eb_loss == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("truth parsing") {
    CHECK(parse_truth("zero")(0.3) == 0.0);
    CHECK(parse_truth("const:2.5")(0.9) == 2.5);
    CHECK(parse_truth("line:1,2")(0.5) == Catch::Approx(2.0));
    CHECK(parse_truth("sine:2,1")(0.25) == Catch::Approx(2.0));
    CHECK(parse_truth("step:1|5|9")(0.1) == 1.0);
    CHECK(parse_truth("step:1|5|9")(0.5) == 5.0);
    CHECK(parse_truth("step:1|5|9")(0.99) == 9.0);
    CHECK(parse_truth("kink:4")(0.75) == Catch::Approx(1.0));
    CHECK(parse_truth("exp:0,1")(1.0) == Catch::Approx(std::exp(1.0)));
    CHECK_THROWS_AS(parse_truth("wiggle"), std::invalid_argument);
}
