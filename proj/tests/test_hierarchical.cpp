#include <catch_amalgamated.hpp>

#include "locbayes/hierarchical.hpp"
#include "locbayes/rng.hpp"
#include "oracles.hpp"

using namespace locbayes;

namespace {

struct LevelFixture {
    Dataset data;
    std::vector<LevelCellSummary> cells;
    SigmaInference sigma;
    std::vector<LevelGridPoint> grid;
    StartCurvePosterior start;

    static LevelFixture make(std::uint64_t seed, double cov_scale = 1.0) {
        Rng rng(seed);
        int n = 200;
        std::vector<double> xs(n), ys(n);
        for (int i = 0; i < n; ++i) {
            xs[i] = (i + 0.5) / n;
            ys[i] = 1.0 + 2.0 * xs[i] + 0.5 * std::sin(8.0 * xs[i]) + 0.4 * rng.normal();
        }
        Dataset data(xs, ys);
        Kernel u = Kernel::uniform();
        CellPartition part = partition_cells(data, 8);
        auto cells = level_cell_summaries(data, part, u);
        SigmaInference sigma = pooled_sigma(cells);
        std::vector<LevelGridPoint> grid;
        for (double x : {0.1, 0.3, 0.5, 0.7, 0.9}) {
            LocalDesign d = local_design(data, x, 0.125, u, 0);
            grid.push_back(LevelGridPoint{x, d.s0(), nw_fit(d)});
        }
        StartCurvePosterior start =
            fit_start_curve(data, LinearBasis::polynomial(1, 0.5));
        start.cov *= cov_scale;
        return LevelFixture{data, cells, sigma, grid, start};
    }
};

} // namespace

TEST_CASE("hierarchical level estimate") {
    LevelFixture fx = LevelFixture::make(7);

    SECTION("a point-mass start posterior collapses to the plug-in exactly") {
        HierarchicalConfig plug;
        plug.plugin_only = true;
        LevelFixture degenerate = fx;
        degenerate.start.cov.setZero();
        HierarchicalCurve plugin = final_level_estimate(
            plug, degenerate.start, degenerate.cells, degenerate.sigma,
            degenerate.grid, LevelEbMode::Local);
        HierarchicalConfig mc;
        mc.draws = 100;
        mc.seed = 5;
        HierarchicalCurve averaged = final_level_estimate(
            mc, degenerate.start, degenerate.cells, degenerate.sigma,
            degenerate.grid, LevelEbMode::Local);
        for (std::size_t i = 0; i < plugin.estimate.size(); ++i) {
            CHECK(averaged.estimate[i] == plugin.estimate[i]); // bit identical
            CHECK(averaged.mc_se[i] == 0.0);
        }
    }

    SECTION("one draw equals the estimate at that draw") {
        HierarchicalConfig one;
        one.draws = 1;
        one.seed = 11;
        HierarchicalCurve c = final_level_estimate(one, fx.start, fx.cells, fx.sigma,
                                                   fx.grid, LevelEbMode::Local);
        VectorXd xi = sample_start_curves(fx.start, 1, 11)[0];
        for (std::size_t i = 0; i < fx.grid.size(); ++i) {
            double m0x = fx.start.basis.value(xi, fx.grid[i].x);
            LevelEbResult r = eb_level_estimate(fx.sigma.sigma2, fx.grid[i].s0,
                                                fx.grid[i].m_tilde, m0x);
            CHECK(c.estimate[i] == Catch::Approx(r.estimate).margin(1e-14));
        }
        CHECK(c.draws_used == 1);
    }

    SECTION("the average lies inside the per-draw envelope") {
        HierarchicalConfig mc;
        mc.draws = 25;
        mc.seed = 3;
        HierarchicalCurve c = final_level_estimate(mc, fx.start, fx.cells, fx.sigma,
                                                   fx.grid, LevelEbMode::Global);
        auto draws = sample_start_curves(fx.start, 25, 3);
        for (std::size_t i = 0; i < fx.grid.size(); ++i) {
            double lo = 1e300, hi = -1e300;
            for (const auto& xi : draws) {
                std::vector<double> m0_mid(fx.cells.size());
                for (std::size_t j = 0; j < fx.cells.size(); ++j)
                    m0_mid[j] = fx.start.basis.value(xi, fx.cells[j].x0);
                double w = global_shrink_weight(fx.sigma.sigma2, fx.cells, m0_mid);
                double m0x = fx.start.basis.value(xi, fx.grid[i].x);
                double est = w * m0x + (1.0 - w) * fx.grid[i].m_tilde;
                lo = std::min(lo, est);
                hi = std::max(hi, est);
            }
            CHECK(c.estimate[i] >= lo - 1e-12);
            CHECK(c.estimate[i] <= hi + 1e-12);
        }
    }

    SECTION("deterministic for a fixed configuration") {
        HierarchicalConfig mc;
        mc.draws = 40;
        mc.seed = 21;
        HierarchicalCurve a = final_level_estimate(mc, fx.start, fx.cells, fx.sigma,
                                                   fx.grid, LevelEbMode::Local);
        HierarchicalCurve b = final_level_estimate(mc, fx.start, fx.cells, fx.sigma,
                                                   fx.grid, LevelEbMode::Local);
        for (std::size_t i = 0; i < a.estimate.size(); ++i)
            CHECK(a.estimate[i] == b.estimate[i]);
    }

    SECTION("shrinking the start posterior approaches the plug-in curve") {
        HierarchicalConfig plug;
        plug.plugin_only = true;
        HierarchicalCurve plugin = final_level_estimate(
            plug, fx.start, fx.cells, fx.sigma, fx.grid, LevelEbMode::Local);
        double prev = 1e300;
        for (double scale : {1e-1, 1e-2, 1e-3, 1e-4}) {
            LevelFixture sf = fx;
            sf.start.cov = fx.start.cov * scale;
            HierarchicalConfig mc;
            mc.draws = 50;
            mc.seed = 9;
            HierarchicalCurve c = final_level_estimate(mc, sf.start, sf.cells, sf.sigma,
                                                       sf.grid, LevelEbMode::Local);
            double dist = 0.0;
            for (std::size_t i = 0; i < c.estimate.size(); ++i)
                dist = std::max(dist, std::fabs(c.estimate[i] - plugin.estimate[i]));
            CHECK(dist < prev + 1e-12);
            prev = dist;
        }
        CHECK(prev < 1e-4);
    }

    SECTION("failing inner estimates abort the run") {
        LevelFixture broken = fx;
        broken.grid[2].s0 = 0.0; // every draw fails at this grid point
        HierarchicalConfig mc;
        mc.draws = 10;
        mc.seed = 1;
        CHECK_THROWS_AS(final_level_estimate(mc, broken.start, broken.cells,
                                             broken.sigma, broken.grid,
                                             LevelEbMode::Local),
                        std::runtime_error);
    }
}

TEST_CASE("hierarchical linear estimate") {
    Rng rng(77);
    int n = 240;
    std::vector<double> xs(n), ys(n);
    for (int i = 0; i < n; ++i) {
        xs[i] = (i + 0.5) / n;
        ys[i] = 0.5 + 1.5 * xs[i] + 0.3 * rng.normal();
    }
    Dataset data(xs, ys);
    Kernel u = Kernel::uniform();
    CellPartition part = partition_cells(data, 8);
    auto cells = linear_cell_summaries(data, part, u);
    SigmaInference sigma = pooled_sigma_linear(cells);
    LinearBasis basis = LinearBasis::polynomial(1, 0.5);
    StartCurvePosterior start = fit_start_curve(data, basis);
    MatrixXd ginv = basis_gram_inverse(data, basis);

    std::vector<Matrix2d> a_cells(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j)
        a_cells[j] = basis_covariance_shape(basis.z(cells[j].x0), basis.dz(cells[j].x0),
                                            ginv)
                         .inverse();
    std::vector<LinearGridPoint> grid;
    for (double x : {0.25, 0.5, 0.75}) {
        LocalDesign d = local_design(data, x, 0.125, u, 1);
        LocalFitResult fit = ll_fit(d);
        LinearGridPoint g;
        g.x = x;
        g.s = d.moment_matrix();
        g.fit = Vector2d(fit.coef[0], fit.coef[1]);
        g.a = basis_covariance_shape(basis.z(x), basis.dz(x), ginv).inverse();
        grid.push_back(g);
    }

    SECTION("point mass start posterior equals the plug-in") {
        StartCurvePosterior degenerate = start;
        degenerate.cov.setZero();
        HierarchicalConfig plug;
        plug.plugin_only = true;
        HierarchicalCurve a =
            final_linear_estimate(plug, degenerate, cells, a_cells, sigma, grid);
        HierarchicalConfig mc;
        mc.draws = 60;
        mc.seed = 13;
        HierarchicalCurve b =
            final_linear_estimate(mc, degenerate, cells, a_cells, sigma, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            CHECK(b.estimate[i] == a.estimate[i]);
            CHECK(b.slope[i] == a.slope[i]);
        }
    }

    SECTION("an awful start curve drives the answer to the local linear fit") {
        StartCurvePosterior bad = start;
        bad.xi = VectorXd(2);
        bad.xi << 500.0, -900.0; // nowhere near the data
        bad.cov = MatrixXd::Zero(2, 2);
        HierarchicalConfig plug;
        plug.plugin_only = true;
        HierarchicalCurve c = final_linear_estimate(plug, bad, cells, a_cells, sigma, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            CHECK(c.estimate[i] == Catch::Approx(grid[i].fit[0]).margin(1e-3));
            CHECK(c.prior_weight[i] < 1e-4);
        }
    }

    SECTION("averaged curve stays within the draw envelope") {
        HierarchicalConfig mc;
        mc.draws = 30;
        mc.seed = 4;
        HierarchicalCurve c = final_linear_estimate(mc, start, cells, a_cells, sigma, grid);
        CHECK(c.draws_used == 30);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            CHECK(std::isfinite(c.estimate[i]));
            CHECK(c.prior_weight[i] >= -1e-9);
            CHECK(c.prior_weight[i] <= 1.0 + 1e-9);
        }
    }
}

TEST_CASE("hierarchical poisson estimate") {
    Rng rng(15);
    int n = 300;
    std::vector<double> xs(n), ys(n);
    for (int i = 0; i < n; ++i) {
        xs[i] = (i + 0.5) / n;
        ys[i] = static_cast<double>(rng.poisson(std::exp(1.0 + 0.5 * xs[i])));
    }
    Dataset data(xs, ys);
    Kernel u = Kernel::uniform();
    CellPartition part = partition_cells(data, 6);
    StartCurvePosterior start =
        loglinear_mle_and_cov(data, LinearBasis::polynomial(1, 0.5));
    std::vector<PoissonCellSummary> cells(part.count());
    for (int j = 0; j < part.count(); ++j) {
        cells[j].x0 = part.midpoints[j];
        cells[j].stats = poisson_local_stats(data, part.midpoints[j], part.widths[j], u);
        cells[j].valid = cells[j].stats.s0 > 0.0;
    }
    std::vector<PoissonGridPoint> grid;
    for (double x : {0.2, 0.5, 0.8})
        grid.push_back(PoissonGridPoint{x, poisson_local_stats(data, x, 1.0 / 6, u)});

    SECTION("point mass start posterior equals the plug-in") {
        StartCurvePosterior degenerate = start;
        degenerate.cov.setZero();
        HierarchicalConfig plug;
        plug.plugin_only = true;
        HierarchicalCurve a =
            final_poisson_estimate(plug, degenerate, cells, grid, false);
        HierarchicalConfig mc;
        mc.draws = 50;
        mc.seed = 23;
        HierarchicalCurve b = final_poisson_estimate(mc, degenerate, cells, grid, false);
        for (std::size_t i = 0; i < grid.size(); ++i)
            CHECK(a.estimate[i] == b.estimate[i]);
    }

    SECTION("monte carlo average is stable in the number of draws") {
        HierarchicalConfig m100;
        m100.draws = 100;
        m100.seed = 31;
        HierarchicalConfig m200;
        m200.draws = 200;
        m200.seed = 32;
        HierarchicalCurve a = final_poisson_estimate(m100, start, cells, grid, false);
        HierarchicalCurve b = final_poisson_estimate(m200, start, cells, grid, false);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            double se = std::sqrt(a.mc_se[i] * a.mc_se[i] + b.mc_se[i] * b.mc_se[i]);
            CHECK(std::fabs(a.estimate[i] - b.estimate[i]) < 3.0 * se + 1e-12);
        }
    }
}
