#pragma once

// Orchestration: turn a RunConfig plus a dataset into estimate tables,
// credible bands and summary files; run risk simulations comparing the
// estimators under a known truth; produce adaptive bandwidth tables; and
// simulate datasets for the above.

#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "bandwidth.hpp"
#include "config.hpp"
#include "csv_io.hpp"
#include "hierarchical.hpp"
#include "level_model.hpp"
#include "linear_model.hpp"
#include "mult_correction.hpp"
#include "multivariate.hpp"
#include "poisson_model.hpp"
#include "special.hpp"
#include "start_curve.hpp"
#include "util.hpp"

namespace locbayes {

/// Resolve a start-curve specification against the data:
/// linear | cubic | poly:<q> | powers:e1,e2,... | spline(max_knots=J).
inline LinearBasis parse_basis(const std::string& spec, const Dataset& data) {
    double center = 0.0;
    for (int i = 0; i < data.size(); ++i) center += data.xv(i);
    center /= data.size();
    if (spec == "constant") return LinearBasis::polynomial(0, center);
    if (spec == "linear") return LinearBasis::polynomial(1, center);
    if (spec == "cubic") return LinearBasis::polynomial(3, center);
    if (spec.rfind("poly:", 0) == 0)
        return LinearBasis::polynomial(std::stoi(spec.substr(5)), center);
    if (spec.rfind("powers:", 0) == 0) {
        std::vector<int> exps;
        std::istringstream is(spec.substr(7));
        std::string tok;
        while (std::getline(is, tok, ',')) exps.push_back(std::stoi(tok));
        return LinearBasis::powers(exps, center);
    }
    if (spec.rfind("spline(max_knots=", 0) == 0 && spec.back() == ')') {
        int j = std::stoi(spec.substr(17, spec.size() - 18));
        return delete_knot_spline_basis(data, j);
    }
    throw std::invalid_argument("unknown start curve \"" + spec + "\"");
}

/// Named truth functions for simulations:
/// zero | const:v | line:a,b | sine:amp,freq | quad:a | kink:slope |
/// step:v1|v2|... (levels over equal slices of [0,1]).
inline std::function<double(double)> parse_truth(const std::string& spec) {
    auto args = [](const std::string& s, char sep) {
        std::vector<double> out;
        std::istringstream is(s);
        std::string tok;
        while (std::getline(is, tok, sep)) out.push_back(std::stod(tok));
        return out;
    };
    if (spec == "zero") return [](double) { return 0.0; };
    if (spec.rfind("const:", 0) == 0) {
        double v = std::stod(spec.substr(6));
        return [v](double) { return v; };
    }
    if (spec.rfind("line:", 0) == 0) {
        auto a = args(spec.substr(5), ',');
        if (a.size() != 2) throw std::invalid_argument("line:a,b needs two numbers");
        return [a](double x) { return a[0] + a[1] * x; };
    }
    if (spec.rfind("sine:", 0) == 0) {
        auto a = args(spec.substr(5), ',');
        if (a.size() != 2) throw std::invalid_argument("sine:amp,freq needs two numbers");
        return [a](double x) { return a[0] * std::sin(2.0 * M_PI * a[1] * x); };
    }
    if (spec.rfind("quad:", 0) == 0) {
        double v = std::stod(spec.substr(5));
        return [v](double x) { return v * (x - 0.5) * (x - 0.5); };
    }
    if (spec.rfind("kink:", 0) == 0) {
        double v = std::stod(spec.substr(5));
        return [v](double x) { return v * std::fabs(x - 0.5); };
    }
    if (spec.rfind("step:", 0) == 0) {
        auto levels = args(spec.substr(5), '|');
        if (levels.empty()) throw std::invalid_argument("step: needs levels");
        return [levels](double x) {
            int k = static_cast<int>(levels.size());
            int j = static_cast<int>(std::floor(x * k));
            if (j < 0) j = 0;
            if (j >= k) j = k - 1;
            return levels[j];
        };
    }
    if (spec.rfind("exp:", 0) == 0) { // exp:a,b -> exp(a + b x), for counts
        auto a = args(spec.substr(4), ',');
        if (a.size() != 2) throw std::invalid_argument("exp:a,b needs two numbers");
        return [a](double x) { return std::exp(a[0] + a[1] * x); };
    }
    throw std::invalid_argument("unknown truth \"" + spec + "\"");
}

/// Simulate a regression sample on [0,1].
inline Dataset simulate_dataset(const std::string& truth, int n, double sigma,
                                std::uint64_t seed, bool poisson = false,
                                bool random_design = false) {
    if (n < 1) throw std::invalid_argument("simulate_dataset: n must be >= 1");
    auto m = parse_truth(truth);
    Rng rng(seed);
    std::vector<double> xs(n), ys(n);
    for (int i = 0; i < n; ++i)
        xs[i] = random_design ? rng.uniform() : (i + 0.5) / n;
    if (random_design) std::sort(xs.begin(), xs.end());
    for (int i = 0; i < n; ++i) {
        double mu = m(xs[i]);
        if (poisson) {
            if (!(mu > 0.0))
                throw std::invalid_argument("simulate_dataset: Poisson truth must be positive");
            ys[i] = static_cast<double>(rng.poisson(mu));
        } else {
            ys[i] = mu + sigma * rng.normal();
        }
    }
    return Dataset(std::move(xs), std::move(ys));
}

/// Everything a fit produces, kept in memory so tests can poke at it.
struct FitResult {
    std::vector<std::vector<double>> x_columns; // one per covariate
    std::vector<double> estimate;
    std::vector<double> prior_weight;
    std::vector<double> sd;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<double> slope;      // linear models only
    std::vector<double> start_curve; // start values at the grid (plug-in)
    std::vector<double> h_used;      // window width per grid point
    std::map<std::string, std::string> summary;
};

namespace detail {

struct UnivariateContext {
    Kernel kernel = Kernel::epanechnikov();
    CellPartition cells{{0.0}, {1.0}};
    EvaluationGrid grid{{0.0}};
    std::vector<double> h; // per grid point
    double h_default = 0.0;
    bool adaptive = false;
};

inline UnivariateContext make_context(const RunConfig& cfg, const Dataset& data,
                                      FitResult& out) {
    if (data.dim() != 1)
        throw std::invalid_argument("this model needs univariate data");
    UnivariateContext ctx{Kernel::parse(cfg.kernel), partition_cells(data, cfg.cells),
                          EvaluationGrid::for_data(data, cfg.grid_points), {}, 0.0, false};
    BandwidthRule rule = cfg.bandwidth_rule();
    double range = data.x_max() - data.x_min();
    ctx.h_default = rule.fixed_h > 0.0 ? rule.fixed_h : range / cfg.cells;
    ctx.h.assign(ctx.grid.locations.size(), ctx.h_default);
    if (rule.mode == BandwidthRule::Mode::Adaptive) {
        ctx.adaptive = true;
        // pilot scale from the fixed-width cells, local-line residuals
        auto pilot_cells = linear_cell_summaries(data, ctx.cells, ctx.kernel);
        SigmaInference pilot = pooled_sigma_linear(pilot_cells);
        BandwidthRule grow = rule;
        int g = static_cast<int>(ctx.grid.locations.size());
        std::vector<double> hs(g);
        parallel_for(g, [&](int i) {
            hs[i] = adaptive_window(data, ctx.grid.locations[i], pilot.sigma2, grow);
        });
        ctx.h = smooth_bandwidths(hs, 5);
        out.summary["pilot_sigma2"] = format_g17(pilot.sigma2);
    }
    out.h_used = ctx.h;
    out.x_columns = {ctx.grid.locations};
    return ctx;
}

inline void fill_summary_common(const RunConfig& cfg, const UnivariateContext& ctx,
                                FitResult& out) {
    out.summary["k"] = std::to_string(ctx.cells.count());
    double hmin = ctx.h[0], hmax = ctx.h[0];
    for (double v : ctx.h) {
        hmin = std::min(hmin, v);
        hmax = std::max(hmax, v);
    }
    out.summary["h_min"] = format_g17(hmin);
    out.summary["h_max"] = format_g17(hmax);
    out.summary["kernel"] = cfg.kernel;
}

inline double implied_w0(double weight, double s0) {
    if (weight >= 1.0) return std::numeric_limits<double>::infinity();
    if (weight <= 0.0) return 0.0;
    return s0 * weight / (1.0 - weight);
}

} // namespace detail

inline FitResult run_fit(const RunConfig& cfg, const Dataset& data);

namespace detail {

inline FitResult fit_normal_level(const RunConfig& cfg, const Dataset& data) {
    FitResult out;
    UnivariateContext ctx = make_context(cfg, data, out);
    auto cells = level_cell_summaries(data, ctx.cells, ctx.kernel);
    SigmaInference sigma = pooled_sigma(cells);
    out.summary["sigma2"] = format_g17(sigma.sigma2);
    out.summary["sigma2_dof"] = format_g17(sigma.dof);

    int g = ctx.grid.size();
    std::vector<LevelGridPoint> grid(g);
    for (int i = 0; i < g; ++i) {
        double x = ctx.grid.locations[i];
        LocalDesign d = local_design(data, x, ctx.h[i], ctx.kernel, 0);
        if (!(d.s0() > 0.0))
            throw std::runtime_error("empty neighborhood at x = " + format_g17(x) +
                                     "; increase the bandwidth");
        grid[i] = LevelGridPoint{x, d.s0(), nw_fit(d)};
    }

    EbMode mode = cfg.eb_mode();
    StartCurvePosterior start = fit_start_curve(data, parse_basis(cfg.start, data));
    out.start_curve.resize(g);
    for (int i = 0; i < g; ++i) out.start_curve[i] = start.value(grid[i].x);

    if (mode == EbMode::Flat) {
        out.estimate.resize(g);
        out.prior_weight.assign(g, 0.0);
        for (int i = 0; i < g; ++i) out.estimate[i] = grid[i].m_tilde;
        out.summary["draws_used"] = "0";
    } else {
        if (mode == EbMode::Stein && cfg.cells < 3)
            out.summary["warning"] =
                "stein shrinkage needs k >= 3 cells to dominate; computed anyway";
        LevelEbMode inner = mode == EbMode::Local      ? LevelEbMode::Local
                            : mode == EbMode::Global   ? LevelEbMode::Global
                            : mode == EbMode::Parametric ? LevelEbMode::Parametric
                                                         : LevelEbMode::Stein;
        HierarchicalConfig hier;
        hier.draws = cfg.draws;
        hier.seed = cfg.seed;
        hier.plugin_only = cfg.hier_mode() != HierMode::Mc;
        HierarchicalCurve curve =
            final_level_estimate(hier, start, cells, sigma, grid, inner);
        out.estimate = curve.estimate;
        out.prior_weight = curve.prior_weight;
        out.summary["draws_used"] = std::to_string(curve.draws_used);
        out.summary["draws_skipped"] = std::to_string(curve.draws_skipped);
    }

    // bands from the t posterior after integrating sigma out
    std::vector<double> m0_mid(cells.size()), rhos(cells.size(), 0.0);
    for (std::size_t j = 0; j < cells.size(); ++j) {
        m0_mid[j] = start.value(cells[j].x0);
        if (!cells[j].valid) continue;
        if (mode == EbMode::Flat)
            rhos[j] = 0.0;
        else
            rhos[j] = local_rho(sigma.sigma2, cells[j].s0, cells[j].m_tilde, m0_mid[j]);
    }
    SigmaPosterior sp = sigma_bayes_gamma(cfg.sigma_alpha, cfg.sigma_beta, cells,
                                          m0_mid, rhos);
    out.summary["sigma2_bayes"] = format_g17(sp.sigma2);
    out.summary["nu"] = format_g17(sp.nu);
    double tq = student_t_quantile(0.5 * (1.0 + cfg.band_level), sp.nu);
    out.sd.resize(g);
    out.lower.resize(g);
    out.upper.resize(g);
    double rho_sum = 0.0;
    for (int i = 0; i < g; ++i) {
        double w = out.prior_weight[i];
        out.sd[i] = std::sqrt(sp.sigma2 * std::max(0.0, 1.0 - w) / grid[i].s0);
        out.lower[i] = out.estimate[i] - tq * out.sd[i];
        out.upper[i] = out.estimate[i] + tq * out.sd[i];
        rho_sum += w;
    }
    out.summary["rho_mean"] = format_g17(rho_sum / g);
    fill_summary_common(cfg, ctx, out);
    return out;
}

inline FitResult fit_normal_linear(const RunConfig& cfg, const Dataset& data) {
    FitResult out;
    UnivariateContext ctx = make_context(cfg, data, out);
    auto cells = linear_cell_summaries(data, ctx.cells, ctx.kernel);
    SigmaInference sigma = pooled_sigma_linear(cells);
    out.summary["sigma2"] = format_g17(sigma.sigma2);

    LinearBasis basis = parse_basis(cfg.start, data);
    StartCurvePosterior start = fit_start_curve(data, basis);
    MatrixXd gram_inv = basis_gram_inverse(data, basis);

    int g = ctx.grid.size();
    std::vector<LinearGridPoint> grid(g);
    std::vector<Matrix2d> sinv(g);
    for (int i = 0; i < g; ++i) {
        double x = ctx.grid.locations[i];
        LocalDesign d = local_design(data, x, ctx.h[i], ctx.kernel, 1);
        LocalFitResult fit = ll_fit(d); // throws on degenerate design
        grid[i].x = x;
        grid[i].s = d.moment_matrix();
        grid[i].fit = Vector2d(fit.coef[0], fit.coef[1]);
        Matrix2d shape = basis_covariance_shape(basis.z(x), basis.dz(x), gram_inv);
        Eigen::FullPivLU<Matrix2d> lu(shape);
        if (!lu.isInvertible())
            throw std::runtime_error("degenerate prior covariance shape at x = " +
                                     format_g17(x));
        grid[i].a = lu.inverse();
        sinv[i] = grid[i].s.inverse();
    }
    std::vector<Matrix2d> a_cells(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
        Matrix2d shape =
            basis_covariance_shape(basis.z(cells[j].x0), basis.dz(cells[j].x0), gram_inv);
        Eigen::FullPivLU<Matrix2d> lu(shape);
        a_cells[j] = lu.isInvertible() ? Matrix2d(lu.inverse()) : Matrix2d::Identity();
    }

    out.start_curve.resize(g);
    for (int i = 0; i < g; ++i) out.start_curve[i] = start.value(grid[i].x);

    EbMode mode = cfg.eb_mode();
    out.estimate.resize(g);
    out.slope.resize(g);
    out.prior_weight.resize(g);
    std::vector<double> var_scale(g); // [(I-R) S^{-1}]_{00}

    if (mode == EbMode::Flat) {
        for (int i = 0; i < g; ++i) {
            out.estimate[i] = grid[i].fit[0];
            out.slope[i] = grid[i].fit[1];
            out.prior_weight[i] = 0.0;
            var_scale[i] = sinv[i](0, 0);
        }
        out.summary["draws_used"] = "0";
    } else if (mode == EbMode::Global && cfg.hier_mode() != HierMode::Mc) {
        std::vector<double> m0s(cells.size()), b0s(cells.size());
        for (std::size_t j = 0; j < cells.size(); ++j) {
            m0s[j] = start.value(cells[j].x0);
            b0s[j] = start.deriv(cells[j].x0);
        }
        for (int i = 0; i < g; ++i) {
            Vector2d prior(start.value(grid[i].x), start.deriv(grid[i].x));
            MatrixShrinkResult r = matrix_shrink_estimate(sigma.sigma2, cells, m0s, b0s,
                                                          prior, grid[i].fit);
            out.estimate[i] = r.estimate[0];
            out.slope[i] = r.estimate[1];
            out.prior_weight[i] = r.weight(0, 0);
            Matrix2d c = (Matrix2d::Identity() - r.weight) * sinv[i];
            var_scale[i] = std::max(0.0, c(0, 0));
            if (r.level_fallback) out.summary["shrink_fallback"] = "level";
        }
        out.summary["draws_used"] = "0";
    } else { // profile-w0, plug-in or full Monte Carlo
        HierarchicalConfig hier;
        hier.draws = cfg.draws;
        hier.seed = cfg.seed;
        hier.plugin_only = cfg.hier_mode() != HierMode::Mc;
        HierarchicalCurve curve =
            final_linear_estimate(hier, start, cells, a_cells, sigma, grid);
        out.estimate = curve.estimate;
        out.slope = curve.slope;
        out.prior_weight = curve.prior_weight;
        out.summary["draws_used"] = std::to_string(curve.draws_used);
        out.summary["draws_skipped"] = std::to_string(curve.draws_skipped);
        // report the plug-in profile precision
        std::vector<W0FitCell> fc;
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (!cells[j].valid) continue;
            W0FitCell c;
            c.d = cells[j].fit -
                  Vector2d(start.value(cells[j].x0), start.deriv(cells[j].x0));
            c.s = cells[j].s;
            c.a = a_cells[j];
            c.s0 = cells[j].s0;
            fc.push_back(c);
        }
        double w0 = fit_w0_profile(sigma.sigma2, fc);
        out.summary["w0_hat"] = format_g17(w0);
        for (int i = 0; i < g; ++i) {
            double w = std::min(1.0, std::max(0.0, out.prior_weight[i]));
            var_scale[i] = std::max(0.0, (1.0 - w) * sinv[i](0, 0));
        }
    }

    double nu = 0.0;
    for (const auto& c : cells)
        if (c.valid) nu += c.s0;
    out.summary["nu"] = format_g17(nu);
    double tq = student_t_quantile(0.5 * (1.0 + cfg.band_level), std::max(nu, 1.0));
    int gpts = g;
    out.sd.resize(gpts);
    out.lower.resize(gpts);
    out.upper.resize(gpts);
    for (int i = 0; i < gpts; ++i) {
        out.sd[i] = std::sqrt(std::max(0.0, sigma.sigma2 * var_scale[i]));
        out.lower[i] = out.estimate[i] - tq * out.sd[i];
        out.upper[i] = out.estimate[i] + tq * out.sd[i];
    }
    fill_summary_common(cfg, ctx, out);
    return out;
}

inline FitResult fit_normal_mult(const RunConfig& cfg, const Dataset& data) {
    FitResult out;
    UnivariateContext ctx = make_context(cfg, data, out);
    StartCurvePosterior start = fit_start_curve(data, parse_basis(cfg.start, data));
    auto m0_at = [&](double x) { return start.value(x); };

    std::vector<MultCorrectionStats> cell_stats(ctx.cells.count());
    for (int j = 0; j < ctx.cells.count(); ++j)
        cell_stats[j] = mult_correction_stats(data, ctx.cells.midpoints[j],
                                              ctx.cells.widths[j], ctx.kernel, m0_at);
    SigmaInference sigma = mult_correction_pooled_sigma(cell_stats);
    out.summary["sigma2"] = format_g17(sigma.sigma2);

    EbMode mode = cfg.eb_mode();
    double global_rho = 1.0;
    if (mode == EbMode::Global) {
        double pbar = 0.0;
        int k = 0;
        for (const auto& c : cell_stats) {
            if (!c.has_fit()) continue;
            pbar += mult_correction_p0(c);
            ++k;
        }
        if (k < 1) throw std::runtime_error("normal-mult: no valid cells");
        global_rho = pbar > 0.0 ? std::min(1.0, k * sigma.sigma2 / pbar) : 1.0;
        out.summary["global_rho"] = format_g17(global_rho);
    }

    int g = ctx.grid.size();
    out.estimate.resize(g);
    out.prior_weight.resize(g);
    out.sd.resize(g);
    out.lower.resize(g);
    out.upper.resize(g);
    out.start_curve.resize(g);
    double nu = 0.0;
    for (const auto& c : cell_stats)
        if (c.has_fit()) nu += c.s0;
    double tq = student_t_quantile(0.5 * (1.0 + cfg.band_level), std::max(nu, 1.0));
    out.summary["nu"] = format_g17(nu);
    for (int i = 0; i < g; ++i) {
        double x = ctx.grid.locations[i];
        MultCorrectionStats st = mult_correction_stats(data, x, ctx.h[i], ctx.kernel, m0_at);
        double m0x = start.value(x);
        out.start_curve[i] = m0x;
        double w0;
        if (mode == EbMode::Flat) w0 = 0.0;
        else if (mode == EbMode::Global)
            w0 = global_rho >= 1.0 ? std::numeric_limits<double>::infinity()
                                   : st.u0 * global_rho / (1.0 - global_rho);
        else w0 = mult_correction_eb_w0(sigma.sigma2, st);
        out.estimate[i] = mult_correction_estimate(st, m0x, w0);
        out.prior_weight[i] = std::isinf(w0) ? 1.0 : (st.u0 + w0 > 0.0 ? w0 / (w0 + st.u0) : 1.0);
        double denom = std::isinf(w0) ? std::numeric_limits<double>::infinity()
                                      : w0 + st.u0;
        out.sd[i] = std::isinf(denom) ? 0.0
                                      : std::fabs(m0x) * std::sqrt(sigma.sigma2 / denom);
        out.lower[i] = out.estimate[i] - tq * out.sd[i];
        out.upper[i] = out.estimate[i] + tq * out.sd[i];
    }
    out.summary["draws_used"] = "0";
    fill_summary_common(cfg, ctx, out);
    return out;
}

inline FitResult fit_poisson_level(const RunConfig& cfg, const Dataset& data) {
    validate_counts(data);
    FitResult out;
    UnivariateContext ctx = make_context(cfg, data, out);
    StartCurvePosterior start = loglinear_mle_and_cov(data, parse_basis(cfg.start, data));

    std::vector<PoissonCellSummary> cells(ctx.cells.count());
    for (int j = 0; j < ctx.cells.count(); ++j) {
        cells[j].x0 = ctx.cells.midpoints[j];
        cells[j].stats = poisson_local_stats(data, ctx.cells.midpoints[j],
                                             ctx.cells.widths[j], ctx.kernel);
        cells[j].valid = cells[j].stats.s0 > 0.0;
    }

    int g = ctx.grid.size();
    std::vector<PoissonGridPoint> grid(g);
    for (int i = 0; i < g; ++i) {
        grid[i].x = ctx.grid.locations[i];
        grid[i].stats = poisson_local_stats(data, grid[i].x, ctx.h[i], ctx.kernel);
        if (!(grid[i].stats.s0 > 0.0))
            throw std::runtime_error("empty neighborhood at x = " + format_g17(grid[i].x));
    }
    out.start_curve.resize(g);
    for (int i = 0; i < g; ++i)
        out.start_curve[i] = std::exp(start.value(grid[i].x));

    EbMode mode = cfg.eb_mode();
    if (mode == EbMode::Flat) {
        out.estimate.resize(g);
        out.prior_weight.assign(g, 0.0);
        for (int i = 0; i < g; ++i) out.estimate[i] = grid[i].stats.m_tilde();
        out.summary["draws_used"] = "0";
    } else {
        HierarchicalConfig hier;
        hier.draws = cfg.draws;
        hier.seed = cfg.seed;
        hier.plugin_only = cfg.hier_mode() != HierMode::Mc;
        HierarchicalCurve curve = final_poisson_estimate(hier, start, cells, grid,
                                                         mode == EbMode::Global);
        out.estimate = curve.estimate;
        out.prior_weight = curve.prior_weight;
        out.summary["draws_used"] = std::to_string(curve.draws_used);
        out.summary["draws_skipped"] = std::to_string(curve.draws_skipped);
    }

    out.sd.resize(g);
    out.lower.resize(g);
    out.upper.resize(g);
    for (int i = 0; i < g; ++i) {
        double w = out.prior_weight[i];
        double s0 = grid[i].stats.s0;
        double m0x = out.start_curve[i];
        double w0 = implied_w0(w, s0);
        if (std::isinf(w0)) {
            out.sd[i] = 0.0;
            out.lower[i] = out.upper[i] = out.estimate[i];
            continue;
        }
        double shape = w0 * m0x + grid[i].stats.wy;
        double rate = w0 + s0;
        if (!(shape > 0.0)) {
            out.sd[i] = 0.0;
            out.lower[i] = out.upper[i] = out.estimate[i];
            continue;
        }
        out.sd[i] = std::sqrt(shape) / rate;
        out.lower[i] = gamma_quantile(0.5 * (1.0 - cfg.band_level), shape, rate);
        out.upper[i] = gamma_quantile(0.5 * (1.0 + cfg.band_level), shape, rate);
    }
    fill_summary_common(cfg, ctx, out);
    return out;
}

inline FitResult fit_poisson_loglinear_local(const RunConfig& cfg, const Dataset& data) {
    validate_counts(data);
    FitResult out;
    UnivariateContext ctx = make_context(cfg, data, out);
    StartCurvePosterior start = loglinear_mle_and_cov(data, parse_basis(cfg.start, data));

    int g = ctx.grid.size();
    out.estimate.resize(g);
    out.prior_weight.resize(g);
    out.sd.resize(g);
    out.lower.resize(g);
    out.upper.resize(g);
    out.start_curve.resize(g);
    double zq = normal_quantile(0.5 * (1.0 + cfg.band_level));
    for (int i = 0; i < g; ++i) {
        double x = ctx.grid.locations[i];
        PoissonLocalStats st = poisson_local_stats(data, x, ctx.h[i], ctx.kernel);
        if (!(st.s0 > 0.0))
            throw std::runtime_error("empty neighborhood at x = " + format_g17(x));
        double m0x = std::exp(start.value(x));
        out.start_curve[i] = m0x;
        PoissonEbResult eb = poisson_eb_local(st, m0x);
        if (std::isinf(eb.w0)) {
            out.estimate[i] = m0x;
            out.prior_weight[i] = 1.0;
            out.sd[i] = 0.0;
            out.lower[i] = out.upper[i] = m0x;
            continue;
        }
        LoglinearLocalPosterior post =
            loglinear_local_posterior(data, x, ctx.h[i], ctx.kernel, eb.w0, m0x);
        out.estimate[i] = post.mean_m;
        out.prior_weight[i] = eb.prior_weight;
        out.sd[i] = post.sd_m;
        out.lower[i] = post.mean_m - zq * post.sd_m;
        out.upper[i] = post.mean_m + zq * post.sd_m;
    }
    out.summary["draws_used"] = "0";
    fill_summary_common(cfg, ctx, out);
    return out;
}

inline FitResult fit_poisson_mult(const RunConfig& cfg, const Dataset& data) {
    validate_counts(data);
    FitResult out;
    UnivariateContext ctx = make_context(cfg, data, out);
    StartCurvePosterior start = loglinear_mle_and_cov(data, parse_basis(cfg.start, data));
    auto m0_at = [&](double x) { return std::exp(start.value(x)); };

    int g = ctx.grid.size();
    out.estimate.resize(g);
    out.prior_weight.resize(g);
    out.sd.resize(g);
    out.lower.resize(g);
    out.upper.resize(g);
    out.start_curve.resize(g);
    for (int i = 0; i < g; ++i) {
        double x = ctx.grid.locations[i];
        PoissonMultStats st = poisson_mult_stats(data, x, ctx.h[i], ctx.kernel, m0_at);
        if (!(st.wm > 0.0))
            throw std::runtime_error("empty neighborhood at x = " + format_g17(x));
        double m0x = m0_at(x);
        out.start_curve[i] = m0x;
        double w0 = cfg.eb_mode() == EbMode::Flat ? 0.0 : poisson_mult_eb_w0(st, m0x);
        out.estimate[i] = poisson_mult_estimate(st, m0x, w0);
        out.prior_weight[i] = std::isinf(w0) ? 1.0 : w0 / (w0 + st.wm);
        if (std::isinf(w0)) {
            out.sd[i] = 0.0;
            out.lower[i] = out.upper[i] = m0x;
            continue;
        }
        double shape = w0 + st.wy;
        double rate = w0 + st.wm;
        if (!(shape > 0.0)) {
            out.sd[i] = 0.0;
            out.lower[i] = out.upper[i] = out.estimate[i];
            continue;
        }
        out.sd[i] = m0x * std::sqrt(shape) / rate;
        out.lower[i] = m0x * gamma_quantile(0.5 * (1.0 - cfg.band_level), shape, rate);
        out.upper[i] = m0x * gamma_quantile(0.5 * (1.0 + cfg.band_level), shape, rate);
    }
    out.summary["draws_used"] = "0";
    fill_summary_common(cfg, ctx, out);
    return out;
}

inline FitResult fit_multivariate_linear(const RunConfig& cfg, const Dataset& data) {
    int d = data.dim();
    if (cfg.dims != d)
        throw std::invalid_argument("config dims = " + std::to_string(cfg.dims) +
                                    " but data has " + std::to_string(d) + " covariates");
    FitResult out;
    Kernel kernel = Kernel::parse(cfg.kernel);
    Standardizer std_izer = Standardizer::fit(data);
    Dataset sdata = std_izer.apply(data);

    // start surface: global hyperplane by least squares on standardized x
    int n = sdata.size();
    MatrixXd design(n, d + 1);
    VectorXd yv(n);
    for (int i = 0; i < n; ++i) {
        design(i, 0) = 1.0;
        for (int j = 0; j < d; ++j) design(i, j + 1) = sdata.xv(i, j);
        yv[i] = sdata.y[i];
    }
    VectorXd coef = solve_spd(design.transpose() * design, design.transpose() * yv,
                              "multivariate start surface");
    auto m0_at = [&](const std::vector<double>& x) {
        double v = coef[0];
        for (int j = 0; j < d; ++j) v += coef[j + 1] * x[j];
        return v;
    };

    // abutting boxes for pooled statistics (d <= 3), otherwise pool over
    // the evaluation neighborhoods themselves
    int k = cfg.cells;
    std::vector<std::vector<double>> box_centers;
    double box_h = 0.0;
    {
        double h2 = 0.0;
        std::vector<double> lo(d), wstep(d);
        for (int j = 0; j < d; ++j) {
            lo[j] = sdata.x_min(j);
            wstep[j] = (sdata.x_max(j) - sdata.x_min(j)) / k;
            if (!(wstep[j] > 0.0))
                throw std::invalid_argument("degenerate covariate " + std::to_string(j + 1));
            h2 += wstep[j] * wstep[j];
        }
        box_h = std::sqrt(h2);
        if (d <= 3) {
            std::vector<int> idx(d, 0);
            while (true) {
                std::vector<double> c(d);
                for (int j = 0; j < d; ++j) c[j] = lo[j] + (idx[j] + 0.5) * wstep[j];
                box_centers.push_back(c);
                int j = 0;
                while (j < d && ++idx[j] == k) idx[j++] = 0;
                if (j == d) break;
            }
        } else {
            out.summary["pooling"] = "per-evaluation-point (d > 3)";
        }
    }

    BandwidthRule rule = cfg.bandwidth_rule();
    if (rule.mode == BandwidthRule::Mode::Adaptive)
        throw std::invalid_argument("adaptive bandwidth is univariate only");
    double h_eval = rule.fixed_h > 0.0 ? rule.fixed_h : box_h;

    // evaluation at the data points themselves
    int g = n;
    std::vector<MultiCellSummary> eval_pts(g);
    for (int i = 0; i < g; ++i) {
        std::vector<double> x(d);
        for (int j = 0; j < d; ++j) x[j] = sdata.xv(i, j);
        MultiLocalDesign des = multi_local_design(sdata, x, h_eval, kernel);
        MultiCellSummary& e = eval_pts[i];
        e.x0 = x;
        e.s = des.s;
        e.s0 = des.s0();
        try {
            MultiFitResult fit = multi_ll_fit(des);
            e.fit = fit.coef;
            e.q0 = fit.q0;
            e.valid = true;
        } catch (const std::runtime_error&) {
            e.valid = false;
        }
        if (!e.valid)
            throw std::runtime_error("degenerate neighborhood at data point " +
                                     std::to_string(i + 1) + "; increase the bandwidth");
    }

    std::vector<MultiCellSummary> pool;
    if (!box_centers.empty()) {
        for (const auto& c : box_centers) {
            MultiLocalDesign des = multi_local_design(sdata, c, box_h, kernel);
            MultiCellSummary s;
            s.x0 = c;
            s.s = des.s;
            s.s0 = des.s0();
            if (des.s0() >= d + 2.0) {
                try {
                    MultiFitResult fit = multi_ll_fit(des);
                    s.fit = fit.coef;
                    s.q0 = fit.q0;
                    s.valid = true;
                } catch (const std::runtime_error&) {
                    s.valid = false;
                }
            }
            pool.push_back(s);
        }
        bool any = false;
        for (const auto& s : pool) any = any || s.valid;
        if (!any) { // sparse boxes; fall back with a note
            pool = eval_pts;
            out.summary["pooling"] = "per-evaluation-point (empty boxes)";
        }
    } else {
        pool = eval_pts;
    }

    std::vector<double> q0s, s0s;
    for (const auto& s : pool)
        if (s.valid) {
            q0s.push_back(s.q0);
            s0s.push_back(s.s0);
        }
    SigmaInference sigma = pooled_sigma(q0s, s0s, d);
    out.summary["sigma2"] = format_g17(sigma.sigma2);

    std::vector<VectorXd> prior_at_pool(pool.size());
    for (std::size_t j = 0; j < pool.size(); ++j) {
        VectorXd p(d + 1);
        p[0] = m0_at(pool[j].x0);
        for (int l = 0; l < d; ++l) p[l + 1] = coef[l + 1];
        prior_at_pool[j] = p;
    }

    out.x_columns.assign(d, std::vector<double>(g));
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < d; ++j) out.x_columns[j][i] = data.xv(i, j);
    out.estimate.resize(g);
    out.prior_weight.resize(g);
    out.sd.resize(g);
    out.lower.resize(g);
    out.upper.resize(g);
    out.start_curve.resize(g);
    out.h_used.assign(g, h_eval);

    double nu = 0.0;
    for (const auto& s : pool)
        if (s.valid) nu += s.s0;
    double tq = student_t_quantile(0.5 * (1.0 + cfg.band_level), std::max(nu, 1.0));
    out.summary["nu"] = format_g17(nu);

    bool flat = cfg.eb_mode() == EbMode::Flat;
    for (int i = 0; i < g; ++i) {
        const MultiCellSummary& e = eval_pts[i];
        out.start_curve[i] = m0_at(e.x0);
        double var_scale;
        if (flat) {
            out.estimate[i] = e.fit[0];
            out.prior_weight[i] = 0.0;
            var_scale = e.s.inverse()(0, 0);
        } else {
            VectorXd prior(d + 1);
            prior[0] = m0_at(e.x0);
            for (int l = 0; l < d; ++l) prior[l + 1] = coef[l + 1];
            MultiShrinkResult r =
                multi_matrix_shrink(sigma.sigma2, pool, prior_at_pool, prior, e.fit);
            out.estimate[i] = r.estimate[0];
            out.prior_weight[i] = r.weight(0, 0);
            MatrixXd c = (MatrixXd::Identity(d + 1, d + 1) - r.weight) * e.s.inverse();
            var_scale = std::max(0.0, c(0, 0));
        }
        out.sd[i] = std::sqrt(std::max(0.0, sigma.sigma2 * var_scale));
        out.lower[i] = out.estimate[i] - tq * out.sd[i];
        out.upper[i] = out.estimate[i] + tq * out.sd[i];
    }
    out.summary["k"] = std::to_string(k);
    out.summary["h_min"] = format_g17(h_eval);
    out.summary["h_max"] = format_g17(h_eval);
    out.summary["kernel"] = cfg.kernel;
    out.summary["draws_used"] = "0";
    return out;
}

} // namespace detail

inline FitResult run_fit(const RunConfig& cfg, const Dataset& data) {
    cfg.validate();
    switch (cfg.model) {
    case Model::NormalLevel: return detail::fit_normal_level(cfg, data);
    case Model::NormalLinear: return detail::fit_normal_linear(cfg, data);
    case Model::NormalMult: return detail::fit_normal_mult(cfg, data);
    case Model::PoissonLevel: return detail::fit_poisson_level(cfg, data);
    case Model::PoissonLoglinearLocal:
        return detail::fit_poisson_loglinear_local(cfg, data);
    case Model::PoissonMult: return detail::fit_poisson_mult(cfg, data);
    case Model::MultivariateLinear: return detail::fit_multivariate_linear(cfg, data);
    }
    throw std::logic_error("run_fit: unhandled model");
}

/// Strip a trailing ".csv" to get the stem the sidecar files share.
inline std::string output_stem(const std::string& out) {
    if (out.size() > 4 && out.substr(out.size() - 4) == ".csv")
        return out.substr(0, out.size() - 4);
    return out;
}

/// Write the estimates table, the key=value summary (including the fully
/// resolved configuration) and the plot-ready curve files.
inline void write_fit_outputs(const RunConfig& cfg, const Dataset& data,
                              const FitResult& fit) {
    std::string stem = output_stem(cfg.out);
    int d = static_cast<int>(fit.x_columns.size());
    std::vector<std::string> header;
    if (d == 1) {
        header = {"x", "estimate", "prior_weight", "sd", "lower", "upper"};
    } else {
        for (int j = 0; j < d; ++j) header.push_back("x" + std::to_string(j + 1));
        header.insert(header.end(), {"estimate", "prior_weight", "sd", "lower", "upper"});
    }
    std::vector<std::vector<std::string>> rows;
    int g = static_cast<int>(fit.estimate.size());
    rows.reserve(g);
    for (int i = 0; i < g; ++i) {
        std::vector<std::string> row;
        for (int j = 0; j < d; ++j) row.push_back(format_g17(fit.x_columns[j][i]));
        row.push_back(format_g17(fit.estimate[i]));
        row.push_back(format_g17(fit.prior_weight[i]));
        row.push_back(format_g17(fit.sd[i]));
        row.push_back(format_g17(fit.lower[i]));
        row.push_back(format_g17(fit.upper[i]));
        rows.push_back(std::move(row));
    }
    write_csv(stem + ".csv", header, rows);

    std::ofstream summary(stem + "_summary.txt");
    if (!summary) throw std::runtime_error("cannot write " + stem + "_summary.txt");
    summary << cfg.resolved();
    for (const auto& [key, value] : fit.summary)
        summary << key << " = " << value << "\n";

    if (d == 1) {
        std::vector<double> xs(data.size());
        for (int i = 0; i < data.size(); ++i) xs[i] = data.xv(i);
        write_xy_file(stem + "_data.dat", xs, data.y);
        write_xy_file(stem + "_estimate.dat", fit.x_columns[0], fit.estimate);
        write_xy_file(stem + "_band_lower.dat", fit.x_columns[0], fit.lower);
        write_xy_file(stem + "_band_upper.dat", fit.x_columns[0], fit.upper);
        if (!fit.start_curve.empty())
            write_xy_file(stem + "_start.dat", fit.x_columns[0], fit.start_curve);
        if (!fit.slope.empty())
            write_xy_file(stem + "_slope.dat", fit.x_columns[0], fit.slope);
    }
}

/// Risk-simulation scenario: repeated samples from a named truth with the
/// loss sum_cells s0 (m*(x0) - m(x0))^2 evaluated at the cell midpoints.
struct RiskScenario {
    std::string truth = "zero";
    std::string m0 = "zero"; // fixed start curve
    double sigma = 1.0;
    int n = 400;
    int reps = 2000;
    int cells = 10;
    std::string kernel = "uniform";
    std::uint64_t seed = 1;
};

struct RiskRow {
    std::string estimator;
    double mean_loss = 0.0;
    double mc_se = 0.0;
};

inline std::vector<RiskRow> run_risk_sim(const RiskScenario& sc) {
    if (sc.reps < 2) throw std::invalid_argument("risk-sim: need reps >= 2");
    auto truth = parse_truth(sc.truth);
    auto m0fn = parse_truth(sc.m0);
    Kernel kernel = Kernel::parse(sc.kernel);
    const char* names[] = {"nw", "eb-local", "eb-global", "stein"};
    constexpr int kEst = 4;
    std::vector<std::vector<double>> losses(kEst, std::vector<double>(sc.reps, 0.0));

    std::vector<double> xs(sc.n);
    for (int i = 0; i < sc.n; ++i) xs[i] = (i + 0.5) / sc.n;
    Rng base(sc.seed);

    std::vector<std::vector<double>> ys(sc.reps);
    for (int r = 0; r < sc.reps; ++r) {
        Rng rng = base.substream(static_cast<std::uint64_t>(r));
        ys[r].resize(sc.n);
        for (int i = 0; i < sc.n; ++i)
            ys[r][i] = truth(xs[i]) + sc.sigma * rng.normal();
    }

    parallel_for(sc.reps, [&](int r) {
        Dataset data(xs, ys[r]);
        CellPartition cells = partition_cells(data, sc.cells);
        auto summ = level_cell_summaries(data, cells, kernel);
        SigmaInference sigma = pooled_sigma(summ);
        std::vector<double> m0_mid(summ.size()), m_true(summ.size());
        for (std::size_t j = 0; j < summ.size(); ++j) {
            m0_mid[j] = m0fn(summ[j].x0);
            m_true[j] = truth(summ[j].x0);
        }
        double w_global = global_shrink_weight(sigma.sigma2, summ, m0_mid);
        double acc[kEst] = {0.0, 0.0, 0.0, 0.0};
        for (std::size_t j = 0; j < summ.size(); ++j) {
            if (!summ[j].valid) continue;
            double est[kEst];
            est[0] = summ[j].m_tilde;
            est[1] = eb_level_estimate(sigma.sigma2, summ[j].s0, summ[j].m_tilde,
                                       m0_mid[j]).estimate;
            est[2] = w_global * m0_mid[j] + (1.0 - w_global) * summ[j].m_tilde;
            est[3] = stein_estimate(sigma.sigma2, summ, m0_mid, m0_mid[j],
                                    summ[j].m_tilde);
            for (int e = 0; e < kEst; ++e) {
                double dd = est[e] - m_true[j];
                acc[e] += summ[j].s0 * dd * dd;
            }
        }
        for (int e = 0; e < kEst; ++e) losses[e][r] = acc[e];
    });

    std::vector<RiskRow> rows(kEst);
    for (int e = 0; e < kEst; ++e) {
        double mean = 0.0;
        for (double v : losses[e]) mean += v;
        mean /= sc.reps;
        double var = 0.0;
        for (double v : losses[e]) var += (v - mean) * (v - mean);
        var /= (sc.reps - 1);
        rows[e] = RiskRow{names[e], mean, std::sqrt(var / sc.reps)};
    }
    return rows;
}

/// Adaptive window widths at the grid for local polynomial orders 1..3,
/// post-smoothed, with per-order total residual sums as a side summary.
struct BandwidthTable {
    std::vector<double> x;
    std::vector<std::vector<double>> h_by_order; // orders 1..3
    std::vector<double> q0_total;                // per order
    double pilot_sigma2 = 0.0;
};

inline BandwidthTable bandwidth_table(const Dataset& data, int cells, double level,
                                      int grid_points = 201) {
    BandwidthTable out;
    Kernel uniform = Kernel::uniform();
    CellPartition part = partition_cells(data, cells);
    auto pilot_cells = linear_cell_summaries(data, part, uniform);
    SigmaInference pilot = pooled_sigma_linear(pilot_cells);
    out.pilot_sigma2 = pilot.sigma2;
    EvaluationGrid grid = EvaluationGrid::for_data(data, grid_points);
    out.x = grid.locations;
    for (int order = 1; order <= 3; ++order) {
        BandwidthRule rule;
        rule.mode = BandwidthRule::Mode::Adaptive;
        rule.level = level;
        rule.order = order;
        int g = grid.size();
        std::vector<double> hs(g);
        parallel_for(g, [&](int i) {
            hs[i] = adaptive_window(data, grid.locations[i], pilot.sigma2, rule);
        });
        hs = smooth_bandwidths(hs, 5);
        double q_total = 0.0;
        for (int i = 0; i < g; ++i) {
            LocalDesign d = local_design(data, grid.locations[i], hs[i], uniform, order);
            try {
                q_total += local_poly_fit(d, order).q0;
            } catch (const std::runtime_error&) {
            }
        }
        out.h_by_order.push_back(hs);
        out.q0_total.push_back(q_total);
    }
    return out;
}

} // namespace locbayes
