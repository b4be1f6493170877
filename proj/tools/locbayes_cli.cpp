// Command-line front end: fit curves, run risk simulations, tabulate
// adaptive bandwidths and simulate datasets.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "locbayes/locbayes.hpp"

namespace {

using namespace locbayes;

void add_config_flags(CLI::App* cmd, RunConfig& cfg, std::string& config_path,
                      std::string& model_name) {
    cmd->add_option("--config", config_path, "key = value configuration file");
    cmd->add_option("--model", model_name,
                    "normal-level|normal-linear|normal-mult|poisson-level|"
                    "poisson-loglinear-local|poisson-mult|multivariate-linear");
    cmd->add_option("--kernel", cfg.kernel, "uniform|epanechnikov");
    cmd->add_option("--bandwidth", cfg.bandwidth, "fixed:<h> | adaptive:<level>");
    cmd->add_option("--cells", cfg.cells, "number of pooling cells k");
    cmd->add_option("--start", cfg.start,
                    "linear|cubic|poly:<q>|powers:e1,e2,...|spline(max_knots=J)");
    cmd->add_option("--eb", cfg.eb, "flat|local|global|parametric|stein|profile-w0");
    cmd->add_option("--hierarchical", cfg.hierarchical, "off|plugin|mc");
    cmd->add_option("--draws", cfg.draws, "start-curve draws for hierarchical mc");
    cmd->add_option("--seed", cfg.seed, "random seed");
    cmd->add_option("--level", cfg.band_level, "credible band level");
    cmd->add_option("--dims", cfg.dims, "number of covariates");
    cmd->add_option("--grid", cfg.grid_points, "evaluation grid size");
    cmd->add_option("--out", cfg.out, "output path (CSV; sidecars share the stem)");
}

int run_fit_cmd(const std::string& data_path, const std::string& config_path,
                const std::string& model_name, RunConfig cfg, CLI::App* cmd) {
    RunConfig merged;
    if (!config_path.empty()) merged.load_file(config_path);
    // command-line values override the file only where given
    auto given = [&](const std::string& flag) { return cmd->count(flag) > 0; };
    if (!model_name.empty()) merged.model = RunConfig::parse_model(model_name);
    if (given("--kernel")) merged.kernel = cfg.kernel;
    if (given("--bandwidth")) merged.bandwidth = cfg.bandwidth;
    if (given("--cells")) merged.cells = cfg.cells;
    if (given("--start")) merged.start = cfg.start;
    if (given("--eb")) merged.eb = cfg.eb;
    if (given("--hierarchical")) merged.hierarchical = cfg.hierarchical;
    if (given("--draws")) merged.draws = cfg.draws;
    if (given("--seed")) merged.seed = cfg.seed;
    if (given("--level")) merged.band_level = cfg.band_level;
    if (given("--dims")) merged.dims = cfg.dims;
    if (given("--grid")) merged.grid_points = cfg.grid_points;
    if (given("--out")) merged.out = cfg.out;

    Dataset data = ingest_csv(data_path);
    if (data.dim() > 1 && cmd->count("--dims") == 0 && merged.dims == 1)
        merged.dims = data.dim();
    FitResult fit = run_fit(merged, data);
    write_fit_outputs(merged, data, fit);
    for (const auto& [key, value] : fit.summary)
        if (key.rfind("warning", 0) == 0) std::cerr << "warning: " << value << "\n";
    std::cout << "wrote " << output_stem(merged.out) << ".csv ("
              << fit.estimate.size() << " rows)\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"local Bayesian regression"};
    app.require_subcommand(1);

    // fit
    RunConfig fit_cfg;
    std::string fit_data, fit_config, fit_model;
    CLI::App* fit = app.add_subcommand("fit", "fit a curve to a CSV dataset");
    fit->add_option("data", fit_data, "input CSV (header x,y or x1,...,xd,y)")
        ->required();
    add_config_flags(fit, fit_cfg, fit_config, fit_model);

    // risk-sim
    locbayes::RiskScenario risk;
    std::string risk_out = "risk.csv";
    CLI::App* rs = app.add_subcommand("risk-sim",
                                      "Monte-Carlo risk comparison of the level estimators");
    rs->add_option("--truth", risk.truth, "true curve (zero|const:v|line:a,b|sine:a,f|step:v1|v2|...|kink:s|quad:a)");
    rs->add_option("--m0", risk.m0, "fixed start curve for the shrinkage estimators");
    rs->add_option("--sigma", risk.sigma, "residual standard deviation");
    rs->add_option("--n", risk.n, "sample size per replication");
    rs->add_option("--reps", risk.reps, "number of replications");
    rs->add_option("--cells", risk.cells, "number of cells k");
    rs->add_option("--kernel", risk.kernel, "uniform|epanechnikov");
    rs->add_option("--seed", risk.seed, "random seed");
    rs->add_option("--out", risk_out, "output CSV path");

    // bandwidth
    std::string bw_data, bw_out = "bandwidth.csv";
    int bw_cells = 10, bw_grid = 201;
    double bw_level = 0.80;
    CLI::App* bw = app.add_subcommand("bandwidth",
                                      "adaptive window widths for orders 1..3");
    bw->add_option("data", bw_data, "input CSV")->required();
    bw->add_option("--cells", bw_cells, "cells for the pilot scale estimate");
    bw->add_option("--level", bw_level, "chi-square test level");
    bw->add_option("--grid", bw_grid, "evaluation grid size");
    bw->add_option("--out", bw_out, "output CSV path");

    // simulate-data
    std::string sim_truth = "sine:1,1", sim_out = "data.csv", sim_family = "normal";
    int sim_n = 200;
    double sim_sigma = 0.5;
    std::uint64_t sim_seed = 1;
    bool sim_random_design = false;
    CLI::App* sim = app.add_subcommand("simulate-data", "generate a dataset");
    sim->add_option("--truth", sim_truth, "true curve specification");
    sim->add_option("--n", sim_n, "sample size");
    sim->add_option("--sigma", sim_sigma, "residual standard deviation (normal family)");
    sim->add_option("--family", sim_family, "normal|poisson");
    sim->add_option("--seed", sim_seed, "random seed");
    sim->add_flag("--random-design", sim_random_design, "uniform random covariates");
    sim->add_option("--out", sim_out, "output CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit->parsed())
            return run_fit_cmd(fit_data, fit_config, fit_model, fit_cfg, fit);
        if (rs->parsed()) {
            auto rows = locbayes::run_risk_sim(risk);
            std::vector<std::vector<std::string>> cells;
            for (const auto& r : rows)
                cells.push_back({r.estimator, locbayes::format_g17(r.mean_loss),
                                 locbayes::format_g17(r.mc_se)});
            locbayes::write_csv(risk_out, {"estimator", "mean_loss", "mc_se"}, cells);
            std::cout << "wrote " << risk_out << "\n";
            return 0;
        }
        if (bw->parsed()) {
            locbayes::Dataset data = locbayes::ingest_csv(bw_data);
            auto table = locbayes::bandwidth_table(data, bw_cells, bw_level, bw_grid);
            std::vector<std::vector<std::string>> cells;
            for (std::size_t i = 0; i < table.x.size(); ++i)
                cells.push_back({locbayes::format_g17(table.x[i]),
                                 locbayes::format_g17(table.h_by_order[0][i]),
                                 locbayes::format_g17(table.h_by_order[1][i]),
                                 locbayes::format_g17(table.h_by_order[2][i])});
            locbayes::write_csv(bw_out, {"x", "h_order1", "h_order2", "h_order3"}, cells);
            std::cout << "pilot_sigma2 = " << table.pilot_sigma2 << "\n";
            for (int p = 0; p < 3; ++p)
                std::cout << "q0_total_order" << (p + 1) << " = " << table.q0_total[p]
                          << "\n";
            std::cout << "wrote " << bw_out << "\n";
            return 0;
        }
        if (sim->parsed()) {
            locbayes::Dataset data = locbayes::simulate_dataset(
                sim_truth, sim_n, sim_sigma, sim_seed, sim_family == "poisson",
                sim_random_design);
            locbayes::write_dataset_csv(sim_out, data);
            std::cout << "wrote " << sim_out << " (" << data.size() << " rows)\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
