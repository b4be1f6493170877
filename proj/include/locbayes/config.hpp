#pragma once

// Run configuration: model, kernel, bandwidth rule, cell count, start
// curve, empirical-Bayes mode and hierarchical averaging settings.
// Parsed from a line-oriented "key = value" file with command-line
// overrides on top; validate() enforces the model/mode compatibility
// rules and resolved() serializes the exact configuration of a run.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "bandwidth.hpp"
#include "csv_io.hpp"
#include "kernel.hpp"

namespace locbayes {

enum class Model {
    NormalLevel,
    NormalLinear,
    NormalMult,
    PoissonLevel,
    PoissonLoglinearLocal,
    PoissonMult,
    MultivariateLinear,
};

enum class EbMode {
    Flat,      // w0 = 0: the noninformative prior, reproduces NW/LL
    Local,     // per-location empirical-Bayes weight
    Global,    // pooled weight over cells
    Parametric,// pooled weight with a variance-shape function (r = 1)
    Stein,     // global Stein-type shrinkage
    ProfileW0, // structured precision with profile-likelihood w0
};

enum class HierMode { Off, Plugin, Mc };

struct RunConfig {
    Model model = Model::NormalLevel;
    std::string kernel = "epanechnikov";
    std::string bandwidth = ""; // "fixed:<h>" | "adaptive:<level>"; empty = fixed, data range / cells
    int cells = 10;
    std::string start = "linear"; // linear | cubic | poly:<q> | powers:a,b,... | spline(max_knots=J)
    std::string eb = "local";     // flat | local | global | parametric | stein | profile-w0
    std::string hierarchical = "off"; // off | plugin | mc
    int draws = 100;
    std::uint64_t seed = 1;
    double band_level = 0.90;
    int dims = 1;
    int grid_points = 201;
    double sigma_alpha = 0.0; // Gamma prior for 1/sigma^2; 0,0 = noninformative
    double sigma_beta = 0.0;
    std::string out = "fit";

    static Model parse_model(const std::string& s) {
        if (s == "normal-level") return Model::NormalLevel;
        if (s == "normal-linear") return Model::NormalLinear;
        if (s == "normal-mult") return Model::NormalMult;
        if (s == "poisson-level") return Model::PoissonLevel;
        if (s == "poisson-loglinear-local") return Model::PoissonLoglinearLocal;
        if (s == "poisson-mult") return Model::PoissonMult;
        if (s == "multivariate-linear") return Model::MultivariateLinear;
        throw std::invalid_argument("unknown model \"" + s + "\"");
    }

    static const char* model_name(Model m) {
        switch (m) {
        case Model::NormalLevel: return "normal-level";
        case Model::NormalLinear: return "normal-linear";
        case Model::NormalMult: return "normal-mult";
        case Model::PoissonLevel: return "poisson-level";
        case Model::PoissonLoglinearLocal: return "poisson-loglinear-local";
        case Model::PoissonMult: return "poisson-mult";
        case Model::MultivariateLinear: return "multivariate-linear";
        }
        return "?";
    }

    static EbMode parse_eb(const std::string& s) {
        if (s == "flat") return EbMode::Flat;
        if (s == "local") return EbMode::Local;
        if (s == "global") return EbMode::Global;
        if (s == "parametric") return EbMode::Parametric;
        if (s == "stein") return EbMode::Stein;
        if (s == "profile-w0") return EbMode::ProfileW0;
        throw std::invalid_argument("unknown eb mode \"" + s + "\"");
    }

    static HierMode parse_hier(const std::string& s) {
        if (s == "off") return HierMode::Off;
        if (s == "plugin") return HierMode::Plugin;
        if (s == "mc") return HierMode::Mc;
        throw std::invalid_argument("unknown hierarchical mode \"" + s + "\"");
    }

    EbMode eb_mode() const { return parse_eb(eb); }
    HierMode hier_mode() const { return parse_hier(hierarchical); }

    BandwidthRule bandwidth_rule() const {
        BandwidthRule rule;
        if (bandwidth.empty() || bandwidth == "auto") {
            rule.mode = BandwidthRule::Mode::Fixed;
            rule.fixed_h = 0.0; // resolved to data range / cells at run time
            return rule;
        }
        auto colon = bandwidth.find(':');
        std::string head = bandwidth.substr(0, colon);
        std::string tail = colon == std::string::npos ? "" : bandwidth.substr(colon + 1);
        if (head == "fixed") {
            rule.mode = BandwidthRule::Mode::Fixed;
            rule.fixed_h = tail.empty() ? 0.0 : std::stod(tail);
            if (!tail.empty() && !(rule.fixed_h > 0.0))
                throw std::invalid_argument("bandwidth fixed:<h> needs h > 0");
            return rule;
        }
        if (head == "adaptive") {
            rule.mode = BandwidthRule::Mode::Adaptive;
            rule.level = tail.empty() ? 0.80 : std::stod(tail);
            if (!(rule.level > 0.0 && rule.level < 1.0))
                throw std::invalid_argument("bandwidth adaptive:<level> needs level in (0,1)");
            return rule;
        }
        throw std::invalid_argument("bandwidth must be fixed:<h> or adaptive:<level>");
    }

    void validate() const {
        Kernel::parse(kernel);
        (void)parse_model(model_name(model));
        EbMode mode = eb_mode();
        HierMode hier = hier_mode();
        bandwidth_rule();
        if (cells < 1) throw std::invalid_argument("cells must be >= 1");
        if (draws < 1) throw std::invalid_argument("draws must be >= 1");
        if (!(band_level > 0.0 && band_level < 1.0))
            throw std::invalid_argument("level must be in (0,1)");
        if (grid_points < 2) throw std::invalid_argument("grid must have >= 2 points");
        if (dims < 1) throw std::invalid_argument("dims must be >= 1");
        if (sigma_alpha < 0.0 || sigma_beta < 0.0)
            throw std::invalid_argument("sigma prior parameters must be >= 0");

        auto require = [&](bool ok, const std::string& msg) {
            if (!ok) throw std::invalid_argument(msg);
        };
        switch (model) {
        case Model::NormalLevel:
            require(mode != EbMode::ProfileW0,
                    "normal-level supports eb = flat|local|global|parametric|stein");
            break;
        case Model::NormalLinear:
            require(mode == EbMode::Flat || mode == EbMode::Global ||
                        mode == EbMode::ProfileW0,
                    "normal-linear supports eb = flat|global|profile-w0");
            require(hier != HierMode::Mc || mode == EbMode::ProfileW0,
                    "normal-linear hierarchical mc requires eb = profile-w0");
            break;
        case Model::NormalMult:
            require(mode == EbMode::Flat || mode == EbMode::Local || mode == EbMode::Global,
                    "normal-mult supports eb = flat|local|global");
            require(hier != HierMode::Mc, "normal-mult supports hierarchical off|plugin");
            break;
        case Model::PoissonLevel:
            require(mode == EbMode::Flat || mode == EbMode::Local || mode == EbMode::Global,
                    "poisson-level supports eb = flat|local|global");
            break;
        case Model::PoissonLoglinearLocal:
            require(mode == EbMode::Local,
                    "poisson-loglinear-local supports eb = local");
            require(hier != HierMode::Mc,
                    "poisson-loglinear-local supports hierarchical off|plugin");
            break;
        case Model::PoissonMult:
            require(mode == EbMode::Flat || mode == EbMode::Local,
                    "poisson-mult supports eb = flat|local");
            require(hier != HierMode::Mc, "poisson-mult supports hierarchical off|plugin");
            break;
        case Model::MultivariateLinear:
            require(mode == EbMode::Flat || mode == EbMode::Global,
                    "multivariate-linear supports eb = flat|global");
            require(hier != HierMode::Mc,
                    "multivariate-linear supports hierarchical off|plugin");
            require(start == "linear", "multivariate-linear supports start = linear");
            break;
        }
        if (model == Model::PoissonLoglinearLocal || model == Model::PoissonLevel ||
            model == Model::PoissonMult) {
            // count responses are checked against the data at run time
        }
    }

    std::string resolved() const {
        std::ostringstream os;
        os << "model = " << model_name(model) << "\n";
        os << "kernel = " << kernel << "\n";
        os << "bandwidth = " << (bandwidth.empty() ? "auto" : bandwidth) << "\n";
        os << "cells = " << cells << "\n";
        os << "start = " << start << "\n";
        os << "eb = " << eb << "\n";
        os << "hierarchical = " << hierarchical << "\n";
        os << "draws = " << draws << "\n";
        os << "seed = " << seed << "\n";
        os << "level = " << format_g17(band_level) << "\n";
        os << "dims = " << dims << "\n";
        os << "grid = " << grid_points << "\n";
        os << "sigma_alpha = " << format_g17(sigma_alpha) << "\n";
        os << "sigma_beta = " << format_g17(sigma_beta) << "\n";
        os << "out = " << out << "\n";
        return os.str();
    }

    void set(const std::string& key, const std::string& value) {
        if (key == "model") model = parse_model(value);
        else if (key == "kernel") kernel = value;
        else if (key == "bandwidth") bandwidth = value;
        else if (key == "cells") cells = std::stoi(value);
        else if (key == "start") start = value;
        else if (key == "eb") eb = value;
        else if (key == "hierarchical") hierarchical = value;
        else if (key == "draws") draws = std::stoi(value);
        else if (key == "seed") seed = std::stoull(value);
        else if (key == "level") band_level = std::stod(value);
        else if (key == "dims") dims = std::stoi(value);
        else if (key == "grid") grid_points = std::stoi(value);
        else if (key == "sigma_alpha") sigma_alpha = std::stod(value);
        else if (key == "sigma_beta") sigma_beta = std::stod(value);
        else if (key == "out") out = value;
        else throw std::invalid_argument("unknown config key \"" + key + "\"");
    }

    /// Merge keys from a "key = value" file (later lines win).
    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config " + path);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#') continue;
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": expected key = value");
            set(detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
        }
    }
};

} // namespace locbayes
