#pragma once

// Regression sample, evaluation grids and the partition of the covariate
// interval into abutting neighborhood cells whose midpoints index all
// pooled statistics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace locbayes {

/// Regression sample (x_i, y_i), i = 1..n, with d covariates stored
/// row-major in `x`.
struct Dataset {
    std::vector<double> x; // n*d covariate values
    std::vector<double> y; // n responses
    int d = 1;

    Dataset() = default;

    Dataset(std::vector<double> xs, std::vector<double> ys)
        : x(std::move(xs)), y(std::move(ys)), d(1) {
        validate();
    }

    Dataset(std::vector<double> xs, int dim, std::vector<double> ys)
        : x(std::move(xs)), y(std::move(ys)), d(dim) {
        validate();
    }

    int size() const { return static_cast<int>(y.size()); }
    int dim() const { return d; }

    double xv(int i) const { return x[static_cast<std::size_t>(i) * d]; }
    double xv(int i, int j) const { return x[static_cast<std::size_t>(i) * d + j]; }

    double x_min(int j = 0) const {
        double m = std::numeric_limits<double>::infinity();
        for (int i = 0; i < size(); ++i) m = std::min(m, xv(i, j));
        return m;
    }
    double x_max(int j = 0) const {
        double m = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < size(); ++i) m = std::max(m, xv(i, j));
        return m;
    }

    double y_mean() const {
        double s = 0.0;
        for (double v : y) s += v;
        return s / size();
    }

    void validate() const {
        if (y.empty()) throw std::invalid_argument("Dataset: empty sample");
        if (d < 1) throw std::invalid_argument("Dataset: dimension must be >= 1");
        if (x.size() != y.size() * static_cast<std::size_t>(d))
            throw std::invalid_argument("Dataset: covariate/response size mismatch");
        for (double v : x)
            if (!std::isfinite(v))
                throw std::invalid_argument("Dataset: non-finite covariate");
        for (double v : y)
            if (!std::isfinite(v))
                throw std::invalid_argument("Dataset: non-finite response");
    }
};

/// Abutting cells N(x) covering the data interval: midpoints
/// x_{0,1} < ... < x_{0,k} with widths h_1..h_k.  Cell j spans
/// [mid_j - w_j/2, mid_j + w_j/2); the last cell is closed on the right
/// so each point belongs to exactly one cell.
struct CellPartition {
    std::vector<double> midpoints;
    std::vector<double> widths;

    CellPartition(std::vector<double> mids, std::vector<double> ws)
        : midpoints(std::move(mids)), widths(std::move(ws)) {
        if (midpoints.empty() || midpoints.size() != widths.size())
            throw std::invalid_argument("CellPartition: size mismatch");
        for (std::size_t j = 0; j < midpoints.size(); ++j) {
            if (!(widths[j] > 0.0))
                throw std::invalid_argument("CellPartition: widths must be positive");
            if (j > 0) {
                if (!(midpoints[j] > midpoints[j - 1]))
                    throw std::invalid_argument("CellPartition: midpoints must increase");
                double gap = (midpoints[j] - 0.5 * widths[j]) -
                             (midpoints[j - 1] + 0.5 * widths[j - 1]);
                double scale = std::max(std::fabs(midpoints[j]), 1.0);
                if (std::fabs(gap) > 1e-9 * scale)
                    throw std::invalid_argument("CellPartition: cells must abut");
            }
        }
    }

    int count() const { return static_cast<int>(midpoints.size()); }
    double lo() const { return midpoints.front() - 0.5 * widths.front(); }
    double hi() const { return midpoints.back() + 0.5 * widths.back(); }

    /// Index of the cell containing x (half-open convention, last closed).
    /// A rounding-sized tolerance keeps the extreme data points inside.
    int cell_index(double x) const {
        double tol = 1e-9 * std::max({std::fabs(lo()), std::fabs(hi()), 1.0});
        if (x < lo() - tol || x > hi() + tol) return -1;
        for (int j = 0; j < count(); ++j) {
            double upper = midpoints[j] + 0.5 * widths[j];
            if (x < upper) return j;
        }
        return count() - 1;
    }
};

/// Divide the interval holding the data into k abutting equal-width cells.
inline CellPartition partition_cells(const Dataset& data, int k) {
    if (data.dim() != 1)
        throw std::invalid_argument("partition_cells: univariate data required");
    if (k < 1) throw std::invalid_argument("partition_cells: k must be >= 1");
    if (k > data.size())
        throw std::invalid_argument("partition_cells: more cells than data points");
    double lo = data.x_min();
    double hi = data.x_max();
    if (!(hi > lo))
        throw std::invalid_argument("partition_cells: degenerate covariate range");
    double w = (hi - lo) / k;
    std::vector<double> mids(k), widths(k, w);
    for (int j = 0; j < k; ++j) mids[j] = lo + (j + 0.5) * w;
    return CellPartition(std::move(mids), std::move(widths));
}

/// Ordered locations where estimates are produced.
struct EvaluationGrid {
    std::vector<double> locations;
    bool extrapolates = false; // set when the grid leaves the data range

    explicit EvaluationGrid(std::vector<double> locs) : locations(std::move(locs)) {
        if (locations.empty())
            throw std::invalid_argument("EvaluationGrid: empty grid");
        for (std::size_t i = 1; i < locations.size(); ++i)
            if (!(locations[i] > locations[i - 1]))
                throw std::invalid_argument("EvaluationGrid: locations must increase");
    }

    static EvaluationGrid over_range(double lo, double hi, int count = 201) {
        if (count < 1) throw std::invalid_argument("EvaluationGrid: count must be >= 1");
        if (!(hi > lo)) throw std::invalid_argument("EvaluationGrid: empty range");
        std::vector<double> locs(count);
        if (count == 1) {
            locs[0] = 0.5 * (lo + hi);
        } else {
            for (int i = 0; i < count; ++i)
                locs[i] = lo + (hi - lo) * i / (count - 1);
        }
        return EvaluationGrid(std::move(locs));
    }

    static EvaluationGrid for_data(const Dataset& data, int count = 201) {
        return over_range(data.x_min(), data.x_max(), count);
    }

    void flag_against(double data_lo, double data_hi) {
        double span = data_hi - data_lo;
        extrapolates = locations.front() < data_lo - 0.05 * span ||
                       locations.back() > data_hi + 0.05 * span;
    }

    int size() const { return static_cast<int>(locations.size()); }
};

} // namespace locbayes
