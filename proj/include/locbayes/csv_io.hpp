#pragma once

// CSV ingestion and table emission.  Input columns are "x,y" or
// "x1,...,xd,y"; numbers use '.' decimals regardless of locale, and all
// output is printed with 17 significant digits so round trips are exact.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dataset.hpp"

namespace locbayes {

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline double parse_number(const std::string& s, int line_no) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = b + s.size();
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e)
        throw std::runtime_error("csv parse error at line " + std::to_string(line_no) +
                                 ": bad number \"" + s + "\"");
    if (!std::isfinite(v))
        throw std::runtime_error("csv parse error at line " + std::to_string(line_no) +
                                 ": non-finite value");
    return v;
}

} // namespace detail

/// Read a dataset from CSV with header "x,y" or "x1,...,xd,y".
inline Dataset ingest_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    std::vector<std::string> header = detail::split_csv(line);
    if (header.size() < 2)
        throw std::runtime_error(path + ": header must name covariates and y");
    if (detail::trim(header.back()) != "y")
        throw std::runtime_error(path + ": last header column must be y");
    int d = static_cast<int>(header.size()) - 1;
    if (d == 1) {
        if (header[0] != "x" && header[0] != "x1")
            throw std::runtime_error(path + ": expected header x,y");
    } else {
        for (int j = 0; j < d; ++j)
            if (header[j] != "x" + std::to_string(j + 1))
                throw std::runtime_error(path + ": expected header x1,...,x" +
                                         std::to_string(d) + ",y");
    }
    std::vector<double> xs, ys;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        std::vector<std::string> fields = detail::split_csv(line);
        if (static_cast<int>(fields.size()) != d + 1)
            throw std::runtime_error("csv parse error at line " + std::to_string(line_no) +
                                     ": expected " + std::to_string(d + 1) + " fields");
        for (int j = 0; j < d; ++j)
            xs.push_back(detail::parse_number(fields[j], line_no));
        ys.push_back(detail::parse_number(fields[d], line_no));
    }
    if (ys.empty()) throw std::runtime_error(path + ": no data rows");
    return Dataset(std::move(xs), d, std::move(ys));
}

/// Write a CSV table; every cell already formatted.
inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (std::size_t j = 0; j < header.size(); ++j)
        out << (j ? "," : "") << header[j];
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t j = 0; j < row.size(); ++j)
            out << (j ? "," : "") << row[j];
        out << "\n";
    }
}

inline void write_dataset_csv(const std::string& path, const Dataset& data) {
    std::vector<std::string> header;
    if (data.dim() == 1) {
        header = {"x", "y"};
    } else {
        for (int j = 0; j < data.dim(); ++j)
            header.push_back("x" + std::to_string(j + 1));
        header.push_back("y");
    }
    std::vector<std::vector<std::string>> rows;
    rows.reserve(data.size());
    for (int i = 0; i < data.size(); ++i) {
        std::vector<std::string> row;
        for (int j = 0; j < data.dim(); ++j) row.push_back(format_g17(data.xv(i, j)));
        row.push_back(format_g17(data.y[i]));
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

/// Two-column whitespace-separated plot file.
inline void write_xy_file(const std::string& path, const std::vector<double>& x,
                          const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("write_xy_file: size mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (std::size_t i = 0; i < x.size(); ++i)
        out << format_g17(x[i]) << " " << format_g17(y[i]) << "\n";
}

} // namespace locbayes
