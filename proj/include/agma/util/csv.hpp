#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agma/util/errors.hpp"

namespace agma::util {

/// Shortest text that parses back to the identical double.
inline std::string fmt_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw Error("fmt_double: conversion failed");
    return std::string(buf, p);
}

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

/// Numeric CSV with a header row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ParseError("csv: missing column " + name);
    }
};

inline CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (t.header.empty()) {
            t.header = split(line, ',');
            continue;
        }
        const auto cells = split(line, ',');
        if (cells.size() != t.header.size()) throw ParseError("csv: wrong number of cells", lineno);
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            double v = 0.0;
            auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
            if (ec != std::errc() || p != c.data() + c.size()) throw ParseError("csv: not a number: " + c, lineno);
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw ParseError("csv: missing header");
    return t;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    return read_csv(in);
}

inline void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << "c" << j;
    out << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << fmt_double(m(i, j));
        out << '\n';
    }
}

inline void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_matrix_csv(out, m);
}

}  // namespace agma::util
