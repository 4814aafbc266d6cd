#pragma once
// Observed data: outcomes, binary treatment and standardized covariates.

#include "cfm/errors.hpp"
#include "cfm/linalg.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cfm {

struct Dataset {
    Matrix y;                 // n x q
    std::vector<int> t;       // n, each 0 or 1
    Matrix x;                 // n x p, standardized
    std::vector<std::string> ids;
    std::vector<std::string> outcome_names;
    std::vector<std::string> covariate_names;
    Vector x_means;           // raw-scale column means
    Vector x_sds;             // raw-scale column SDs (n - 1 denominator)

    Index n() const { return y.rows(); }
    Index q() const { return y.cols(); }
    Index p() const { return x.cols(); }

    std::vector<int> arm_units(int arm) const {
        std::vector<int> out;
        for (int i = 0; i < static_cast<int>(t.size()); ++i)
            if (t[i] == arm) out.push_back(i);
        return out;
    }

    // Covariates mapped back to the scale they were ingested on.
    Matrix raw_x() const {
        Matrix raw = x;
        for (Index k = 0; k < raw.cols(); ++k) raw.col(k) = raw.col(k).array() * x_sds[k] + x_means[k];
        return raw;
    }
};

struct Standardized {
    Matrix x;
    Vector means;
    Vector sds;
};

inline Standardized standardize(const Matrix& raw, const std::vector<std::string>& names = {}) {
    const Index n = raw.rows();
    if (n < 2 && raw.cols() > 0) throw ValidationError("standardization needs at least two rows");
    Standardized out{raw, Vector(raw.cols()), Vector(raw.cols())};
    for (Index k = 0; k < raw.cols(); ++k) {
        const double mean = raw.col(k).mean();
        const double ss = (raw.col(k).array() - mean).square().sum();
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        const double scale = std::max(1.0, raw.col(k).cwiseAbs().maxCoeff());
        if (!(sd > 1e-12 * scale)) {
            const std::string name = k < static_cast<Index>(names.size()) ? names[k] : "#" + std::to_string(k + 1);
            throw ValidationError("covariate column '" + name + "' has zero variance");
        }
        out.x.col(k) = (raw.col(k).array() - mean) / sd;
        out.means[k] = mean;
        out.sds[k] = sd;
    }
    return out;
}

// Throws unless treatment is binary with both arms present and all values finite.
inline void validate_dataset(const Dataset& d) {
    const Index n = d.n();
    if (static_cast<Index>(d.t.size()) != n || d.x.rows() != n || static_cast<Index>(d.ids.size()) != n)
        throw ValidationError("dataset components disagree on the number of units");
    if (d.q() < 1) throw ValidationError("dataset has no outcome columns");
    bool has0 = false, has1 = false;
    for (Index i = 0; i < n; ++i) {
        if (d.t[i] != 0 && d.t[i] != 1) throw ValidationError("treatment must be 0 or 1 (row " + std::to_string(i + 1) + ")");
        (d.t[i] == 0 ? has0 : has1) = true;
    }
    if (!has0 || !has1) throw ValidationError("both treatment arms must be non-empty");
    if (!d.y.allFinite() || !d.x.allFinite()) throw ValidationError("dataset contains non-finite values");
}

// Assemble a dataset from raw covariates; ids default to 1..n.
inline Dataset make_dataset(Matrix y, std::vector<int> t, const Matrix& raw_x, std::vector<std::string> ids = {},
                            std::vector<std::string> outcome_names = {}, std::vector<std::string> covariate_names = {}) {
    Dataset d;
    const Index n = y.rows();
    if (ids.empty())
        for (Index i = 0; i < n; ++i) ids.push_back(std::to_string(i + 1));
    if (outcome_names.empty())
        for (Index k = 0; k < y.cols(); ++k) outcome_names.push_back("y_" + std::to_string(k + 1));
    if (covariate_names.empty())
        for (Index k = 0; k < raw_x.cols(); ++k) covariate_names.push_back("x_" + std::to_string(k + 1));
    auto s = standardize(raw_x, covariate_names);
    d.y = std::move(y);
    d.t = std::move(t);
    d.x = std::move(s.x);
    d.x_means = std::move(s.means);
    d.x_sds = std::move(s.sds);
    d.ids = std::move(ids);
    d.outcome_names = std::move(outcome_names);
    d.covariate_names = std::move(covariate_names);
    validate_dataset(d);
    return d;
}

// ---------------------------------------------------------------------------
// CSV

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.emplace_back(trim(cur));
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace detail

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<size_t> column(std::string_view name) const {
        for (size_t k = 0; k < header.size(); ++k)
            if (header[k] == name) return k;
        return std::nullopt;
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (first) {
            table.header = std::move(cells);
            first = false;
            continue;
        }
        if (cells.size() != table.header.size())
            throw ValidationError(path + ": row " + std::to_string(table.rows.size() + 1) + " has " +
                                  std::to_string(cells.size()) + " cells, header has " +
                                  std::to_string(table.header.size()));
        table.rows.push_back(std::move(cells));
    }
    if (first) throw ValidationError(path + ": missing header row");
    return table;
}

// Maps dataset roles onto CSV column names.
struct Schema {
    std::string id = "id";
    std::string treatment = "t";
    std::vector<std::string> outcomes;    // empty: every column named y_<k>
    std::vector<std::string> covariates;  // empty: every column named x_<k>

    static Schema from_json(const nlohmann::json& j) {
        Schema s;
        if (j.contains("id")) s.id = j.at("id").get<std::string>();
        if (j.contains("treatment")) s.treatment = j.at("treatment").get<std::string>();
        if (j.contains("outcomes")) s.outcomes = j.at("outcomes").get<std::vector<std::string>>();
        if (j.contains("covariates")) s.covariates = j.at("covariates").get<std::vector<std::string>>();
        return s;
    }

    static Schema load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open schema file '" + path + "'");
        try {
            return from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("schema file '" + path + "': " + e.what());
        }
    }
};

namespace detail {

// Columns named <prefix><k>, ordered by k.
inline std::vector<std::string> indexed_columns(const std::vector<std::string>& header, const std::string& prefix) {
    const std::regex re("^" + prefix + "([0-9]+)$");
    std::vector<std::pair<long, std::string>> found;
    for (const auto& h : header) {
        std::smatch m;
        if (std::regex_match(h, m, re)) found.emplace_back(std::stol(m[1].str()), h);
    }
    std::sort(found.begin(), found.end());
    std::vector<std::string> out;
    for (auto& f : found) out.push_back(f.second);
    return out;
}

}  // namespace detail

inline Dataset dataset_from_table(const CsvTable& table, const Schema& schema, const std::string& source = "csv") {
    auto need = [&](const std::string& name) {
        auto k = table.column(name);
        if (!k) throw SchemaError(source + ": missing column '" + name + "'");
        return *k;
    };
    const size_t id_col = need(schema.id);
    const size_t t_col = need(schema.treatment);
    auto outcomes = schema.outcomes.empty() ? detail::indexed_columns(table.header, "y_") : schema.outcomes;
    auto covariates = schema.covariates.empty() ? detail::indexed_columns(table.header, "x_") : schema.covariates;
    if (outcomes.empty()) throw SchemaError(source + ": no outcome columns");
    std::vector<size_t> y_cols, x_cols;
    for (const auto& c : outcomes) y_cols.push_back(need(c));
    for (const auto& c : covariates) x_cols.push_back(need(c));

    const Index n = static_cast<Index>(table.rows.size());
    Matrix y(n, static_cast<Index>(y_cols.size()));
    Matrix x(n, static_cast<Index>(x_cols.size()));
    std::vector<int> t(n);
    std::vector<std::string> ids(n);
    auto cell = [&](Index i, size_t col) {
        auto v = detail::parse_double(table.rows[i][col]);
        if (!v || !std::isfinite(*v))
            throw ValidationError(source + ": row " + std::to_string(i + 1) + ", column '" + table.header[col] +
                                  "' is not a finite number");
        return *v;
    };
    for (Index i = 0; i < n; ++i) {
        ids[i] = table.rows[i][id_col];
        const double tv = cell(i, t_col);
        if (tv != 0.0 && tv != 1.0)
            throw ValidationError(source + ": row " + std::to_string(i + 1) + ", column '" + schema.treatment +
                                  "' must be 0 or 1");
        t[i] = static_cast<int>(tv);
        for (size_t k = 0; k < y_cols.size(); ++k) y(i, static_cast<Index>(k)) = cell(i, y_cols[k]);
        for (size_t k = 0; k < x_cols.size(); ++k) x(i, static_cast<Index>(k)) = cell(i, x_cols[k]);
    }
    return make_dataset(std::move(y), std::move(t), x, std::move(ids), outcomes, covariates);
}

inline Dataset load_dataset(const std::string& path, const Schema& schema = {}) {
    return dataset_from_table(read_csv(path), schema, path);
}

// Writes id, t, outcomes, then covariates on their original scale.
inline void write_dataset(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "id,t";
    for (const auto& name : d.outcome_names) out << ',' << name;
    for (const auto& name : d.covariate_names) out << ',' << name;
    out << '\n';
    const Matrix raw = d.raw_x();
    for (Index i = 0; i < d.n(); ++i) {
        out << d.ids[i] << ',' << d.t[i];
        for (Index k = 0; k < d.q(); ++k) out << ',' << format_double(d.y(i, k));
        for (Index k = 0; k < d.p(); ++k) out << ',' << format_double(raw(i, k));
        out << '\n';
    }
    if (!out) throw IoError("write to '" + path + "' failed");
}

// Subset of units, keeping the original standardization constants.
inline Dataset subset_units(const Dataset& d, const std::vector<int>& rows) {
    Dataset out;
    const Index m = static_cast<Index>(rows.size());
    out.y.resize(m, d.q());
    out.x.resize(m, d.p());
    for (Index r = 0; r < m; ++r) {
        out.y.row(r) = d.y.row(rows[r]);
        out.x.row(r) = d.x.row(rows[r]);
        out.t.push_back(d.t[rows[r]]);
        out.ids.push_back(d.ids[rows[r]]);
    }
    out.outcome_names = d.outcome_names;
    out.covariate_names = d.covariate_names;
    out.x_means = d.x_means;
    out.x_sds = d.x_sds;
    return out;
}

}  // namespace cfm
