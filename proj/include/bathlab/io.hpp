// bathlab/io.hpp - CSV tables and JSON reports for the command-line tools.
//
// Numbers are printed with "%.17g" so a written table reparses to the exact
// same doubles.  Writers are deterministic: fixed column order, no timestamps,
// rows in grid order.
#pragma once

#include "bathlab/common.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace bathlab::io {

using ordered_json = nlohmann::ordered_json;

constexpr int schema_version = 1;

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Column {
    std::string name;
    std::vector<double> values;
};

inline void write_csv(const std::filesystem::path& path, const std::vector<Column>& columns)
{
    if (columns.empty()) throw std::invalid_argument("write_csv: no columns");
    const std::size_t rows = columns.front().values.size();
    for (const auto& c : columns)
        if (c.values.size() != rows) throw std::invalid_argument("write_csv: ragged columns");
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_csv: cannot open " + path.string());
    for (std::size_t c = 0; c < columns.size(); ++c)
        f << (c ? "," : "") << columns[c].name;
    f << '\n';
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < columns.size(); ++c)
            f << (c ? "," : "") << format_double(columns[c].values[r]);
        f << '\n';
    }
    if (!f) throw std::runtime_error("write_csv: write failed for " + path.string());
}

// Complex series as (t, re, im) plus any extra columns the caller prepared.
inline void write_series_csv(const std::filesystem::path& path, const CorrelationSeries& series,
                             const std::string& value_name = "c")
{
    std::vector<Column> cols(3);
    cols[0].name = "t";
    cols[1].name = "re_" + value_name;
    cols[2].name = "im_" + value_name;
    cols[0].values.resize(series.size());
    cols[1].values.resize(series.size());
    cols[2].values.resize(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        cols[0].values[i] = series.grid.t(i);
        cols[1].values[i] = series.values[i].real();
        cols[2].values[i] = series.values[i].imag();
    }
    write_csv(path, cols);
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::runtime_error("CsvTable: no column named '" + name + "'");
    }
};

inline CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_csv: cannot open " + path.string());
    CsvTable tab;
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("read_csv: empty file " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) tab.header.push_back(cell);
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        while (std::getline(ls, cell, ',')) {
            // strtod instead of stod: keeps subnormals and infinities readable
            // and never throws on garbage, so the error below names the cell
            const char* begin = cell.c_str();
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (cell.empty() || end != begin + cell.size())
                throw std::runtime_error("read_csv: bad number '" + cell + "' in " + path.string());
            row.push_back(v);
        }
        if (row.size() != tab.header.size())
            throw std::runtime_error("read_csv: ragged row in " + path.string());
        tab.rows.push_back(std::move(row));
    }
    return tab;
}

inline CorrelationSeries read_series_csv(const std::filesystem::path& path,
                                         const std::string& value_name = "c")
{
    const CsvTable tab = read_csv(path);
    const std::size_t it = tab.column("t");
    const std::size_t ir = tab.column("re_" + value_name);
    const std::size_t ii = tab.column("im_" + value_name);
    if (tab.rows.size() < 2) throw std::runtime_error("read_series_csv: need at least two rows");
    CorrelationSeries out;
    out.grid.dt = tab.rows[1][it] - tab.rows[0][it];
    out.grid.n = tab.rows.size();
    out.values.resize(tab.rows.size());
    for (std::size_t r = 0; r < tab.rows.size(); ++r) {
        if (std::abs(tab.rows[r][it] - out.grid.t(r)) > 1e-9 * std::max(1.0, std::abs(out.grid.t(r))))
            throw std::runtime_error("read_series_csv: non-uniform time grid");
        out.values[r] = cplx(tab.rows[r][ir], tab.rows[r][ii]);
    }
    return out;
}

inline void write_json(const std::filesystem::path& path, const ordered_json& j)
{
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_json: cannot open " + path.string());
    f << j.dump(2) << '\n';
    if (!f) throw std::runtime_error("write_json: write failed for " + path.string());
}

inline ordered_json read_json(const std::filesystem::path& path)
{
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_json: cannot open " + path.string());
    return ordered_json::parse(f);
}

// Report skeleton shared by all tools: schema tag first, then the payload keys
// in the order the caller inserts them.
inline ordered_json make_report(const std::string& kind)
{
    ordered_json j;
    j["schema_version"] = schema_version;
    j["kind"] = kind;
    return j;
}

} // namespace bathlab::io
