#include <catch2/catch_amalgamated.hpp>

#include "bathlab/io.hpp"
#include "bathlab/oracles.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

using namespace bathlab;
using Catch::Matchers::WithinAbs;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir()
    {
        path = std::filesystem::temp_directory_path()
               / ("bathlab_io_test_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

} // namespace

TEST_CASE("doubles survive a csv round trip bit for bit", "[io]")
{
    TempDir dir;
    const auto file = dir.path / "values.csv";
    const std::vector<double> values{1.0 / 3.0, 1e300, 5e-324, -0.0, 12345.6789,
                                     -2.2250738585072014e-308};
    io::write_csv(file, {{"t", {0.0, 1.0, 2.0, 3.0, 4.0, 5.0}}, {"v", values}});

    const auto table = io::read_csv(file);
    REQUIRE(table.header.size() == 2);
    CHECK(table.header[1] == "v");
    const std::size_t col = table.column("v");
    REQUIRE(table.rows.size() == values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        CHECK(table.rows[i][col] == values[i]);
        CHECK(std::signbit(table.rows[i][col]) == std::signbit(values[i]));
    }
}

TEST_CASE("format_double emits shortest exact representations", "[io]")
{
    CHECK(io::format_double(0.5) == "0.5");
    CHECK(std::stod(io::format_double(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(std::stod(io::format_double(9.87e-150)) == 9.87e-150);
}

TEST_CASE("csv writer rejects unusable tables", "[io]")
{
    TempDir dir;
    CHECK_THROWS_AS(io::write_csv(dir.path / "empty.csv", {}), std::invalid_argument);
    CHECK_THROWS_AS(io::write_csv(dir.path / "ragged.csv", {{"a", {1.0}}, {"b", {1.0, 2.0}}}),
                    std::invalid_argument);
}

TEST_CASE("csv reader reports malformed content", "[io]")
{
    TempDir dir;
    const auto ragged = dir.path / "ragged.csv";
    std::ofstream(ragged) << "a,b\n1.0,2.0\n3.0\n";
    CHECK_THROWS_AS(io::read_csv(ragged), std::runtime_error);

    const auto bad = dir.path / "bad.csv";
    std::ofstream(bad) << "a,b\n1.0,oops\n";
    CHECK_THROWS_AS(io::read_csv(bad), std::runtime_error);

    CHECK_THROWS_AS(io::read_csv(dir.path / "missing.csv"), std::runtime_error);

    const auto ok = dir.path / "ok.csv";
    std::ofstream(ok) << "a,b\n1.0,2.0\n";
    const auto table = io::read_csv(ok);
    CHECK_THROWS_AS(table.column("c"), std::runtime_error);
}

TEST_CASE("correlation series round trip preserves the grid and values", "[io]")
{
    TempDir dir;
    const auto file = dir.path / "series.csv";
    const auto series = oracles::exponential_decay(1.0, 0.7, make_time_grid(5.0, 64));
    io::write_series_csv(file, series);

    const auto back = io::read_series_csv(file);
    REQUIRE(back.size() == series.size());
    CHECK(back.grid.dt == series.grid.dt);
    for (std::size_t i = 0; i < series.size(); ++i) CHECK(back.values[i] == series.values[i]);
}

TEST_CASE("series reader wants a time column and a named value pair", "[io]")
{
    TempDir dir;
    const auto file = dir.path / "series.csv";
    std::ofstream(file) << "t,re_c,im_c\n0.0,1.0,0.0\n";
    CHECK_THROWS_AS(io::read_series_csv(file), std::runtime_error); // single row

    const auto renamed = dir.path / "renamed.csv";
    std::ofstream(renamed) << "t,re_x,im_x\n0.0,1.0,0.0\n0.5,0.8,0.1\n";
    const auto series = io::read_series_csv(renamed, "x");
    CHECK(series.size() == 2);
    CHECK(series.values[1] == cplx(0.8, 0.1));

    const auto jagged_grid = dir.path / "nonuniform.csv";
    std::ofstream(jagged_grid) << "t,re_c,im_c\n0.0,1.0,0.0\n0.5,0.8,0.1\n1.7,0.5,0.2\n";
    CHECK_THROWS_AS(io::read_series_csv(jagged_grid), std::runtime_error);
}

TEST_CASE("json reports round trip with a schema version", "[io]")
{
    TempDir dir;
    auto report = io::make_report("demo");
    CHECK(report.at("schema_version") == io::schema_version);
    CHECK(report.at("kind") == "demo");

    report["value"] = 0.25;
    report["flags"] = {{"ok", true}};
    const auto file = dir.path / "report.json";
    io::write_json(file, report);

    const auto back = io::read_json(file);
    CHECK(back.at("schema_version") == 1);
    CHECK(back.at("value") == 0.25);
    CHECK(back.at("flags").at("ok") == true);

    CHECK_THROWS_AS(io::read_json(dir.path / "missing.json"), std::runtime_error);
}
