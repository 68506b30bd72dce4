#include "doctest.h"

#include "kfdmd/error.hpp"
#include "kfdmd/output.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

#include "json.hpp"

using namespace kfdmd;

namespace {

Schema sample_schema() {
    return {"sample", {{"name", ColumnType::text}, {"count", ColumnType::integer}, {"value", ColumnType::real}}};
}

std::size_t count(const std::string& s, const std::string& what) {
    std::size_t n = 0;
    for (auto pos = s.find(what); pos != std::string::npos; pos = s.find(what, pos + what.size())) ++n;
    return n;
}

}  // namespace

TEST_CASE("empty table gives a header-only CSV") {
    const Table t(sample_schema());
    CHECK(to_csv(t) == "name,count,value\r\n");
    CHECK(nlohmann::json::parse(to_json(t)).empty());
}

TEST_CASE("one row round-trips through the CSV reader") {
    Table t(sample_schema());
    t.add_row({std::string("a,b \"q\"\nline"), std::int64_t{-42}, 0.1});
    const auto rows = parse_csv(to_csv(t));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == std::vector<std::string>{"name", "count", "value"});
    CHECK(rows[1][0] == "a,b \"q\"\nline");
    CHECK(std::stoll(rows[1][1]) == -42);
    CHECK(std::stod(rows[1][2]) == 0.1);
    CHECK(to_csv(t).find("\"a,b \"\"q\"\"\nline\"") != std::string::npos);
}

TEST_CASE("reals keep 17 significant digits") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) CHECK(std::stod(format_real(v)) == v);
    CHECK(format_real(0.1) == "0.10000000000000001");
    CHECK(format_real(std::numeric_limits<double>::quiet_NaN()).empty());
    CHECK(format_real(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_real(-std::numeric_limits<double>::infinity()) == "-inf");
}

TEST_CASE("NaN is an empty cell in CSV and null in JSON") {
    Table t(sample_schema());
    t.add_row({std::string("x"), std::monostate{}, std::nan("")});
    CHECK(to_csv(t) == "name,count,value\r\nx,,\r\n");
    const auto j = nlohmann::json::parse(to_json(t));
    REQUIRE(j.size() == 1);
    CHECK(j[0]["count"].is_null());
    CHECK(j[0]["value"].is_null());
    CHECK(j[0]["name"] == "x");
}

TEST_CASE("JSON uses the CSV field names in schema order") {
    Table t(sample_schema());
    t.add_row({std::string("x"), std::int64_t{3}, 1.5});
    const std::string s = to_json(t);
    CHECK(s.find("\"name\"") < s.find("\"count\""));
    CHECK(s.find("\"count\"") < s.find("\"value\""));
    const auto j = nlohmann::json::parse(s);
    CHECK(j[0]["count"] == 3);
    CHECK(j[0]["value"] == 1.5);
}

TEST_CASE("rows must match the schema") {
    Table t(sample_schema());
    CHECK_THROWS_AS(t.add_row({std::string("x")}), ConfigError);
    CHECK_THROWS_AS(t.add_row({1.0, std::int64_t{1}, 1.0}), ConfigError);
    CHECK_THROWS_AS(t.at(0, "name"), ConfigError);
    t.add_row({std::string("x"), std::int64_t{1}, 2.0});
    CHECK_THROWS_AS(t.at(0, "missing"), ConfigError);
    CHECK(t.real(0, "value") == 2.0);
}

TEST_CASE("format names") {
    CHECK(parse_format("csv") == OutputFormat::csv);
    CHECK(parse_format("json") == OutputFormat::json);
    CHECK(format_name(OutputFormat::json) == "json");
    CHECK_THROWS_AS(parse_format("xml"), ConfigError);
}

TEST_CASE("write_file creates directories and reports the path") {
    const auto dir = std::filesystem::temp_directory_path() / "kfdmd_output_test";
    std::filesystem::remove_all(dir);
    const auto path = dir / "a" / "b.csv";
    Table t(sample_schema());
    emit_table(t, path, OutputFormat::csv);
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == "name,count,value\r\n");

    // A regular file in the way of a directory.
    const auto blocked = dir / "a" / "b.csv" / "c.csv";
    try {
        write_file(blocked, "x");
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("c.csv") != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("plot table is long format") {
    PlotTrack track{"eigenvalue_track", "step", "value", {{"a", {0, 1}, {1.0, 2.0}}, {"b", {0}, {3.0}}}};
    const Table t = plot_table(track, {{"seed", std::int64_t{4}}});
    REQUIRE(t.size() == 3);
    CHECK(t.schema().columns[0].name == "step");
    CHECK(t.schema().columns[1].name == "series_name");
    CHECK(t.schema().columns[2].name == "value");
    CHECK(t.schema().columns[3].name == "seed");
    CHECK(std::get<std::string>(t.at(2, "series_name")) == "b");
    CHECK(std::get<std::int64_t>(t.at(1, "step")) == 1);
}

TEST_CASE("SVG charts") {
    PlotTrack flat{"flat", "step", "value", {{"c", {0, 1, 2, 3}, {2.0, 2.0, 2.0, 2.0}}}};
    const std::string svg = render_svg(flat);
    CHECK(svg.find("width=\"800\"") != std::string::npos);
    CHECK(svg.find("height=\"500\"") != std::string::npos);
    CHECK(count(svg, "<polyline") == 1);

    // All points of a constant track share one y coordinate.
    const std::regex points_re("points=\"([^\"]*)\"");
    std::smatch m;
    REQUIRE(std::regex_search(svg, m, points_re));
    std::istringstream pts(m[1].str());
    std::string pair, y0;
    int n = 0;
    while (pts >> pair) {
        const std::string y = pair.substr(pair.find(',') + 1);
        if (n == 0) y0 = y;
        CHECK(y == y0);
        ++n;
    }
    CHECK(n == 4);

    PlotTrack two{"two", "step", "value", {{"first", {0, 1}, {0.0, 1.0}}, {"second", {0, 1}, {1.0, 0.0}}}};
    const std::string svg2 = render_svg(two);
    CHECK(count(svg2, "<polyline") == 2);
    CHECK(svg2.find(">first<") < svg2.find(">second<"));
    CHECK(render_svg(two) == svg2);
}

TEST_CASE("nice ticks") {
    const auto t = nice_ticks(0.0, 1.0);
    REQUIRE(t.size() >= 3);
    CHECK(t.front() <= 0.0);
    CHECK(t.back() >= 1.0 - 1e-12);
    const double step = t[1] - t[0];
    const double mant = step / std::pow(10.0, std::floor(std::log10(step)));
    CHECK((std::abs(mant - 1.0) < 1e-9 || std::abs(mant - 2.0) < 1e-9 || std::abs(mant - 5.0) < 1e-9));
    CHECK(nice_ticks(3.0, 3.0).size() >= 2);
}
