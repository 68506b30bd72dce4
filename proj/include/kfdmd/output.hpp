#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace kfdmd {

enum class OutputFormat { csv, json };

OutputFormat parse_format(const std::string& name);
std::string format_name(OutputFormat f);

// std::monostate is an empty cell. Real NaN is written the same way:
// an empty CSV field, null in JSON.
using Cell = std::variant<std::monostate, double, std::int64_t, std::string>;

enum class ColumnType { real, integer, text };

struct Column {
    std::string name;
    ColumnType type;
};

struct Schema {
    std::string name;
    std::vector<Column> columns;

    std::size_t index_of(const std::string& column) const;
};

class Table {
public:
    explicit Table(Schema schema) : schema_(std::move(schema)) {}

    const Schema& schema() const { return schema_; }
    const std::vector<std::vector<Cell>>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }

    // Throws ConfigError when the row does not match the schema.
    void add_row(std::vector<Cell> row);

    const Cell& at(std::size_t row, const std::string& column) const;
    double real(std::size_t row, const std::string& column) const;

private:
    Schema schema_;
    std::vector<std::vector<Cell>> rows_;
};

// 17 significant digits, '.' decimal separator, empty for NaN.
std::string format_real(double v);

std::string to_csv(const Table& table);
std::string to_json(const Table& table);

// RFC 4180 reader; returns the header followed by the records.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

// Writes to `path` (the extension is not touched). Throws IoError with the
// path on failure.
void write_file(const std::filesystem::path& path, const std::string& contents);
void emit_table(const Table& table, const std::filesystem::path& path, OutputFormat format);

// One named line of a plot.
struct PlotSeries {
    std::string name;
    std::vector<std::int64_t> steps;
    std::vector<double> values;
};

struct PlotTrack {
    std::string kind;  // e.g. "eigenvalue_track", used in file names
    std::string x_label;
    std::string y_label;
    std::vector<PlotSeries> series;
};

// Long format: step, series_name, value plus the extra columns given as
// (name, value) pairs appended to every row.
Table plot_table(const PlotTrack& track, const std::vector<std::pair<std::string, Cell>>& extra);

// 800x500 line chart, one polyline per series in input order.
std::string render_svg(const PlotTrack& track);

// "Nice" tick positions (1, 2, 5 times a power of ten) covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target = 6);

}  // namespace kfdmd
