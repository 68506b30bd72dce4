#include "kfdmd/output.hpp"

#include "kfdmd/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace kfdmd {

OutputFormat parse_format(const std::string& name) {
    if (name == "csv") return OutputFormat::csv;
    if (name == "json") return OutputFormat::json;
    throw ConfigError("unknown output format '" + name + "' (expected csv or json)");
}

std::string format_name(OutputFormat f) { return f == OutputFormat::csv ? "csv" : "json"; }

std::size_t Schema::index_of(const std::string& column) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name == column) return i;
    throw ConfigError("table '" + name + "' has no column '" + column + "'");
}

namespace {

bool cell_matches(const Cell& c, ColumnType t) {
    if (std::holds_alternative<std::monostate>(c)) return true;
    switch (t) {
        case ColumnType::real: return std::holds_alternative<double>(c);
        case ColumnType::integer: return std::holds_alternative<std::int64_t>(c);
        case ColumnType::text: return std::holds_alternative<std::string>(c);
    }
    return false;
}

std::string quote_csv(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    out += '"';
    return out;
}

std::string cell_text(const Cell& c) {
    if (const auto* d = std::get_if<double>(&c)) return format_real(*d);
    if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    if (const auto* s = std::get_if<std::string>(&c)) return *s;
    return "";
}

}  // namespace

void Table::add_row(std::vector<Cell> row) {
    if (row.size() != schema_.columns.size())
        throw ConfigError("table '" + schema_.name + "': row has " + std::to_string(row.size()) + " cells, schema has " +
                          std::to_string(schema_.columns.size()));
    for (std::size_t i = 0; i < row.size(); ++i)
        if (!cell_matches(row[i], schema_.columns[i].type))
            throw ConfigError("table '" + schema_.name + "': wrong cell type in column '" + schema_.columns[i].name + "'");
    rows_.push_back(std::move(row));
}

const Cell& Table::at(std::size_t row, const std::string& column) const {
    if (row >= rows_.size())
        throw ConfigError("table '" + schema_.name + "' has " + std::to_string(rows_.size()) + " rows, asked for row " +
                          std::to_string(row));
    return rows_[row][schema_.index_of(column)];
}

double Table::real(std::size_t row, const std::string& column) const {
    const Cell& c = at(row, column);
    if (const auto* d = std::get_if<double>(&c)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
    return std::numeric_limits<double>::quiet_NaN();
}

std::string format_real(double v) {
    if (std::isnan(v)) return "";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string to_csv(const Table& table) {
    std::string out;
    const auto& cols = table.schema().columns;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (i) out += ',';
        out += quote_csv(cols[i].name);
    }
    out += "\r\n";
    for (const auto& row : table.rows()) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += quote_csv(cell_text(row[i]));
        }
        out += "\r\n";
    }
    return out;
}

std::string to_json(const Table& table) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    const auto& cols = table.schema().columns;
    for (const auto& row : table.rows()) {
        nlohmann::ordered_json obj = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < row.size(); ++i) {
            const Cell& c = row[i];
            if (const auto* d = std::get_if<double>(&c))
                obj[cols[i].name] = std::isfinite(*d) ? nlohmann::ordered_json(*d) : nlohmann::ordered_json(nullptr);
            else if (const auto* n = std::get_if<std::int64_t>(&c))
                obj[cols[i].name] = *n;
            else if (const auto* s = std::get_if<std::string>(&c))
                obj[cols[i].name] = *s;
            else
                obj[cols[i].name] = nullptr;
        }
        arr.push_back(std::move(obj));
    }
    return arr.dump(2) + "\n";
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += ch;
            }
            continue;
        }
        if (ch == '"') {
            quoted = true;
            any = true;
        } else if (ch == ',') {
            record.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (ch == '\r' || ch == '\n') {
            if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            record.push_back(std::move(field));
            field.clear();
            records.push_back(std::move(record));
            record.clear();
            any = false;
        } else {
            field += ch;
            any = true;
        }
    }
    if (quoted) throw IoError("unterminated quoted CSV field");
    if (any || !field.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }
    return records;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    if (ec)
        throw IoError("cannot create directory " + path.parent_path().string() + " for " + path.filename().string() + ": " +
                      ec.message());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    f.close();
    if (!f) throw IoError("write failed for " + path.string());
}

void emit_table(const Table& table, const std::filesystem::path& path, OutputFormat format) {
    write_file(path, format == OutputFormat::csv ? to_csv(table) : to_json(table));
}

Table plot_table(const PlotTrack& track, const std::vector<std::pair<std::string, Cell>>& extra) {
    if (track.series.empty()) throw ConfigError("plot track '" + track.kind + "' has no series");
    Schema schema{track.kind, {{"step", ColumnType::integer}, {"series_name", ColumnType::text}, {"value", ColumnType::real}}};
    for (const auto& [name, cell] : extra) {
        ColumnType t = ColumnType::text;
        if (std::holds_alternative<double>(cell)) t = ColumnType::real;
        if (std::holds_alternative<std::int64_t>(cell)) t = ColumnType::integer;
        schema.columns.push_back({name, t});
    }
    Table table(std::move(schema));
    for (const auto& s : track.series) {
        if (s.steps.size() != s.values.size())
            throw ConfigError("plot series '" + s.name + "' has mismatched step and value counts");
        for (std::size_t i = 0; i < s.steps.size(); ++i) {
            std::vector<Cell> row{s.steps[i], s.name, s.values[i]};
            for (const auto& e : extra) row.push_back(e.second);
            table.add_row(std::move(row));
        }
    }
    return table;
}

std::vector<double> nice_ticks(double lo, double hi, int target) {
    if (!(hi > lo)) {
        const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
        lo -= pad;
        hi += pad;
    }
    const double raw = (hi - lo) / std::max(target, 2);
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        step = m * mag;
        if (step >= raw) break;
    }
    std::vector<double> ticks;
    const double first = std::ceil(lo / step - 1e-9) * step;
    for (double t = first; t <= hi + step * 1e-9; t += step) ticks.push_back(std::abs(t) < step * 1e-12 ? 0.0 : t);
    return ticks;
}

namespace {

std::string fixed(double v, int digits = 2) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace

std::string render_svg(const PlotTrack& track) {
    if (track.series.empty()) throw ConfigError("plot track '" + track.kind + "' has no series");
    constexpr double W = 800, H = 500, left = 70, right = 160, top = 30, bottom = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : track.series)
        for (std::size_t i = 0; i < s.steps.size(); ++i) {
            if (!std::isfinite(s.values[i])) continue;
            x0 = std::min(x0, static_cast<double>(s.steps[i]));
            x1 = std::max(x1, static_cast<double>(s.steps[i]));
            y0 = std::min(y0, s.values[i]);
            y1 = std::max(y1, s.values[i]);
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    const auto xt = nice_ticks(x0, x1);
    const auto yt = nice_ticks(y0, y1);
    const double xa = std::min(xt.front(), x0), xb = std::max(xt.back(), x1);
    const double ya = std::min(yt.front(), y0), yb = std::max(yt.back(), y1);
    const double pw = W - left - right, ph = H - top - bottom;
    auto px = [&](double x) { return left + (xb > xa ? (x - xa) / (xb - xa) : 0.5) * pw; };
    auto py = [&](double y) { return top + ph - (yb > ya ? (y - ya) / (yb - ya) : 0.5) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"500\" viewBox=\"0 0 800 500\">\n";
    o << "<rect width=\"800\" height=\"500\" fill=\"white\"/>\n";
    o << "<g stroke=\"black\" stroke-width=\"1\">\n";
    o << "<line x1=\"" << fixed(left) << "\" y1=\"" << fixed(top + ph) << "\" x2=\"" << fixed(left + pw) << "\" y2=\""
      << fixed(top + ph) << "\"/>\n";
    o << "<line x1=\"" << fixed(left) << "\" y1=\"" << fixed(top) << "\" x2=\"" << fixed(left) << "\" y2=\""
      << fixed(top + ph) << "\"/>\n";
    for (double t : xt)
        o << "<line x1=\"" << fixed(px(t)) << "\" y1=\"" << fixed(top + ph) << "\" x2=\"" << fixed(px(t)) << "\" y2=\""
          << fixed(top + ph + 5) << "\"/>\n";
    for (double t : yt)
        o << "<line x1=\"" << fixed(left - 5) << "\" y1=\"" << fixed(py(t)) << "\" x2=\"" << fixed(left) << "\" y2=\""
          << fixed(py(t)) << "\"/>\n";
    o << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
    for (double t : xt)
        o << "<text x=\"" << fixed(px(t)) << "\" y=\"" << fixed(top + ph + 18) << "\" text-anchor=\"middle\">"
          << tick_label(t) << "</text>\n";
    for (double t : yt)
        o << "<text x=\"" << fixed(left - 8) << "\" y=\"" << fixed(py(t) + 4) << "\" text-anchor=\"end\">"
          << tick_label(t) << "</text>\n";
    o << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"" << fixed(H - 10) << "\" text-anchor=\"middle\">"
      << escape_xml(track.x_label) << "</text>\n";
    o << "<text x=\"15\" y=\"" << fixed(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
      << fixed(top + ph / 2) << ")\">" << escape_xml(track.y_label) << "</text>\n";
    o << "</g>\n";

    for (std::size_t k = 0; k < track.series.size(); ++k) {
        const auto& s = track.series[k];
        const char* color = kPalette[k % (sizeof kPalette / sizeof *kPalette)];
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        bool first = true;
        for (std::size_t i = 0; i < s.steps.size(); ++i) {
            if (!std::isfinite(s.values[i])) continue;
            if (!first) o << ' ';
            o << fixed(px(static_cast<double>(s.steps[i]))) << ',' << fixed(py(s.values[i]));
            first = false;
        }
        o << "\"/>\n";
        const double ly = top + 10 + 18 * static_cast<double>(k);
        o << "<line x1=\"" << fixed(W - right + 10) << "\" y1=\"" << fixed(ly) << "\" x2=\"" << fixed(W - right + 30)
          << "\" y2=\"" << fixed(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << fixed(W - right + 35) << "\" y=\"" << fixed(ly + 4)
          << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape_xml(s.name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace kfdmd
