#pragma once

#include <cmath>
#include <cstdio>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xfer/report/table.hpp"

namespace xfer::report {

inline constexpr int kReportSchemaVersion = 1;

enum class RenderFormat { plain, markdown, data };

inline RenderFormat parse_render_format(const std::string& s) {
  if (s == "plain") return RenderFormat::plain;
  if (s == "markdown") return RenderFormat::markdown;
  if (s == "data") return RenderFormat::data;
  throw ConfigError("unknown report format '" + s + "' (plain|markdown|data)");
}

/// One decimal, half away from zero.
inline double round_display(double x) { return std::round(x * 10.0) / 10.0; }

inline std::string format_value(double x) {
  char buf[32];
  const double r = round_display(x);
  std::snprintf(buf, sizeof buf, "%.1f", r == 0.0 ? 0.0 : r);
  return buf;
}

/// Signed; zero renders as "+0.0".
inline std::string format_delta(double x) {
  const double r = round_display(x);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%.1f", r < 0.0 ? '-' : '+', std::fabs(r));
  return buf;
}

namespace detail {

template <typename F>
std::string join_cell(const std::vector<double>& values, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "/" : "") + fmt(values[i]);
  return out;
}

inline std::vector<std::vector<std::string>> display_grid(const DeltaTable& t) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{"model"};
  for (const auto& r : t.baseline.tasks) header.push_back(r.task);
  header.push_back("avg");
  grid.push_back(header);
  std::vector<std::string> base{t.baseline.label};
  for (const auto& r : t.baseline.tasks) base.push_back(join_cell(r.means, format_value));
  base.push_back(format_value(t.baseline.average));
  grid.push_back(base);
  for (const auto& row : t.rows) {
    std::vector<std::string> line{row.run.label};
    for (const auto& c : row.cells) line.push_back(join_cell(c.metric_deltas, format_delta));
    line.push_back(format_delta(row.average));
    grid.push_back(line);
  }
  return grid;
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const TaskResult& r) {
  j = {{"task", r.task}, {"metrics", r.metrics}, {"per_language", r.per_language},
       {"means", r.means}, {"dev_fallback", r.dev_fallback}};
}

inline void from_json(const nlohmann::json& j, TaskResult& r) {
  r.task = j.at("task").get<std::string>();
  r.metrics = j.at("metrics").get<std::vector<std::string>>();
  r.per_language = j.at("per_language").get<std::map<std::string, std::vector<double>>>();
  r.means = j.at("means").get<std::vector<double>>();
  r.dev_fallback = j.value("dev_fallback", false);
}

inline void to_json(nlohmann::json& j, const BenchmarkRow& r) {
  j = {{"label", r.label},
       {"tasks", r.tasks},
       {"scores", r.scores},
       {"average", r.average},
       {"provenance", {{"run_id", r.provenance.run_id}, {"manifest_hash", r.provenance.manifest_hash}}}};
}

inline void from_json(const nlohmann::json& j, BenchmarkRow& r) {
  r.label = j.at("label").get<std::string>();
  r.tasks = j.at("tasks").get<std::vector<TaskResult>>();
  r.scores = j.at("scores").get<std::vector<double>>();
  r.average = j.at("average").get<double>();
  const auto& p = j.at("provenance");
  r.provenance = {p.at("run_id").get<std::string>(), p.at("manifest_hash").get<std::string>()};
}

inline nlohmann::json to_data(const DeltaTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : row.cells) cells.push_back({{"metric_deltas", c.metric_deltas}, {"combined", c.combined}});
    rows.push_back({{"run", row.run}, {"cells", cells}, {"average", row.average}});
  }
  return {{"schema_version", kReportSchemaVersion}, {"baseline", t.baseline}, {"rows", rows}};
}

inline DeltaTable parse_data(const nlohmann::json& j) {
  const int version = j.at("schema_version").get<int>();
  if (version != kReportSchemaVersion)
    throw ConfigError("report data schema " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kReportSchemaVersion) + ")");
  DeltaTable t;
  t.baseline = j.at("baseline").get<BenchmarkRow>();
  for (const auto& r : j.at("rows")) {
    DeltaRow row;
    row.run = r.at("run").get<BenchmarkRow>();
    for (const auto& c : r.at("cells"))
      row.cells.push_back({c.at("metric_deltas").get<std::vector<double>>(), c.at("combined").get<double>()});
    row.average = r.at("average").get<double>();
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline DeltaTable parse_data(const std::string& text) { return parse_data(nlohmann::json::parse(text)); }

/// Baseline in absolute values, runs as signed deltas, one decimal.
inline std::string render(const DeltaTable& t, RenderFormat format) {
  if (format == RenderFormat::data) return to_data(t).dump(1) + "\n";
  const auto grid = detail::display_grid(t);
  std::ostringstream out;
  if (format == RenderFormat::markdown) {
    for (std::size_t r = 0; r < grid.size(); ++r) {
      out << "|";
      for (std::size_t c = 0; c < grid[r].size(); ++c) {
        std::string cell = grid[r][c];
        if (r == 0 && c + 1 == grid[r].size()) cell = "Avg.";
        out << ' ' << cell << " |";
      }
      out << "\n";
      if (r == 0) {
        out << "|";
        for (std::size_t c = 0; c < grid[r].size(); ++c) out << (c == 0 ? " --- |" : " ---: |");
        out << "\n";
      }
    }
    return out.str();
  }
  std::vector<std::size_t> width(grid[0].size(), 0);
  for (const auto& row : grid)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  for (const auto& row : grid) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line += "  ";
      const std::size_t pad = width[c] - row[c].size();
      line += c == 0 ? row[c] + std::string(pad, ' ') : std::string(pad, ' ') + row[c];
    }
    out << line << "\n";
  }
  return out.str();
}

struct PlainRow {
  std::string label;
  std::vector<std::vector<double>> cells;
  double average = 0.0;
};

struct PlainTable {
  std::vector<std::string> tasks;
  std::vector<PlainRow> rows;  // baseline first
};

/// Reads back what render(..., plain) printed. Columns are separated by two
/// or more spaces.
inline PlainTable parse_plain(const std::string& text) {
  static const std::regex sep(" {2,}");
  PlainTable table;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    for (std::sregex_token_iterator it(line.begin(), line.end(), sep, -1), end; it != end; ++it)
      if (!it->str().empty()) cols.push_back(it->str());
    if (cols.size() < 2) throw ConfigError("unparseable report line: " + line);
    if (header) {
      table.tasks.assign(cols.begin() + 1, cols.end() - 1);
      header = false;
      continue;
    }
    if (cols.size() != table.tasks.size() + 2) throw ConfigError("column count mismatch in line: " + line);
    PlainRow row;
    row.label = cols.front();
    for (std::size_t c = 1; c + 1 < cols.size(); ++c) {
      std::vector<double> values;
      std::stringstream cell(cols[c]);
      for (std::string part; std::getline(cell, part, '/');) values.push_back(std::stod(part));
      row.cells.push_back(std::move(values));
    }
    row.average = std::stod(cols.back());
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace xfer::report
