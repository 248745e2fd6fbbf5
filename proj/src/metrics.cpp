#include "dipp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "dipp/errors.hpp"

namespace dipp {

namespace {

std::string format_cell(std::optional<double> v) {
  if (!v || std::isnan(*v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", *v);
  return buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

void write_rows(const std::vector<MetricRecord>& records, const std::vector<std::string>& columns, std::ostream& out) {
  out << "step";
  for (const auto& c : columns) out << "," << c;
  out << "\n";
  for (const auto& r : records) {
    out << r.step;
    for (const auto& c : columns) out << "," << format_cell(r.get(c));
    out << "\n";
  }
}

}  // namespace

std::optional<double> MetricRecord::get(const std::string& name) const {
  const auto it = values.find(name);
  if (it == values.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::string>& standard_metric_columns() {
  static const std::vector<std::string> columns = {"dsm_loss",        "ta_loss",         "pseudo_loss",
                                                   "mean_reward",     "score_diff_norm", "energy_distance",
                                                   "mean_error",      "cfg_log_ratio"};
  return columns;
}

void MetricLog::append(MetricRecord record) {
  if (!records_.empty() && record.step <= records_.back().step) {
    throw UsageError("metric step " + std::to_string(record.step) + " does not follow step " +
                     std::to_string(records_.back().step));
  }
  records_.push_back(std::move(record));
}

std::vector<std::string> metric_columns(const std::vector<MetricRecord>& records) {
  std::vector<std::string> columns = standard_metric_columns();
  const std::set<std::string> standard(columns.begin(), columns.end());
  std::set<std::string> extra;
  for (const auto& r : records) {
    for (const auto& [name, value] : r.values) {
      if (!standard.count(name)) extra.insert(name);
    }
  }
  columns.insert(columns.end(), extra.begin(), extra.end());
  return columns;
}

void write_metrics_csv(const std::vector<MetricRecord>& records, std::ostream& out) {
  write_rows(records, metric_columns(records), out);
}

void emit_metrics_csv(const std::vector<MetricRecord>& records, const std::string& path) {
  if (records.empty()) throw UsageError("emit_metrics_csv: no records");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_metrics_csv(records, out);
  out.close();
  if (!out) throw Error("failed to write '" + path + "'");
}

std::vector<MetricRecord> parse_metrics_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw LoadError(source + ": empty metrics file");
  const auto header = split(line);
  if (header.empty() || header[0] != "step") throw LoadError(source + ": first column must be 'step'");
  std::vector<MetricRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw LoadError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " cells, found " + std::to_string(cells.size()));
    }
    MetricRecord r;
    try {
      std::size_t used = 0;
      r.step = std::stoull(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument("step");
      for (std::size_t i = 1; i < cells.size(); ++i) {
        if (cells[i].empty()) continue;
        r.values[header[i]] = std::stod(cells[i], &used);
        if (used != cells[i].size()) throw std::invalid_argument(header[i]);
      }
    } catch (const std::logic_error&) {
      throw LoadError(source + ":" + std::to_string(line_no) + ": malformed number");
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<MetricRecord> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open metrics file '" + path + "'");
  return parse_metrics_csv(in, path);
}

void write_selected_columns(const std::vector<MetricRecord>& records, const std::vector<std::string>& columns,
                            std::ostream& out) {
  if (columns.empty()) {
    write_metrics_csv(records, out);
    return;
  }
  const auto available = metric_columns(records);
  for (const auto& c : columns) {
    if (std::find(available.begin(), available.end(), c) == available.end()) {
      throw UsageError("unknown metric column '" + c + "'");
    }
  }
  write_rows(records, columns, out);
}

}  // namespace dipp
