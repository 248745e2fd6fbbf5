#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dipp {

struct MetricRecord {
  std::uint64_t step = 0;
  std::map<std::string, double> values;

  std::optional<double> get(const std::string& name) const;
  bool operator==(const MetricRecord&) const = default;
};

// Columns every metrics CSV carries, in this order, after "step".
const std::vector<std::string>& standard_metric_columns();

/// Append-only record list with strictly increasing steps.
class MetricLog {
 public:
  void append(MetricRecord record);
  const std::vector<MetricRecord>& records() const { return records_; }

 private:
  std::vector<MetricRecord> records_;
};

/// Header: step, the standard columns, then any further metric names in
/// lexicographic order. Missing or NaN values are written as empty cells,
/// everything else with 17 significant digits.
std::vector<std::string> metric_columns(const std::vector<MetricRecord>& records);
void write_metrics_csv(const std::vector<MetricRecord>& records, std::ostream& out);
void emit_metrics_csv(const std::vector<MetricRecord>& records, const std::string& path);

std::vector<MetricRecord> parse_metrics_csv(std::istream& in, const std::string& source = "<csv>");
std::vector<MetricRecord> read_metrics_csv(const std::string& path);

// Re-emits `step` plus the selected columns (all when empty).
void write_selected_columns(const std::vector<MetricRecord>& records, const std::vector<std::string>& columns,
                            std::ostream& out);

}  // namespace dipp
