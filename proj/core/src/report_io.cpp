#include "strucdiff/report_io.hpp"

#include <algorithm>

#include "json.hpp"
#include "strucdiff/dataset_io.hpp"

namespace strucdiff {

namespace {

using json = nlohmann::ordered_json;

json leaf_metrics_json(const LeafMetrics& metrics) {
  json out = json::object();
  for (const auto& [path, m] : metrics)
    out[path] = {{"metric", m.metric}, {"value", m.value}, {"stderr", m.stderr_value}, {"count", m.count}};
  return out;
}

std::vector<std::vector<std::string>> long_rows(std::span<const MetricReport> reports) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : reports) {
    for (const auto& [predictor, metrics] : {std::pair{"model", &r.model}, std::pair{"baseline", &r.baseline}}) {
      for (const auto& [path, m] : *metrics)
        rows.push_back({format_number(r.masking_fraction), path, predictor, m.metric, format_number(m.value),
                        format_number(m.stderr_value), std::to_string(m.count)});
    }
  }
  return rows;
}

const std::vector<std::string> kColumns{"fraction", "leaf", "predictor", "metric", "value", "stderr", "count"};

}  // namespace

std::string metric_reports_json(std::span<const MetricReport> reports) {
  json doc;
  doc["reports"] = json::array();
  for (const auto& r : reports)
    doc["reports"].push_back(
        {{"masking_fraction", r.masking_fraction}, {"model", leaf_metrics_json(r.model)}, {"baseline", leaf_metrics_json(r.baseline)}});
  return doc.dump(2) + "\n";
}

std::string metric_reports_aligned_csv(std::span<const MetricReport> reports) {
  auto rows = long_rows(reports);
  std::vector<std::size_t> width;
  for (const auto& c : kColumns) width.push_back(c.size());
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  auto emit = [&](const std::vector<std::string>& row) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      line += row[i];
      if (i + 1 < row.size()) line += "," + std::string(width[i] - row[i].size() + 1, ' ');
    }
    return line + "\n";
  };
  std::string out = emit(kColumns);
  for (const auto& row : rows) out += emit(row);
  return out;
}

std::string metric_reports_long_csv(std::span<const MetricReport> reports) {
  CsvTable table{kColumns, long_rows(reports)};
  return write_csv(table);
}

}  // namespace strucdiff
