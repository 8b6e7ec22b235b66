#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace xfer::metrics {

/// Flat score record; the report module consumes lists of these.
struct MetricRecord {
  std::string task;
  std::string language;
  std::string metric;
  double value = 0.0;
  bool operator==(const MetricRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const MetricRecord& r) {
  j = {{"task", r.task}, {"language", r.language}, {"metric", r.metric}, {"value", r.value}};
}

inline void from_json(const nlohmann::json& j, MetricRecord& r) {
  r.task = j.at("task").get<std::string>();
  r.language = j.at("language").get<std::string>();
  r.metric = j.at("metric").get<std::string>();
  r.value = j.at("value").get<double>();
}

}  // namespace xfer::metrics
