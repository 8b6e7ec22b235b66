#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "xfer/error.hpp"
#include "xfer/metrics/record.hpp"

namespace xfer::report {

/// Scores for one task: one or two metrics, each with a value per language.
/// Languages without a score are simply absent from `per_language`.
struct TaskResult {
  std::string task;
  std::vector<std::string> metrics;
  std::map<std::string, std::vector<double>> per_language;
  std::vector<double> means;  // per metric, over the languages present
  bool dev_fallback = false;  // scored on the evaluation split for lack of a dev split
  bool operator==(const TaskResult&) const = default;
};

inline TaskResult make_task_result(std::string task, std::vector<std::string> metrics,
                                   std::map<std::string, std::vector<double>> per_language) {
  TaskResult r{std::move(task), std::move(metrics), std::move(per_language), {}, false};
  if (r.metrics.empty() || r.metrics.size() > 2)
    throw ConfigError("task '" + r.task + "' needs one or two metrics, got " + std::to_string(r.metrics.size()));
  r.means.assign(r.metrics.size(), 0.0);
  for (const auto& [lang, values] : r.per_language) {
    if (values.size() != r.metrics.size())
      throw ConfigError("task '" + r.task + "' language '" + lang + "' has " + std::to_string(values.size()) +
                        " values for " + std::to_string(r.metrics.size()) + " metrics");
    for (std::size_t m = 0; m < values.size(); ++m) r.means[m] += values[m];
  }
  if (!r.per_language.empty())
    for (auto& v : r.means) v /= static_cast<double>(r.per_language.size());
  return r;
}

/// A result known only by its language means.
inline TaskResult task_result_from_means(std::string task, std::vector<std::string> metrics,
                                         std::vector<double> means) {
  if (metrics.size() != means.size()) throw ConfigError("task '" + task + "': metric/value count mismatch");
  TaskResult r = make_task_result(std::move(task), std::move(metrics), {});
  r.means = std::move(means);
  return r;
}

/// Single metric: its mean. Two metrics (F1 and EM): the average of the two means.
inline double task_score(const TaskResult& r) {
  if (r.means.empty()) throw MetricError("task '" + r.task + "' has no metrics");
  if (r.means.size() > 2) throw MetricError("task '" + r.task + "' has more than two metrics");
  return r.means.size() == 1 ? r.means[0] : (r.means[0] + r.means[1]) / 2.0;
}

inline const std::vector<std::string>& xtreme_tasks() {
  static const std::vector<std::string> tasks = {"xnli", "pawsx", "pos",    "ner",    "xquad",
                                                 "mlqa", "tydiqa", "bucc", "tatoeba"};
  return tasks;
}

struct Provenance {
  std::string run_id;
  std::string manifest_hash;
  bool operator==(const Provenance&) const = default;
};

struct BenchmarkRow {
  std::string label;
  std::vector<TaskResult> tasks;  // in benchmark order
  std::vector<double> scores;     // task_score per task
  double average = 0.0;
  Provenance provenance;
  bool operator==(const BenchmarkRow&) const = default;
};

/// Orders results by `task_order` and averages their task scores. Every listed
/// task must be present exactly once.
inline BenchmarkRow benchmark_average(std::string label, const std::vector<TaskResult>& results,
                                      const std::vector<std::string>& task_order = xtreme_tasks()) {
  std::map<std::string, const TaskResult*> by_task;
  for (const auto& r : results)
    if (!by_task.emplace(r.task, &r).second) throw ConfigError("duplicate result for task '" + r.task + "'");
  std::vector<std::string> missing, extra;
  for (const auto& t : task_order)
    if (!by_task.count(t)) missing.push_back(t);
  const std::set<std::string> wanted(task_order.begin(), task_order.end());
  for (const auto& [t, _] : by_task)
    if (!wanted.count(t)) extra.push_back(t);
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "row '" + label + "' does not cover the benchmark:";
    for (const auto& t : missing) msg += " missing " + t + ";";
    for (const auto& t : extra) msg += " unexpected " + t + ";";
    throw ConfigError(msg);
  }
  BenchmarkRow row;
  row.label = std::move(label);
  for (const auto& t : task_order) {
    row.tasks.push_back(*by_task.at(t));
    row.scores.push_back(task_score(row.tasks.back()));
  }
  double sum = 0.0;
  for (double s : row.scores) sum += s;
  row.average = row.scores.empty() ? 0.0 : sum / static_cast<double>(row.scores.size());
  return row;
}

struct DeltaCell {
  std::vector<double> metric_deltas;
  double combined = 0.0;  // task_score(run) - task_score(baseline)
  bool operator==(const DeltaCell&) const = default;
};

struct DeltaRow {
  BenchmarkRow run;
  std::vector<DeltaCell> cells;
  double average = 0.0;  // mean of combined deltas
  bool operator==(const DeltaRow&) const = default;
};

struct DeltaTable {
  BenchmarkRow baseline;
  std::vector<DeltaRow> rows;
  bool operator==(const DeltaTable&) const = default;
};

inline DeltaRow delta_row(const BenchmarkRow& baseline, const BenchmarkRow& run) {
  if (baseline.tasks.size() != run.tasks.size())
    throw ConfigError("run '" + run.label + "' covers " + std::to_string(run.tasks.size()) + " tasks, baseline " +
                      std::to_string(baseline.tasks.size()));
  DeltaRow row{run, {}, 0.0};
  for (std::size_t t = 0; t < baseline.tasks.size(); ++t) {
    const auto& b = baseline.tasks[t];
    const auto& r = run.tasks[t];
    if (b.task != r.task || b.metrics != r.metrics)
      throw ConfigError("run '" + run.label + "' task '" + r.task + "' does not match baseline task '" + b.task + "'");
    DeltaCell cell;
    for (std::size_t m = 0; m < b.means.size(); ++m) cell.metric_deltas.push_back(r.means[m] - b.means[m]);
    cell.combined = task_score(r) - task_score(b);
    row.average += cell.combined;
    row.cells.push_back(std::move(cell));
  }
  if (!row.cells.empty()) row.average /= static_cast<double>(row.cells.size());
  return row;
}

inline DeltaTable delta_table(const BenchmarkRow& baseline, const std::vector<BenchmarkRow>& runs) {
  DeltaTable table{baseline, {}};
  for (const auto& run : runs) table.rows.push_back(delta_row(baseline, run));
  return table;
}

struct Selection {
  std::string label;
  double score = 0.0;
  bool tie = false;
  bool dev_fallback = false;
  bool operator==(const Selection&) const = default;
};

/// Per task, the run with the highest dev task score. Exact ties go to the
/// lexicographically smallest label and set `tie`.
inline std::map<std::string, Selection> select_best(const std::vector<BenchmarkRow>& dev_rows) {
  std::map<std::string, Selection> best;
  std::vector<const BenchmarkRow*> ordered;
  for (const auto& r : dev_rows) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) { return a->label < b->label; });
  for (const auto* row : ordered) {
    for (std::size_t t = 0; t < row->tasks.size(); ++t) {
      const auto& task = row->tasks[t].task;
      const double s = task_score(row->tasks[t]);
      auto it = best.find(task);
      if (it == best.end()) {
        best[task] = {row->label, s, false, row->tasks[t].dev_fallback};
      } else if (s > it->second.score) {
        it->second = {row->label, s, false, row->tasks[t].dev_fallback};
      } else if (s == it->second.score) {
        it->second.tie = true;
      }
    }
  }
  return best;
}

/// Combines, per task, the test result of the run picked on dev.
inline BenchmarkRow best_models_row(const std::map<std::string, Selection>& selection,
                                    const std::vector<BenchmarkRow>& test_rows,
                                    const std::vector<std::string>& task_order, std::string label = "best") {
  std::vector<TaskResult> picked;
  for (const auto& task : task_order) {
    auto sel = selection.find(task);
    if (sel == selection.end()) throw ConfigError("no selection for task '" + task + "'");
    const TaskResult* found = nullptr;
    for (const auto& row : test_rows)
      if (row.label == sel->second.label)
        for (const auto& r : row.tasks)
          if (r.task == task) found = &r;
    if (!found) throw ConfigError("run '" + sel->second.label + "' has no test result for '" + task + "'");
    picked.push_back(*found);
  }
  return benchmark_average(std::move(label), picked, task_order);
}

/// Groups flat metric records into task results, scaled (fractions to points
/// by default). For two-metric tasks "f1" sorts before "em".
inline std::vector<TaskResult> task_results_from_records(const std::vector<metrics::MetricRecord>& records,
                                                         double scale = 100.0) {
  std::map<std::string, std::map<std::string, std::map<std::string, double>>> grouped;  // task, lang, metric
  std::map<std::string, std::set<std::string>> metric_names;
  for (const auto& r : records) {
    grouped[r.task][r.language][r.metric] = r.value * scale;
    metric_names[r.task].insert(r.metric);
  }
  std::vector<TaskResult> out;
  for (const auto& [task, langs] : grouped) {
    std::vector<std::string> names(metric_names[task].begin(), metric_names[task].end());
    std::stable_sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
      return (a == "f1" ? 0 : a == "em" ? 1 : 2) < (b == "f1" ? 0 : b == "em" ? 1 : 2);
    });
    std::map<std::string, std::vector<double>> per_language;
    for (const auto& [lang, values] : langs) {
      std::vector<double> v;
      for (const auto& m : names) {
        auto it = values.find(m);
        if (it == values.end()) throw ConfigError("task '" + task + "' language '" + lang + "' lacks metric " + m);
        v.push_back(it->second);
      }
      per_language[lang] = std::move(v);
    }
    out.push_back(make_task_result(task, names, std::move(per_language)));
  }
  return out;
}

}  // namespace xfer::report
