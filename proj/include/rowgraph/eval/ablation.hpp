#pragma once

// Ablation tables (stage count, sample count, gate features) with published
// reference values attached per row, and their JSON/CSV renderings.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rowgraph/eval/metrics.hpp"

namespace rowgraph::eval {

struct Reference {
  double precision = 0;  // percent
  double recall = 0;
  double f1 = 0;
};

struct AblationRow {
  std::string label;
  std::optional<Reference> reference;
  std::optional<MetricsReport> metrics;  // empty when the cell could not be run
  std::string note;                      // why a cell is absent
};

struct AblationTable {
  std::string name;    // "stages", "samples", "features"
  std::string metric;  // "plants" or "lines": which report the columns summarize
  std::vector<AblationRow> rows;
};

enum class Grid { Stages, Samples, Features };

inline std::optional<Grid> parse_grid(const std::string& s) {
  if (s == "stages") return Grid::Stages;
  if (s == "samples") return Grid::Samples;
  if (s == "features") return Grid::Features;
  return std::nullopt;
}

// Row labels and published values (plant detection for stages, line pixels
// otherwise). Stage counts above 2 and sample counts 12/20 have published
// values but are outside this grid.
inline AblationTable empty_table(Grid g) {
  switch (g) {
    case Grid::Stages:
      return {"stages", "plants", {{"T=1", Reference{78.9, 91.0, 84.3}, {}, {}}, {"T=2", Reference{92.7, 90.5, 91.5}, {}, {}}}};
    case Grid::Samples:
      return {"samples",
              "lines",
              {{"L=4", Reference{52.4, 11.2, 16.8}, {}, {}},
               {"L=8", Reference{98.5, 91.0, 94.5}, {}, {}},
               {"L=16", Reference{98.7, 91.9, 95.1}, {}, {}}}};
    case Grid::Features:
      return {"features",
              "lines",
              {{"visual", Reference{94.7, 87.5, 90.7}, {}, {}},
               {"visual+vector", Reference{96.3, 89.0, 92.3}, {}, {}},
               {"visual+line", Reference{98.4, 91.9, 94.9}, {}, {}},
               {"all", Reference{98.7, 91.9, 95.1}, {}, {}}}};
  }
  return {};
}

inline nlohmann::json rates_json(const Rates& r) {
  return {{"precision", r.precision},
          {"recall", r.recall},
          {"f1", r.f1},
          {"precision_undefined", r.precision_undefined},
          {"recall_undefined", r.recall_undefined},
          {"f1_undefined", r.f1_undefined}};
}

inline nlohmann::json mean_sd_json(const MeanSd& m) { return {{"mean", m.mean}, {"sd", m.sd}, {"n", m.count}}; }

inline nlohmann::json report_json(const MetricsReport& r, bool per_patch = true) {
  nlohmann::json j;
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["fn"] = r.fn;
  j["mae"] = r.mae;
  j["pooled"] = rates_json(r.pooled);
  j["per_patch_mean"] = {{"precision", mean_sd_json(r.precision)},
                         {"recall", mean_sd_json(r.recall)},
                         {"f1", mean_sd_json(r.f1)}};
  if (per_patch) {
    auto rows = nlohmann::json::array();
    for (const auto& p : r.patches)
      rows.push_back({{"tp", p.tp},
                      {"fp", p.fp},
                      {"fn", p.fn},
                      {"labeled", p.labeled},
                      {"detected", p.detected},
                      {"rates", rates_json(p.rates)}});
    j["patches"] = rows;
  }
  return j;
}

inline nlohmann::json table_json(const AblationTable& t, const std::vector<MetricsReport>* secondary = nullptr) {
  nlohmann::json j;
  j["grid"] = t.name;
  j["metric"] = t.metric;
  auto rows = nlohmann::json::array();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    nlohmann::json row{{"label", r.label}, {"status", r.metrics ? "ok" : "absent"}};
    if (r.reference)
      row["reference_percent"] = {{"precision", r.reference->precision},
                                  {"recall", r.reference->recall},
                                  {"f1", r.reference->f1}};
    if (r.metrics) row["result"] = report_json(*r.metrics, false);
    if (secondary && i < secondary->size() && r.metrics) row["other_metric"] = report_json((*secondary)[i], false);
    if (!r.note.empty()) row["note"] = r.note;
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j;
}

// Percent values, per-patch mean and sd, as the published tables report them.
inline std::string table_csv(const AblationTable& t) {
  std::string out =
      "row,status,precision,precision_sd,recall,recall_sd,f1,f1_sd,pooled_precision,pooled_recall,pooled_f1,"
      "mae,ref_precision,ref_recall,ref_f1\n";
  char buf[64];
  const auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return std::string(buf);
  };
  const auto mae = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  for (const auto& r : t.rows) {
    out += r.label + "," + (r.metrics ? "ok" : "absent");
    if (r.metrics) {
      const auto& m = *r.metrics;
      out += "," + num(100 * m.precision.mean) + "," + num(100 * m.precision.sd) + "," + num(100 * m.recall.mean) +
             "," + num(100 * m.recall.sd) + "," + num(100 * m.f1.mean) + "," + num(100 * m.f1.sd) + "," +
             num(100 * m.pooled.precision) + "," + num(100 * m.pooled.recall) + "," + num(100 * m.pooled.f1) + "," +
             mae(m.mae);
    } else {
      out += ",,,,,,,,,,";
    }
    if (r.reference)
      out += "," + num(r.reference->precision) + "," + num(r.reference->recall) + "," + num(r.reference->f1);
    else
      out += ",,,";
    out += "\n";
  }
  return out;
}

}  // namespace rowgraph::eval
