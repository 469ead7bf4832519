#pragma once

// Stage/arousal sidecars: a JSON document
//   {"stages": [0, 2, ...], "arousals": [{"start": 45.0, "duration": 12.0}]}
// or CSV files with columns `epoch_index,stage` and
// `arousal_start_sec,arousal_duration_sec`.

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "sdi/csv.hpp"
#include "sdi/epochs.hpp"
#include "sdi/error.hpp"

namespace sdi {

struct Annotations {
  std::optional<std::vector<int>> stages;
  ArousalEvents arousals;
};

inline int parse_stage(std::string_view token) {
  if (token == "W" || token == "0") return kWake;
  if (token == "N1" || token == "1") return kN1;
  if (token == "N2" || token == "2") return kN2;
  if (token == "N3" || token == "3") return kN3;
  if (token == "R" || token == "REM" || token == "4") return kRem;
  throw FormatError("unknown stage label \"" + std::string(token) + "\"");
}

inline Annotations parse_annotations_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("annotation JSON: ") + e.what());
  }
  Annotations a;
  try {
    if (doc.contains("stages")) {
      std::vector<int> stages;
      for (const auto& s : doc.at("stages")) {
        const int code = s.is_string() ? parse_stage(s.get<std::string>()) : s.get<int>();
        if (!valid_stage(code)) throw FormatError("annotation JSON: invalid stage code " + std::to_string(code));
        stages.push_back(code);
      }
      a.stages = std::move(stages);
    }
    if (doc.contains("arousals")) {
      for (const auto& e : doc.at("arousals"))
        a.arousals.push_back({e.at("start").get<double>(), e.at("duration").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("annotation JSON: ") + e.what());
  }
  validate_arousals(a.arousals);
  return a;
}

inline std::string annotations_to_json(const Annotations& a) {
  nlohmann::json doc;
  if (a.stages) doc["stages"] = *a.stages;
  doc["arousals"] = nlohmann::json::array();
  for (const auto& e : a.arousals) doc["arousals"].push_back({{"start", e.start}, {"duration", e.duration}});
  return doc.dump(1) + "\n";
}

inline std::vector<int> parse_stage_csv(std::string_view text) {
  const CsvTable t = parse_csv(text);
  const std::size_t idx_col = t.column("epoch_index");
  const std::size_t stage_col = t.column("stage");
  std::vector<std::pair<long, int>> rows;
  for (const auto& r : t.rows) rows.emplace_back(parse_long(r[idx_col], "epoch_index"), parse_stage(r[stage_col]));
  std::sort(rows.begin(), rows.end());
  std::vector<int> stages;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != static_cast<long>(i))
      throw FormatError("stage CSV: epoch indices must be 0..n-1 without gaps");
    stages.push_back(rows[i].second);
  }
  return stages;
}

inline ArousalEvents parse_arousal_csv(std::string_view text) {
  const CsvTable t = parse_csv(text);
  const std::size_t start_col = t.column("arousal_start_sec");
  const std::size_t dur_col = t.column("arousal_duration_sec");
  ArousalEvents events;
  for (const auto& r : t.rows)
    events.push_back({parse_double(r[start_col], "arousal start"), parse_double(r[dur_col], "arousal duration")});
  validate_arousals(events);
  return events;
}

}  // namespace sdi
