#pragma once

// Whole-night inference: per-epoch SDI, REM probability, depth decreases.

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sdi/annotations.hpp"
#include "sdi/csv.hpp"
#include "sdi/epochs.hpp"
#include "sdi/error.hpp"
#include "sdi/model.hpp"

namespace sdi {

inline constexpr double kRemThreshold = 0.5;

struct SdiNight {
  std::vector<double> sdi;
  std::vector<double> rem_prob;
  std::optional<std::vector<int>> stage;
  std::optional<std::vector<double>> arousal_proportion;

  std::size_t n_epochs() const { return sdi.size(); }
};

inline double logistic(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// Raw model outputs for one epoch in inference mode.
template <typename T>
std::pair<double, std::array<double, 2>> score_epoch(const SdiModel<T>& model, const Epoch& epoch) {
  Tape<T> tape;
  const auto w = model.bind(tape, false);
  const HeadOutput<T> out = model.forward(tape, w, epoch);
  const Tensor<T>& l = out.rem_logits.value();
  return {static_cast<double>(out.raw_depth.value().item()), {static_cast<double>(l[0]), static_cast<double>(l[1])}};
}

template <typename T>
SdiNight annotate_night(const EpochGrid& grid, const SdiModel<T>& model) {
  SdiNight night;
  night.sdi.reserve(grid.size());
  night.rem_prob.reserve(grid.size());
  for (const Epoch& e : grid.epochs) {
    const auto [raw, logits] = score_epoch(model, e);
    night.sdi.push_back(logistic(raw));
    night.rem_prob.push_back(logistic(logits[1] - logits[0]));
  }
  night.stage = grid.stage;
  night.arousal_proportion = grid.arousal_proportion;
  return night;
}

// d_t = sdi_{t-1} - sdi_t for t = 1..n-1 (element t-1 of the result).
inline std::vector<double> depth_decrease(std::span<const double> sdi) {
  if (sdi.size() < 2) throw DataError("depth_decrease: need at least 2 epochs");
  std::vector<double> d(sdi.size() - 1);
  for (std::size_t t = 1; t < sdi.size(); ++t) d[t - 1] = sdi[t - 1] - sdi[t];
  return d;
}

inline std::vector<bool> rem_mask(std::span<const double> rem_prob, double threshold = kRemThreshold) {
  std::vector<bool> m(rem_prob.size());
  for (std::size_t i = 0; i < rem_prob.size(); ++i) m[i] = rem_prob[i] >= threshold;
  return m;
}

// epoch,sdi,rem_prob[,stage_label][,arousal_prop]
inline std::string night_to_csv(const SdiNight& n) {
  std::ostringstream out;
  out << "epoch,sdi,rem_prob";
  if (n.stage) out << ",stage_label";
  if (n.arousal_proportion) out << ",arousal_prop";
  out << "\n";
  for (std::size_t t = 0; t < n.n_epochs(); ++t) {
    out << t << "," << format_double(n.sdi[t]) << "," << format_double(n.rem_prob[t]);
    if (n.stage) out << "," << stage_name((*n.stage)[t]);
    if (n.arousal_proportion) out << "," << format_double((*n.arousal_proportion)[t]);
    out << "\n";
  }
  return out.str();
}

inline SdiNight night_from_csv(std::string_view text) {
  const CsvTable t = parse_csv(text);
  for (const char* c : {"epoch", "sdi", "rem_prob"})
    if (!t.has_column(c)) throw FormatError(std::string("SDI table lacks column '") + c + "'");
  SdiNight n;
  const std::size_t ie = t.column("epoch"), is = t.column("sdi"), ir = t.column("rem_prob");
  const bool has_stage = t.has_column("stage_label"), has_ar = t.has_column("arousal_prop");
  if (has_stage) n.stage.emplace();
  if (has_ar) n.arousal_proportion.emplace();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (parse_long(row[ie], "epoch") != static_cast<long>(r)) throw FormatError("SDI table epochs must be 0..n-1 in order");
    n.sdi.push_back(parse_double(row[is], "sdi"));
    n.rem_prob.push_back(parse_double(row[ir], "rem_prob"));
    if (has_stage) n.stage->push_back(parse_stage(row[t.column("stage_label")]));
    if (has_ar) n.arousal_proportion->push_back(parse_double(row[t.column("arousal_prop")], "arousal_prop"));
  }
  return n;
}

}  // namespace sdi
