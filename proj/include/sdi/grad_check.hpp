#pragma once

// Central-difference gradient checker for scalar functions built on a Tape.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "sdi/autodiff.hpp"
#include "sdi/rng.hpp"

namespace sdi {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_parameter = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every coordinate; otherwise a seeded sample of this many
  // coordinates per parameter tensor.
  std::size_t max_coords_per_parameter = 0;
  std::uint64_t seed = 0;
};

// `f` builds a scalar on the given tape from one leaf per parameter tensor.
// Reports max |analytic - numeric| / max(1e-8, |numeric|).
template <typename Fn>
GradCheckResult grad_check(Fn&& f, std::vector<Tensor<double>> params, const GradCheckOptions& opts = {}) {
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p));
    Var<double> out = f(tape, leaves);
    tape.backward(out);
    for (const auto& l : leaves) analytic.push_back(tape.grad(l));
  }
  auto evaluate = [&]() {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (const auto& p : params) leaves.push_back(tape.constant(p));
    return f(tape, leaves).value().item();
  };

  GradCheckResult result;
  Rng rng(opts.seed, 0x6ead);
  for (std::size_t p = 0; p < params.size(); ++p) {
    std::vector<std::size_t> coords(params[p].size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (opts.max_coords_per_parameter > 0 && coords.size() > opts.max_coords_per_parameter) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(opts.max_coords_per_parameter);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double original = params[p][i];
      params[p][i] = original + opts.step;
      const double up = evaluate();
      params[p][i] = original - opts.step;
      const double down = evaluate();
      params[p][i] = original;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic[p][i];
      const double err = std::fabs(a - numeric) / std::max(1e-8, std::fabs(numeric));
      ++result.coordinates_checked;
      if (err > result.max_relative_error || !std::isfinite(err)) {
        result.max_relative_error = std::isfinite(err) ? err : INFINITY;
        result.worst_parameter = p;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace sdi
