#pragma once

// Kaplan-Meier, two-group log-rank, Cox proportional hazards.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "sdi/error.hpp"

namespace sdi::stats {

struct SurvivalRecord {
  double time = 0.0;  // days to event or censoring
  bool event = false;
  int group = 0;
  std::vector<double> covariates;
};

inline void check_times(std::span<const double> times, std::span<const int> events) {
  if (times.size() != events.size()) throw ArgumentError("survival: length mismatch");
  for (double t : times)
    if (!(t > 0) || !std::isfinite(t)) throw DataError("survival: times must be positive and finite");
}

// Right-continuous step function: S(t) = survival[k] for
// times[k] <= t < times[k+1], and 1 before the first event time.
struct KaplanMeier {
  std::vector<double> times;
  std::vector<double> survival;
  std::vector<double> at_risk;

  double at(double t) const {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 1.0;
    return survival[static_cast<std::size_t>(it - times.begin()) - 1];
  }
};

inline KaplanMeier km_estimate(std::span<const double> times, std::span<const int> events) {
  check_times(times, events);
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  KaplanMeier km;
  double s = 1.0;
  double n_risk = static_cast<double>(times.size());
  for (std::size_t i = 0; i < order.size();) {
    const double t = times[order[i]];
    double d = 0, c = 0;
    std::size_t j = i;
    for (; j < order.size() && times[order[j]] == t; ++j) (events[order[j]] ? d : c) += 1;
    if (d > 0) {
      s *= 1.0 - d / n_risk;
      km.times.push_back(t);
      km.survival.push_back(s);
      km.at_risk.push_back(n_risk);
    }
    n_risk -= d + c;
    i = j;
  }
  return km;
}

struct LogRank {
  double statistic = 0.0;
  double p = 1.0;
  double observed_1 = 0.0, expected_1 = 0.0;
};

// Groups coded 0/1.
inline LogRank logrank(std::span<const double> times, std::span<const int> events, std::span<const int> groups) {
  check_times(times, events);
  if (groups.size() != times.size()) throw ArgumentError("logrank: length mismatch");
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  double n = static_cast<double>(times.size());
  double n1 = static_cast<double>(std::count(groups.begin(), groups.end(), 1));
  double var = 0, total_events = 0;
  LogRank r;
  for (std::size_t i = 0; i < order.size();) {
    const double t = times[order[i]];
    double d = 0, d1 = 0, leave = 0, leave1 = 0;
    std::size_t j = i;
    for (; j < order.size() && times[order[j]] == t; ++j) {
      const std::size_t k = order[j];
      const bool g1 = groups[k] == 1;
      if (events[k]) {
        d += 1;
        if (g1) d1 += 1;
      }
      leave += 1;
      if (g1) leave1 += 1;
    }
    if (d > 0) {
      r.observed_1 += d1;
      r.expected_1 += d * n1 / n;
      if (n > 1) var += d * (n1 / n) * (1 - n1 / n) * (n - d) / (n - 1);
      total_events += d;
    }
    n -= leave;
    n1 -= leave1;
    i = j;
  }
  if (total_events == 0) throw DataError("logrank: no events");
  if (var == 0) return r;  // one group empty at every event time
  const double diff = r.observed_1 - r.expected_1;
  r.statistic = diff * diff / var;
  r.p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(1.0), r.statistic));
  return r;
}

enum class CoxTies { kBreslow, kEfron };

struct CoxFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  Eigen::VectorXd hazard_ratio, ci_low, ci_high;
  double log_likelihood = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
};

namespace cox_detail {

struct Eval {
  double ll = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd info;
};

// Rows of X must be sorted by descending time.
inline Eval evaluate(const Eigen::MatrixXd& X, const std::vector<double>& time, const std::vector<int>& event,
                     const Eigen::VectorXd& beta, CoxTies ties, bool derivatives) {
  const Eigen::Index n = X.rows(), p = X.cols();
  Eval e;
  e.grad = Eigen::VectorXd::Zero(p);
  e.info = Eigen::MatrixXd::Zero(p, p);
  const Eigen::VectorXd eta = X * beta;
  double s0 = 0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < n;) {
    const double t = time[static_cast<std::size_t>(i)];
    Eigen::Index j = i;
    double e0 = 0, d = 0;
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd e2 = Eigen::MatrixXd::Zero(p, p);
    for (; j < n && time[static_cast<std::size_t>(j)] == t; ++j) {
      const double w = std::exp(eta[j]);
      const Eigen::VectorXd x = X.row(j).transpose();
      s0 += w;
      if (derivatives) {
        s1 += w * x;
        s2 += w * x * x.transpose();
      }
      if (event[static_cast<std::size_t>(j)]) {
        d += 1;
        e0 += w;
        e.ll += eta[j];
        if (derivatives) {
          e1 += w * x;
          e2 += w * x * x.transpose();
          e.grad += x;
        }
      }
    }
    for (int l = 0; l < static_cast<int>(d); ++l) {
      const double phi = ties == CoxTies::kEfron ? l / d : 0.0;
      const double a0 = s0 - phi * e0;
      e.ll -= std::log(a0);
      if (derivatives) {
        const Eigen::VectorXd a1 = s1 - phi * e1;
        const Eigen::MatrixXd a2 = s2 - phi * e2;
        e.grad -= a1 / a0;
        e.info += a2 / a0 - (a1 / a0) * (a1 / a0).transpose();
      }
    }
    i = j;
  }
  return e;
}

struct Prepared {
  Eigen::MatrixXd X;  // centred, sorted by descending time
  std::vector<double> time;
  std::vector<int> event;
};

inline Prepared prepare(std::span<const double> times, std::span<const int> events,
                        const std::vector<std::vector<double>>& covariates) {
  check_times(times, events);
  if (covariates.size() != times.size()) throw ArgumentError("cox_ph: covariate row count mismatch");
  if (covariates.empty() || covariates.front().empty()) throw ArgumentError("cox_ph: need at least one covariate");
  const std::size_t p = covariates.front().size();
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] > times[b]; });
  Prepared out;
  out.X.resize(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(p));
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& row = covariates[order[r]];
    if (row.size() != p) throw ArgumentError("cox_ph: ragged covariates");
    for (std::size_t c = 0; c < p; ++c) {
      if (!std::isfinite(row[c])) throw DataError("cox_ph: missing covariate");
      out.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
    }
    out.time.push_back(times[order[r]]);
    out.event.push_back(events[order[r]] ? 1 : 0);
  }
  out.X.rowwise() -= out.X.colwise().mean();
  std::vector<double> event_times;
  for (std::size_t r = 0; r < out.time.size(); ++r)
    if (out.event[r]) event_times.push_back(out.time[r]);
  std::sort(event_times.begin(), event_times.end());
  if (std::unique(event_times.begin(), event_times.end()) - event_times.begin() < 2)
    throw DataError("cox_ph: need at least 2 distinct event times");
  if (Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(out.X).rank() < out.X.cols())
    throw NumericError("cox_ph: singular design matrix");
  return out;
}

}  // namespace cox_detail

// Partial log-likelihood at beta; covariate centring does not change it.
inline double cox_partial_log_likelihood(std::span<const double> times, std::span<const int> events,
                                         const std::vector<std::vector<double>>& covariates,
                                         const Eigen::VectorXd& beta, CoxTies ties = CoxTies::kBreslow) {
  const auto prep = cox_detail::prepare(times, events, covariates);
  return cox_detail::evaluate(prep.X, prep.time, prep.event, beta, ties, false).ll;
}

inline CoxFit cox_ph(std::span<const double> times, std::span<const int> events,
                     const std::vector<std::vector<double>>& covariates, CoxTies ties = CoxTies::kBreslow,
                     int max_iter = 100, double tol = 1e-8, double confidence = 0.95) {
  const auto prep = cox_detail::prepare(times, events, covariates);
  const Eigen::Index p = prep.X.cols();
  CoxFit fit;
  fit.beta = Eigen::VectorXd::Zero(p);
  auto cur = cox_detail::evaluate(prep.X, prep.time, prep.event, fit.beta, ties, true);
  bool converged = false;
  for (int it = 0; it <= max_iter; ++it) {
    fit.gradient_norm = cur.grad.norm();
    fit.iterations = it;
    if (fit.gradient_norm < tol) {
      converged = true;
      break;
    }
    const Eigen::VectorXd step = cur.info.ldlt().solve(cur.grad);
    if (!step.allFinite()) throw NumericError("cox_ph: singular information matrix");
    double scale = 1.0;
    Eigen::VectorXd next = fit.beta + step;
    auto cand = cox_detail::evaluate(prep.X, prep.time, prep.event, next, ties, true);
    while (!(cand.ll >= cur.ll - 1e-10 * (1 + std::fabs(cur.ll))) && scale > 1e-10) {
      scale *= 0.5;
      next = fit.beta + scale * step;
      cand = cox_detail::evaluate(prep.X, prep.time, prep.event, next, ties, true);
    }
    fit.beta = next;
    cur = std::move(cand);
    if (fit.beta.cwiseAbs().maxCoeff() > 30.0)
      throw NumericError("cox_ph: monotone likelihood (coefficients diverge)");
  }
  if (!converged) throw NumericError("cox_ph: no convergence after " + std::to_string(max_iter) + " iterations");
  fit.log_likelihood = cur.ll;
  const Eigen::MatrixXd cov = cur.info.inverse();
  const double z = boost::math::quantile(boost::math::normal(), 0.5 + confidence / 2);
  fit.se = cov.diagonal().cwiseSqrt();
  // A likelihood still rising as a coefficient goes to infinity flattens out
  // numerically; it shows up as a standard error orders above the data scale.
  for (Eigen::Index j = 0; j < p; ++j) {
    const double sd = std::sqrt(prep.X.col(j).squaredNorm() / static_cast<double>(prep.X.rows()));
    if (!std::isfinite(fit.se[j]) || fit.se[j] * sd > 100.0)
      throw NumericError("cox_ph: monotone likelihood for covariate " + std::to_string(j));
  }
  fit.hazard_ratio = fit.beta.array().exp();
  fit.ci_low = (fit.beta - z * fit.se).array().exp();
  fit.ci_high = (fit.beta + z * fit.se).array().exp();
  return fit;
}

}  // namespace sdi::stats
