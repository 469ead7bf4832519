#pragma once

// Logistic regression by Newton's method and the adjusted odds ratio.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdi/error.hpp"
#include "sdi/rng.hpp"
#include "sdi/stats/roc.hpp"

namespace sdi::stats {

struct LogisticFit {
  Eigen::VectorXd beta;
  double log_likelihood = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
};

inline double logistic_log_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log(1 + e^eta) without overflow
    const double softplus = eta[i] > 0 ? eta[i] + std::log1p(std::exp(-eta[i])) : std::log1p(std::exp(eta[i]));
    ll += y[i] * eta[i] - softplus;
  }
  return ll;
}

// X carries its own intercept column. Throws NumericError on a rank
// deficient design or when the fit runs off to infinity (separation).
inline LogisticFit logistic_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int max_iter = 100,
                                double tol = 1e-8) {
  if (X.rows() != y.size()) throw ArgumentError("logistic_fit: row count mismatch");
  if (X.rows() <= X.cols()) throw DataError("logistic_fit: need more rows than columns");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 0.0 && y[i] != 1.0) throw DataError("logistic_fit: outcome must be 0 or 1");
  if (Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(X).rank() < X.cols())
    throw NumericError("logistic_fit: singular design matrix");

  LogisticFit fit;
  fit.beta = Eigen::VectorXd::Zero(X.cols());
  fit.log_likelihood = logistic_log_likelihood(X, y, fit.beta);
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::VectorXd eta = X * fit.beta;
    Eigen::VectorXd p(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      p[i] = 1.0 / (1.0 + std::exp(-eta[i]));
      w[i] = p[i] * (1.0 - p[i]);
    }
    const Eigen::VectorXd grad = X.transpose() * (y - p);
    fit.gradient_norm = grad.norm();
    fit.iterations = it - 1;
    const Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X;
    if (fit.gradient_norm < tol) {
      // Quasi-separation leaves a converged gradient on a flat ridge; the
      // standard errors then dwarf the covariate scale.
      const Eigen::VectorXd se = info.inverse().diagonal().cwiseSqrt();
      for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double mean = X.col(j).mean();
        double sd = std::sqrt((X.col(j).array() - mean).square().mean());
        if (sd == 0.0) sd = 1.0;
        if (!std::isfinite(se[j]) || se[j] * sd > 100.0)
          throw NumericError("logistic_fit: quasi-complete separation in column " + std::to_string(j));
      }
      return fit;
    }
    const Eigen::VectorXd step = info.ldlt().solve(grad);
    if (!step.allFinite()) throw NumericError("logistic_fit: complete separation (information matrix singular)");
    double scale = 1.0;
    Eigen::VectorXd next = fit.beta + step;
    double ll = logistic_log_likelihood(X, y, next);
    while (!(ll >= fit.log_likelihood - 1e-10 * (1 + std::fabs(fit.log_likelihood))) && scale > 1e-10) {
      scale *= 0.5;
      next = fit.beta + scale * step;
      ll = logistic_log_likelihood(X, y, next);
    }
    fit.beta = next;
    fit.log_likelihood = ll;
    if (fit.beta.cwiseAbs().maxCoeff() > 30.0)
      throw NumericError("logistic_fit: complete separation (coefficients diverge)");
  }
  throw NumericError("logistic_fit: no convergence after " + std::to_string(max_iter) + " iterations (separation?)");
}

struct OddsRatio {
  double odds_ratio = NAN;
  double beta = NAN;
  Interval ci;
  double gradient_norm = NAN;
  std::size_t n = 0;
};

// Columns: intercept, group (0 normal, 1 disturbed), then covariates.
inline Eigen::MatrixXd logistic_design(std::span<const int> group, const std::vector<std::vector<double>>& covariates) {
  const auto n = static_cast<Eigen::Index>(group.size());
  const Eigen::Index k = covariates.empty() ? 0 : static_cast<Eigen::Index>(covariates.front().size());
  if (!covariates.empty() && covariates.size() != group.size())
    throw ArgumentError("logistic_or: covariate row count mismatch");
  Eigen::MatrixXd X(n, 2 + k);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = group[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto& row = covariates[static_cast<std::size_t>(i)];
      if (static_cast<Eigen::Index>(row.size()) != k) throw ArgumentError("logistic_or: ragged covariates");
      if (!std::isfinite(row[static_cast<std::size_t>(j)])) throw DataError("logistic_or: missing covariate");
      X(i, 2 + j) = row[static_cast<std::size_t>(j)];
    }
  }
  return X;
}

// OR of the group coefficient with a subject-level percentile bootstrap.
// Replicates that hit separation or a singular design are skipped.
inline OddsRatio logistic_or(std::span<const int> outcome, std::span<const int> group,
                             const std::vector<std::vector<double>>& covariates = {}, int B = 1000,
                             std::uint64_t seed = 0, double confidence = 0.95) {
  if (outcome.size() != group.size()) throw ArgumentError("logistic_or: length mismatch");
  const Eigen::MatrixXd X = logistic_design(group, covariates);
  Eigen::VectorXd y(X.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = outcome[static_cast<std::size_t>(i)];
  const LogisticFit fit = logistic_fit(X, y);
  OddsRatio out;
  out.beta = fit.beta[1];
  out.odds_ratio = std::exp(out.beta);
  out.gradient_norm = fit.gradient_norm;
  out.n = outcome.size();
  std::vector<double> stats;
  int ok = 0;
  for (int b = 0; b < B; ++b) {
    Rng rng(seed, static_cast<std::uint64_t>(b) + 1);
    Eigen::MatrixXd Xb(X.rows(), X.cols());
    Eigen::VectorXd yb(y.size());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(X.rows())));
      Xb.row(i) = X.row(j);
      yb[i] = y[j];
    }
    try {
      stats.push_back(std::exp(logistic_fit(Xb, yb).beta[1]));
      ++ok;
    } catch (const NumericError&) {
    } catch (const DataError&) {
    }
  }
  out.ci = percentile_interval(std::move(stats), confidence, ok);
  return out;
}

}  // namespace sdi::stats
