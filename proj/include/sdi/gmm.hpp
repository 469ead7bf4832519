#pragma once

// Two-component Gaussian mixture over standardized biomarker vectors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdi/csv.hpp"
#include "sdi/error.hpp"
#include "sdi/rng.hpp"

namespace sdi {

using Rows = std::vector<std::vector<double>>;

struct Standardizer {
  std::vector<double> mean, sd;

  static Standardizer fit(const Rows& x) {
    Standardizer s;
    const std::size_t d = x.front().size();
    s.mean.assign(d, 0.0);
    s.sd.assign(d, 0.0);
    for (const auto& r : x)
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
    for (auto& m : s.mean) m /= static_cast<double>(x.size());
    for (const auto& r : x)
      for (std::size_t j = 0; j < d; ++j) s.sd[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
    for (auto& v : s.sd) {
      v = std::sqrt(v / static_cast<double>(x.size()));
      if (v == 0.0) v = 1.0;  // constant feature: centre only
    }
    return s;
  }

  std::vector<double> apply(std::span<const double> r) const {
    std::vector<double> z(r.size());
    for (std::size_t j = 0; j < r.size(); ++j) z[j] = (r[j] - mean[j]) / sd[j];
    return z;
  }
  std::vector<double> invert(std::span<const double> z) const {
    std::vector<double> r(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) r[j] = z[j] * sd[j] + mean[j];
    return r;
  }
};

enum class CovarianceType { kFull, kDiagonal };

struct GmmOptions {
  int components = 2;
  int max_iter = 500;
  double tol = 1e-6;    // stop when the log-likelihood gain falls below this
  double ridge = 1e-6;  // added to every covariance diagonal
  CovarianceType covariance = CovarianceType::kFull;
  std::uint64_t seed = 0;
  std::size_t rb_index = 0;  // feature that decides which component is "disturbed"
};

struct GmmModel {
  Standardizer scale;
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;  // standardized space
  std::vector<Eigen::MatrixXd> covariances;
  std::vector<double> log_likelihood;  // one entry per E-step
  int iterations = 0;
  bool converged = false;
  int disturbed = -1;
  bool fitted = false;
};

namespace gmm_detail {

inline Eigen::MatrixXd to_matrix(const Rows& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

// log N(x | mu, sigma) for every row of z.
inline Eigen::VectorXd log_density(const Eigen::MatrixXd& z, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericError("GMM covariance is not positive definite");
  const Eigen::MatrixXd centred = (z.rowwise() - mu.transpose()).transpose();
  const Eigen::MatrixXd sol = llt.matrixL().solve(centred);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double d = static_cast<double>(z.cols());
  const Eigen::VectorXd maha = sol.colwise().squaredNorm().transpose();
  return (-0.5 * (maha.array() + logdet + d * std::log(2.0 * std::numbers::pi))).matrix();
}

// Responsibilities (n x K) and the total log-likelihood.
inline double e_step(const Eigen::MatrixXd& z, const GmmModel& m, Eigen::MatrixXd& resp) {
  const auto K = static_cast<Eigen::Index>(m.weights.size());
  resp.resize(z.rows(), K);
  for (Eigen::Index k = 0; k < K; ++k)
    resp.col(k) = log_density(z, m.means[static_cast<std::size_t>(k)], m.covariances[static_cast<std::size_t>(k)]).array() +
                  std::log(m.weights[static_cast<std::size_t>(k)]);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = resp.row(i).maxCoeff();
    const double lse = mx + std::log((resp.row(i).array() - mx).exp().sum());
    ll += lse;
    resp.row(i) = (resp.row(i).array() - lse).exp();
  }
  return ll;
}

inline void m_step(const Eigen::MatrixXd& z, const Eigen::MatrixXd& resp, const GmmOptions& opt, GmmModel& m) {
  const auto n = static_cast<double>(z.rows());
  for (Eigen::Index k = 0; k < resp.cols(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const double nk = resp.col(k).sum();
    const double nk_safe = std::max(nk, 10 * std::numeric_limits<double>::min());
    m.weights[ks] = nk / n;
    m.means[ks] = (z.transpose() * resp.col(k)) / nk_safe;
    const Eigen::MatrixXd c = z.rowwise() - m.means[ks].transpose();
    Eigen::MatrixXd cov = (c.transpose() * resp.col(k).asDiagonal() * c) / nk_safe;
    if (opt.covariance == CovarianceType::kDiagonal) cov = Eigen::MatrixXd(cov.diagonal().asDiagonal());
    cov.diagonal().array() += opt.ridge;
    m.covariances[ks] = cov;
  }
}

// k-means++ seeding; returns row indices of the chosen centres.
inline std::vector<Eigen::Index> kmeanspp(const Eigen::MatrixXd& z, int k, Rng& rng) {
  std::vector<Eigen::Index> centres{static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(z.rows())))};
  Eigen::VectorXd d2 = (z.rowwise() - z.row(centres[0])).rowwise().squaredNorm();
  while (static_cast<int>(centres.size()) < k) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(z.rows())));
    } else {
      double u = rng.uniform() * total;
      for (pick = 0; pick < z.rows() - 1; ++pick) {
        u -= d2(pick);
        if (u < 0) break;
      }
    }
    centres.push_back(pick);
    d2 = d2.cwiseMin((z.rowwise() - z.row(pick)).rowwise().squaredNorm());
  }
  return centres;
}

}  // namespace gmm_detail

inline GmmModel fit_gmm(const Rows& x, const GmmOptions& opt = {}) {
  if (x.size() < 10) throw DataError("fit_gmm: need at least 10 rows, got " + std::to_string(x.size()));
  if (opt.components < 1) throw ArgumentError("fit_gmm: components must be positive");
  const std::size_t d = x.front().size();
  for (const auto& r : x) {
    if (r.size() != d) throw DataError("fit_gmm: ragged feature rows");
    for (double v : r)
      if (!std::isfinite(v)) throw DataError("fit_gmm: non-finite feature value (impute missing values first)");
  }
  if (std::all_of(x.begin(), x.end(), [&](const auto& r) { return r == x.front(); }))
    throw DataError("fit_gmm: all rows are identical");

  GmmModel m;
  m.scale = Standardizer::fit(x);
  Rows zr;
  for (const auto& r : x) zr.push_back(m.scale.apply(r));
  const Eigen::MatrixXd z = gmm_detail::to_matrix(zr);

  // Initial responsibilities: hard assignment to the nearest k-means++ centre.
  Rng rng(opt.seed, 0x6a3);
  const auto centres = gmm_detail::kmeanspp(z, opt.components, rng);
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(z.rows(), opt.components);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index best = 0;
    double best_d = INFINITY;
    for (std::size_t k = 0; k < centres.size(); ++k) {
      const double dd = (z.row(i) - z.row(centres[k])).squaredNorm();
      if (dd < best_d) {
        best_d = dd;
        best = static_cast<Eigen::Index>(k);
      }
    }
    resp(i, best) = 1.0;
  }
  const auto K = static_cast<std::size_t>(opt.components);
  m.weights.assign(K, 1.0 / static_cast<double>(K));
  m.means.assign(K, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)));
  m.covariances.assign(K, Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)));
  gmm_detail::m_step(z, resp, opt, m);
  // A centre that captured no other point would start with a ridge-only
  // covariance; give it the pooled covariance instead.
  const Eigen::MatrixXd pooled = [&] {
    const Eigen::MatrixXd c = z.rowwise() - z.colwise().mean();
    Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(z.rows());
    cov.diagonal().array() += opt.ridge;
    return cov;
  }();
  for (std::size_t k = 0; k < K; ++k) {
    if (resp.col(static_cast<Eigen::Index>(k)).sum() < 2.0) {
      m.covariances[k] = pooled;
      m.weights[k] = std::max(m.weights[k], 1.0 / static_cast<double>(z.rows()));
    }
  }
  double wsum = 0.0;
  for (double w : m.weights) wsum += w;
  for (double& w : m.weights) w /= wsum;

  GmmModel previous;
  for (m.iterations = 0; m.iterations < opt.max_iter; ++m.iterations) {
    const double ll = gmm_detail::e_step(z, m, resp);
    if (!std::isfinite(ll)) throw NumericError("fit_gmm: log-likelihood is not finite");
    if (!m.log_likelihood.empty() && ll < m.log_likelihood.back()) {
      // At the fixed point an update can lose a few ulps; keep the better
      // parameters.
      m.weights = previous.weights;
      m.means = previous.means;
      m.covariances = previous.covariances;
      m.converged = true;
      break;
    }
    m.log_likelihood.push_back(ll);
    const std::size_t t = m.log_likelihood.size();
    if (t >= 2 && m.log_likelihood[t - 1] - m.log_likelihood[t - 2] < opt.tol) {
      m.converged = true;
      break;
    }
    previous.weights = m.weights;
    previous.means = m.means;
    previous.covariances = m.covariances;
    gmm_detail::m_step(z, resp, opt, m);
  }
  m.fitted = true;
  // Disturbed = component whose mean shallow-sleep ratio is higher.
  double best_rb = -INFINITY;
  for (std::size_t k = 0; k < K; ++k) {
    const double rb_value = m.means[k](static_cast<Eigen::Index>(opt.rb_index)) * m.scale.sd[opt.rb_index] +
                            m.scale.mean[opt.rb_index];
    if (rb_value > best_rb) {
      best_rb = rb_value;
      m.disturbed = static_cast<int>(k);
    }
  }
  return m;
}

struct SubtypeAssignment {
  std::vector<double> posterior;  // per component
  double posterior_disturbed = 0.0;
  int component = 0;
  std::string label;  // "normal" or "disturbed"
};

inline std::vector<SubtypeAssignment> assign_subtypes(const GmmModel& m, const Rows& x) {
  if (!m.fitted) throw ArgumentError("assign_subtypes: model is not fitted");
  Rows zr;
  for (const auto& r : x) {
    if (r.size() != m.scale.mean.size()) throw DataError("assign_subtypes: feature count mismatch");
    zr.push_back(m.scale.apply(r));
  }
  std::vector<SubtypeAssignment> out;
  if (x.empty()) return out;
  Eigen::MatrixXd resp;
  gmm_detail::e_step(gmm_detail::to_matrix(zr), m, resp);
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    SubtypeAssignment a;
    for (Eigen::Index k = 0; k < resp.cols(); ++k) a.posterior.push_back(resp(i, k));
    Eigen::Index arg = 0;
    resp.row(i).maxCoeff(&arg);
    a.component = static_cast<int>(arg);
    a.posterior_disturbed = resp(i, m.disturbed);
    a.label = a.component == m.disturbed ? "disturbed" : "normal";
    out.push_back(a);
  }
  return out;
}

// Replaces missing values with the column median of the observed ones.
inline Rows impute_median(const std::vector<std::vector<std::optional<double>>>& rows) {
  if (rows.empty()) return {};
  const std::size_t d = rows.front().size();
  std::vector<double> median(d);
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> col;
    for (const auto& r : rows)
      if (r[j] && std::isfinite(*r[j])) col.push_back(*r[j]);
    if (col.empty()) throw DataError("feature column " + std::to_string(j) + " has no observed values");
    std::sort(col.begin(), col.end());
    const std::size_t h = col.size() / 2;
    median[j] = col.size() % 2 ? col[h] : 0.5 * (col[h - 1] + col[h]);
  }
  Rows out;
  for (const auto& r : rows) {
    std::vector<double> v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = r[j] && std::isfinite(*r[j]) ? *r[j] : median[j];
    out.push_back(v);
  }
  return out;
}

inline std::string assignments_to_csv(const std::vector<std::string>& ids, const std::vector<SubtypeAssignment>& a) {
  std::ostringstream out;
  out << "recording_id,posterior_disturbed,label\n";
  for (std::size_t i = 0; i < a.size(); ++i) out << ids[i] << "," << format_double(a[i].posterior_disturbed) << "," << a[i].label << "\n";
  return out.str();
}

}  // namespace sdi
