#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cica/rng.hpp"
#include "cica/tensor.hpp"

namespace cica {

// ---------------------------------------------------------------------------
// Amari error: permutation and scale invariant mixing-matrix discrepancy.
// Argument order matters: the truth comes first, b = M * inverse(M_hat).

inline double amari_error(const Matrix& m_true, const Matrix& m_hat) {
  const int n = int(m_true.rows());
  if (m_true.cols() != n || m_hat.rows() != n || m_hat.cols() != n)
    throw dimension_error("amari_error: matrices must be square and of equal size");
  Eigen::FullPivLU<Matrix> lu(m_hat);
  if (!lu.isInvertible()) throw std::invalid_argument("amari_error: estimate is singular");
  const Matrix b = (m_true * lu.inverse()).cwiseAbs();
  double rows = 0.0;
  double cols = 0.0;
  for (int i = 0; i < n; ++i) {
    rows += b.row(i).sum() / b.row(i).maxCoeff() - 1.0;
    cols += b.col(i).sum() / b.col(i).maxCoeff() - 1.0;
  }
  return (rows + cols) / (2.0 * n);
}

/// variance ratio of two error samples: var(full) / var(sketched).
/// Values in (0, 1] mean the sketched estimator is less efficient.
inline double relative_efficiency(const std::vector<double>& errors_full,
                                  const std::vector<double>& errors_sketch) {
  if (errors_full.empty() || errors_sketch.empty())
    throw std::invalid_argument("relative_efficiency: empty samples");
  const auto var = [](const std::vector<double>& v) {
    if (v.size() < 2) throw std::invalid_argument("relative_efficiency: need >= 2 samples");
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / double(v.size() - 1);
  };
  const double denom = var(errors_sketch);
  if (denom == 0.0) throw std::invalid_argument("relative_efficiency: zero variance denominator");
  return var(errors_full) / denom;
}

// ---------------------------------------------------------------------------
// synthetic sources

enum class SourceId {
  student_t3,        // Student's t, 3 degrees of freedom
  laplace,           // Laplace(0, 1)
  uniform,           // uniform on (-sqrt(3), sqrt(3))
  laplace_mixture,   // 1/2 Laplace(-1, 1) + 1/2 Laplace(+1, 1)
  gaussian_bimodal,  // 1/2 N(-1, 0.15^2) + 1/2 N(+1, 0.15^2)
  gaussian_asym     // 1/2 N(-0.7, 0.5^2) + 1/2 N(+0.5, 0.5^2)
};

inline const char* to_string(SourceId id) {
  switch (id) {
    case SourceId::student_t3: return "student_t3";
    case SourceId::laplace: return "laplace";
    case SourceId::uniform: return "uniform";
    case SourceId::laplace_mixture: return "laplace_mixture";
    case SourceId::gaussian_bimodal: return "gaussian_bimodal";
    case SourceId::gaussian_asym: return "gaussian_asym";
  }
  return "?";
}

inline std::optional<SourceId> source_id_from_string(const std::string& s) {
  for (SourceId id : {SourceId::student_t3, SourceId::laplace, SourceId::uniform,
                      SourceId::laplace_mixture, SourceId::gaussian_bimodal,
                      SourceId::gaussian_asym})
    if (s == to_string(id)) return id;
  return std::nullopt;
}

inline const std::vector<SourceId>& source_cocktail() {
  static const std::vector<SourceId> all = {SourceId::student_t3,       SourceId::laplace,
                                            SourceId::uniform,          SourceId::laplace_mixture,
                                            SourceId::gaussian_bimodal, SourceId::gaussian_asym};
  return all;
}

inline double draw_source(SourceId id, rng::Counter& rng) {
  switch (id) {
    case SourceId::student_t3:
      return rng.next_student_t3();
    case SourceId::laplace:
      return rng.next_laplace(0.0, 1.0);
    case SourceId::uniform:
      return rng.next_uniform(-std::sqrt(3.0), std::sqrt(3.0));
    case SourceId::laplace_mixture:
      return rng.next_laplace(rng.next_sign(), 1.0);
    case SourceId::gaussian_bimodal:
      return rng.next_sign() + 0.15 * rng.next_normal();
    case SourceId::gaussian_asym:
      return (rng.next_sign() > 0 ? 0.5 : -0.7) + 0.5 * rng.next_normal();
  }
  return 0.0;
}

/// N x n matrix of mutually independent source columns, each standardized to
/// zero mean and unit variance after drawing. Column j gets its own stream
/// derived from (seed, j), so the draw is independent of evaluation order.
inline Matrix sample_sources(const std::vector<SourceId>& ids, Eigen::Index n_samples,
                             std::uint64_t seed) {
  const int n = int(ids.size());
  Matrix s(n_samples, n);
  for (int j = 0; j < n; ++j) {
    rng::Counter rng(rng::derive(seed, std::uint64_t(j) + 1));
    for (Eigen::Index t = 0; t < n_samples; ++t) s(t, j) = draw_source(ids[j], rng);
    const double mean = s.col(j).mean();
    s.col(j).array() -= mean;
    const double sd = std::sqrt(s.col(j).squaredNorm() / double(n_samples));
    if (sd > 0.0) s.col(j) /= sd;
  }
  return s;
}

/// analytic excess kurtosis of the unit-variance source; empty for t(3)
/// whose 4th moment diverges
inline std::optional<double> analytic_excess_kurtosis(SourceId id) {
  // two-component mixtures below have equal weights and symmetric offsets
  // +/- delta around the mean, so mu2 = v + delta^2 and
  // mu4 = m4c + 6 delta^2 v + delta^4 with (v, m4c) the component moments
  const auto mixture = [](double delta, double v, double m4c) {
    const double mu2 = v + delta * delta;
    const double mu4 = m4c + 6.0 * delta * delta * v + delta * delta * delta * delta;
    return mu4 / (mu2 * mu2) - 3.0;
  };
  switch (id) {
    case SourceId::student_t3:
      return std::nullopt;
    case SourceId::laplace:
      return 3.0;
    case SourceId::uniform:
      return -1.2;
    case SourceId::laplace_mixture:
      return mixture(1.0, 2.0, 24.0);  // Laplace(b=1): var 2b^2, E[c^4] 24b^4
    case SourceId::gaussian_bimodal:
      return mixture(1.0, 0.15 * 0.15, 3.0 * 0.15 * 0.15 * 0.15 * 0.15);
    case SourceId::gaussian_asym:
      return mixture(0.6, 0.25, 3.0 * 0.0625);  // means -0.7/0.5 are +/-0.6 about -0.1
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// random matrices

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the R
/// diagonal sign fixed.
inline Matrix random_orthogonal(int n, std::uint64_t seed) {
  rng::Counter rng(rng::derive(seed, 0x0217A9));
  Matrix g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = rng.next_normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

/// Gaussian d x n mixing matrix, redrawn until its condition number is at
/// most `condition_cap`.
inline Matrix random_mixing(int d, int n, std::uint64_t seed, double condition_cap = 100.0) {
  if (d < n) throw dimension_error("random_mixing: need d >= n");
  rng::Counter rng(rng::derive(seed, 0x7B11D3));
  for (;;) {
    Matrix m(d, n);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = rng.next_normal();
    Eigen::JacobiSVD<Matrix> svd(m);
    const double cond = svd.singularValues()(0) / svd.singularValues()(n - 1);
    if (cond <= condition_cap) return m;
  }
}

// ---------------------------------------------------------------------------
// population cumulants

/// Expected 4th order cumulant tensor of mixed sources: diag(kurtoses) x Q on
/// every mode. Rejects sources without a finite 4th moment.
inline SymmetricTensor4 population_cumulant(const std::vector<SourceId>& ids, const Matrix& q) {
  const int n = int(ids.size());
  if (q.cols() != n) throw dimension_error("population_cumulant: Q columns must match sources");
  Vector kappa(n);
  for (int i = 0; i < n; ++i) {
    const auto k = analytic_excess_kurtosis(ids[i]);
    if (!k) throw std::invalid_argument("population_cumulant: source has no finite kurtosis");
    kappa[i] = *k;
  }
  return multilinear_transform(DiagonalTensor4(kappa), q);
}

/// convenience: n Laplace sources (kurtosis 3 each)
inline SymmetricTensor4 population_cumulant_laplace(int n, const Matrix& q) {
  return population_cumulant(std::vector<SourceId>(std::size_t(n), SourceId::laplace), q);
}

}  // namespace cica
