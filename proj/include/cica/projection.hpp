#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "cica/tensor.hpp"

namespace cica {

// ---------------------------------------------------------------------------
// rank projection
//
// Operates on the n^2 x n^2 matricization. The truncation keeps the n
// eigenvalues of largest magnitude (not largest singular values): negative
// kurtosis sources give negative eigenvalues that must survive. Note that
// rank forcing only preserves the pair symmetry of the matricization, so the
// result is returned in matricized form; project_symmetric restores full
// super-symmetry by orbit averaging.

/// Best rank-n approximation (Frobenius) of a symmetric matricized tensor.
inline Matrix project_rank(const Matrix& zbar, int n) {
  if (zbar.rows() != zbar.cols() || zbar.rows() != Eigen::Index(n) * n)
    throw dimension_error("project_rank: expected an n^2 x n^2 matrix");
  const Matrix sym = 0.5 * (zbar + zbar.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw std::runtime_error("project_rank: eigensolver failed");
  const Vector& ev = eig.eigenvalues();
  const Matrix& vec = eig.eigenvectors();
  std::vector<int> order(std::size_t(ev.size()));
  std::iota(order.begin(), order.end(), 0);
  // magnitude-descending; ties keep the lower index for determinism
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(ev[a]) > std::abs(ev[b]);
  });
  Matrix out = Matrix::Zero(zbar.rows(), zbar.cols());
  for (int t = 0; t < n && t < int(order.size()); ++t) {
    const int q = order[std::size_t(t)];
    out.noalias() += ev[q] * vec.col(q) * vec.col(q).transpose();
  }
  return out;
}

inline Matrix project_rank(const SymmetricTensor4& z) { return project_rank(matricize(z), z.n()); }

// ---------------------------------------------------------------------------
// symmetry projection

/// Orthogonal projection onto super-symmetric tensors: every unique entry is
/// the average of the 24 permutation slots of the input.
inline SymmetricTensor4 project_symmetric(const Matrix& zbar, int n) {
  if (zbar.rows() != zbar.cols() || zbar.rows() != Eigen::Index(n) * n)
    throw dimension_error("project_symmetric: expected an n^2 x n^2 matrix");
  SymmetricTensor4 out(n);
  const auto& idx = out.index();
  for (int q = 0; q < idx.unique_count(); ++q) {
    std::array<int, 4> t = idx.quad(q);
    double acc = 0.0;
    int cnt = 0;
    std::sort(t.begin(), t.end());
    do {
      acc += zbar(t[0] * n + t[1], t[2] * n + t[3]);
      ++cnt;
    } while (std::next_permutation(t.begin(), t.end()));
    // next_permutation over a sorted multiset visits each distinct tuple once;
    // within an orbit every distinct tuple is hit equally often by S4, so the
    // distinct-tuple mean equals the full 24-term mean
    out.unique()[q] = acc / double(cnt);
  }
  return out;
}

/// already-symmetric input is a fixed point
inline SymmetricTensor4 project_symmetric(const SymmetricTensor4& z) { return z; }

// ---------------------------------------------------------------------------
// alternating projection onto rank-n AND super-symmetric tensors

struct ModelSetProjection {
  SymmetricTensor4 z;
  bool converged = false;
  int iterations = 0;
};

/// Cadzow-style alternation: rank truncation then orbit averaging, until the
/// symmetric iterate moves less than tol * max(1, ||Z||_F). Members of the
/// intersection pass through unchanged in a single iteration.
inline ModelSetProjection project_model_set(const SymmetricTensor4& z, double tol = 1e-10,
                                            int max_iter = 50) {
  if (tol <= 0.0) throw std::invalid_argument("project_model_set: tol must be positive");
  const int n = z.n();
  ModelSetProjection res;
  SymmetricTensor4 prev = z;
  for (int it = 1; it <= max_iter; ++it) {
    const Matrix low_rank = project_rank(matricize(prev), n);
    SymmetricTensor4 next = project_symmetric(low_rank, n);
    const double delta = (next - prev).frobenius_norm();
    const double scale = std::max(1.0, next.frobenius_norm());
    res.iterations = it;
    prev = std::move(next);
    if (delta <= tol * scale) {
      res.converged = true;
      break;
    }
  }
  res.z = std::move(prev);
  return res;
}

// ---------------------------------------------------------------------------
// Givens diagonalization (shared by the proxy projection, the factor
// extraction of the solvers, and the full-cumulant baseline)

namespace detail {

/// Apply the planar rotation R (R[i][i]=c, R[i][j]=s, R[j][i]=-s, R[j][j]=c)
/// on every mode of a dense 4th order tensor: slice_i' = c si + s sj,
/// slice_j' = -s si + c sj.
inline void rotate_pair_inplace(std::vector<double>& t, int n, int i, int j, double c,
                                double s) {
  const std::size_t total = std::size_t(n) * n * n * n;
  std::size_t stride = std::size_t(n) * n * n;
  for (int mode = 0; mode < 4; ++mode) {
    const std::size_t off = std::size_t(j - i) * stride;
    const std::size_t block = stride * std::size_t(n);
    for (std::size_t base = 0; base < total; base += block) {
      const std::size_t lo = base + std::size_t(i) * stride;
      for (std::size_t w = 0; w < stride; ++w) {
        const double a = t[lo + w];
        const double b = t[lo + w + off];
        t[lo + w] = c * a + s * b;
        t[lo + w + off] = -s * a + c * b;
      }
    }
    stride /= std::size_t(n);
  }
}

/// Rotation angle maximizing the pair contrast g1^2 + g2^2, where g1, g2 are
/// the two auto-cumulants after rotating the (i,j) plane by theta. The pair
/// subtensor invariants are a=Z_iiii, b=Z_iiij, c2=Z_iijj, d=Z_ijjj, e=Z_jjjj.
/// Stationarity reduces to a quartic in tan(2*theta); all real roots plus the
/// period endpoints are evaluated and the best is returned.
inline double best_pair_angle(double a, double b, double c2, double d, double e) {
  const double K = 0.75 * (a + e) + 1.5 * c2;
  const double A = 0.25 * (a + e) - 1.5 * c2;
  const double B = b - d;
  const double C = a - e;
  const double D = 2.0 * (b + d);

  const double P1 = K * A + 0.25 * (C * C - D * D);
  const double Q1 = K * B + 0.5 * C * D;
  const double P2 = 0.25 * (A * A - B * B);
  const double Q2 = 0.5 * A * B;

  // contrast value at angle theta
  const auto value = [&](double th) {
    const double c = std::cos(th);
    const double s = std::sin(th);
    const double g1 = a * c * c * c * c + 4.0 * b * c * c * c * s + 6.0 * c2 * c * c * s * s +
                      4.0 * d * c * s * s * s + e * s * s * s * s;
    const double g2 = a * s * s * s * s - 4.0 * b * s * s * s * c + 6.0 * c2 * s * s * c * c -
                      4.0 * d * s * c * c * c + e * c * c * c * c;
    return g1 * g1 + g2 * g2;
  };

  // quartic in t = tan(2*theta):
  //  (2*Q2 - Q1) t^4 + (8*P2 - 2*P1) t^3 - 12*Q2 t^2 - (2*P1 + 8*P2) t + (Q1 + 2*Q2) = 0
  double coef[5] = {Q1 + 2.0 * Q2, -(2.0 * P1 + 8.0 * P2), -12.0 * Q2, 8.0 * P2 - 2.0 * P1,
                    2.0 * Q2 - Q1};
  std::vector<double> candidates = {0.0, 0.25 * std::numbers::pi};
  int deg = 4;
  const double cap = std::max({std::abs(coef[0]), std::abs(coef[1]), std::abs(coef[2]),
                               std::abs(coef[3]), std::abs(coef[4]), 1e-300});
  while (deg > 0 && std::abs(coef[deg]) < 1e-14 * cap) --deg;
  if (deg >= 1) {
    Matrix comp = Matrix::Zero(deg, deg);
    for (int r = 1; r < deg; ++r) comp(r, r - 1) = 1.0;
    for (int r = 0; r < deg; ++r) comp(r, deg - 1) = -coef[r] / coef[deg];
    Eigen::EigenSolver<Matrix> roots(comp, false);
    for (Eigen::Index r = 0; r < roots.eigenvalues().size(); ++r) {
      const auto lam = roots.eigenvalues()[r];
      if (std::abs(lam.imag()) < 1e-8 * (1.0 + std::abs(lam.real())))
        candidates.push_back(0.5 * std::atan(lam.real()));  // theta = atan(t)/2
    }
  }
  double best = 0.0;
  double best_val = value(0.0);
  for (double th : candidates) {
    const double v = value(th);
    if (v > best_val * (1.0 + 1e-12)) {
      best_val = v;
      best = th;
    }
  }
  return best;
}

struct GivensResult {
  Matrix w;        // accumulated rotations, S approx = Z x W on all modes
  Vector diag;     // auto-cumulants of the rotated tensor
  int sweeps = 0;
  double last_max_angle = 0.0;
};

/// Cyclic Givens sweeps maximizing the squared-diagonal contrast.
inline GivensResult givens_diagonalize(const SymmetricTensor4& z, double angle_tol = 1e-12,
                                       int max_sweeps = 0) {
  const int n = z.n();
  if (max_sweeps <= 0) max_sweeps = 1 + int(std::ceil(std::sqrt(double(n))));
  GivensResult res;
  res.w = Matrix::Identity(n, n);
  std::vector<double> t = detail::to_dense(z);
  const auto at = [&](int i, int j, int k, int l) {
    return t[((std::size_t(i) * n + j) * n + k) * n + l];
  };
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_angle = 0.0;
    for (int i = 0; i < n - 1; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double th = best_pair_angle(at(i, i, i, i), at(i, i, i, j), at(i, i, j, j),
                                          at(i, j, j, j), at(j, j, j, j));
        max_angle = std::max(max_angle, std::abs(th));
        if (std::abs(th) <= angle_tol) continue;
        const double c = std::cos(th);
        const double s = std::sin(th);
        rotate_pair_inplace(t, n, i, j, c, s);
        // W <- R * W (rotation acts on the left of the accumulated transform)
        for (int col = 0; col < n; ++col) {
          const double wi = res.w(i, col);
          const double wj = res.w(j, col);
          res.w(i, col) = c * wi + s * wj;
          res.w(j, col) = -s * wi + c * wj;
        }
      }
    }
    ++res.sweeps;
    res.last_max_angle = max_angle;
    if (max_angle <= angle_tol) break;
  }
  res.diag.resize(n);
  for (int i = 0; i < n; ++i) res.diag[i] = at(i, i, i, i);
  return res;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// proxy projection: Givens diagonalization + cross-cumulant thresholding

struct ProxyProjection {
  SymmetricTensor4 zp;  // reconstructed model-set member S x Q
  Matrix q;             // orthogonal factor
  DiagonalTensor4 s;    // surviving auto-cumulants
  bool degenerate = false;
  int sweeps = 0;
};

inline ProxyProjection proxy_project(const SymmetricTensor4& z, double angle_tol = 1e-12,
                                     int max_sweeps = 0, double eps_floor = 1e-6) {
  const int n = z.n();
  ProxyProjection out;
  if (z.frobenius_norm() == 0.0) {
    out.zp = SymmetricTensor4(n);
    out.q = Matrix::Identity(n, n);
    out.s = DiagonalTensor4(Vector::Zero(n), eps_floor);
    out.degenerate = true;
    return out;
  }
  const auto g = detail::givens_diagonalize(z, angle_tol, max_sweeps);
  out.q = g.w.transpose();  // Z = S x Q with S the rotated tensor
  out.s = DiagonalTensor4(g.diag, eps_floor);
  out.degenerate = !out.s.meets_floor();
  out.zp = multilinear_transform(out.s, out.q);
  out.sweeps = g.sweeps;
  return out;
}

}  // namespace cica
