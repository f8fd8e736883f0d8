#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cica/errors.hpp"

namespace cica {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Index bookkeeping for super-symmetric 4th order tensors over n channels.
///
/// The p = C(n+3,4) sorted quadruples i<=j<=k<=l are enumerated in
/// lexicographic order. Each quadruple carries the multiplicity of its
/// permutation orbit (how many of the n^4 logical slots share the value) and
/// the sqrt-multiplicity weight that makes the packed vector an isometry of
/// the Frobenius norm. Instances are immutable and cached per n.
class TensorIndex {
 public:
  static std::shared_ptr<const TensorIndex> get(int n) {
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const TensorIndex>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    auto made = std::shared_ptr<const TensorIndex>(new TensorIndex(n));
    cache.emplace(n, made);
    return made;
  }

  int channels() const { return n_; }
  int unique_count() const { return p_; }

  const std::array<int, 4>& quad(int q) const { return quads_[std::size_t(q)]; }

  /// number of distinct permutations of the index pattern (1, 4, 6, 12 or 24)
  double multiplicity(int q) const { return mult_[q]; }

  /// sqrt(multiplicity); scaling for the norm-preserving vectorization
  double weight(int q) const { return weight_[q]; }

  const Eigen::ArrayXd& multiplicities() const { return mult_; }
  const Eigen::ArrayXd& weights() const { return weight_; }

  /// unique-entry offset for an index quadruple given in any order
  int offset(int i, int j, int k, int l) const {
    if (unsigned(i) >= unsigned(n_) || unsigned(j) >= unsigned(n_) ||
        unsigned(k) >= unsigned(n_) || unsigned(l) >= unsigned(n_))
      throw dimension_error("TensorIndex: index out of range");
    return int(pos_[flat(i, j, k, l)]);
  }

  std::size_t flat(int i, int j, int k, int l) const {
    return ((std::size_t(i) * n_ + j) * n_ + k) * n_ + l;
  }

 private:
  explicit TensorIndex(int n) : n_(n) {
    if (n < 1) throw dimension_error("TensorIndex: channel count must be positive");
    const std::size_t total = std::size_t(n) * n * n * n;
    pos_.assign(total, 0);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j)
        for (int k = j; k < n; ++k)
          for (int l = k; l < n; ++l) quads_.push_back({i, j, k, l});
    p_ = int(quads_.size());
    mult_.resize(p_);
    weight_.resize(p_);
    std::array<int, 4> perm;
    for (int q = 0; q < p_; ++q) {
      const auto& t = quads_[std::size_t(q)];
      // orbit multiplicity = 4! / prod(count of each repeated value)!
      int counts[4] = {0, 0, 0, 0};
      int nv = 0;
      int vals[4];
      for (int x : t) {
        int v = 0;
        for (; v < nv; ++v)
          if (vals[v] == x) break;
        if (v == nv) vals[nv++] = x;
        ++counts[v];
      }
      int denom = 1;
      for (int v = 0; v < nv; ++v)
        for (int f = 2; f <= counts[v]; ++f) denom *= f;
      mult_[q] = 24.0 / denom;
      weight_[q] = std::sqrt(mult_[q]);
      // fill the dense lookup for every permutation of the quadruple
      perm = t;
      std::sort(perm.begin(), perm.end());
      do {
        pos_[flat(perm[0], perm[1], perm[2], perm[3])] = std::uint32_t(q);
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
  }

  int n_ = 0;
  int p_ = 0;
  std::vector<std::array<int, 4>> quads_;
  Eigen::ArrayXd mult_;
  Eigen::ArrayXd weight_;
  std::vector<std::uint32_t> pos_;
};

/// Super-symmetric 4th order tensor stored as its p = C(n+3,4) unique entries.
/// All 4!-fold permuted index tuples alias the same storage slot, so symmetry
/// holds exactly by construction.
class SymmetricTensor4 {
 public:
  SymmetricTensor4() = default;

  explicit SymmetricTensor4(int n)
      : idx_(TensorIndex::get(n)), u_(Vector::Zero(idx_->unique_count())) {}

  static SymmetricTensor4 from_unique(int n, Vector unique) {
    SymmetricTensor4 z(n);
    if (unique.size() != z.unique_count())
      throw dimension_error("SymmetricTensor4: wrong unique-entry count");
    z.u_ = std::move(unique);
    return z;
  }

  int n() const { return idx_ ? idx_->channels() : 0; }
  int unique_count() const { return idx_ ? idx_->unique_count() : 0; }
  const TensorIndex& index() const { return *idx_; }

  double operator()(int i, int j, int k, int l) const {
    return u_[idx_->offset(i, j, k, l)];
  }
  void set(int i, int j, int k, int l, double v) { u_[idx_->offset(i, j, k, l)] = v; }

  const Vector& unique() const { return u_; }
  Vector& unique() { return u_; }

  double frobenius_norm() const {
    if (!idx_) return 0.0;
    return std::sqrt((u_.array().square() * idx_->multiplicities()).sum());
  }

  /// Frobenius inner product over the full n^4 logical entries
  double inner(const SymmetricTensor4& o) const {
    require_same(o);
    return (u_.array() * o.u_.array() * idx_->multiplicities()).sum();
  }

  bool all_finite() const { return u_.allFinite(); }

  SymmetricTensor4& operator+=(const SymmetricTensor4& o) {
    require_same(o);
    u_ += o.u_;
    return *this;
  }
  SymmetricTensor4& operator-=(const SymmetricTensor4& o) {
    require_same(o);
    u_ -= o.u_;
    return *this;
  }
  SymmetricTensor4& operator*=(double a) {
    u_ *= a;
    return *this;
  }

  friend SymmetricTensor4 operator+(SymmetricTensor4 a, const SymmetricTensor4& b) {
    a += b;
    return a;
  }
  friend SymmetricTensor4 operator-(SymmetricTensor4 a, const SymmetricTensor4& b) {
    a -= b;
    return a;
  }
  friend SymmetricTensor4 operator*(double a, SymmetricTensor4 z) {
    z *= a;
    return z;
  }

 private:
  void require_same(const SymmetricTensor4& o) const {
    if (!idx_ || !o.idx_ || idx_->channels() != o.idx_->channels())
      throw dimension_error("SymmetricTensor4: channel count mismatch");
  }

  std::shared_ptr<const TensorIndex> idx_;
  Vector u_;
};

/// Diagonal 4th order cumulant tensor: n auto-cumulants S_iiii.
class DiagonalTensor4 {
 public:
  DiagonalTensor4() = default;
  explicit DiagonalTensor4(Vector kappa, double eps_floor = 1e-6)
      : kappa_(std::move(kappa)), eps_floor_(eps_floor) {
    if (eps_floor_ <= 0.0) throw std::invalid_argument("DiagonalTensor4: eps_floor must be positive");
  }

  int n() const { return int(kappa_.size()); }
  const Vector& kappa() const { return kappa_; }
  double eps_floor() const { return eps_floor_; }

  /// model-set membership: every auto-cumulant has magnitude >= eps_floor
  bool meets_floor() const {
    return (kappa_.array().abs() >= eps_floor_).all();
  }

  /// magnitude-clamped copy; sign is preserved, exact zeros clamp to +eps
  DiagonalTensor4 clamped() const {
    Vector k = kappa_;
    for (Eigen::Index i = 0; i < k.size(); ++i) {
      if (std::abs(k[i]) < eps_floor_) k[i] = (k[i] < 0.0) ? -eps_floor_ : eps_floor_;
    }
    return DiagonalTensor4(std::move(k), eps_floor_);
  }

  SymmetricTensor4 to_tensor() const {
    SymmetricTensor4 z(n());
    for (int i = 0; i < n(); ++i) z.set(i, i, i, i, kappa_[i]);
    return z;
  }

 private:
  Vector kappa_;
  double eps_floor_ = 1e-6;
};

// ---------------------------------------------------------------------------
// packed symmetric matrices (i <= j, lexicographic) used for second moments

inline Vector pack_symmetric(const Matrix& c) {
  const int n = int(c.rows());
  if (c.cols() != n) throw dimension_error("pack_symmetric: square matrix expected");
  Vector v(n * (n + 1) / 2);
  int q = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) v[q++] = c(i, j);
  return v;
}

inline Matrix unpack_symmetric(const Vector& v, int n) {
  if (v.size() != n * (n + 1) / 2) throw dimension_error("unpack_symmetric: wrong length");
  Matrix c(n, n);
  int q = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      c(i, j) = v[q];
      c(j, i) = v[q];
      ++q;
    }
  return c;
}

// ---------------------------------------------------------------------------
// vectorize / devectorize (norm-preserving packing of the unique entries)

/// v[q] = sqrt(multiplicity_q) * Z_q so that ||v||_2 = ||Z||_F exactly.
inline Vector vectorize(const SymmetricTensor4& z) {
  return (z.unique().array() * z.index().weights()).matrix();
}

inline SymmetricTensor4 devectorize(const Vector& v, int n) {
  auto idx = TensorIndex::get(n);
  if (v.size() != idx->unique_count())
    throw dimension_error("devectorize: length does not match C(n+3,4)");
  return SymmetricTensor4::from_unique(n, (v.array() / idx->weights()).matrix());
}

// ---------------------------------------------------------------------------
// matricize / dematricize (n^2 x n^2 flattening used by the rank projection)

/// Zbar[(i*n+j), (k*n+l)] = Z_ijkl; symmetric whenever Z is super-symmetric.
inline Matrix matricize(const SymmetricTensor4& z) {
  const int n = z.n();
  Matrix zb(n * n, n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) zb(i * n + j, k * n + l) = z(i, j, k, l);
  return zb;
}

/// Reads the canonical slots back out of a matricized tensor. Only guaranteed
/// to reproduce the tensor when the matrix came from a super-symmetric one.
inline SymmetricTensor4 dematricize(const Matrix& zb, int n) {
  if (zb.rows() != n * n || zb.cols() != n * n)
    throw dimension_error("dematricize: matrix must be n^2 x n^2");
  SymmetricTensor4 z(n);
  const auto& idx = z.index();
  for (int q = 0; q < idx.unique_count(); ++q) {
    const auto& t = idx.quad(q);
    z.unique()[q] = zb(t[0] * n + t[1], t[2] * n + t[3]);
  }
  return z;
}

// ---------------------------------------------------------------------------
// dense n^4 expansion and mode products

namespace detail {

inline std::vector<double> to_dense(const SymmetricTensor4& z) {
  const int n = z.n();
  const auto& idx = z.index();
  const std::size_t total = std::size_t(n) * n * n * n;
  std::vector<double> t(total);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) t[idx.flat(i, j, k, l)] = z(i, j, k, l);
  return t;
}

/// Contract M (out x in) with the last axis, then rotate axes right so four
/// successive calls apply M on every mode and restore the axis order.
inline std::vector<double> apply_last_and_rotate(const std::vector<double>& t,
                                                 std::array<int, 4>& dims,
                                                 const Matrix& m) {
  const int in = dims[3];
  if (int(m.cols()) != in) throw dimension_error("mode product: dimension mismatch");
  const int out = int(m.rows());
  const std::size_t prefix = std::size_t(dims[0]) * dims[1] * dims[2];
  std::vector<double> r(std::size_t(out) * prefix);
  for (std::size_t p = 0; p < prefix; ++p) {
    const double* tp = t.data() + p * in;
    for (int a = 0; a < out; ++a) {
      double acc = 0.0;
      for (int b = 0; b < in; ++b) acc += m(a, b) * tp[b];
      r[std::size_t(a) * prefix + p] = acc;
    }
  }
  dims = {out, dims[0], dims[1], dims[2]};
  return r;
}

/// canonical read-back: collapse a dense d^4 array to unique-entry storage
inline SymmetricTensor4 from_dense_canonical(const std::vector<double>& t, int d) {
  SymmetricTensor4 z(d);
  const auto& idx = z.index();
  for (int q = 0; q < idx.unique_count(); ++q) {
    const auto& a = idx.quad(q);
    z.unique()[q] = t[idx.flat(a[0], a[1], a[2], a[3])];
  }
  return z;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// multilinear transform Z = S x1 Q x2 Q x3 Q x4 Q

/// Diagonal fast path: Z_ijkl = sum_p kappa_p Q_ip Q_jp Q_kp Q_lp.
/// Q may be rectangular (d x n) which produces a d-channel tensor.
inline SymmetricTensor4 multilinear_transform(const DiagonalTensor4& s, const Matrix& q) {
  if (int(q.cols()) != s.n())
    throw dimension_error("multilinear_transform: Q columns must match tensor channels");
  const int d = int(q.rows());
  const int r = s.n();
  SymmetricTensor4 z(d);
  const auto& idx = z.index();
  for (int u = 0; u < idx.unique_count(); ++u) {
    const auto& t = idx.quad(u);
    double acc = 0.0;
    for (int p = 0; p < r; ++p)
      acc += s.kappa()[p] * q(t[0], p) * q(t[1], p) * q(t[2], p) * q(t[3], p);
    z.unique()[u] = acc;
  }
  return z;
}

/// General path via four dense mode products. Output entries are read at the
/// canonical slots, so the result is symmetric by storage.
inline SymmetricTensor4 multilinear_transform(const SymmetricTensor4& s, const Matrix& q) {
  const int r = s.n();
  if (int(q.cols()) != r)
    throw dimension_error("multilinear_transform: Q columns must match tensor channels");
  const int d = int(q.rows());
  std::array<int, 4> dims = {r, r, r, r};
  std::vector<double> t = detail::to_dense(s);
  for (int mode = 0; mode < 4; ++mode) t = detail::apply_last_and_rotate(t, dims, q);
  return detail::from_dense_canonical(t, d);
}

// ---------------------------------------------------------------------------
// empirical cumulant

/// k-statistic estimate of the 4th order cumulant tensor:
///   Z_ijkl = m4(ijkl) - m2(ij) m2(kl) - m2(ik) m2(jl) - m2(il) m2(jk)
/// with raw moments of the (centered) data. Single pass over the rows.
inline SymmetricTensor4 estimate_cumulant(const Matrix& data, bool already_centered = false) {
  const Eigen::Index rows = data.rows();
  const int n = int(data.cols());
  if (rows < 2) throw std::invalid_argument("estimate_cumulant: need at least 2 samples");
  if (!data.allFinite()) throw std::invalid_argument("estimate_cumulant: non-finite data");
  Matrix x = data;
  if (!already_centered) x.rowwise() -= data.colwise().mean();

  const Matrix m2 = (x.transpose() * x) / double(rows);
  auto idx = TensorIndex::get(n);
  const int p = idx->unique_count();
  Vector m4 = Vector::Zero(p);
  for (Eigen::Index t = 0; t < rows; ++t) {
    const auto row = x.row(t);
    for (int q = 0; q < p; ++q) {
      const auto& a = idx->quad(q);
      m4[q] += row[a[0]] * row[a[1]] * row[a[2]] * row[a[3]];
    }
  }
  m4 /= double(rows);

  SymmetricTensor4 z(n);
  for (int q = 0; q < p; ++q) {
    const auto& a = idx->quad(q);
    z.unique()[q] = m4[q] - m2(a[0], a[1]) * m2(a[2], a[3]) -
                    m2(a[0], a[2]) * m2(a[1], a[3]) - m2(a[0], a[3]) * m2(a[1], a[2]);
  }
  return z;
}

/// T_ijkl = C_ij C_kl + C_ik C_jl + C_il C_jk for a symmetric matrix C.
/// This is the Gaussian (pairing) part that turns raw 4th moments into
/// cumulants, and the correction applied when finalizing streamed sketches.
inline SymmetricTensor4 pairwise_product_tensor(const Matrix& c) {
  const int n = int(c.rows());
  if (c.cols() != n) throw dimension_error("pairwise_product_tensor: square matrix expected");
  SymmetricTensor4 z(n);
  const auto& idx = z.index();
  for (int q = 0; q < idx.unique_count(); ++q) {
    const auto& a = idx.quad(q);
    z.unique()[q] = c(a[0], a[1]) * c(a[2], a[3]) + c(a[0], a[2]) * c(a[1], a[3]) +
                    c(a[0], a[3]) * c(a[1], a[2]);
  }
  return z;
}

/// mean-centered copy of a data matrix (rows = samples)
inline Matrix center_columns(const Matrix& data) {
  Matrix x = data;
  x.rowwise() -= data.colwise().mean();
  return x;
}

}  // namespace cica
