#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cica/rng.hpp"
#include "cica/tensor.hpp"

namespace cica {

enum class SketchKind : std::uint8_t { gaussian = 0, srht = 1 };
enum class SketchMode : std::uint8_t { whitened = 0, unwhitened = 1 };

inline const char* to_string(SketchKind k) {
  return k == SketchKind::gaussian ? "gaussian" : "srht";
}
inline const char* to_string(SketchMode m) {
  return m == SketchMode::whitened ? "whitened" : "unwhitened";
}

struct OperatorFingerprint {
  SketchKind kind = SketchKind::gaussian;
  std::uint32_t n = 0;
  std::uint32_t m = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const OperatorFingerprint&, const OperatorFingerprint&) = default;
};

/// In-place fast Walsh-Hadamard transform (natural ordering, unnormalized):
/// applies the +/-1 Hadamard matrix H with H[i][j] = (-1)^popcount(i & j).
inline void fwht(double* x, std::size_t len) {
  for (std::size_t h = 1; h < len; h <<= 1) {
    for (std::size_t i = 0; i < len; i += h << 1) {
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = x[j];
        const double b = x[j + h];
        x[j] = a + b;
        x[j + h] = a - b;
      }
    }
  }
}

/// Random linear map A : symmetric tensors -> R^m acting on the weighted
/// unique-entry vectorization. Reconstructible bit-for-bit from
/// (kind, m, n, seed).
///
/// gaussian: dense m x p matrix, entries N(0, 1/m) so E||Av||^2 = ||v||^2.
/// srht:     y = (1/sqrt(m * p_pad)) * rows(H * (D .* pad(v))) with the sign
///           flip D, the +/-1 Hadamard H on the zero-padded power-of-two
///           domain, and m row indices sampled without replacement.
class SketchOperator {
 public:
  static SketchOperator make(SketchKind kind, int m, int n, std::uint64_t seed) {
    if (m < 1) throw std::invalid_argument("SketchOperator: m must be >= 1");
    if (n < 2) throw std::invalid_argument("SketchOperator: n must be >= 2");
    SketchOperator op;
    op.fp_ = {kind, std::uint32_t(n), std::uint32_t(m), seed};
    op.idx_ = TensorIndex::get(n);
    const int p = op.idx_->unique_count();
    op.p_pad_ = int(std::bit_ceil(std::uint64_t(p)));
    rng::Counter rng(rng::derive(seed, 0x5E7C0F));
    if (kind == SketchKind::gaussian) {
      op.a_.resize(m, p);
      const double sd = 1.0 / std::sqrt(double(m));
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < p; ++j) op.a_(i, j) = sd * rng.next_normal();
    } else {
      if (m > op.p_pad_)
        throw std::invalid_argument("SketchOperator: srht requires m <= padded dimension");
      op.signs_.resize(op.p_pad_);
      for (int i = 0; i < op.p_pad_; ++i) op.signs_[i] = rng.next_sign();
      auto rows = rng::sample_without_replacement(std::uint32_t(op.p_pad_), std::uint32_t(m), rng);
      std::sort(rows.begin(), rows.end());
      op.rows_ = std::move(rows);
    }
    return op;
  }

  /// test fixture: wrap an explicit dense matrix (m x p for the given n)
  static SketchOperator from_matrix(Matrix a, int n, std::uint64_t seed = 0) {
    SketchOperator op;
    op.idx_ = TensorIndex::get(n);
    if (a.cols() != op.idx_->unique_count())
      throw dimension_error("SketchOperator: matrix columns must equal C(n+3,4)");
    op.fp_ = {SketchKind::gaussian, std::uint32_t(n), std::uint32_t(a.rows()), seed};
    op.p_pad_ = int(std::bit_ceil(std::uint64_t(op.idx_->unique_count())));
    op.a_ = std::move(a);
    return op;
  }

  const OperatorFingerprint& fingerprint() const { return fp_; }
  SketchKind kind() const { return fp_.kind; }
  int m() const { return int(fp_.m); }
  int n() const { return int(fp_.n); }
  int p() const { return idx_->unique_count(); }
  int p_pad() const { return p_pad_; }

  /// dense matrix of the gaussian map (not materialized for srht)
  const Matrix& dense() const {
    if (a_.size() == 0) throw std::logic_error("SketchOperator: no dense matrix for srht");
    return a_;
  }

  /// A v for a weighted unique-entry vector v of length p
  Vector apply_vec(const Vector& v) const {
    if (v.size() != p()) throw dimension_error("SketchOperator: vector length must be p");
    if (fp_.kind == SketchKind::gaussian || a_.size() != 0) return a_ * v;
    std::vector<double> buf(std::size_t(p_pad_), 0.0);
    for (int i = 0; i < p(); ++i) buf[std::size_t(i)] = signs_[i] * v[i];
    fwht(buf.data(), buf.size());
    const double scale = 1.0 / std::sqrt(double(fp_.m) * double(p_pad_));
    Vector y(m());
    for (int r = 0; r < m(); ++r) y[r] = scale * buf[rows_[std::size_t(r)]];
    return y;
  }

  /// A^T y as a weighted unique-entry vector
  Vector adjoint_vec(const Vector& y) const {
    if (y.size() != m()) throw dimension_error("SketchOperator: sketch length must be m");
    if (fp_.kind == SketchKind::gaussian || a_.size() != 0) return a_.transpose() * y;
    std::vector<double> buf(std::size_t(p_pad_), 0.0);
    const double scale = 1.0 / std::sqrt(double(fp_.m) * double(p_pad_));
    for (int r = 0; r < m(); ++r) buf[rows_[std::size_t(r)]] = scale * y[r];
    fwht(buf.data(), buf.size());  // H is symmetric
    Vector v(p());
    for (int i = 0; i < p(); ++i) v[i] = signs_[i] * buf[std::size_t(i)];
    return v;
  }

  Vector apply(const SymmetricTensor4& z) const {
    if (z.n() != n()) throw dimension_error("SketchOperator: tensor channel mismatch");
    return apply_vec(vectorize(z));
  }

  SymmetricTensor4 adjoint(const Vector& y) const { return devectorize(adjoint_vec(y), n()); }

 private:
  SketchOperator() = default;

  OperatorFingerprint fp_;
  std::shared_ptr<const TensorIndex> idx_;
  int p_pad_ = 0;
  Matrix a_;                         // gaussian / explicit
  Vector signs_;                     // srht
  std::vector<std::uint32_t> rows_;  // srht
};

/// A dataset compressed to m numbers (plus second moments when unwhitened).
///
/// whitened:   y is the cumulant sketch A(Z_hat). Sketches built in memory by
///             StreamSketcher also retain their raw-moment accumulators
///             (quartic mean + second moments), which is what makes merge
///             reproduce the concatenated stream exactly.
/// unwhitened: y is the raw 4th-moment sketch and cov holds the packed
///             empirical second moment; both are plain means, so merging is
///             always exact. The cumulant correction happens at solve time.
struct SketchVector {
  SketchMode mode = SketchMode::whitened;
  OperatorFingerprint fingerprint;
  std::uint64_t sample_count = 0;
  Vector y;

  // unwhitened: always present; whitened: present while accumulators are kept
  Vector cov;      // packed n(n+1)/2 second moment
  Vector quartic;  // whitened only: raw quartic sketch mean

  bool has_accumulators() const {
    return mode == SketchMode::unwhitened || (cov.size() > 0 && quartic.size() > 0);
  }

  static SketchVector empty(const SketchOperator& op, SketchMode mode) {
    SketchVector s;
    s.mode = mode;
    s.fingerprint = op.fingerprint();
    s.sample_count = 0;
    s.y = Vector::Zero(op.m());
    const int n = op.n();
    s.cov = Vector::Zero(n * (n + 1) / 2);
    if (mode == SketchMode::whitened) s.quartic = Vector::Zero(op.m());
    return s;
  }
};

/// Single-pass sketch accumulator. Working memory is m + p + n(n+1)/2 doubles
/// (p_pad for srht scratch) regardless of the stream length.
class StreamSketcher {
 public:
  StreamSketcher(const SketchOperator& op, SketchMode mode)
      : op_(&op),
        mode_(mode),
        idx_(TensorIndex::get(op.n())),
        quart_sum_(Vector::Zero(op.m())),
        m2_sum_(Vector::Zero(op.n() * (op.n() + 1) / 2)),
        feat_(Vector::Zero(op.p())) {}

  void push(const Eigen::Ref<const Vector>& z) {
    if (z.size() != op_->n()) throw dimension_error("StreamSketcher: sample dimension drift");
    if (!z.allFinite()) throw std::invalid_argument("StreamSketcher: non-finite sample");
    const int p = op_->p();
    for (int q = 0; q < p; ++q) {
      const auto& a = idx_->quad(q);
      feat_[q] = idx_->weight(q) * z[a[0]] * z[a[1]] * z[a[2]] * z[a[3]];
    }
    quart_sum_ += op_->apply_vec(feat_);
    int c = 0;
    const int n = op_->n();
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) m2_sum_[c++] += z[i] * z[j];
    ++count_;
  }

  void push_rows(const Matrix& data) {
    for (Eigen::Index r = 0; r < data.rows(); ++r) push(data.row(r).transpose());
  }

  std::uint64_t count() const { return count_; }

  /// doubles held by this accumulator; the point is that it does not grow with N
  std::size_t allocated_doubles() const {
    return std::size_t(quart_sum_.size()) + std::size_t(m2_sum_.size()) +
           std::size_t(feat_.size());
  }

  SketchVector finalize() const {
    if (count_ == 0) throw std::invalid_argument("StreamSketcher: empty stream");
    SketchVector s;
    s.mode = mode_;
    s.fingerprint = op_->fingerprint();
    s.sample_count = count_;
    s.cov = m2_sum_ / double(count_);
    const Vector quart_mean = quart_sum_ / double(count_);
    if (mode_ == SketchMode::whitened) {
      s.quartic = quart_mean;
      const Matrix sigma = unpack_symmetric(s.cov, op_->n());
      s.y = quart_mean - op_->apply(pairwise_product_tensor(sigma));
    } else {
      s.y = quart_mean;
    }
    return s;
  }

 private:
  const SketchOperator* op_;
  SketchMode mode_;
  std::shared_ptr<const TensorIndex> idx_;
  std::uint64_t count_ = 0;
  Vector quart_sum_;
  Vector m2_sum_;
  mutable Vector feat_;
};

inline SketchVector sketch_stream(const SketchOperator& op, const Matrix& data,
                                  SketchMode mode = SketchMode::whitened) {
  StreamSketcher acc(op, mode);
  acc.push_rows(data);
  return acc.finalize();
}

/// Sample-count weighted merge. Exact (to roundoff) whenever the raw-moment
/// accumulators are available: raw quartic sketches and second moments are
/// plain means, and refinalization reproduces the concatenated stream.
/// Whitened sketches loaded from disk have lost their accumulators; they fall
/// back to a weighted mean of the finalized values.
inline SketchVector merge(const SketchVector& a, const SketchVector& b,
                          const SketchOperator* op = nullptr) {
  if (!(a.fingerprint == b.fingerprint) || a.mode != b.mode)
    throw fingerprint_error("merge: sketches were built with different operators or modes");
  if (a.sample_count == 0) return b;
  if (b.sample_count == 0) return a;
  const double na = double(a.sample_count);
  const double nb = double(b.sample_count);
  const double wa = na / (na + nb);
  const double wb = nb / (na + nb);

  SketchVector out;
  out.mode = a.mode;
  out.fingerprint = a.fingerprint;
  out.sample_count = a.sample_count + b.sample_count;
  if (a.cov.size() > 0 && b.cov.size() > 0) out.cov = wa * a.cov + wb * b.cov;

  if (a.mode == SketchMode::unwhitened) {
    out.y = wa * a.y + wb * b.y;
    return out;
  }
  if (a.has_accumulators() && b.has_accumulators()) {
    out.quartic = wa * a.quartic + wb * b.quartic;
    SketchOperator rebuilt = op ? SketchOperator{*op}
                                : SketchOperator::make(a.fingerprint.kind, int(a.fingerprint.m),
                                                       int(a.fingerprint.n), a.fingerprint.seed);
    const Matrix sigma = unpack_symmetric(out.cov, int(a.fingerprint.n));
    out.y = out.quartic - rebuilt.apply(pairwise_product_tensor(sigma));
    return out;
  }
  out.cov.resize(0);
  out.y = wa * a.y + wb * b.y;
  return out;
}

// ---------------------------------------------------------------------------
// sketch file format (little endian)
//
//   "CIC1" | u8 mode | u8 kind | u32 n | u32 m | u64 seed | u64 sample_count
//   | m f64 sketch values | (unwhitened only) u32 d | d(d+1)/2 f64 cov entries

namespace detail {

inline void put_bytes(std::string& out, const void* p, std::size_t len) {
  out.append(static_cast<const char*>(p), len);
}
inline void put_u32(std::string& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xFF;
  put_bytes(out, b, 4);
}
inline void put_u64(std::string& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xFF;
  put_bytes(out, b, 8);
}
inline void put_f64(std::string& out, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(out, u);
}

class ByteReader {
 public:
  ByteReader(const std::string& s) : s_(s) {}
  void raw(void* p, std::size_t len) {
    if (pos_ + len > s_.size()) throw format_error("sketch file truncated");
    std::memcpy(p, s_.data() + pos_, len);
    pos_ += len;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    raw(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    raw(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    raw(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t u = u64();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  bool exhausted() const { return pos_ == s_.size(); }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_sketch(const SketchVector& s) {
  std::string out;
  out.append("CIC1", 4);
  out.push_back(char(std::uint8_t(s.mode)));
  out.push_back(char(std::uint8_t(s.fingerprint.kind)));
  detail::put_u32(out, s.fingerprint.n);
  detail::put_u32(out, s.fingerprint.m);
  detail::put_u64(out, s.fingerprint.seed);
  detail::put_u64(out, s.sample_count);
  for (Eigen::Index i = 0; i < s.y.size(); ++i) detail::put_f64(out, s.y[i]);
  if (s.mode == SketchMode::unwhitened) {
    const std::uint32_t d = s.fingerprint.n;
    if (s.cov.size() != Eigen::Index(d * (d + 1) / 2))
      throw dimension_error("encode_sketch: covariance block has wrong size");
    detail::put_u32(out, d);
    for (Eigen::Index i = 0; i < s.cov.size(); ++i) detail::put_f64(out, s.cov[i]);
  }
  return out;
}

inline SketchVector decode_sketch(const std::string& bytes) {
  detail::ByteReader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "CIC1", 4) != 0) throw format_error("not a sketch file (bad magic)");
  const std::uint8_t mode = r.u8();
  if (mode > 1) throw format_error("unknown sketch mode");
  const std::uint8_t kind = r.u8();
  if (kind > 1) throw format_error("unknown operator kind");
  SketchVector s;
  s.mode = SketchMode(mode);
  s.fingerprint.kind = SketchKind(kind);
  s.fingerprint.n = r.u32();
  s.fingerprint.m = r.u32();
  s.fingerprint.seed = r.u64();
  s.sample_count = r.u64();
  if (s.fingerprint.n < 2 || s.fingerprint.m < 1) throw format_error("invalid sketch header");
  s.y.resize(Eigen::Index(s.fingerprint.m));
  for (Eigen::Index i = 0; i < s.y.size(); ++i) s.y[i] = r.f64();
  if (s.mode == SketchMode::unwhitened) {
    const std::uint32_t d = r.u32();
    if (d != s.fingerprint.n) throw format_error("covariance dimension disagrees with header");
    s.cov.resize(Eigen::Index(d * (d + 1) / 2));
    for (Eigen::Index i = 0; i < s.cov.size(); ++i) s.cov[i] = r.f64();
  }
  if (!r.exhausted()) throw format_error("trailing bytes in sketch file");
  return s;
}

inline void save_sketch(const std::string& path, const SketchVector& s) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw format_error("cannot open for writing: " + path);
  const std::string bytes = encode_sketch(s);
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw format_error("short write: " + path);
}

inline SketchVector load_sketch(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw format_error("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_sketch(bytes);
}

}  // namespace cica
