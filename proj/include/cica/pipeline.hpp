#pragma once

#include <Eigen/Dense>

#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cica/solvers.hpp"

namespace cica {

// ---------------------------------------------------------------------------
// prewhitening

struct WhiteningTransform {
  Matrix p;       // d x n, column space of the data covariance
  Matrix p_pinv;  // n x d, p_pinv * p = I_n
  Vector eigvals; // top n covariance eigenvalues, descending
};

/// Center the data, eigendecompose its covariance and keep the top n
/// eigenpairs: P = E_n diag(sqrt(lambda)), P_pinv = diag(1/sqrt(lambda)) E_n^T.
/// The returned samples z = P_pinv x have identity covariance; truncation to
/// n < d handles more mixture channels than sources.
inline std::pair<WhiteningTransform, Matrix> prewhiten(const Matrix& data, int n) {
  const Eigen::Index rows = data.rows();
  const int d = int(data.cols());
  if (n < 1 || n > d) throw dimension_error("prewhiten: need 1 <= n <= d");
  if (rows <= d) throw std::invalid_argument("prewhiten: need more samples than channels");
  const Matrix x = center_columns(data);
  const Matrix sigma = (x.transpose() * x) / double(rows);
  WhiteningTransform w;
  w.p = whitener_from_covariance(sigma, n);  // throws on rank deficiency
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
  w.eigvals.resize(n);
  for (int t = 0; t < n; ++t) w.eigvals[t] = eig.eigenvalues()[d - 1 - t];
  // columns of p are sqrt(lambda) * e, so the pseudo-inverse is elementwise
  w.p_pinv.resize(n, d);
  for (int t = 0; t < n; ++t) w.p_pinv.row(t) = w.p.col(t).transpose() / w.eigvals[t];
  return {std::move(w), x * w.p_pinv.transpose()};
}

// ---------------------------------------------------------------------------
// end-to-end fits

struct FitDiagnostics {
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string solver;
};

struct MixingEstimate {
  Matrix q;  // n x n orthogonal factor
  DiagonalTensor4 s;
  std::optional<WhiteningTransform> whitener;
  Matrix m;  // d x n composite mixing estimate (equals q when no whitener)
  FitDiagnostics diagnostics;
  std::vector<double> residual_history;
};

enum class SolverId { ipg, asd };

inline const char* to_string(SolverId s) { return s == SolverId::ipg ? "ipg" : "asd"; }

struct OperatorSpec {
  SketchKind kind = SketchKind::gaussian;
  int m = 0;
  std::uint64_t seed = 0;
};

struct FitOptions {
  SolverId solver = SolverId::ipg;
  OperatorSpec op;
  IpgConfig ipg;
  AsdConfig asd;
  bool whiten = true;  // false: take the data as already whitened (P = I)
};

/// Whitened compressive fit: covariance pass for the whitener, one streaming
/// pass for the sketch, then sketch inversion and M = P * Q.
inline MixingEstimate cica_fit(const Matrix& data, int n, const FitOptions& opt) {
  if (opt.op.m < 1) throw std::invalid_argument("cica_fit: operator size not set");
  MixingEstimate est;
  Matrix z;
  if (opt.whiten) {
    auto [w, zd] = prewhiten(data, n);
    est.whitener = std::move(w);
    z = std::move(zd);
  } else {
    if (int(data.cols()) != n)
      throw dimension_error("cica_fit: whitening disabled but data has d != n channels");
    z = center_columns(data);
  }
  const SketchOperator op = SketchOperator::make(opt.op.kind, opt.op.m, n, opt.op.seed);
  const SketchVector sv = sketch_stream(op, z, SketchMode::whitened);

  SolveResult solved = (opt.solver == SolverId::ipg) ? ipg_solve(op, sv.y, opt.ipg)
                                                     : asd_solve(op, sv.y, opt.asd);
  est.q = solved.q_hat;
  est.s = solved.s_hat;
  est.m = est.whitener ? Matrix(est.whitener->p * est.q) : est.q;
  est.diagnostics = {solved.residual_history.back(), solved.iterations, solved.converged,
                     to_string(opt.solver)};
  est.residual_history = std::move(solved.residual_history);
  return est;
}

/// Full-cumulant reference: prewhiten, estimate the complete 4th order
/// cumulant tensor and diagonalize it with the shared Givens kernel. No
/// compression anywhere; this is the "full data" bound the sketched
/// estimates are measured against.
inline MixingEstimate baseline_comon_fit(const Matrix& data, int n, int max_sweeps = 0) {
  auto [w, z] = prewhiten(data, n);
  const SymmetricTensor4 zhat = estimate_cumulant(z, /*already_centered=*/true);
  const auto px = proxy_project(zhat, 1e-12, max_sweeps);
  MixingEstimate est;
  est.q = px.q;
  est.s = px.s;
  est.whitener = std::move(w);
  est.m = est.whitener->p * est.q;
  est.diagnostics = {(zhat - px.zp).frobenius_norm(), px.sweeps, true, "comon"};
  return est;
}

// ---------------------------------------------------------------------------
// data file formats
//
// CSV: rows are samples, columns are channels, optional header row.
// CIDM: 16-byte header (magic "CIDM", u32 N, u32 d, u32 reserved zero)
//       followed by N*d little-endian float64 values, row major.

namespace detail {

inline bool parse_csv_row(const std::string& line, std::vector<double>& out) {
  out.clear();
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t next = line.find(',', pos);
    if (next == std::string::npos) next = line.size();
    std::size_t a = pos;
    std::size_t b = next;
    while (a < b && std::isspace(static_cast<unsigned char>(line[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(line[b - 1]))) --b;
    if (a == b) return false;
    double v = 0.0;
    const auto res = std::from_chars(line.data() + a, line.data() + b, v);
    if (res.ec != std::errc{} || res.ptr != line.data() + b) return false;
    out.push_back(v);
    pos = next + 1;
    if (next == line.size()) break;
  }
  return !out.empty();
}

}  // namespace detail

inline Matrix read_data_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw format_error("cannot open: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::vector<double> parsed;
  bool first = true;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!detail::parse_csv_row(line, parsed)) {
      if (first) {
        first = false;  // tolerate a single header row
        continue;
      }
      throw format_error("unparsable CSV row in " + path);
    }
    first = false;
    if (!rows.empty() && rows.back().size() != parsed.size())
      throw format_error("ragged CSV rows in " + path);
    rows.push_back(parsed);
  }
  if (rows.empty()) throw format_error("no data rows in " + path);
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[std::size_t(i)][std::size_t(j)];
  return m;
}

inline void write_data_csv(const std::string& path, const Matrix& m) {
  std::ofstream f(path);
  if (!f) throw format_error("cannot open for writing: " + path);
  f.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) f << ',';
      f << m(i, j);
    }
    f << '\n';
  }
}

inline Matrix read_data_cidm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw format_error("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  detail::ByteReader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "CIDM", 4) != 0) throw format_error("not a data file (bad magic)");
  const std::uint32_t n = r.u32();
  const std::uint32_t d = r.u32();
  (void)r.u32();  // reserved
  if (n == 0 || d == 0) throw format_error("empty data file");
  Matrix m(Eigen::Index(n), Eigen::Index(d));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.f64();
  if (!r.exhausted()) throw format_error("trailing bytes in data file");
  return m;
}

inline void write_data_cidm(const std::string& path, const Matrix& m) {
  std::string out;
  out.append("CIDM", 4);
  detail::put_u32(out, std::uint32_t(m.rows()));
  detail::put_u32(out, std::uint32_t(m.cols()));
  detail::put_u32(out, 0);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) detail::put_f64(out, m(i, j));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw format_error("cannot open for writing: " + path);
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw format_error("short write: " + path);
}

/// dispatch on the magic bytes, falling back to CSV
inline Matrix read_data_auto(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw format_error("cannot open: " + path);
  char magic[4] = {0, 0, 0, 0};
  f.read(magic, 4);
  f.close();
  if (std::memcmp(magic, "CIDM", 4) == 0) return read_data_cidm(path);
  return read_data_csv(path);
}

}  // namespace cica
