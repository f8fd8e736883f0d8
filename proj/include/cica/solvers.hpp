#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "cica/evalsynth.hpp"
#include "cica/projection.hpp"
#include "cica/sketch.hpp"
#include "cica/tensor.hpp"

namespace cica {

// ---------------------------------------------------------------------------
// generic linear operator on symmetric tensors (plain sketch, or the
// whitener-composed operator of the unwhitened path)

struct LinearTensorOp {
  int n = 0;
  int m = 0;
  std::function<Vector(const SymmetricTensor4&)> forward;
  std::function<SymmetricTensor4(const Vector&)> adjoint;
};

inline LinearTensorOp as_linear_op(const SketchOperator& op) {
  LinearTensorOp lin;
  lin.n = op.n();
  lin.m = op.m();
  lin.forward = [&op](const SymmetricTensor4& z) { return op.apply(z); };
  lin.adjoint = [&op](const Vector& r) { return op.adjoint(r); };
  return lin;
}

// ---------------------------------------------------------------------------
// configuration

enum class StepRule { paper, normalized };
enum class ProjectorKind { alternating, proxy };

struct IpgConfig {
  double tol = 1e-10;              // stop when ||y - A(Z)||_2^2 <= tol
  double beta = 0.5;               // step shrink factor, in (0,1)
  int max_outer = 500;
  int max_backtracks = 30;
  StepRule step_rule = StepRule::normalized;
  ProjectorKind projector = ProjectorKind::proxy;
  int restarts = 0;
  std::uint64_t restart_seed = 0;
  double eps_kurtosis = 1e-6;
  double proj_tol = 1e-10;         // alternating projector settings
  int proj_max_iter = 50;
};

struct AsdConfig {
  double tol = 1e-10;
  double mu = 0.1;                 // initial diagonal step, backtracked on F
  double tau_init = 1.0;           // initial curve-search step
  double armijo_c1 = 1e-4;
  int max_outer = 500;
  int max_backtracks = 40;
  int restarts = 0;
  std::uint64_t restart_seed = 0;
  double eps_kurtosis = 1e-6;
};

struct SolveResult {
  SymmetricTensor4 z_hat;
  Matrix q_hat;
  DiagonalTensor4 s_hat;
  std::vector<double> residual_history;  // ||y - A(Z)||_2 after each accepted step
  int iterations = 0;
  bool converged = false;
  int restart_used = 0;
};

// ---------------------------------------------------------------------------
// objective and gradients of F(S, Q) = ||y - A(S x Q)||^2

inline double asd_objective(const DiagonalTensor4& s, const Matrix& q, const LinearTensorOp& op,
                            const Vector& y) {
  return (y - op.forward(multilinear_transform(s, q))).squaredNorm();
}
inline double asd_objective(const DiagonalTensor4& s, const Matrix& q, const SketchOperator& op,
                            const Vector& y) {
  return (y - op.apply(multilinear_transform(s, q))).squaredNorm();
}

namespace detail {

/// t[i][p] = sum_{jkl} G_ijkl Q_jp Q_kp Q_lp  (one-column-at-a-time contraction)
inline Matrix contract_three_modes(const SymmetricTensor4& g, const Matrix& q) {
  const int n = g.n();
  Matrix t(n, int(q.cols()));
  const std::vector<double> dense = to_dense(g);
  const auto at = [&](int i, int j, int k, int l) {
    return dense[((std::size_t(i) * n + j) * n + k) * n + l];
  };
  for (int p = 0; p < int(q.cols()); ++p) {
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) {
        const double qj = q(j, p);
        if (qj == 0.0) continue;
        for (int k = 0; k < n; ++k) {
          const double qk = q(k, p);
          double inner = 0.0;
          for (int l = 0; l < n; ++l) inner += at(i, j, k, l) * q(l, p);
          acc += qj * qk * inner;
        }
      }
      t(i, p) = acc;
    }
  }
  return t;
}

}  // namespace detail

/// gradient of F with respect to the n auto-cumulants
inline Vector grad_S(const DiagonalTensor4& s, const Matrix& q, const LinearTensorOp& op,
                     const Vector& y) {
  const SymmetricTensor4 g = op.adjoint(op.forward(multilinear_transform(s, q)) - y);
  const SymmetricTensor4 rotated = multilinear_transform(g, Matrix(q.transpose()));
  Vector out(s.n());
  for (int i = 0; i < s.n(); ++i) out[i] = 2.0 * rotated(i, i, i, i);
  return out;
}

/// Euclidean gradient of F with respect to Q
inline Matrix grad_Q(const DiagonalTensor4& s, const Matrix& q, const LinearTensorOp& op,
                     const Vector& y) {
  const SymmetricTensor4 g = op.adjoint(op.forward(multilinear_transform(s, q)) - y);
  // dZ/dQ_ip contracted against G: four symmetric mode terms collapse to
  // 8 * kappa_p * sum_{jkl} G_ijkl Q_jp Q_kp Q_lp
  const Matrix t = detail::contract_three_modes(g, q);
  Matrix out = t;
  for (int p = 0; p < s.n(); ++p) out.col(p) *= 8.0 * s.kappa()[p];
  return out;
}

inline Vector grad_S(const DiagonalTensor4& s, const Matrix& q, const SketchOperator& op,
                     const Vector& y) {
  return grad_S(s, q, as_linear_op(op), y);
}
inline Matrix grad_Q(const DiagonalTensor4& s, const Matrix& q, const SketchOperator& op,
                     const Vector& y) {
  return grad_Q(s, q, as_linear_op(op), y);
}

// ---------------------------------------------------------------------------
// Cayley transform step on the orthogonal group

/// Q' = (I + tau/2 B)^{-1} (I - tau/2 B) Q for skew-symmetric B. Preserves
/// Q^T Q exactly; the inverse always exists for real skew-symmetric B.
inline Matrix cayley_step(const Matrix& q, const Matrix& b, double tau) {
  const int n = int(q.rows());
  if (b.rows() != n || b.cols() != n) throw dimension_error("cayley_step: size mismatch");
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  if (((b + b.transpose()).cwiseAbs().maxCoeff()) > 1e-12 * scale)
    throw std::invalid_argument("cayley_step: B must be skew-symmetric");
  if (tau == 0.0) return q;
  const Matrix half = (0.5 * tau) * b;
  const Matrix lhs = Matrix::Identity(n, n) + half;
  const Matrix rhs = (Matrix::Identity(n, n) - half) * q;
  return lhs.partialPivLu().solve(rhs);
}

// ---------------------------------------------------------------------------
// IPG (iterative projection gradient)

namespace detail {

inline SymmetricTensor4 run_projector(const SymmetricTensor4& z, const IpgConfig& cfg) {
  if (cfg.projector == ProjectorKind::alternating)
    return project_model_set(z, cfg.proj_tol, cfg.proj_max_iter).z;
  return proxy_project(z, 1e-12, 0, cfg.eps_kurtosis).zp;
}

/// one IPG run from a fixed initialization
inline SolveResult ipg_attempt(const LinearTensorOp& op, const Vector& y, const IpgConfig& cfg,
                               const SymmetricTensor4& init) {
  SolveResult res;
  SymmetricTensor4 z = init;
  Vector r = y - op.forward(z);
  double res2 = r.squaredNorm();
  res.residual_history.push_back(std::sqrt(res2));
  for (int outer = 0; outer < cfg.max_outer; ++outer) {
    if (res2 <= cfg.tol) break;
    const SymmetricTensor4 g = op.adjoint(r);
    const double gnorm2 = g.inner(g);
    if (gnorm2 == 0.0) break;
    double mu;
    if (cfg.step_rule == StepRule::paper) {
      mu = gnorm2 / res2;
    } else {
      const double denom = op.forward(g).squaredNorm();
      if (denom == 0.0) break;
      mu = gnorm2 / denom;
    }
    bool accepted = false;
    SymmetricTensor4 z_next;
    Vector r_next;
    double res2_next = 0.0;
    for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
      SymmetricTensor4 cand = run_projector(z + mu * g, cfg);
      if (!cand.all_finite()) {
        mu *= cfg.beta;
        continue;
      }
      Vector rc = y - op.forward(cand);
      const double rc2 = rc.squaredNorm();
      if (rc2 < res2) {
        z_next = std::move(cand);
        r_next = std::move(rc);
        res2_next = rc2;
        accepted = true;
        break;
      }
      mu *= cfg.beta;
    }
    if (!accepted) break;  // no decreasing step within the budget
    z = std::move(z_next);
    r = std::move(r_next);
    res2 = res2_next;
    res.residual_history.push_back(std::sqrt(res2));
    res.iterations = outer + 1;
    if (!z.all_finite() || !std::isfinite(res2)) {
      res.converged = false;
      res.z_hat = z;
      return res;
    }
  }
  res.converged = res2 <= cfg.tol;
  res.z_hat = std::move(z);
  return res;
}

/// default spectral-style start: back-projected sketch, projected once
inline SymmetricTensor4 ipg_default_init(const LinearTensorOp& op, const Vector& y,
                                         const IpgConfig& cfg) {
  return run_projector(op.adjoint(y), cfg);
}

/// random model-set restart: Haar Q with the least-squares diagonal for it
inline SymmetricTensor4 random_model_init(const LinearTensorOp& op, const Vector& y,
                                          double eps_floor, std::uint64_t seed) {
  const Matrix q = random_orthogonal(op.n, seed);
  const SymmetricTensor4 back = op.adjoint(y);
  const SymmetricTensor4 rot = multilinear_transform(back, Matrix(q.transpose()));
  Vector kappa(op.n);
  for (int i = 0; i < op.n; ++i) kappa[i] = rot(i, i, i, i);
  return multilinear_transform(DiagonalTensor4(kappa, eps_floor).clamped(), q);
}

}  // namespace detail

inline SolveResult ipg_solve(const LinearTensorOp& op, const Vector& y, const IpgConfig& cfg = {},
                             const std::optional<SymmetricTensor4>& init = std::nullopt) {
  if (y.size() != op.m) throw dimension_error("ipg_solve: sketch length mismatch");
  if (!y.allFinite()) throw std::invalid_argument("ipg_solve: non-finite sketch");
  if (cfg.beta <= 0.0 || cfg.beta >= 1.0)
    throw std::invalid_argument("ipg_solve: beta must lie in (0,1)");

  SolveResult best;
  double best_res = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt <= cfg.restarts; ++attempt) {
    SymmetricTensor4 z0 =
        (attempt == 0 && init) ? *init
        : (attempt == 0)
            ? detail::ipg_default_init(op, y, cfg)
            : detail::random_model_init(op, y, cfg.eps_kurtosis,
                                        rng::derive(cfg.restart_seed, std::uint64_t(attempt)));
    SolveResult run = detail::ipg_attempt(op, y, cfg, z0);
    run.restart_used = attempt;
    const double res = run.residual_history.back();
    if (res < best_res) {
      best_res = res;
      best = std::move(run);
    }
    if (best.converged) break;  // an exact fit cannot be improved by more restarts
  }
  const auto factors = proxy_project(best.z_hat, 1e-12, 0, cfg.eps_kurtosis);
  best.q_hat = factors.q;
  best.s_hat = factors.s;
  return best;
}

inline SolveResult ipg_solve(const SketchOperator& op, const Vector& y, const IpgConfig& cfg = {},
                             const std::optional<SymmetricTensor4>& init = std::nullopt) {
  return ipg_solve(as_linear_op(op), y, cfg, init);
}

// ---------------------------------------------------------------------------
// unwhitened IPG: estimate the whitener from the stored second moments and
// solve through the composed operator Z -> A(Z x P on all modes)

struct UnwhitenedSolveResult {
  SolveResult base;
  Matrix p_hat;  // d x n estimated whitener factor
  Matrix m_hat;  // d x n mixing estimate P * Q
};

/// top-n eigenpair whitener factor of a covariance matrix: P = E diag(sqrt(lambda))
inline Matrix whitener_from_covariance(const Matrix& sigma, int n) {
  const int d = int(sigma.rows());
  if (sigma.cols() != d) throw dimension_error("whitener_from_covariance: square matrix expected");
  if (n < 1 || n > d) throw dimension_error("whitener_from_covariance: need 1 <= n <= d");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (sigma + sigma.transpose()));
  const Vector& ev = eig.eigenvalues();  // ascending
  const double top = std::max(ev[d - 1], 0.0);
  if (ev[0] < -1e-10 * std::max(1.0, top))
    throw std::invalid_argument("whitener_from_covariance: covariance is not positive semidefinite");
  Matrix p(d, n);
  for (int t = 0; t < n; ++t) {
    const int src = d - 1 - t;  // descending eigenvalues
    if (ev[src] <= 1e-12)
      throw std::invalid_argument("whitener_from_covariance: rank deficient covariance");
    Vector v = eig.eigenvectors().col(src);
    int arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;  // deterministic sign
    p.col(t) = std::sqrt(ev[src]) * v;
  }
  return p;
}

inline UnwhitenedSolveResult ipg_solve_unwhitened(const SketchOperator& op,
                                                  const SketchVector& sketch, int n_components,
                                                  const IpgConfig& cfg = {}) {
  if (sketch.mode != SketchMode::unwhitened)
    throw std::invalid_argument("ipg_solve_unwhitened: sketch must be unwhitened");
  if (!(sketch.fingerprint == op.fingerprint()))
    throw fingerprint_error("ipg_solve_unwhitened: sketch does not match operator");
  const int d = op.n();
  const Matrix sigma = unpack_symmetric(sketch.cov, d);
  const Matrix p_hat = whitener_from_covariance(sigma, n_components);
  const Matrix p_hat_t = p_hat.transpose();

  // the stored y is a raw 4th-moment sketch; remove the Gaussian pairing part
  const Vector y_cum = sketch.y - op.apply(pairwise_product_tensor(sigma));

  LinearTensorOp comp;
  comp.n = n_components;
  comp.m = op.m();
  comp.forward = [&op, &p_hat](const SymmetricTensor4& z) {
    return op.apply(multilinear_transform(z, p_hat));
  };
  comp.adjoint = [&op, &p_hat_t](const Vector& r) {
    return multilinear_transform(op.adjoint(r), p_hat_t);
  };

  UnwhitenedSolveResult out;
  out.base = ipg_solve(comp, y_cum, cfg);
  out.p_hat = p_hat;
  out.m_hat = p_hat * out.base.q_hat;
  return out;
}

// ---------------------------------------------------------------------------
// ASD (alternating steepest descent on the diagonal and the Stiefel factor)

inline SolveResult asd_solve(const LinearTensorOp& op, const Vector& y, const AsdConfig& cfg = {},
                             const std::optional<std::pair<DiagonalTensor4, Matrix>>& init =
                                 std::nullopt) {
  if (y.size() != op.m) throw dimension_error("asd_solve: sketch length mismatch");
  if (!y.allFinite()) throw std::invalid_argument("asd_solve: non-finite sketch");
  if (cfg.mu <= 0.0 || cfg.tau_init <= 0.0)
    throw std::invalid_argument("asd_solve: steps must be positive");

  const auto clamp = [&](Vector kappa) {
    return DiagonalTensor4(std::move(kappa), cfg.eps_kurtosis).clamped();
  };

  SolveResult best;
  double best_res = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt <= cfg.restarts; ++attempt) {
    DiagonalTensor4 s;
    Matrix q;
    if (attempt == 0 && init) {
      s = clamp(init->first.kappa());
      q = init->second;
    } else if (attempt == 0) {
      const auto px = proxy_project(op.adjoint(y), 1e-12, 0, cfg.eps_kurtosis);
      s = px.s.clamped();
      q = px.q;
    } else {
      q = random_orthogonal(op.n, rng::derive(cfg.restart_seed, std::uint64_t(attempt)));
      const SymmetricTensor4 rot =
          multilinear_transform(op.adjoint(y), Matrix(q.transpose()));
      Vector kappa(op.n);
      for (int i = 0; i < op.n; ++i) kappa[i] = rot(i, i, i, i);
      s = clamp(std::move(kappa));
    }

    SolveResult run;
    double f = asd_objective(s, q, op, y);
    run.residual_history.push_back(std::sqrt(f));
    for (int outer = 0; outer < cfg.max_outer; ++outer) {
      if (f <= cfg.tol) break;

      // diagonal step with simple backtracking on F
      bool s_accepted = false;
      {
        const Vector g = grad_S(s, q, op, y);
        double mu = cfg.mu;
        for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
          const DiagonalTensor4 cand = clamp(s.kappa() - mu * g);
          const double fc = asd_objective(cand, q, op, y);
          if (fc < f) {
            s = cand;
            f = fc;
            s_accepted = true;
            break;
          }
          mu *= 0.5;
        }
      }

      // Stiefel step: Armijo search along the Cayley descent curve
      bool q_accepted = false;
      {
        const Matrix g = grad_Q(s, q, op, y);
        const Matrix b = g * q.transpose() - q * g.transpose();
        const double b2 = b.squaredNorm();
        if (b2 > 0.0) {
          double tau = cfg.tau_init;
          for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
            const Matrix qc = cayley_step(q, b, tau);
            const double fc = asd_objective(s, qc, op, y);
            if (fc <= f - cfg.armijo_c1 * tau * 0.5 * b2) {
              q = qc;
              f = fc;
              q_accepted = true;
              break;
            }
            tau *= 0.5;
          }
        }
      }

      if (!s_accepted && !q_accepted) break;  // stationary within budgets
      run.residual_history.push_back(std::sqrt(f));
      run.iterations = outer + 1;
      if (!std::isfinite(f)) break;
    }
    run.converged = f <= cfg.tol;
    run.restart_used = attempt;
    run.s_hat = s;
    run.q_hat = q;
    run.z_hat = multilinear_transform(s, q);
    const double res = run.residual_history.back();
    if (res < best_res) {
      best_res = res;
      best = std::move(run);
    }
    if (best.converged) break;
  }
  return best;
}

inline SolveResult asd_solve(const SketchOperator& op, const Vector& y, const AsdConfig& cfg = {},
                             const std::optional<std::pair<DiagonalTensor4, Matrix>>& init =
                                 std::nullopt) {
  return asd_solve(as_linear_op(op), y, cfg, init);
}

}  // namespace cica
