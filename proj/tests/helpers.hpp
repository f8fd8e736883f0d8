#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <vector>

#include "cica/cica.hpp"

namespace testutil {

using cica::Matrix;
using cica::SymmetricTensor4;
using cica::Vector;

/// random super-symmetric tensor with standard normal unique entries
inline SymmetricTensor4 random_tensor(int n, std::uint64_t seed) {
  cica::rng::Counter rng(seed);
  SymmetricTensor4 z(n);
  for (int q = 0; q < z.unique_count(); ++q) z.unique()[q] = rng.next_normal();
  return z;
}

/// random model-set member: Haar Q and kurtoses with magnitude in [1, 3]
inline SymmetricTensor4 random_model_member(int n, std::uint64_t seed, Matrix* q_out = nullptr,
                                            Vector* kappa_out = nullptr) {
  const Matrix q = cica::random_orthogonal(n, seed);
  cica::rng::Counter rng(cica::rng::derive(seed, 99));
  Vector kappa(n);
  for (int i = 0; i < n; ++i) kappa[i] = rng.next_sign() * rng.next_uniform(1.0, 3.0);
  if (q_out) *q_out = q;
  if (kappa_out) *kappa_out = kappa;
  return cica::multilinear_transform(cica::DiagonalTensor4(kappa), q);
}

/// oracle: Frobenius norm by brute-force enumeration of all n^4 entries
inline double frob_norm_full_enumeration(const SymmetricTensor4& z) {
  const int n = z.n();
  double ss = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) ss += z(i, j, k, l) * z(i, j, k, l);
  return std::sqrt(ss);
}

/// oracle: full quadruple-sum multilinear transform, no shortcuts
inline SymmetricTensor4 multilinear_oracle(const SymmetricTensor4& s, const Matrix& q) {
  const int r = s.n();
  const int d = int(q.rows());
  SymmetricTensor4 out(d);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j)
      for (int k = j; k < d; ++k)
        for (int l = k; l < d; ++l) {
          double acc = 0.0;
          for (int a = 0; a < r; ++a)
            for (int b = 0; b < r; ++b)
              for (int c = 0; c < r; ++c)
                for (int e = 0; e < r; ++e)
                  acc += s(a, b, c, e) * q(i, a) * q(j, b) * q(k, c) * q(l, e);
          out.set(i, j, k, l, acc);
        }
  return out;
}

/// oracle: dense +/-1 Hadamard matrix in natural order
inline Matrix dense_hadamard(int len) {
  Matrix h(len, len);
  for (int i = 0; i < len; ++i)
    for (int j = 0; j < len; ++j) h(i, j) = (std::popcount(unsigned(i & j)) % 2) ? -1.0 : 1.0;
  return h;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

}  // namespace testutil
