#include <catch2/catch_amalgamated.hpp>

#include <numbers>
#include <random>

#include "helpers.hpp"

using namespace cica;
using testutil::random_model_member;
using testutil::random_tensor;

TEST_CASE("index codec counts unique entries") {
  CHECK(TensorIndex::get(2)->unique_count() == 5);    // C(5,4)
  CHECK(TensorIndex::get(3)->unique_count() == 15);   // C(6,4)
  CHECK(TensorIndex::get(4)->unique_count() == 35);   // C(7,4)
  CHECK(TensorIndex::get(8)->unique_count() == 330);  // C(11,4)
}

TEST_CASE("storage aliases all index permutations") {
  auto z = random_tensor(4, 11);
  rng::Counter rng(5);
  for (int probe = 0; probe < 100; ++probe) {
    int idx[4];
    for (int& v : idx) v = int(rng.next_below(4));
    std::array<int, 4> perm = {idx[0], idx[1], idx[2], idx[3]};
    std::sort(perm.begin(), perm.end());
    std::shuffle(perm.begin(), perm.end(), std::mt19937(unsigned(probe)));
    CHECK(z(idx[0], idx[1], idx[2], idx[3]) == z(perm[0], perm[1], perm[2], perm[3]));
  }
}

TEST_CASE("frobenius norm matches full n^4 enumeration") {
  for (int n : {2, 3, 5}) {
    auto z = random_tensor(n, 100 + std::uint64_t(n));
    CHECK(z.frobenius_norm() ==
          Catch::Approx(testutil::frob_norm_full_enumeration(z)).epsilon(1e-12));
  }
}

TEST_CASE("multilinear transform: identity is a no-op") {
  auto z = random_tensor(3, 7);
  auto out = multilinear_transform(z, Matrix::Identity(3, 3));
  CHECK((out - z).frobenius_norm() == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("multilinear transform: permutation permutes the diagonal") {
  Vector kappa(3);
  kappa << 1.0, -2.0, 0.5;
  Matrix perm = Matrix::Zero(3, 3);
  perm(0, 2) = 1.0;
  perm(1, 0) = 1.0;
  perm(2, 1) = 1.0;  // e0<-e2, e1<-e0, e2<-e1
  auto out = multilinear_transform(DiagonalTensor4(kappa), perm);
  CHECK(out(0, 0, 0, 0) == Catch::Approx(0.5));
  CHECK(out(1, 1, 1, 1) == Catch::Approx(1.0));
  CHECK(out(2, 2, 2, 2) == Catch::Approx(-2.0));
  CHECK(out(0, 0, 1, 1) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("multilinear transform: 45 degree rotation of an isotropic diagonal") {
  // direct evaluation of the quadruple sum: entry (0,0,0,0) = 3 (cos^4 + sin^4)
  Vector kappa(2);
  kappa << 3.0, 3.0;
  const double th = std::numbers::pi / 4.0;
  Matrix q(2, 2);
  q << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  auto out = multilinear_transform(DiagonalTensor4(kappa), q);
  const double expect = 3.0 * (std::pow(std::cos(th), 4) + std::pow(std::sin(th), 4));
  CHECK(expect == Catch::Approx(1.5).epsilon(1e-14));
  CHECK(out(0, 0, 0, 0) == Catch::Approx(1.5).epsilon(1e-12));
  // and the general path agrees with the brute-force oracle
  auto oracle = testutil::multilinear_oracle(DiagonalTensor4(kappa).to_tensor(), q);
  CHECK((out - oracle).frobenius_norm() == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("multilinear transform agrees with the quadruple-sum oracle") {
  auto z = random_tensor(3, 21);
  const Matrix q = random_orthogonal(3, 5);
  auto fast = multilinear_transform(z, q);
  auto oracle = testutil::multilinear_oracle(z, q);
  CHECK((fast - oracle).frobenius_norm() < 1e-11);

  // rectangular map into more channels
  const Matrix rect = random_mixing(5, 3, 9);
  auto lifted = multilinear_transform(z, rect);
  auto lifted_oracle = testutil::multilinear_oracle(z, rect);
  CHECK((lifted - lifted_oracle).frobenius_norm() < 1e-10);
}

TEST_CASE("orthogonal maps preserve the frobenius norm") {
  auto z = random_tensor(4, 3);
  for (int t = 0; t < 20; ++t) {
    const Matrix q = random_orthogonal(4, 50 + std::uint64_t(t));
    auto out = multilinear_transform(z, q);
    CHECK(out.frobenius_norm() ==
          Catch::Approx(z.frobenius_norm()).epsilon(1e-10));
  }
}

TEST_CASE("multilinear transform rejects mismatched shapes") {
  auto z = random_tensor(3, 2);
  CHECK_THROWS_AS(multilinear_transform(z, Matrix::Identity(4, 4)), dimension_error);
}

// ---------------------------------------------------------------------------

TEST_CASE("estimate_cumulant: zero data gives the zero tensor") {
  Matrix x = Matrix::Zero(10, 3);
  auto z = estimate_cumulant(x);
  CHECK(z.frobenius_norm() == 0.0);
}

TEST_CASE("estimate_cumulant rejects degenerate input") {
  CHECK_THROWS(estimate_cumulant(Matrix::Zero(1, 3)));
  Matrix bad = Matrix::Zero(5, 2);
  bad(2, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(estimate_cumulant(bad));
}

TEST_CASE("estimate_cumulant: gaussian data has (near) zero cumulant") {
  const Eigen::Index n_samples = 100000;
  rng::Counter rng(12345);
  Matrix x(n_samples, 3);
  for (Eigen::Index i = 0; i < n_samples; ++i)
    for (int j = 0; j < 3; ++j) x(i, j) = rng.next_normal();
  auto z = estimate_cumulant(x);
  const double bound = 10.0 / std::sqrt(double(n_samples));
  CHECK(z.unique().cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("estimate_cumulant: laplace channels match the analytic kurtosis") {
  const Eigen::Index n_samples = 100000;
  rng::Counter rng(777);
  Matrix x(n_samples, 2);
  const double b = 1.0 / std::sqrt(2.0);  // unit variance
  for (Eigen::Index i = 0; i < n_samples; ++i)
    for (int j = 0; j < 2; ++j) x(i, j) = rng.next_laplace(0.0, b);
  auto z = estimate_cumulant(x);
  CHECK(z(0, 0, 0, 0) == Catch::Approx(3.0).margin(0.2));
  CHECK(z(1, 1, 1, 1) == Catch::Approx(3.0).margin(0.2));
  CHECK(std::abs(z(0, 0, 0, 1)) < 0.1);
  CHECK(std::abs(z(0, 0, 1, 1)) < 0.1);
  CHECK(std::abs(z(0, 1, 1, 1)) < 0.1);
}

TEST_CASE("estimate_cumulant converges at the parametric rate") {
  // log-log slope of the error against the analytic tensor, averaged over seeds
  const std::vector<Eigen::Index> sizes = {1000, 10000, 100000};
  const std::vector<SourceId> ids(3, SourceId::laplace);
  double slope_sum = 0.0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    const Matrix q = random_orthogonal(3, 900 + std::uint64_t(s));
    auto z_pop = population_cumulant_laplace(3, q);
    std::vector<double> lx, ly;
    double prev = std::numeric_limits<double>::infinity();
    for (auto n_samples : sizes) {
      const Matrix src = sample_sources(ids, n_samples, rng::derive(1234, std::uint64_t(s * 10) +
                                                                               std::uint64_t(n_samples)));
      const Matrix z = src * q.transpose();
      auto zh = estimate_cumulant(z, true);
      const double err = (zh - z_pop).frobenius_norm();
      CHECK(err < prev);  // error shrinks with N
      prev = err;
      lx.push_back(std::log10(double(n_samples)));
      ly.push_back(std::log10(err));
    }
    const double mx = (lx[0] + lx[1] + lx[2]) / 3.0;
    const double my = (ly[0] + ly[1] + ly[2]) / 3.0;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 3; ++i) {
      num += (lx[i] - mx) * (ly[i] - my);
      den += (lx[i] - mx) * (lx[i] - mx);
    }
    slope_sum += num / den;
  }
  const double slope = slope_sum / seeds;
  CHECK(slope == Catch::Approx(-0.5).margin(0.15));
}

// ---------------------------------------------------------------------------

TEST_CASE("vectorize: length, zero case and exact inversion") {
  CHECK(vectorize(SymmetricTensor4(2)).size() == 5);
  CHECK(vectorize(SymmetricTensor4(2)).norm() == 0.0);
  auto z = random_tensor(4, 31);
  auto back = devectorize(vectorize(z), 4);
  CHECK((back - z).frobenius_norm() == 0.0);  // exact inverse
  CHECK_THROWS_AS(devectorize(Vector::Zero(6), 2), dimension_error);
}

TEST_CASE("vectorize is a linear isometry") {
  for (int t = 0; t < 10; ++t) {
    auto a = random_tensor(3, 400 + std::uint64_t(t));
    auto b = random_tensor(3, 500 + std::uint64_t(t));
    CHECK(vectorize(a).norm() == Catch::Approx(a.frobenius_norm()).epsilon(1e-12));
    CHECK(vectorize(a).dot(vectorize(b)) == Catch::Approx(a.inner(b)).epsilon(1e-10).margin(1e-10));
  }
}

// ---------------------------------------------------------------------------

TEST_CASE("matricize: zero, diagonal layout and exact round trip") {
  CHECK(matricize(SymmetricTensor4(3)).norm() == 0.0);

  Vector kappa(3);
  kappa << 2.0, -1.0, 4.0;
  auto z = DiagonalTensor4(kappa).to_tensor();
  const Matrix zb = matricize(z);
  for (int i = 0; i < 3; ++i)
    CHECK(zb(i * 3 + i, i * 3 + i) == Catch::Approx(kappa[i]));
  CHECK(zb.cwiseAbs().sum() == Catch::Approx(kappa.cwiseAbs().sum()));

  auto r = random_tensor(3, 77);
  auto back = dematricize(matricize(r), 3);
  CHECK((back - r).frobenius_norm() == 0.0);
}

TEST_CASE("matricize of a model-set member has rank n") {
  Matrix q;
  Vector kappa;
  auto z = random_model_member(3, 42, &q, &kappa);
  Eigen::JacobiSVD<Matrix> svd(matricize(z));
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-10 * sv[0]) ++rank;
  CHECK(rank == 3);
}

TEST_CASE("matricized matrix is symmetric for super-symmetric tensors") {
  auto z = random_tensor(4, 90);
  const Matrix zb = matricize(z);
  CHECK((zb - zb.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

// ---------------------------------------------------------------------------

TEST_CASE("pairwise product tensor matches the cumulant correction identity") {
  // for centered gaussian-like second moments C, the raw 4th moment of the
  // pairing part is exactly C_ij C_kl + C_ik C_jl + C_il C_jk
  Matrix c(2, 2);
  c << 2.0, 0.5, 0.5, 1.0;
  auto t = pairwise_product_tensor(c);
  CHECK(t(0, 0, 0, 0) == Catch::Approx(3.0 * 4.0));        // 3 C00^2
  CHECK(t(0, 0, 1, 1) == Catch::Approx(2.0 * 1.0 + 2.0 * 0.25));  // C00 C11 + 2 C01^2
  CHECK(t(0, 1, 1, 1) == Catch::Approx(3.0 * 0.5 * 1.0));  // 3 C01 C11
}

TEST_CASE("tensor arithmetic checks dimensions") {
  auto a = random_tensor(3, 1);
  auto b = random_tensor(4, 2);
  CHECK_THROWS_AS(a + b, dimension_error);
  CHECK_THROWS_AS(a.inner(b), dimension_error);
}
