#include "seqopf/conic/ldl.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <random>

using namespace seqopf;
using seqopf::conic::QuasidefiniteLdl;

namespace {

// [[P + I, A'], [A, -I]] with sparse random P (PSD) and A.
RMatrix quasidefinite(std::mt19937& rng, int n, int m) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::bernoulli_distribution keep(0.3);
  RMatrix B = RMatrix::Zero(n, n), A = RMatrix::Zero(m, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (keep(rng)) B(i, j) = U(rng);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      if (keep(rng)) A(i, j) = U(rng);
  RMatrix K = RMatrix::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = B.transpose() * B + RMatrix::Identity(n, n);
  K.bottomLeftCorner(m, n) = A;
  K.topRightCorner(n, m) = A.transpose();
  K.bottomRightCorner(m, m) = -RMatrix::Identity(m, m);
  return K;
}

Eigen::SparseMatrix<double> lower_of(const RMatrix& K) {
  const RMatrix lower = K.triangularView<Eigen::Lower>();
  Eigen::SparseMatrix<double> L = lower.sparseView();
  L.makeCompressed();
  return L;
}

}  // namespace

TEST(Ldl, SolvesQuasidefiniteSystems) {
  std::mt19937 rng(17);
  for (int k = 0; k < 20; ++k) {
    const int n = 5 + k, m = 2 + k / 2;
    const RMatrix K = quasidefinite(rng, n, m);
    std::vector<int> sign(n + m, 1);
    for (int i = n; i < n + m; ++i) sign[i] = -1;
    QuasidefiniteLdl ldl;
    ldl.factor(lower_of(K), sign);
    EXPECT_EQ(ldl.regularized_pivots(), 0);
    const RVector b = RVector::Random(n + m);
    const RVector x = ldl.solve(b);
    EXPECT_LE((K * x - b).norm(), 1e-10 * (1.0 + b.norm()));
  }
}

TEST(Ldl, RegularizesWrongSignPivots) {
  // singular positive block: a zero pivot gets pushed to the expected sign
  RMatrix K = RMatrix::Zero(3, 3);
  K(0, 0) = 1.0;
  K(2, 2) = -1.0;
  K(2, 0) = K(0, 2) = 0.5;
  QuasidefiniteLdl ldl;
  ldl.factor(lower_of(K), {1, 1, -1});
  EXPECT_EQ(ldl.regularized_pivots(), 1);
  EXPECT_TRUE(ldl.solve(RVector::Ones(3)).allFinite());
}
