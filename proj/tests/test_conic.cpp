#include "seqopf/conic/backend.hpp"

#include <gtest/gtest.h>

using namespace seqopf;
using namespace seqopf::conic;

namespace {

ConicSolution run(const ConicProblem& p, bool verbose = false) {
  SolverSettings st;
  st.verbose = verbose;
  return InteriorPointBackend(st).solve(p);
}

}  // namespace

TEST(Conic, LpLowerBound) {
  ConicProblem p;
  auto x = p.add_real("x");
  p.add_inequality(x - 1.0, "x>=1");
  p.set_objective(x);
  auto sol = run(p);
  ASSERT_EQ(sol.status.tag, SolveTag::Solved) << sol.status.message;
  EXPECT_NEAR(sol.x(0), 1.0, 1e-7);
}

TEST(Conic, LpInfeasible) {
  ConicProblem p;
  auto x = p.add_real("x");
  p.add_inequality(x - 1.0, "x>=1");
  p.add_inequality(x * -1.0, "x<=0");
  p.set_objective(x);
  EXPECT_EQ(run(p).status.tag, SolveTag::Infeasible);
}

TEST(Conic, LpUnbounded) {
  ConicProblem p;
  auto x = p.add_real("x");
  p.add_inequality(x * -1.0 + 1.0, "x<=1");
  p.set_objective(x);
  EXPECT_EQ(run(p).status.tag, SolveTag::Unbounded);
}

TEST(Conic, LpWithEquality) {
  // min x + 2y  s.t. x + y = 3, x <= 2, y >= 0
  ConicProblem p;
  auto x = p.add_real("x");
  auto y = p.add_real("y");
  p.add_equality(x + y - 3.0, "sum");
  p.add_inequality(x * -1.0 + 2.0, "x<=2");
  p.add_inequality(y, "y>=0");
  p.set_objective(x + y * 2.0);
  auto sol = run(p);
  ASSERT_EQ(sol.status.tag, SolveTag::Solved);
  EXPECT_NEAR(sol.x(0), 2.0, 1e-7);
  EXPECT_NEAR(sol.x(1), 1.0, 1e-7);
  EXPECT_NEAR(sol.objective, 4.0, 1e-7);
}

TEST(Conic, SecondOrderCone) {
  // min t  s.t. t >= ||(x - 1, y - 2)||, x + y = 0  ->  distance from (1,2) to the line
  ConicProblem p;
  auto t = p.add_real("t");
  auto x = p.add_real("x");
  auto y = p.add_real("y");
  p.add_soc({t, x - 1.0, y - 2.0}, "dist");
  p.add_equality(x + y, "line");
  p.set_objective(t);
  auto sol = run(p);
  ASSERT_EQ(sol.status.tag, SolveTag::Solved);
  EXPECT_NEAR(sol.x(0), 3.0 / std::sqrt(2.0), 1e-7);
}

TEST(Conic, HermitianEmbeddingDoublesSpectrum) {
  CMatrix h(2, 2);
  h << cplx(2, 0), cplx(1, -1), cplx(1, 1), cplx(3, 0);
  RMatrix e = hermitian_embedding(h);
  Eigen::SelfAdjointEigenSolver<CMatrix> hs(h);
  Eigen::SelfAdjointEigenSolver<RMatrix> es(e);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(es.eigenvalues()(2 * i), hs.eigenvalues()(i), 1e-12);
    EXPECT_NEAR(es.eigenvalues()(2 * i + 1), hs.eigenvalues()(i), 1e-12);
  }
  CMatrix bad = h;
  bad(0, 1) = cplx(5, 0);
  EXPECT_THROW(hermitian_embedding(bad), ModelError);
}

TEST(Conic, SmallHermitianSdp) {
  // min Re tr(C X)  s.t. tr X = 1, X >= 0  ->  smallest eigenvalue of C.
  CMatrix C(3, 3);
  C << cplx(2, 0), cplx(0.5, 0.3), cplx(0, -0.2), cplx(0.5, -0.3), cplx(1, 0), cplx(0.1, 0.4), cplx(0, 0.2),
      cplx(0.1, -0.4), cplx(1.5, 0);
  ConicProblem p;
  auto X = p.add_hermitian("X", 3);
  LinExpr tr, obj;
  for (int i = 0; i < 3; ++i) tr += X(i, i).real();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      CExpr e = X(j, i) * C(i, j);
      obj += e.real();
    }
  p.add_equality(tr - 1.0, "trace");
  p.add_psd(X, "X>=0");
  p.set_objective(obj);
  auto sol = run(p);
  ASSERT_EQ(sol.status.tag, SolveTag::Solved) << sol.status.message;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(C);
  EXPECT_NEAR(sol.objective, es.eigenvalues()(0), 1e-7);
}
