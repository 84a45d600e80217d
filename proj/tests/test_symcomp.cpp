#include "seqopf/symcomp.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace seqopf;

TEST(Symcomp, FortescueIsUnitary) {
  const CMatrix& A = symcomp::fortescue_matrix();
  EXPECT_LE((A * A.adjoint() - CMatrix::Identity(3, 3)).norm(), 1e-12);
  EXPECT_NEAR(std::abs(A(1, 1) - symcomp::rotation() * symcomp::rotation() / std::sqrt(3.0)), 0.0, 1e-15);
}

TEST(Symcomp, RoundTripAndHermitianPreserved) {
  std::mt19937 rng(3);
  std::normal_distribution<double> N;
  for (int k = 0; k < 50; ++k) {
    CMatrix m(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = cplx(N(rng), N(rng));
    const CMatrix h = hermitian_part(m);
    const auto seq = symcomp::phase_to_sequence(symcomp::PhaseFrame(h));
    EXPECT_TRUE(is_hermitian(seq.m, 1e-12));
    EXPECT_LE((symcomp::sequence_to_phase(seq).m - h).norm(), 1e-12);
  }
}

TEST(Symcomp, CirculantDiagonalizes) {
  const cplx zs(0.3, 0.9), zm(0.1, 0.4);
  CMatrix z = CMatrix::Constant(3, 3, zm);
  z.diagonal().setConstant(zs);
  const CMatrix z012 = symcomp::impedance_to_sequence(z);
  EXPECT_NEAR(std::abs(z012(0, 0) - (zs + 2.0 * zm)), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(z012(1, 1) - (zs - zm)), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(z012(2, 2) - (zs - zm)), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(z012(0, 1)) + std::abs(z012(1, 2)) + std::abs(z012(2, 0)), 0.0, 1e-12);
  EXPECT_LE((symcomp::impedance_to_phase(z012) - z).norm(), 1e-12);
}

TEST(Symcomp, BalancedPositiveSequenceVector) {
  const cplx a = symcomp::rotation();
  CVector v(3);
  v << 1.0, a * a, a;  // a-b-c positive sequence
  const CVector s = symcomp::vector_to_sequence(v);
  EXPECT_NEAR(std::abs(s(0)), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(s(1) - std::sqrt(3.0)), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(s(2)), 0.0, 1e-12);
  EXPECT_LE((symcomp::vector_to_phase(s) - v).norm(), 1e-12);
}

TEST(Symcomp, RejectsNonThreePhase) {
  EXPECT_THROW(symcomp::PhaseFrame(CMatrix::Identity(2, 2)), ModelError);
  EXPECT_THROW(symcomp::vector_to_sequence(CVector::Zero(2)), ModelError);
}
