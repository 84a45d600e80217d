#include "corpus.hpp"
#include "feeders.hpp"
#include "seqopf/voltreg.hpp"

#include <gtest/gtest.h>

using namespace seqopf;

namespace {

FeederModel one_segment() {
  FeederModel m;
  const PhaseSet abc = PhaseSet::abc();
  m.buses = {{"s", abc, "mv"}, {"1", abc, "mv"}};
  m.lines = {{"s-1", "s", "1", abc, fixtures::coupled_z(1.0)}};
  DistributedGenerator g;
  g.id = "G";
  g.bus = "1";
  g.phases = abc;
  g.p_max = {1.0, 1.0, 1.0};
  m.generators = {g};
  m.source.bus = "s";
  return m;
}

}  // namespace

TEST(VoltReg, BalancedOuterProduct) {
  // with balanced unit voltages, V diag(1/V) Lambda is Gamma diag(Lambda)
  const cplx a = symcomp::rotation();
  CVector v(3);
  v << 1.0, a * a, a;
  const PhaseArray lam{cplx(0.3, 0.1), cplx(0.2, -0.1), cplx(0.5, 0.2)};
  const CMatrix g = dg_outer_product_approx(lam);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(std::abs(g(i, j) - v(i) * lam[j] / v(j)), 0.0, 1e-14);
  EXPECT_EQ(dg_outer_product_approx(lam, PhaseSet::parse("ac")).rows(), 2);
}

TEST(VoltReg, SingleSegmentIsExact) {
  const auto m = one_segment();
  const auto sens = voltage_sensitivity(m, radial_order(m), {1});
  const CMatrix& z = m.lines[0].z;
  CVector V(3);
  for (int p = 0; p < 3; ++p) V(p) = m.source.v_ref[p];
  Dispatch d(1, PhaseArray{});
  d[0] = {cplx(0.2, 0.05), cplx(-0.1, 0.02), cplx(0.3, -0.04)};
  CVector I(3);
  for (int p = 0; p < 3; ++p) I(p) = -std::conj(d[0][p] / V(p));
  const CMatrix S = V * I.adjoint();
  const CMatrix drop = S * z.adjoint() + z * S.adjoint();
  for (int p = 0; p < 3; ++p) EXPECT_NEAR(sens.predict(1, p, d), -drop(p, p).real(), 1e-14);
}

TEST(VoltReg, RegulatorScalesDownstreamSensitivity) {
  // the same DG below a regulator with ratio r moves |V|^2 upstream of it by r^2
  auto m = fixtures::four_bus();
  DistributedGenerator g;
  g.id = "G";
  g.bus = "2";
  g.phases = PhaseSet::abc();
  g.p_max = {1.0, 1.0, 1.0};
  m.generators = {g};
  m.regulators[0].z_reg = fixtures::coupled_z(0.5);
  const auto topo = radial_order(m);
  const int b1 = m.bus_index("1");
  const auto with = voltage_sensitivity(m, topo, {b1});
  m.regulators[0].taps = {0, 0, 0};
  const auto without = voltage_sensitivity(m, topo, {b1});
  Dispatch d(1, PhaseArray{});
  d[0] = {0.1, 0.1, 0.1};
  const std::array<int, 3> taps{4, 2, 6};
  for (int p = 0; p < 3; ++p)
    EXPECT_NEAR(with.predict(b1, p, d), std::pow(tap_ratio(taps[p]), 2) * without.predict(b1, p, d), 1e-14);
}

TEST(VoltReg, LiftsLowVoltageOnIeee34) {
  auto c = fixtures::load_case("ieee34", "voltreg34");
  const auto be = conic::default_backend();
  const auto r = run_voltage_regulation(c.model, {}, *be);
  EXPECT_TRUE(r.converged) << r.message;
  EXPECT_LE(r.violation, 1e-3);
  EXPECT_LE(r.iterations.size(), 20u);
  // replaying the dispatch reproduces the reported voltages
  const auto pf = solve_power_flow(c.model, dispatch_injections(c.model, r.dispatch));
  EXPECT_LE(max_magnitude_difference(c.model, pf.voltages, r.voltages), 1e-9);
}

TEST(VoltReg, UnmonitoredBusRejected) {
  const auto m = one_segment();
  EXPECT_THROW(voltage_sensitivity(m, radial_order(m), {7}), ModelError);
  const auto sens = voltage_sensitivity(m, radial_order(m), {1});
  EXPECT_THROW(sens.predict(0, 0, Dispatch(1, PhaseArray{})), ModelError);
}
