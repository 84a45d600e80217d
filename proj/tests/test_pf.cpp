#include "corpus.hpp"
#include "feeders.hpp"
#include "seqopf/pf_oracle.hpp"

#include <gtest/gtest.h>

using namespace seqopf;

namespace {

// |V2|^2 for one line from a 1 p.u. source: the larger root of
// v^2 + (2(rP + xQ) - 1) v + (rP + xQ)^2 + (xP - rQ)^2 = 0.
double two_bus_v2(cplx z, cplx s) {
  const double r = z.real(), x = z.imag(), P = s.real(), Q = s.imag();
  const double b = 2.0 * (r * P + x * Q) - 1.0;
  const double c = std::pow(r * P + x * Q, 2) + std::pow(x * P - r * Q, 2);
  return (-b + std::sqrt(b * b - 4.0 * c)) / 2.0;
}

}  // namespace

TEST(PowerFlow, TwoBusClosedForm) {
  const auto m = fixtures::two_bus();
  const auto pf = solve_power_flow(m);
  EXPECT_TRUE(pf.converged);
  EXPECT_NEAR(std::norm(pf.voltages[1][0]), two_bus_v2(cplx(0.01, 0.02), cplx(0.5, 0.2)), 1e-10);
}

TEST(PowerFlow, ConstantImpedanceScalesWithVoltage) {
  const auto m = fixtures::two_bus(ZipWeights{1.0, 0.0, 0.0});
  const auto pf = solve_power_flow(m);
  const auto s = load_powers(m, pf.voltages)[0][0];
  const double u2 = std::norm(pf.voltages[1][0]);
  EXPECT_NEAR(std::abs(s - cplx(0.5, 0.2) * u2), 0.0, 1e-12);
  // same load seen at the head: load + I^2 z
  const cplx i = pf.branch_current[0][0];
  EXPECT_NEAR(std::abs(pf.branch_flow[0][0] - (s + std::norm(i) * cplx(0.01, 0.02))), 0.0, 1e-9);
}

TEST(PowerFlow, DeltaConstantPowerKeepsTotal) {
  ZipLoad d;
  d.id = "d";
  d.bus = "x";
  d.phases = PhaseSet::abc();
  d.connection = Connection::delta;
  d.s_nominal = {cplx(0.2, 0.1), cplx(0.1, 0.05), cplx(0.3, 0.1)};
  const cplx a = symcomp::rotation();
  const PhaseArray v{cplx(1.01, 0.0), 0.98 * a * a, 1.02 * a};
  const PhaseArray s = evaluate_zip_load(d, v);
  EXPECT_NEAR(std::abs(s[0] + s[1] + s[2] - cplx(0.6, 0.25)), 0.0, 1e-12);
}

TEST(PowerFlow, HeadBalanceOnFourBus) {
  const auto m = fixtures::four_bus();
  const auto pf = solve_power_flow(m);
  // the regulator is lossless and ideal: what enters equals what leaves
  const auto in = feeder_head_flows(m, pf, "reg");
  const auto out = feeder_head_flows(m, pf, "1-2");
  for (int p = 0; p < 3; ++p) EXPECT_NEAR(std::abs(in[p] - out[p]), 0.0, 1e-10);
  EXPECT_THROW(feeder_head_flows(m, pf, "nope"), ModelError);
}

TEST(PowerFlow, Ieee34ReferenceProfile) {
  const auto c = fixtures::load_case("ieee34", "case4");
  const auto pf = solve_power_flow(c.model);
  EXPECT_NEAR(std::abs(pf.voltages[c.model.bus_index("808")][0]), 0.9631, 5e-4);
  EXPECT_NEAR(std::abs(pf.voltages[c.model.bus_index("890")][0]), 0.8571, 5e-4);
}

TEST(PowerFlow, Ieee13ReferenceProfile) {
  const auto c = fixtures::load_case("ieee13");
  const auto pf = solve_power_flow(c.model);
  const int b = c.model.bus_index("671");
  EXPECT_NEAR(std::abs(pf.voltages[b][0]), 0.9900, 2e-3);
  EXPECT_NEAR(std::abs(pf.voltages[b][1]), 1.0529, 2e-3);
  EXPECT_NEAR(std::abs(pf.voltages[b][2]), 0.9778, 2e-3);
}

TEST(PowerFlow, RequiresPerUnit) {
  auto m = fixtures::two_bus();
  m.units = Units::physical;
  EXPECT_THROW(solve_power_flow(m), ModelError);
}
