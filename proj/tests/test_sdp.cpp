#include "feeders.hpp"
#include "seqopf/load_iteration.hpp"

#include <gtest/gtest.h>

using namespace seqopf;

namespace {

double oracle_residual(const FeederModel& m, Formulation f) {
  auto pf = solve_power_flow(m);
  SdpOptions o;
  o.formulation = f;
  o.loads = evaluate_load_profile(m, pf.voltages);
  auto sp = build_sdp(m, o);
  RVector x = oracle_point(sp, m, pf);
  return sp.problem.max_equality_residual(x);
}

}  // namespace

TEST(Sdp, TwoBusCounts) {
  auto m = fixtures::two_bus();
  auto sp = build_bfm_sdp(m);
  EXPECT_EQ(sp.psd_blocks, 1);
  EXPECT_EQ(sp.kvl_rows, 1);
  EXPECT_EQ(sp.problem.psd_blocks()[0].expr.rows(), 2);
}

TEST(Sdp, OraclePointFeasible) {
  for (auto f : {Formulation::bfm, Formulation::symmetrical}) {
    EXPECT_LE(oracle_residual(fixtures::two_bus(), f), 1e-7);
    EXPECT_LE(oracle_residual(fixtures::four_bus(), f), 1e-7);
    EXPECT_LE(oracle_residual(fixtures::four_bus(false), f), 1e-7);
  }
}

TEST(Sdp, TwoBusLossMinMatchesOracle) {
  auto m = fixtures::two_bus();
  auto pf = solve_power_flow(m);
  auto sp = build_bfm_sdp(m);
  auto raw = conic::InteriorPointBackend().solve(sp.problem);
  ASSERT_EQ(raw.status.tag, conic::SolveTag::Solved) << raw.status.message;
  auto sol = extract_solution(raw, sp, m);
  EXPECT_NEAR(std::norm(sol.voltages[1][0]), std::norm(pf.voltages[1][0]), 1e-6);
  EXPECT_NEAR(std::arg(sol.voltages[1][0]), std::arg(pf.voltages[1][0]), 1e-5);
  EXPECT_LE(sol.max_gap, kRank1Tol);
}

TEST(Sdp, FourBusTightAndEquivalent) {
  auto m = fixtures::four_bus();
  auto pf = solve_power_flow(m);
  SdpOptions o;
  o.loads = evaluate_load_profile(m, pf.voltages);
  double obj[2];
  for (auto f : {Formulation::bfm, Formulation::symmetrical}) {
    o.formulation = f;
    auto sp = build_sdp(m, o);
    auto raw = conic::InteriorPointBackend().solve(sp.problem);
    ASSERT_EQ(raw.status.tag, conic::SolveTag::Solved) << raw.status.message;
    auto sol = extract_solution(raw, sp, m);
    EXPECT_LE(sol.max_gap, kRank1Tol) << to_string(f);
    for (std::size_t b = 0; b < m.buses.size(); ++b)
      for (int p : m.buses[b].phases.phases()) {
        EXPECT_NEAR(std::abs(sol.voltages[b][p]), std::abs(pf.voltages[b][p]), 1e-4) << m.buses[b].id << p;
        EXPECT_NEAR(std::arg(sol.voltages[b][p] / pf.voltages[b][p]), 0.0, 1e-4) << m.buses[b].id << p;
      }
    obj[f == Formulation::bfm ? 0 : 1] = raw.objective;
  }
  EXPECT_NEAR(obj[0], obj[1], 1e-6 * std::max(1.0, std::abs(obj[1])));
}

TEST(Sdp, LoadLoop) {
  conic::InteriorPointBackend be;
  auto m = fixtures::four_bus();
  auto run = run_opf_with_load_update(m, {}, be);
  EXPECT_TRUE(run.trace.converged);
  EXPECT_LE(run.trace.records.size(), 10u);
  auto pf = solve_power_flow(m);
  EXPECT_LE(max_magnitude_difference(m, run.solution.voltages, pf.voltages), 1e-4);
  auto cp = fixtures::four_bus_constant_power();
  auto run1 = run_opf_with_load_update(cp, {}, be);
  EXPECT_TRUE(run1.trace.converged);
  EXPECT_EQ(run1.trace.records.size(), 1u);
}

TEST(Sdp, LoopCapReturnsBestIterate) {
  conic::InteriorPointBackend be;
  LoopOptions loop;
  loop.max_iter = 2;
  auto run = run_opf_with_load_update(fixtures::four_bus(), {}, be, loop);
  EXPECT_FALSE(run.trace.converged);
  EXPECT_EQ(run.trace.records.size(), 2u);
  ASSERT_GE(run.trace.best, 0);
  EXPECT_LE(run.trace.records[run.trace.best].max_voltage_change, run.trace.records[0].max_voltage_change);
}

TEST(Sdp, UndampedLoopAlsoConvergesOnFourBus) {
  conic::InteriorPointBackend be;
  LoopOptions loop;
  loop.relaxation = 1.0;
  auto run = run_opf_with_load_update(fixtures::four_bus(), {}, be, loop);
  EXPECT_TRUE(run.trace.converged);
}

TEST(Sdp, ImpossibleBoundsAreInfeasible) {
  auto m = fixtures::four_bus();
  for (auto& b : m.buses)
    if (b.id != m.source.bus) b.vmin = 1.15;
  for (auto f : {Formulation::bfm, Formulation::symmetrical}) {
    SdpOptions o;
    o.formulation = f;
    auto raw = conic::InteriorPointBackend().solve(build_sdp(m, o).problem);
    EXPECT_EQ(raw.status.tag, conic::SolveTag::Infeasible) << to_string(f) << " " << raw.status.message;
  }
}
