// Small hand-built feeders shared by the tests.
#pragma once

#include "seqopf/network.hpp"

namespace seqopf::fixtures {

/// Single-phase source -> load, z = 0.01 + 0.02j, constant-power 0.5 + 0.2j.
inline FeederModel two_bus(ZipWeights zip = {}) {
  FeederModel m;
  m.name = "two-bus";
  m.buses = {{"s", PhaseSet::parse("a"), "lv"}, {"1", PhaseSet::parse("a"), "lv"}};
  m.lines = {{"s-1", "s", "1", PhaseSet::parse("a"), CMatrix::Constant(1, 1, cplx(0.01, 0.02))}};
  ZipLoad ld;
  ld.id = "L1";
  ld.bus = "1";
  ld.phases = PhaseSet::parse("a");
  ld.s_nominal = {cplx(0.5, 0.2), 0.0, 0.0};
  ld.zip = zip;
  m.loads = {ld};
  m.source.bus = "s";
  m.source.v_ref = {cplx(1.0, 0.0), 0.0, 0.0};
  return m;
}

inline CMatrix coupled_z(double scale) {
  CMatrix z(3, 3);
  z << cplx(0.030, 0.060), cplx(0.010, 0.025), cplx(0.009, 0.022),
       cplx(0.010, 0.025), cplx(0.032, 0.058), cplx(0.011, 0.020),
       cplx(0.009, 0.022), cplx(0.011, 0.020), cplx(0.031, 0.062);
  return z * scale;
}

/// Unbalanced 4-bus feeder: source -> regulator -> 1 -> 2 (abc) -> 3 (ac).
/// Mixed wye ZIP, delta and single-phase loads plus a shunt capacitor.
inline FeederModel four_bus(bool with_regulator = true) {
  FeederModel m;
  m.name = "four-bus";
  const PhaseSet abc = PhaseSet::abc(), ac = PhaseSet::parse("ac");
  m.buses = {{"s", abc, "mv"}, {"1", abc, "mv"}, {"2", abc, "mv"}, {"3", ac, "mv"}};
  RegulatorBank reg;
  reg.id = "reg";
  reg.from = "s";
  reg.to = "1";
  reg.phases = abc;
  reg.taps = with_regulator ? std::array<int, 3>{4, 2, 6} : std::array<int, 3>{0, 0, 0};
  reg.z_reg = CMatrix::Zero(3, 3);
  m.regulators = {reg};
  m.lines = {{"1-2", "1", "2", abc, coupled_z(1.0)}, {"2-3", "2", "3", ac, submatrix(coupled_z(1.5), {0, 2})}};
  m.buses[2].shunt_y = CMatrix::Identity(3, 3) * cplx(0.0, 0.05);
  ZipLoad w;
  w.id = "L2";
  w.bus = "2";
  w.phases = abc;
  w.s_nominal = {cplx(0.30, 0.12), cplx(0.20, 0.08), cplx(0.35, 0.15)};
  w.zip = {0.2, 0.3, 0.5};
  ZipLoad d;
  d.id = "L3d";
  d.bus = "3";
  d.phases = ac;
  d.connection = Connection::delta;
  d.s_nominal = {0.0, 0.0, cplx(0.15, 0.05)};  // branch ca
  d.zip = {0.0, 1.0, 0.0};
  ZipLoad s;
  s.id = "L3a";
  s.bus = "3";
  s.phases = PhaseSet::parse("a");
  s.s_nominal = {cplx(0.10, 0.04), 0.0, 0.0};
  m.loads = {w, d, s};
  m.source.bus = "s";
  return m;
}

/// Four-bus feeder with wye constant-power loads only.
inline FeederModel four_bus_constant_power() {
  FeederModel m = four_bus();
  m.loads.erase(m.loads.begin() + 1);
  m.loads[0].zip = {};
  return m;
}

}  // namespace seqopf::fixtures
