// Semidefinite relaxations of the branch flow model.
//
// build_bfm_sdp writes every node and branch in the phase frame.
// build_symmetrical_sdp moves the three-phase backbone into the sequence frame
// (v_012 = A^H v A, S_012, l_012, z_012 likewise) and keeps laterals in the
// phase frame, joined by an auxiliary phase-frame copy of v at every backbone
// node that feeds a lateral.  Branch balances are always written per phase.
//
// Branches whose series impedance is exactly zero (ideal regulators, switches)
// carry no current variable and no PSD block: they only tie the voltages at
// both ends and pass their diagonal flow through.
#pragma once

#include "seqopf/conic/problem.hpp"
#include "seqopf/pf_oracle.hpp"
#include "seqopf/symcomp.hpp"

#include <cmath>
#include <optional>

namespace seqopf {

using conic::CExpr;
using conic::CMatExpr;
using conic::LinExpr;

enum class Formulation { bfm, symmetrical };
enum class ObjectiveKind { loss_min, cost_min, supply_cost };

inline const char* to_string(Formulation f) { return f == Formulation::bfm ? "bfm" : "symmetrical"; }

inline const char* to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::loss_min: return "loss-min";
    case ObjectiveKind::cost_min: return "cost-min";
    case ObjectiveKind::supply_cost: return "supply-cost";
  }
  return "?";
}

inline Formulation parse_formulation(const std::string& s) {
  if (s == "bfm") return Formulation::bfm;
  if (s == "symmetrical" || s == "sym") return Formulation::symmetrical;
  throw ModelError("unknown formulation '" + s + "'");
}

inline ObjectiveKind parse_objective(const std::string& s) {
  if (s == "loss-min") return ObjectiveKind::loss_min;
  if (s == "cost-min") return ObjectiveKind::cost_min;
  if (s == "supply-cost") return ObjectiveKind::supply_cost;
  throw ModelError("unknown objective '" + s + "'");
}

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::loss_min;
  std::optional<double> grid_price;  // overrides the source's price
};

/// Constant per-phase power drawn by each load (wye-equivalent), p.u.
using LoadProfile = std::vector<PhaseArray>;

/// Per-bus complex voltages at the source reference (flat start).
inline std::vector<PhaseArray> flat_voltages(const FeederModel& model) {
  std::vector<PhaseArray> v(model.buses.size(), PhaseArray{});
  for (std::size_t b = 0; b < model.buses.size(); ++b)
    for (int p : model.buses[b].phases.phases()) v[b][p] = model.source.v_ref[p];
  return v;
}

inline LoadProfile evaluate_load_profile(const FeederModel& model, const std::vector<PhaseArray>& voltages) {
  return load_powers(model, voltages);
}

inline LoadProfile nominal_load_profile(const FeederModel& model) {
  return evaluate_load_profile(model, flat_voltages(model));
}

/// Voltage limits handled inside the SDP, or left to the caller.
enum class VoltageBounds { exact, none };

struct SdpOptions {
  Formulation formulation = Formulation::symmetrical;
  ObjectiveSpec objective;
  LoadProfile loads;  // empty: nominal loads at flat voltages
  VoltageBounds bounds = VoltageBounds::exact;
  std::optional<Dispatch> fixed_dispatch;  // generators pinned to these outputs
  std::optional<Dispatch> dispatch_base;   // generator output = base + decision variable
};

struct NodeVars {
  bool sequence = false;
  CMatExpr v;        // stored variable, in its own frame
  CMatExpr v_phase;  // phase-frame expression (aux variable at boundary nodes)
  bool has_aux = false;
};

struct BranchVars {
  bool sequence = false;
  bool lossless = false;
  CMatExpr S;  // own frame; lossless links keep only a phase-frame diagonal
  CMatExpr l;  // empty for lossless links
  CMatrix z;   // own frame
  CMatExpr S_phase;
  CMatExpr zl_phase;  // z l in the phase frame
};

struct GenVars {
  std::array<LinExpr, 3> p;  // injection, p.u.
  std::array<LinExpr, 3> q;
  std::array<std::optional<int>, 3> var;  // decision variable per phase
};

struct SdpVariables {
  std::vector<NodeVars> nodes;      // per bus
  std::vector<BranchVars> branches;  // model.branches() order
  std::vector<GenVars> gens;
  std::array<CExpr, 3> source_injection;  // per phase of the source bus
};

struct SdpProblem {
  conic::ConicProblem problem;
  SdpVariables vars;
  Formulation formulation = Formulation::symmetrical;
  ObjectiveSpec objective;
  LoadProfile loads;
  std::vector<BranchRef> branches;
  TopologyOrder topo;
  int psd_blocks = 0;
  int aux_nodes = 0;
  int balance_rows = 0;
  int kvl_rows = 0;
};

namespace sdp_detail {

inline CMatExpr conj_by(const CMatrix& A, const CMatExpr& x) { return (A * x) * CMatrix(A.adjoint()); }

inline CMatExpr diag_embed(const std::vector<CExpr>& d) {
  CMatExpr m(static_cast<int>(d.size()), static_cast<int>(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) m(static_cast<int>(i), static_cast<int>(i)) = d[i];
  return m;
}

inline bool is_zero(const CMatrix& z) { return z.size() == 0 || z.cwiseAbs().maxCoeff() == 0.0; }

/// Hermitian-valued  S z^H + z S^H.
inline CMatExpr flow_drop(const CMatExpr& S, const CMatrix& z) {
  return S * CMatrix(z.adjoint()) + CMatrix(z) * S.adjoint();
}

}  // namespace sdp_detail

/// Backbone membership per branch: both ends three-phase and every ancestor
/// branch on the backbone.
inline std::vector<char> backbone_branches(const FeederModel& model, const TopologyOrder& topo) {
  const auto brs = model.branches();
  std::vector<char> on(brs.size(), 0);
  std::vector<char> node_on(model.buses.size(), 0);
  const int src = model.source_index();
  node_on[src] = model.buses[src].phases.is_three_phase();
  std::vector<int> pos_of_bus(model.buses.size(), -1);
  for (std::size_t k = 0; k < brs.size(); ++k) pos_of_bus[model.bus_index(model.branch_to(brs[k]))] = static_cast<int>(k);
  for (int b : topo.order) {
    if (b == src) continue;
    const int k = pos_of_bus[b];
    const int parent = topo.parent_bus[b];
    const bool ok = node_on[parent] && model.buses[b].phases.is_three_phase() && model.branch_phases(brs[k]).is_three_phase();
    on[k] = ok;
    node_on[b] = ok;
  }
  return on;
}

/// Secondary voltage of a regulator bank:
///   (v_pri - (S z^H + z S^H) + z l z^H) o (r r^T)
/// in the phase frame; in the sequence frame both sides are conjugated by A.
/// `l` may be empty for an impedance-free bank.
inline CMatExpr regulator_constraint(const RegulatorBank& reg, const CMatExpr& v_pri, const CMatExpr& S, const CMatExpr& l,
                                     const CMatrix& z, bool sequence) {
  for (int p : reg.phases.phases())
    if (reg.taps[p] < kMinTap || reg.taps[p] > kMaxTap)
      throw ModelError("regulator '" + reg.id + "': tap " + std::to_string(reg.taps[p]) + " on phase " + phase_letter(p) +
                       " outside [-16, 16]");
  CMatExpr x = v_pri;
  if (l.rows() > 0) {
    x -= sdp_detail::flow_drop(S, z);
    x += (CMatrix(z) * l) * CMatrix(z.adjoint());
  }
  const RMatrix R = reg.ratio_outer();
  if (!sequence) return x.hadamard(R);
  const CMatrix& A = symcomp::fortescue_matrix();
  CMatExpr phase = sdp_detail::conj_by(A, x).hadamard(R);
  return sdp_detail::conj_by(CMatrix(A.adjoint()), phase);
}

/// Box limits and, for three-phase units with a balance factor, the band
/// (1 - beta) mean <= P_phi <= (1 + beta) mean.  Q follows P at the fixed
/// power factor, so its band is implied.
inline void dg_constraints(conic::ConicProblem& prob, const DistributedGenerator& g, const GenVars& gv) {
  for (int p : g.phases.phases()) {
    const std::string tag = g.id + "." + phase_letter(p);
    prob.add_inequality(gv.p[p] - g.p_min[p], tag + " >= p_min");
    prob.add_inequality(gv.p[p] * -1.0 + g.p_max[p], tag + " <= p_max");
  }
  if (g.balance_beta && g.phases.is_three_phase()) {
    const double beta = *g.balance_beta;
    LinExpr mean = (gv.p[0] + gv.p[1] + gv.p[2]) * (1.0 / 3.0);
    for (int p = 0; p < 3; ++p) {
      const std::string tag = g.id + "." + phase_letter(p) + " balance";
      prob.add_inequality(gv.p[p] - mean * (1.0 - beta), tag + " lower");
      prob.add_inequality(mean * (1.0 + beta) - gv.p[p], tag + " upper");
    }
  }
}

/// Objective terms for `spec`.  Loss-min is sum Re tr(z l) in p.u.; the cost
/// objectives are in $/h with powers converted to kW.  Quadratic generator
/// costs are lifted into second-order-cone epigraphs.
inline LinExpr build_objective(conic::ConicProblem& prob, const FeederModel& model, const SdpVariables& vars,
                               const ObjectiveSpec& spec) {
  LinExpr obj;
  if (spec.kind == ObjectiveKind::loss_min) {
    for (const auto& bv : vars.branches) {
      if (bv.lossless) continue;
      CMatExpr zl = CMatrix(bv.z) * bv.l;
      for (int i = 0; i < zl.rows(); ++i) obj += zl(i, i).real();
    }
    return obj;
  }
  const double kw = model.phase_base_kva();
  const double price = spec.grid_price.value_or(model.source.grid_price);
  for (int p : model.buses[model.source_index()].phases.phases()) obj += vars.source_injection[p].real() * (price * kw);
  for (std::size_t g = 0; g < model.generators.size(); ++g) {
    const auto& gen = model.generators[g];
    LinExpr total;
    for (int p : gen.phases.phases()) total += vars.gens[g].p[p];
    total *= kw;
    obj += total * gen.cost.a1;
    if (gen.cost.a2 < 0.0) throw ModelError("generator '" + gen.id + "': negative quadratic cost");
    if (spec.kind == ObjectiveKind::cost_min && gen.cost.a2 > 0.0) {
      // t >= total^2  <=>  (t + 1)/2 >= ||((t - 1)/2, total)||
      LinExpr t = prob.add_real(gen.id + ".cost_epigraph");
      prob.add_soc({(t + 1.0) * 0.5, (t - 1.0) * 0.5, total}, gen.id + " quadratic cost");
      obj += t * gen.cost.a2;
    }
  }
  return obj;
}

namespace sdp_detail {

inline SdpProblem build(const FeederModel& model, const SdpOptions& opts) {
  if (model.units != Units::per_unit) throw ModelError("SDP builders require a per-unit model");
  SdpProblem out;
  out.formulation = opts.formulation;
  out.objective = opts.objective;
  out.topo = radial_order(model);
  out.branches = model.branches();
  out.loads = opts.loads.empty() ? nominal_load_profile(model) : opts.loads;
  if (out.loads.size() != model.loads.size()) throw ModelError("load profile does not match the model's loads");
  auto& prob = out.problem;
  auto& vars = out.vars;
  const auto& topo = out.topo;
  const auto& brs = out.branches;
  const int nb = static_cast<int>(model.buses.size());
  const int src = model.source_index();
  const bool symmetrical = opts.formulation == Formulation::symmetrical;
  const CMatrix& A = symcomp::fortescue_matrix();
  const CMatrix AH = A.adjoint();

  std::vector<char> backbone(brs.size(), 0);
  std::vector<char> node_seq(nb, 0);
  if (symmetrical) {
    backbone = backbone_branches(model, topo);
    node_seq[src] = model.buses[src].phases.is_three_phase();
    for (std::size_t k = 0; k < brs.size(); ++k)
      if (backbone[k]) node_seq[model.bus_index(model.branch_to(brs[k]))] = 1;
  }

  // Node variables.
  vars.nodes.resize(nb);
  for (int b = 0; b < nb; ++b) {
    const Bus& bus = model.buses[b];
    NodeVars& nv = vars.nodes[b];
    nv.sequence = node_seq[b];
    nv.v = prob.add_hermitian((nv.sequence ? "v012:" : "v:") + bus.id, bus.phases.size());
    nv.v_phase = nv.sequence ? conj_by(A, nv.v) : nv.v;
  }
  // Auxiliary phase-frame copies at backbone nodes feeding laterals.
  for (int b = 0; b < nb; ++b) {
    if (!node_seq[b]) continue;
    bool feeds_lateral = false;
    for (auto br : topo.child_branches[b]) {
      auto it = std::find(brs.begin(), brs.end(), br);
      if (!backbone[it - brs.begin()]) feeds_lateral = true;
    }
    if (!feeds_lateral) continue;
    NodeVars& nv = vars.nodes[b];
    CMatExpr aux = prob.add_hermitian("vabc:" + model.buses[b].id, 3);
    prob.add_hermitian_equality(aux - conj_by(A, nv.v), "aux " + model.buses[b].id);
    nv.v_phase = aux;
    nv.has_aux = true;
    ++out.aux_nodes;
  }

  // Branch variables.
  vars.branches.resize(brs.size());
  for (std::size_t k = 0; k < brs.size(); ++k) {
    const BranchRef br = brs[k];
    BranchVars& bv = vars.branches[k];
    const PhaseSet ph = model.branch_phases(br);
    const int n = ph.size();
    const std::string id = model.branch_id(br);
    bv.sequence = backbone[k];
    bv.lossless = is_zero(model.branch_z(br));
    if (bv.lossless) {
      std::vector<CExpr> d;
      for (int i = 0; i < n; ++i) d.push_back(prob.add_complex("Sd:" + id + "[" + std::to_string(i) + "]"));
      bv.S = diag_embed(d);
      bv.S_phase = bv.S;
      bv.z = CMatrix::Zero(n, n);
      continue;
    }
    bv.z = bv.sequence ? symcomp::impedance_to_sequence(model.branch_z(br)) : model.branch_z(br);
    const std::string tag = bv.sequence ? "012:" : ":";
    bv.S = prob.add_complex_matrix("S" + tag + id, n, n);
    bv.l = prob.add_hermitian("l" + tag + id, n);
    bv.S_phase = bv.sequence ? conj_by(A, bv.S) : bv.S;
    CMatExpr zl = CMatrix(bv.z) * bv.l;
    bv.zl_phase = bv.sequence ? conj_by(A, zl) : zl;
  }

  // Generators.
  vars.gens.resize(model.generators.size());
  for (std::size_t g = 0; g < model.generators.size(); ++g) {
    const auto& gen = model.generators[g];
    GenVars& gv = vars.gens[g];
    const double tq = gen.q_per_p();
    for (int p : gen.phases.phases()) {
      if (opts.fixed_dispatch) {
        gv.p[p] = LinExpr::value((*opts.fixed_dispatch)[g][p].real());
        gv.q[p] = LinExpr::value((*opts.fixed_dispatch)[g][p].imag());
        continue;
      }
      const int idx = prob.add_variable((opts.dispatch_base ? "dP:" : "P:") + gen.id + "." + phase_letter(p));
      gv.var[p] = idx;
      gv.p[p] = LinExpr::var(idx);
      if (opts.dispatch_base) gv.p[p] = gv.p[p] + (*opts.dispatch_base)[g][p].real();
      gv.q[p] = gv.p[p] * tq;
    }
    if (!opts.fixed_dispatch) dg_constraints(prob, gen, gv);
  }

  // Source injection.
  for (int p : model.buses[src].phases.phases())
    vars.source_injection[p] = prob.add_complex(std::string("s0.") + phase_letter(p));

  // Per-bus fixed injection from loads and generator expressions.
  std::vector<std::array<CExpr, 3>> inj(nb);
  for (std::size_t i = 0; i < model.loads.size(); ++i) {
    const int b = model.bus_index(model.loads[i].bus);
    for (int p = 0; p < 3; ++p) inj[b][p].constant -= out.loads[i][p];
  }
  for (std::size_t g = 0; g < model.generators.size(); ++g) {
    const int b = model.bus_index(model.generators[g].bus);
    for (int p : model.generators[g].phases.phases()) {
      CExpr e;
      for (const auto& [i, c] : vars.gens[g].p[p].terms) e.terms.emplace_back(i, cplx(c, 0.0));
      for (const auto& [i, c] : vars.gens[g].q[p].terms) e.terms.emplace_back(i, cplx(0.0, c));
      e.constant = cplx(vars.gens[g].p[p].constant, vars.gens[g].q[p].constant);
      inj[b][p] += e;
    }
  }
  for (int p : model.buses[src].phases.phases()) inj[src][p] += vars.source_injection[p];

  // Flow balance per bus and phase.
  std::vector<int> in_branch(nb, -1);
  for (std::size_t k = 0; k < brs.size(); ++k) in_branch[model.bus_index(model.branch_to(brs[k]))] = static_cast<int>(k);
  for (int b = 0; b < nb; ++b) {
    const Bus& bus = model.buses[b];
    const auto phs = bus.phases.phases();
    std::vector<CExpr> lhs(phs.size());
    for (std::size_t i = 0; i < phs.size(); ++i) lhs[i] = inj[b][phs[i]];
    if (in_branch[b] >= 0) {
      const BranchVars& bv = vars.branches[in_branch[b]];
      for (std::size_t i = 0; i < phs.size(); ++i) {
        const int ii = static_cast<int>(i);
        lhs[i] += bv.S_phase(ii, ii);
        if (!bv.lossless) lhs[i] -= bv.zl_phase(ii, ii);
      }
    }
    if (bus.shunt_y.size() > 0 && !is_zero(bus.shunt_y)) {
      CMatExpr vy = vars.nodes[b].v_phase * CMatrix(bus.shunt_y.adjoint());
      for (std::size_t i = 0; i < phs.size(); ++i) lhs[i] -= vy(static_cast<int>(i), static_cast<int>(i));
    }
    for (auto br : topo.child_branches[b]) {
      const int k = static_cast<int>(std::find(brs.begin(), brs.end(), br) - brs.begin());
      const PhaseSet bph = model.branch_phases(br);
      const auto pos = bus.phases.positions_of(bph);
      for (std::size_t i = 0; i < pos.size(); ++i) {
        const int ii = static_cast<int>(i);
        lhs[pos[i]] -= vars.branches[k].S_phase(ii, ii);
      }
    }
    for (std::size_t i = 0; i < phs.size(); ++i) {
      prob.add_equality(lhs[i], "balance " + bus.id + "." + phase_letter(phs[i]));
      ++out.balance_rows;
    }
  }

  // KVL / regulator coupling and PSD blocks.
  for (std::size_t k = 0; k < brs.size(); ++k) {
    const BranchRef br = brs[k];
    const BranchVars& bv = vars.branches[k];
    const int from = model.bus_index(model.branch_from(br));
    const int to = model.bus_index(model.branch_to(br));
    const PhaseSet ph = model.branch_phases(br);
    const std::string id = model.branch_id(br);
    const NodeVars& nf = vars.nodes[from];
    const NodeVars& nt = vars.nodes[to];
    // Upstream voltage in the branch frame.
    CMatExpr vi = bv.sequence ? nf.v : nf.v_phase.sub(model.buses[from].phases.positions_of(ph));
    CMatExpr rhs;
    if (br.is_regulator()) {
      const auto& reg = model.regulators[br.index];
      rhs = regulator_constraint(reg, vi, bv.S, bv.l, bv.z, bv.sequence);
    } else if (bv.lossless) {
      rhs = vi;
    } else {
      rhs = vi - flow_drop(bv.S, bv.z) + (CMatrix(bv.z) * bv.l) * CMatrix(bv.z.adjoint());
    }
    // Downstream side: a backbone branch always ends at a sequence node; a
    // lateral ends at a phase-frame node.
    prob.add_hermitian_equality(nt.v - rhs, "kvl " + id);
    ++out.kvl_rows;
    if (!bv.lossless) {
      prob.add_psd(conic::block2x2(vi, bv.S, bv.S.adjoint(), bv.l), "psd " + id);
      ++out.psd_blocks;
    }
  }

  // Source pin.
  {
    const auto phs = model.buses[src].phases;
    CVector vref = reduce(model.source.v_ref, phs);
    CMatrix vv = vref * vref.adjoint();
    if (vars.nodes[src].sequence) vv = AH * vv * A;
    prob.add_hermitian_equality(vars.nodes[src].v - CMatExpr::constant(vv), "source");
  }

  // Voltage magnitude bounds on diag of the phase-frame voltage.
  if (opts.bounds == VoltageBounds::exact) {
    for (int b = 0; b < nb; ++b) {
      const Bus& bus = model.buses[b];
      if (b == src || !bus.bounded) continue;
      // Use the sequence expression rather than the auxiliary copy so the
      // bound rows do not depend on the lateral bookkeeping.
      CMatExpr vp = vars.nodes[b].sequence ? conj_by(A, vars.nodes[b].v) : vars.nodes[b].v;
      const auto phs = bus.phases.phases();
      for (std::size_t i = 0; i < phs.size(); ++i) {
        LinExpr d = vp(static_cast<int>(i), static_cast<int>(i)).real();
        const std::string tag = bus.id + "." + phase_letter(phs[i]);
        prob.add_inequality(d - bus.vmin * bus.vmin, "vmin " + tag);
        prob.add_inequality(d * -1.0 + bus.vmax * bus.vmax, "vmax " + tag);
      }
    }
  }

  prob.set_objective(build_objective(prob, model, vars, opts.objective));
  return out;
}

}  // namespace sdp_detail

inline SdpProblem build_bfm_sdp(const FeederModel& model, SdpOptions opts = {}) {
  opts.formulation = Formulation::bfm;
  return sdp_detail::build(model, opts);
}

inline SdpProblem build_symmetrical_sdp(const FeederModel& model, SdpOptions opts = {}) {
  opts.formulation = Formulation::symmetrical;
  return sdp_detail::build(model, opts);
}

inline SdpProblem build_sdp(const FeederModel& model, const SdpOptions& opts) { return sdp_detail::build(model, opts); }

// ---------------------------------------------------------------------------
// Numeric values of the SDP variables.

namespace sdp_detail {

/// Writes `value` into the fresh variables behind `handle` (entries of the
/// form x, or x_re + j x_im).  Entries with other shapes are skipped.
inline void assign(const CMatExpr& handle, const CMatrix& value, RVector& x) {
  for (int i = 0; i < handle.rows(); ++i)
    for (int j = 0; j < handle.cols(); ++j) {
      const CExpr& e = handle(i, j);
      if (e.constant != cplx(0.0)) continue;
      for (const auto& [idx, c] : e.terms) {
        if (c == cplx(1.0, 0.0)) x(idx) = value(i, j).real();
        else if (c == cplx(0.0, 1.0)) x(idx) = value(i, j).imag();
      }
    }
}

inline void assign(const CExpr& handle, cplx value, RVector& x) {
  CMatExpr m(1, 1);
  m(0, 0) = handle;
  assign(m, CMatrix::Constant(1, 1, value), x);
}

}  // namespace sdp_detail

/// The rank-one point of the SDP built from a power-flow solution:
/// v = V V^H, S = V_from I^H, l = I I^H on every branch, generator outputs
/// from `dispatch` and the source injection that balances the source bus.
inline RVector oracle_point(const SdpProblem& sp, const FeederModel& model, const PowerFlowSolution& pf,
                            const Dispatch& dispatch = {}) {
  const CMatrix& A = symcomp::fortescue_matrix();
  const CMatrix AH = A.adjoint();
  RVector x = RVector::Zero(sp.problem.num_variables());
  const int nb = static_cast<int>(model.buses.size());
  for (int b = 0; b < nb; ++b) {
    const auto& nv = sp.vars.nodes[b];
    CVector V = reduce(pf.voltages[b], model.buses[b].phases);
    CMatrix vv = V * V.adjoint();
    sdp_detail::assign(nv.v, nv.sequence ? CMatrix(AH * vv * A) : vv, x);
    if (nv.has_aux) sdp_detail::assign(nv.v_phase, vv, x);
  }
  for (std::size_t k = 0; k < sp.branches.size(); ++k) {
    const BranchRef br = sp.branches[k];
    const auto& bv = sp.vars.branches[k];
    const PhaseSet ph = model.branch_phases(br);
    const int from = model.bus_index(model.branch_from(br));
    const int pos = pf.branch_position(br);
    CVector Vi = reduce(pf.voltages[from], ph);
    CVector I = reduce(pf.branch_current[pos], ph);
    CMatrix S = Vi * I.adjoint();
    if (bv.lossless) {
      sdp_detail::assign(bv.S, CMatrix(S.diagonal().asDiagonal()), x);
      continue;
    }
    CMatrix l = I * I.adjoint();
    if (bv.sequence) {
      S = AH * S * A;
      l = AH * l * A;
    }
    sdp_detail::assign(bv.S, S, x);
    sdp_detail::assign(bv.l, l, x);
  }
  for (std::size_t g = 0; g < sp.vars.gens.size() && g < dispatch.size(); ++g)
    for (int p = 0; p < 3; ++p)
      if (sp.vars.gens[g].var[p]) x(*sp.vars.gens[g].var[p]) = dispatch[g][p].real() - sp.vars.gens[g].p[p].constant;
  // Source injection: outgoing flows plus shunt consumption.
  const int src = model.source_index();
  PhaseArray s0{};
  for (auto br : sp.topo.child_branches[src]) {
    const int pos = pf.branch_position(br);
    for (int p = 0; p < 3; ++p) s0[p] += pf.branch_flow[pos][p];
  }
  const Bus& sb = model.buses[src];
  if (sb.shunt_y.size() > 0) {
    CVector V = reduce(pf.voltages[src], sb.phases);
    CVector sh = V.cwiseProduct((sb.shunt_y * V).conjugate());
    auto full = expand(sh, sb.phases);
    for (int p = 0; p < 3; ++p) s0[p] += full[p];
  }
  for (std::size_t i = 0; i < model.loads.size(); ++i)
    if (model.bus_index(model.loads[i].bus) == src)
      for (int p = 0; p < 3; ++p) s0[p] += sp.loads[i][p];
  for (std::size_t g = 0; g < model.generators.size() && g < dispatch.size(); ++g)
    if (model.bus_index(model.generators[g].bus) == src)
      for (int p = 0; p < 3; ++p) s0[p] -= dispatch[g][p];
  for (int p : sb.phases.phases()) sdp_detail::assign(sp.vars.source_injection[p], s0[p], x);
  return x;
}

}  // namespace seqopf
