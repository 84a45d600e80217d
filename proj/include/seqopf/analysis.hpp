// Recovery of physical quantities from an SDP solution, rank-one
// diagnostics and feeder-head flow errors against the power-flow oracle.
#pragma once

#include "seqopf/conic/backend.hpp"
#include "seqopf/sdp.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <numbers>

namespace seqopf {

inline constexpr double kRank1Tol = 1e-5;

/// lambda_2 / lambda_1 of a PSD block; 0 for rank one.  A zero block has no
/// meaningful ratio: returns 0 and sets *zero_block.
inline double rank1_gap(const CMatrix& block, bool* zero_block = nullptr) {
  if (zero_block) *zero_block = false;
  if (block.rows() == 0) {
    if (zero_block) *zero_block = true;
    return 0.0;
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(block), Eigen::EigenvaluesOnly);
  const RVector& ev = es.eigenvalues();  // ascending
  const double l1 = ev(ev.size() - 1);
  if (!(l1 > 0.0)) {
    if (zero_block) *zero_block = true;
    return 0.0;
  }
  if (ev.size() < 2) return 0.0;
  return std::max(0.0, ev(ev.size() - 2)) / l1;
}

struct OpfSolution {
  conic::SolveStatus status;
  double objective = 0.0;
  std::vector<PhaseArray> voltages;  // per bus, complex, angles from recovery
  std::vector<PhaseArray> branch_flow;  // sending-end S per phase, model.branches() order
  std::vector<CMatrix> branch_l;        // phase frame, empty for lossless links
  std::vector<double> block_gap;        // per branch, NaN for lossless links
  Dispatch dispatch;
  PhaseArray source_injection{};
  double max_gap = 0.0;
  bool physical = true;  // every block within kRank1Tol
  std::vector<BranchRef> branch_refs;

  double vm(int bus, int phase) const { return std::abs(voltages[bus][phase]); }
  double va_deg(int bus, int phase) const { return std::arg(voltages[bus][phase]) * 180.0 / std::numbers::pi; }
};

namespace analysis_detail {

inline CMatrix eval(const CMatExpr& e, const RVector& x) { return e.eval(x); }

inline CMatrix blkdiag2(const CMatrix& a) {
  const Eigen::Index n = a.rows();
  CMatrix out = CMatrix::Zero(2 * n, 2 * n);
  out.topLeftCorner(n, n) = a;
  out.bottomRightCorner(n, n) = a;
  return out;
}

}  // namespace analysis_detail

/// Magnitudes from sqrt(diag v); angles propagated from the source down the
/// tree using the principal eigenvector of each branch block, rotated to line
/// up with the already recovered upstream voltage.
inline OpfSolution extract_solution(const conic::ConicSolution& raw, const SdpProblem& sp, const FeederModel& model) {
  using analysis_detail::eval;
  OpfSolution out;
  out.status = raw.status;
  out.objective = raw.objective;
  out.branch_refs = sp.branches;
  const RVector& x = raw.x;
  const CMatrix& A = symcomp::fortescue_matrix();
  const int nb = static_cast<int>(model.buses.size());
  const int src = model.source_index();

  std::vector<CMatrix> vphase(nb);
  for (int b = 0; b < nb; ++b) {
    const auto& nv = sp.vars.nodes[b];
    CMatrix v = eval(nv.v, x);
    vphase[b] = hermitian_part(nv.sequence ? CMatrix(A * v * A.adjoint()) : v);
  }

  const std::size_t nbr = sp.branches.size();
  out.branch_flow.assign(nbr, PhaseArray{});
  out.branch_l.assign(nbr, CMatrix());
  out.block_gap.assign(nbr, std::numeric_limits<double>::quiet_NaN());
  std::vector<CMatrix> blocks(nbr);
  for (std::size_t k = 0; k < nbr; ++k) {
    const BranchRef br = sp.branches[k];
    const auto& bv = sp.vars.branches[k];
    const PhaseSet ph = model.branch_phases(br);
    CMatrix S = eval(bv.S_phase, x);
    out.branch_flow[k] = expand(CVector(S.diagonal()), ph);
    if (bv.lossless) continue;
    CMatrix S_own = eval(bv.S, x);
    CMatrix l_own = eval(bv.l, x);
    const int from = model.bus_index(model.branch_from(br));
    CMatrix vi = submatrix(vphase[from], model.buses[from].phases.positions_of(ph));
    CMatrix l = bv.sequence ? CMatrix(A * l_own * A.adjoint()) : l_own;
    CMatrix Sp = bv.sequence ? CMatrix(A * S_own * A.adjoint()) : S_own;
    const Eigen::Index n = ph.size();
    CMatrix M(2 * n, 2 * n);
    M << vi, Sp, Sp.adjoint(), l;
    blocks[k] = hermitian_part(M);
    out.branch_l[k] = hermitian_part(l);
    out.block_gap[k] = rank1_gap(blocks[k]);
    out.max_gap = std::max(out.max_gap, out.block_gap[k]);
  }
  out.physical = out.max_gap <= kRank1Tol;

  // Angle propagation.
  std::vector<PhaseArray> V(nb, PhaseArray{});
  for (int p : model.buses[src].phases.phases()) V[src][p] = model.source.v_ref[p];
  std::vector<int> in_branch(nb, -1);
  for (std::size_t k = 0; k < nbr; ++k) in_branch[model.bus_index(model.branch_to(sp.branches[k]))] = static_cast<int>(k);
  for (int b : sp.topo.order) {
    if (b == src) continue;
    const int k = in_branch[b];
    const BranchRef br = sp.branches[k];
    const PhaseSet ph = model.branch_phases(br);
    const int from = sp.topo.parent_bus[b];
    CVector Vi = reduce(V[from], ph);
    CVector Vj;
    if (sp.vars.branches[k].lossless) {
      Vj = Vi;
    } else {
      Eigen::SelfAdjointEigenSolver<CMatrix> es(blocks[k]);
      const Eigen::Index n = ph.size();
      const double l1 = std::max(0.0, es.eigenvalues()(2 * n - 1));
      CVector u = es.eigenvectors().col(2 * n - 1) * std::sqrt(l1);
      const cplx align = u.head(n).dot(Vi);  // a^H V_i
      if (std::abs(align) > 0.0) u *= align / std::abs(align);
      CVector I = u.tail(n);
      Vj = Vi - model.branch_z(br) * I;
    }
    if (br.is_regulator()) Vj = Vj.cwiseProduct(model.regulators[br.index].ratio().cast<cplx>());
    // Magnitude from diag(v), angle from the propagated phasor.
    const auto phs = model.buses[b].phases.phases();
    for (std::size_t i = 0; i < phs.size(); ++i) {
      const double mag = std::sqrt(std::max(0.0, vphase[b](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real()));
      const cplx z = Vj(static_cast<Eigen::Index>(i));
      V[b][phs[i]] = std::abs(z) > 0.0 ? std::polar(mag, std::arg(z)) : cplx(mag, 0.0);
    }
  }
  out.voltages = V;

  out.dispatch.assign(model.generators.size(), PhaseArray{});
  for (std::size_t g = 0; g < model.generators.size(); ++g)
    for (int p : model.generators[g].phases.phases())
      out.dispatch[g][p] = cplx(sp.vars.gens[g].p[p].eval(x), sp.vars.gens[g].q[p].eval(x));
  for (int p : model.buses[src].phases.phases()) out.source_injection[p] = sp.vars.source_injection[p].eval(x);
  return out;
}

struct FlowErrorReport {
  std::string segment;
  std::array<double, 3> p_error{};  // percent, or absolute p.u. when flagged
  std::array<double, 3> q_error{};
  std::array<bool, 3> p_absolute{};
  std::array<bool, 3> q_absolute{};
  PhaseSet phases;
};

inline double percent_error(double value, double ref, bool& absolute) {
  absolute = std::abs(ref) < 1e-9;
  if (absolute) return std::abs(value - ref);
  return std::abs(value - ref) / std::abs(ref) * 100.0;
}

/// Absolute percentage errors of the sending-end P and Q on `segment`.
inline FlowErrorReport flow_error(const FeederModel& model, const OpfSolution& sdp, const PowerFlowSolution& ref,
                                  const std::string& segment) {
  auto br = model.find_branch(segment);
  if (!br) throw ModelError("unknown segment '" + segment + "'");
  int ks = -1;
  for (std::size_t i = 0; i < sdp.branch_refs.size(); ++i)
    if (sdp.branch_refs[i] == *br) ks = static_cast<int>(i);
  const int kr = ref.branch_position(*br);
  if (ks < 0 || kr < 0) throw ModelError("segment '" + segment + "' missing from a solution");
  FlowErrorReport rep;
  rep.segment = segment;
  rep.phases = model.branch_phases(*br);
  for (int p : rep.phases.phases()) {
    rep.p_error[p] = percent_error(sdp.branch_flow[ks][p].real(), ref.branch_flow[kr][p].real(), rep.p_absolute[p]);
    rep.q_error[p] = percent_error(sdp.branch_flow[ks][p].imag(), ref.branch_flow[kr][p].imag(), rep.q_absolute[p]);
  }
  return rep;
}

/// Largest per-phase voltage magnitude difference between two profiles.
inline double max_magnitude_difference(const FeederModel& model, const std::vector<PhaseArray>& a,
                                       const std::vector<PhaseArray>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < model.buses.size(); ++i)
    for (int p : model.buses[i].phases.phases()) worst = std::max(worst, std::abs(std::abs(a[i][p]) - std::abs(b[i][p])));
  return worst;
}

}  // namespace seqopf
