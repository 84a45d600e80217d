// Voltage regulation by successive linear approximation.
//
// The SDP is solved without voltage limits; instead each monitored bus gets
//   vmin^2 <= |V^(k)|^2 + dv(dLambda) <= vmax^2
// where V^(k) comes from an exact power flow at the current dispatch and dv
// is a linear function of the DG output changes (loss term dropped, DG
// power spread over phases assuming balanced voltages).
#pragma once

#include "seqopf/analysis.hpp"
#include "seqopf/conic/backend.hpp"
#include "seqopf/sdp.hpp"

#include <map>

namespace seqopf {

/// Gamma^{phases} diag(Lambda): the 3x3 (or reduced) flow matrix a DG output
/// induces on an upstream segment when voltages are balanced.
inline CMatrix dg_outer_product_approx(const PhaseArray& lambda, PhaseSet phases = PhaseSet::abc()) {
  const cplx a = symcomp::rotation();
  const cplx g[3][3] = {{1.0, a, a * a}, {a * a, 1.0, a}, {a, a * a, 1.0}};
  const auto ph = phases.phases();
  const Eigen::Index n = static_cast<Eigen::Index>(ph.size());
  CMatrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = g[ph[i]][ph[j]] * lambda[ph[j]];
  return out;
}

/// Coefficients of d diag(v_i)[phi] with respect to one DG phase output.
struct SensitivityTerm {
  int generator = 0;
  int phase = 0;  // phase of the DG output
  double dp = 0.0;
  double dq = 0.0;
};

struct BusSensitivity {
  int bus = 0;
  std::array<std::vector<SensitivityTerm>, 3> terms;  // by monitored phase
};

struct VoltageSensitivity {
  std::vector<BusSensitivity> buses;

  const BusSensitivity* find(int bus) const {
    for (const auto& b : buses)
      if (b.bus == bus) return &b;
    return nullptr;
  }

  /// Predicted change of |V|^2 at (bus, phase) for output changes `delta`.
  double predict(int bus, int phase, const Dispatch& delta) const {
    const BusSensitivity* b = find(bus);
    if (!b) throw ModelError("no sensitivity for bus index " + std::to_string(bus));
    double dv = 0.0;
    for (const auto& t : b->terms[phase]) {
      const cplx d = delta[t.generator][t.phase];
      dv += t.dp * d.real() + t.dq * d.imag();
    }
    return dv;
  }
};

/// Buses with voltage limits: bounded, not the source.
inline std::vector<int> monitored_buses(const FeederModel& model) {
  std::vector<int> out;
  const int src = model.source_index();
  for (int b = 0; b < static_cast<int>(model.buses.size()); ++b)
    if (b != src && model.buses[b].bounded) out.push_back(b);
  return out;
}

/// For each monitored bus, accumulates along its path the diagonal of
/// dS z^H + z dS^H, where dS on segment (k, l) sums the lifted outputs of the
/// DGs at or below l.  Regulators scale what has been accumulated upstream by
/// the squared ratio of each phase.
inline VoltageSensitivity voltage_sensitivity(const FeederModel& model, const TopologyOrder& topo,
                                              const std::vector<int>& monitored) {
  const cplx a = symcomp::rotation();
  const cplx gamma[3][3] = {{1.0, a, a * a}, {a * a, 1.0, a}, {a, a * a, 1.0}};
  VoltageSensitivity out;
  for (int i : monitored) {
    if (i < 0 || i >= static_cast<int>(model.buses.size())) throw ModelError("monitored bus index out of range");
    if (i != model.source_index() && !topo.parent_branch[i])
      throw ModelError("monitored bus '" + model.buses[i].id + "' is unreachable from the source");
    // coef[phi][(g, psi)] = (dp, dq)
    std::array<std::map<std::pair<int, int>, std::pair<double, double>>, 3> coef;
    for (const BranchRef br : topo.path(i)) {
      const PhaseSet ph = model.branch_phases(br);
      const auto pv = ph.phases();
      const CMatrix& z = model.branch_z(br);
      const int l = model.bus_index(model.branch_to(br));
      for (int g : topo.down(l)) {
        const auto& gen = model.generators[g];
        for (int psi : gen.phases.phases()) {
          if (!ph.contains(psi)) continue;
          const Eigen::Index jp = ph.index_of(psi);
          for (std::size_t r = 0; r < pv.size(); ++r) {
            const int phi = pv[r];
            // 2 Re[Gamma(phi, psi) Lambda_psi conj(z(phi, psi))]
            const cplx w = gamma[phi][psi] * std::conj(z(static_cast<Eigen::Index>(r), jp));
            auto& c = coef[phi][{g, psi}];
            c.first += 2.0 * w.real();
            c.second += -2.0 * w.imag();
          }
        }
      }
      if (br.is_regulator()) {
        const auto& reg = model.regulators[br.index];
        for (int phi : pv) {
          const double r2 = tap_ratio(reg.taps[phi]) * tap_ratio(reg.taps[phi]);
          for (auto& [key, c] : coef[phi]) {
            c.first *= r2;
            c.second *= r2;
          }
        }
      }
    }
    BusSensitivity bs;
    bs.bus = i;
    for (int phi : model.buses[i].phases.phases())
      for (const auto& [key, c] : coef[phi]) bs.terms[phi].push_back({key.first, key.second, c.first, c.second});
    out.buses.push_back(std::move(bs));
  }
  return out;
}

/// Symmetrical (or BFM) SDP around the operating point `v0` with the voltage
/// limits replaced by linearized constraints on the generator output changes.
/// Generator outputs are `base` plus decision variables.
inline SdpProblem build_voltreg_problem(const FeederModel& model, const std::vector<PhaseArray>& v0,
                                        const VoltageSensitivity& sens, const ObjectiveSpec& objective,
                                        const Dispatch& base, const LoadProfile& loads = {},
                                        Formulation formulation = Formulation::symmetrical) {
  SdpOptions o;
  o.formulation = formulation;
  o.objective = objective;
  o.loads = loads.empty() ? evaluate_load_profile(model, v0) : loads;
  o.bounds = VoltageBounds::none;
  o.dispatch_base = base;
  SdpProblem sp = build_sdp(model, o);
  for (int b : monitored_buses(model)) {
    const BusSensitivity* bs = sens.find(b);
    if (!bs) throw ModelError("sensitivity missing for bounded bus '" + model.buses[b].id + "'");
    const Bus& bus = model.buses[b];
    for (int phi : bus.phases.phases()) {
      LinExpr d = LinExpr::value(std::norm(v0[b][phi]));
      for (const auto& t : bs->terms[phi]) {
        const auto& gv = sp.vars.gens[t.generator];
        if (!gv.var[t.phase]) continue;
        const double tq = model.generators[t.generator].q_per_p();
        d += LinExpr::var(*gv.var[t.phase]) * (t.dp + t.dq * tq);
      }
      const std::string tag = bus.id + "." + phase_letter(phi);
      sp.problem.add_inequality(d - bus.vmin * bus.vmin, "vmin (linearized) " + tag);
      sp.problem.add_inequality(d * -1.0 + bus.vmax * bus.vmax, "vmax (linearized) " + tag);
    }
  }
  return sp;
}

struct VoltRegOptions {
  double tol_kw = 0.1;     // per-phase output change, kW
  double v_slack = 1e-3;   // p.u. magnitude
  int max_iter = 20;
  Formulation formulation = Formulation::symmetrical;
  ObjectiveSpec objective{ObjectiveKind::supply_cost, std::nullopt};
  std::optional<Dispatch> initial;  // zero outputs when absent
  PowerFlowOptions pf;
};

struct VoltRegIteration {
  int iteration = 0;
  Dispatch delta;          // accepted change
  double max_delta_kw = 0.0;
  double violation_before = 0.0;  // at the dispatch the SDP was built around
  double violation_after = 0.0;   // after the accepted change
  bool halved = false;
  double objective = 0.0;
  conic::SolveStatus status;
};

struct VoltRegSolution {
  Dispatch dispatch;
  std::vector<VoltRegIteration> iterations;
  std::vector<PhaseArray> voltages;  // oracle, at `dispatch`
  double violation = 0.0;            // worst bound excess at monitored buses, p.u.
  bool converged = false;
  std::string message;
};

/// Largest amount by which any monitored bus leaves [vmin, vmax], p.u.
inline double bound_violation(const FeederModel& model, const std::vector<PhaseArray>& v) {
  double worst = 0.0;
  for (int b : monitored_buses(model)) {
    const Bus& bus = model.buses[b];
    for (int p : bus.phases.phases()) {
      const double m = std::abs(v[b][p]);
      worst = std::max({worst, bus.vmin - m, m - bus.vmax});
    }
  }
  return worst;
}

inline VoltRegSolution run_voltage_regulation(const FeederModel& model, const VoltRegOptions& opts,
                                              const conic::ConicBackend& backend) {
  VoltRegSolution out;
  const TopologyOrder topo = radial_order(model);
  const VoltageSensitivity sens = voltage_sensitivity(model, topo, monitored_buses(model));
  const double tol = opts.tol_kw / model.phase_base_kva();
  Dispatch lambda = opts.initial.value_or(Dispatch(model.generators.size(), PhaseArray{}));

  auto oracle = [&](const Dispatch& d) { return solve_power_flow(model, dispatch_injections(model, d), opts.pf); };
  PowerFlowSolution pf = oracle(lambda);
  double viol = bound_violation(model, pf.voltages);

  for (int it = 1; it <= opts.max_iter; ++it) {
    VoltRegIteration rec;
    rec.iteration = it;
    rec.violation_before = viol;
    SdpProblem sp = build_voltreg_problem(model, pf.voltages, sens, opts.objective, lambda, {}, opts.formulation);
    conic::ConicSolution raw = backend.solve(sp.problem);
    rec.status = raw.status;
    rec.objective = raw.objective;
    if (!raw.status.ok()) {
      out.iterations.push_back(rec);
      out.message = std::string("SDP failed at iteration ") + std::to_string(it) + ": " + conic::to_string(raw.status.tag) +
                    (raw.status.message.empty() ? "" : " (" + raw.status.message + ")");
      break;
    }
    Dispatch delta(model.generators.size(), PhaseArray{});
    double step = 0.0;
    for (std::size_t g = 0; g < model.generators.size(); ++g) {
      const double tq = model.generators[g].q_per_p();
      for (int p : model.generators[g].phases.phases()) {
        if (!sp.vars.gens[g].var[p]) continue;
        const double dp = raw.x(*sp.vars.gens[g].var[p]);
        delta[g][p] = cplx(dp, dp * tq);
        step = std::max(step, std::abs(dp));
      }
    }
    rec.max_delta_kw = step * model.phase_base_kva();
    if (step <= tol && viol <= opts.v_slack) {
      rec.delta = Dispatch(model.generators.size(), PhaseArray{});
      rec.violation_after = viol;
      out.iterations.push_back(rec);
      out.converged = true;
      break;
    }
    auto apply = [&](double frac) {
      Dispatch next = lambda;
      for (std::size_t g = 0; g < next.size(); ++g)
        for (int p = 0; p < 3; ++p) next[g][p] += frac * delta[g][p];
      return next;
    };
    Dispatch next = apply(1.0);
    PowerFlowSolution pf_next = oracle(next);
    double viol_next = bound_violation(model, pf_next.voltages);
    if (viol_next > viol && viol_next > opts.v_slack) {
      Dispatch half = apply(0.5);
      PowerFlowSolution pf_half = oracle(half);
      const double viol_half = bound_violation(model, pf_half.voltages);
      rec.halved = true;
      for (auto& d : delta)
        for (auto& c : d) c *= 0.5;
      next = std::move(half);
      pf_next = std::move(pf_half);
      viol_next = viol_half;
    }
    rec.delta = delta;
    rec.violation_after = viol_next;
    out.iterations.push_back(rec);
    lambda = std::move(next);
    pf = std::move(pf_next);
    viol = viol_next;
  }
  if (!out.converged && out.message.empty())
    out.message = "no convergence in " + std::to_string(opts.max_iter) + " iterations";
  out.dispatch = lambda;
  out.voltages = pf.voltages;
  out.violation = viol;
  return out;
}

}  // namespace seqopf
