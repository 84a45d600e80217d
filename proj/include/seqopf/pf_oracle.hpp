// Backward/forward sweep power flow for radial multiphase feeders.
//
// Serves as the exact reference the SDP results are checked against, and
// supplies voltages to the load-update and voltage-regulation loops.
#pragma once

#include "seqopf/network.hpp"

#include <cmath>
#include <vector>

namespace seqopf {

/// Complex power injected at each bus, indexed like FeederModel::buses.
using BusInjections = std::vector<PhaseArray>;

/// Per-generator complex output, indexed like FeederModel::generators.
using Dispatch = std::vector<PhaseArray>;

namespace detail {

inline double zip_factor(const ZipLoad& load, double u) {
  const auto& w = load.zip;
  if (u >= load.v_floor) return w.z * u * u + w.i * u + w.p;
  const double vf = load.v_floor;
  return (w.z * vf * vf + w.i * vf + w.p) * (u / vf) * (u / vf);
}

}  // namespace detail

/// Current drawn by `load` on each phase at bus voltages `v`.
inline PhaseArray zip_load_currents(const ZipLoad& load, const PhaseArray& v) {
  PhaseArray cur{};
  for (int k = 0; k < 3; ++k) {
    if (load.s_nominal[k] == cplx(0.0)) continue;
    if (load.connection == Connection::wye) {
      const double u = std::abs(v[k]);
      if (u == 0.0) throw NumericError("load '" + load.id + "': zero voltage on phase " + phase_letter(k));
      const cplx s = load.s_nominal[k] * detail::zip_factor(load, u);
      cur[k] += std::conj(s / v[k]);
    } else {
      const int q = delta_branch_second(k);
      const cplx vpq = v[k] - v[q];
      const double u = std::abs(vpq) / std::sqrt(3.0);
      if (u == 0.0)
        throw NumericError("load '" + load.id + "': zero voltage across delta branch " +
                           std::string{phase_letter(k), phase_letter(q)});
      const cplx s = load.s_nominal[k] * detail::zip_factor(load, u);
      const cplx ibr = std::conj(s / vpq);
      cur[k] += ibr;
      cur[q] -= ibr;
    }
  }
  return cur;
}

/// Per-phase complex power consumed by `load` at voltages `v`.  Delta loads
/// are reported as their wye-equivalent phase powers V_p conj(I_p).
inline PhaseArray evaluate_zip_load(const ZipLoad& load, const PhaseArray& v) {
  PhaseArray cur = zip_load_currents(load, v);
  PhaseArray s{};
  for (int p = 0; p < 3; ++p) s[p] = v[p] * std::conj(cur[p]);
  return s;
}

/// Bus injections produced by a generator dispatch.
inline BusInjections dispatch_injections(const FeederModel& model, const Dispatch& dispatch) {
  BusInjections inj(model.buses.size(), PhaseArray{});
  for (std::size_t g = 0; g < dispatch.size() && g < model.generators.size(); ++g) {
    int b = model.bus_index(model.generators[g].bus);
    for (int p = 0; p < 3; ++p) inj[b][p] += dispatch[g][p];
  }
  return inj;
}

struct PowerFlowOptions {
  double tol = 1e-8;
  int max_iter = 100;
  double collapse_voltage = 0.5;
};

struct PowerFlowSolution {
  std::vector<PhaseArray> voltages;        // per bus
  std::vector<PhaseArray> branch_current;  // per branch (model.branches() order), sending side
  std::vector<PhaseArray> branch_flow;     // sending-end complex power
  std::vector<BranchRef> branch_refs;
  int iterations = 0;
  bool converged = false;
  double max_voltage_change = 0.0;

  int branch_position(BranchRef b) const {
    for (std::size_t i = 0; i < branch_refs.size(); ++i)
      if (branch_refs[i] == b) return static_cast<int>(i);
    return -1;
  }
};

/// Solves the power flow with fixed regulator taps, ZIP loads re-evaluated on
/// every sweep and `injections` held at constant power.
inline PowerFlowSolution solve_power_flow(const FeederModel& model, const BusInjections& injections = {},
                                          const PowerFlowOptions& opts = {}) {
  if (model.units != Units::per_unit) throw ModelError("power flow requires a per-unit model");
  const TopologyOrder topo = radial_order(model);
  const int nb = static_cast<int>(model.buses.size());
  const auto branches = model.branches();

  std::vector<std::vector<int>> loads_at(nb);
  for (std::size_t i = 0; i < model.loads.size(); ++i) loads_at[model.bus_index(model.loads[i].bus)].push_back(static_cast<int>(i));

  std::vector<int> branch_pos_of_bus(nb, -1);  // incoming branch position
  for (std::size_t k = 0; k < branches.size(); ++k) branch_pos_of_bus[model.bus_index(model.branch_to(branches[k]))] = static_cast<int>(k);

  PowerFlowSolution sol;
  sol.branch_refs = branches;
  sol.voltages.assign(nb, PhaseArray{});
  const int src = model.source_index();
  for (int b = 0; b < nb; ++b)
    for (int p : model.buses[b].phases.phases()) sol.voltages[b][p] = model.source.v_ref[p];

  auto bus_current = [&](int b, const std::vector<PhaseArray>& v) {
    PhaseArray cur{};
    for (int li : loads_at[b]) {
      auto lc = zip_load_currents(model.loads[li], v[b]);
      for (int p = 0; p < 3; ++p) cur[p] += lc[p];
    }
    const Bus& bus = model.buses[b];
    if (bus.shunt_y.size() > 0) {
      CVector ish = bus.shunt_y * reduce(v[b], bus.phases);
      auto full = expand(ish, bus.phases);
      for (int p = 0; p < 3; ++p) cur[p] += full[p];
    }
    if (!injections.empty()) {
      for (int p : bus.phases.phases()) {
        if (injections[b][p] == cplx(0.0)) continue;
        cur[p] -= std::conj(injections[b][p] / v[b][p]);
      }
    }
    return cur;
  };

  std::vector<PhaseArray> current(branches.size(), PhaseArray{});
  for (int it = 1; it <= opts.max_iter; ++it) {
    // Backward sweep: accumulate currents toward the source.
    std::vector<PhaseArray> acc(nb, PhaseArray{});
    for (int b = 0; b < nb; ++b) acc[b] = bus_current(b, sol.voltages);
    for (auto rit = topo.order.rbegin(); rit != topo.order.rend(); ++rit) {
      const int b = *rit;
      if (b == src) continue;
      const int k = branch_pos_of_bus[b];
      const BranchRef br = branches[k];
      PhaseArray j = acc[b];
      if (br.is_regulator()) {
        const auto& reg = model.regulators[br.index];
        for (int p : reg.phases.phases()) j[p] *= tap_ratio(reg.taps[p]);
      }
      current[k] = j;
      const int parent = topo.parent_bus[b];
      for (int p : model.branch_phases(br).phases()) acc[parent][p] += j[p];
    }
    // Forward sweep: update voltages away from the source.
    double change = 0.0;
    std::vector<PhaseArray> next = sol.voltages;
    for (int b : topo.order) {
      if (b == src) {
        for (int p : model.buses[b].phases.phases()) next[b][p] = model.source.v_ref[p];
        continue;
      }
      const int k = branch_pos_of_bus[b];
      const BranchRef br = branches[k];
      const PhaseSet ph = model.branch_phases(br);
      const int parent = topo.parent_bus[b];
      CVector drop = model.branch_z(br) * reduce(current[k], ph);
      auto pv = ph.phases();
      for (std::size_t i = 0; i < pv.size(); ++i) {
        cplx val = next[parent][pv[i]] - drop(i);
        if (br.is_regulator()) val *= tap_ratio(model.regulators[br.index].taps[pv[i]]);
        next[b][pv[i]] = val;
      }
    }
    for (int b = 0; b < nb; ++b)
      for (int p : model.buses[b].phases.phases()) {
        change = std::max(change, std::abs(next[b][p] - sol.voltages[b][p]));
        if (std::abs(next[b][p]) < opts.collapse_voltage)
          throw NumericError("voltage collapse at bus '" + model.buses[b].id + "' phase " + phase_letter(p) +
                             " during power flow iteration " + std::to_string(it));
      }
    sol.voltages = std::move(next);
    sol.iterations = it;
    sol.max_voltage_change = change;
    if (change < opts.tol) {
      sol.converged = true;
      break;
    }
  }
  if (!sol.converged)
    throw NumericError("power flow did not converge in " + std::to_string(opts.max_iter) +
                       " iterations (last change " + std::to_string(sol.max_voltage_change) + ")");

  sol.branch_current = current;
  sol.branch_flow.assign(branches.size(), PhaseArray{});
  for (std::size_t k = 0; k < branches.size(); ++k) {
    const int from = model.bus_index(model.branch_from(branches[k]));
    for (int p : model.branch_phases(branches[k]).phases())
      sol.branch_flow[k][p] = sol.voltages[from][p] * std::conj(current[k][p]);
  }
  return sol;
}

/// Sending-end complex power per phase on the named line or regulator.
inline PhaseArray feeder_head_flows(const FeederModel& model, const PowerFlowSolution& sol,
                                    const std::string& branch_id) {
  auto br = model.find_branch(branch_id);
  if (!br) throw ModelError("unknown segment '" + branch_id + "'");
  int k = sol.branch_position(*br);
  if (k < 0) throw ModelError("segment '" + branch_id + "' is not part of the solution");
  return sol.branch_flow[k];
}

/// Complex power consumed by every load at the solution voltages.
inline std::vector<PhaseArray> load_powers(const FeederModel& model, const std::vector<PhaseArray>& voltages) {
  std::vector<PhaseArray> out;
  out.reserve(model.loads.size());
  for (const auto& ld : model.loads) out.push_back(evaluate_zip_load(ld, voltages[model.bus_index(ld.bus)]));
  return out;
}

}  // namespace seqopf
