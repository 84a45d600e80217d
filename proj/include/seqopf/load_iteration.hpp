// Outer loop alternating SDP solves with voltage-dependent load updates until
// the voltage profile at the voltage-dependent loads stops moving.
#pragma once

#include "seqopf/analysis.hpp"

namespace seqopf {

/// Copy of `model` whose loads are replaced by constant-power wye loads equal
/// to their consumption at `voltages`.
inline FeederModel update_loads(const FeederModel& model, const std::vector<PhaseArray>& voltages) {
  if (voltages.size() != model.buses.size()) throw ModelError("voltage profile does not cover every bus");
  FeederModel out = model;
  for (auto& ld : out.loads) {
    const int b = model.bus_index(ld.bus);
    for (int p : ld.phases.phases())
      if (voltages[b][p] == cplx(0.0)) throw ModelError("no voltage for load '" + ld.id + "' phase " + phase_letter(p));
    ld.s_nominal = evaluate_zip_load(ld, voltages[b]);
    ld.connection = Connection::wye;
    ld.zip = ZipWeights{0.0, 0.0, 1.0};
  }
  return out;
}

struct LoopOptions {
  double tol = 1e-4;  // p.u. voltage change
  int max_iter = 10;
  // Loads for the next solve are evaluated at v + relaxation * (v_sdp - v).
  // Undamped updates oscillate at weak delta/current loads.
  double relaxation = 0.8;
};

struct IterationRecord {
  int iteration = 0;
  double max_voltage_change = 0.0;
  double max_load_change = 0.0;
  double objective = 0.0;
  conic::SolveStatus status;
};

struct IterationTrace {
  std::vector<IterationRecord> records;
  bool converged = false;
  int cap = 0;
  int best = -1;  // index of the returned iterate
};

struct OpfRun {
  OpfSolution solution;
  IterationTrace trace;
  LoadProfile loads;  // loads used by the returned iterate
};

/// Largest change at buses whose loads depend on voltage: magnitude change for
/// wye Z/I loads, phasor change for delta loads (whose per-phase split also
/// depends on angle).
inline double load_voltage_change(const FeederModel& model, const std::vector<PhaseArray>& a,
                                  const std::vector<PhaseArray>& b) {
  double worst = 0.0;
  for (const auto& ld : model.loads) {
    const int bus = model.bus_index(ld.bus);
    const bool delta = ld.connection == Connection::delta;
    if (!delta && ld.zip.p == 1.0) continue;
    for (int p : model.buses[bus].phases.phases()) {
      const double d = delta ? std::abs(a[bus][p] - b[bus][p]) : std::abs(std::abs(a[bus][p]) - std::abs(b[bus][p]));
      worst = std::max(worst, d);
    }
  }
  return worst;
}

inline double max_load_change(const LoadProfile& a, const LoadProfile& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int p = 0; p < 3; ++p) worst = std::max(worst, std::abs(a[i][p] - b[i][p]));
  return worst;
}

inline OpfRun run_opf_with_load_update(const FeederModel& model, SdpOptions opts, const conic::ConicBackend& backend,
                                       const LoopOptions& loop = {}) {
  OpfRun run;
  run.trace.cap = loop.max_iter;
  std::vector<PhaseArray> v_prev = flat_voltages(model);
  LoadProfile loads = opts.loads.empty() ? evaluate_load_profile(model, v_prev) : opts.loads;
  double best_change = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= loop.max_iter; ++it) {
    opts.loads = loads;
    SdpProblem sp = build_sdp(model, opts);
    conic::ConicSolution raw = backend.solve(sp.problem);
    IterationRecord rec;
    rec.iteration = it;
    rec.status = raw.status;
    rec.objective = raw.objective;
    if (!raw.status.ok()) {
      run.trace.records.push_back(rec);
      if (run.trace.best < 0) {
        run.solution = extract_solution(raw, sp, model);
        run.loads = loads;
      }
      return run;
    }
    OpfSolution sol = extract_solution(raw, sp, model);
    std::vector<PhaseArray> v_next = v_prev;
    for (std::size_t b = 0; b < v_next.size(); ++b)
      for (int p = 0; p < 3; ++p) v_next[b][p] += loop.relaxation * (sol.voltages[b][p] - v_prev[b][p]);
    LoadProfile next = evaluate_load_profile(model, v_next);
    rec.max_voltage_change = load_voltage_change(model, sol.voltages, v_prev);
    rec.max_load_change = max_load_change(next, loads);
    run.trace.records.push_back(rec);
    if (rec.max_voltage_change < best_change) {
      best_change = rec.max_voltage_change;
      run.solution = sol;
      run.loads = loads;
      run.trace.best = it - 1;
    }
    if (rec.max_voltage_change <= loop.tol) {
      run.solution = sol;
      run.loads = loads;
      run.trace.best = it - 1;
      run.trace.converged = true;
      return run;
    }
    v_prev = v_next;
    loads = next;
  }
  return run;
}

}  // namespace seqopf
