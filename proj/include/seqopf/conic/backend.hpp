// Solver backends.  A backend takes a ConicProblem and returns the primal
// point in the problem's own variables together with a status.
#pragma once

#include "seqopf/conic/ipm.hpp"

#include <memory>

namespace seqopf::conic {

struct SolveStatus {
  SolveTag tag = SolveTag::NumericalFailure;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double relative_gap = 0.0;
  std::string message;

  bool ok() const { return tag == SolveTag::Solved || tag == SolveTag::InaccurateSolved; }
};

struct ConicSolution {
  SolveStatus status;
  RVector x;                 // problem variables
  double objective = 0.0;    // objective at x, including the constant term
  RVector eq_duals;          // one per real equality row of the encoded form
  RVector cone_duals;        // one per cone row
};

class ConicBackend {
 public:
  virtual ~ConicBackend() = default;
  virtual std::string name() const = 0;
  virtual ConicSolution solve(const ConicProblem& problem) const = 0;
};

class InteriorPointBackend : public ConicBackend {
 public:
  explicit InteriorPointBackend(SolverSettings settings = {}) : settings_(settings) {}

  std::string name() const override { return "ipm"; }
  const SolverSettings& settings() const { return settings_; }

  ConicSolution solve(const ConicProblem& problem) const override {
    EncodeSettings es;
    es.equilibrate = settings_.equilibrate;
    const StandardConicForm f = encode(problem, es);
    ConicSolution out;
    IpmResult r;
    try {
      r = solve_ipm(f, settings_);
    } catch (const NumericError& ex) {
      out.status.message = ex.what();
      out.x = RVector::Zero(problem.num_variables());
      return out;
    }
    out.status.tag = r.tag;
    out.status.iterations = r.iterations;
    out.status.primal_residual = r.primal_residual;
    out.status.dual_residual = r.dual_residual;
    out.status.relative_gap = r.relative_gap;
    out.status.message = r.message;
    if (r.x.size() == f.num_vars()) out.x = f.unscale_x(r.x);
    else out.x = RVector::Zero(problem.num_variables());
    if (r.y.size() == f.eq_row_scale.size()) out.eq_duals = f.eq_row_scale.cwiseProduct(r.y) / f.cost_scale;
    if (r.z.size() == f.cone_row_scale.size()) out.cone_duals = f.cone_row_scale.cwiseProduct(r.z) / f.cost_scale;
    out.objective = problem.objective().eval(out.x);
    return out;
  }

 private:
  SolverSettings settings_;
};

inline std::unique_ptr<ConicBackend> default_backend(SolverSettings settings = {}) {
  return std::make_unique<InteriorPointBackend>(settings);
}

}  // namespace seqopf::conic
