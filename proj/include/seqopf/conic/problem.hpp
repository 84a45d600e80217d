// Solver-agnostic conic problem: named real variables, affine equalities
// (real, complex or Hermitian-matrix valued), linear inequalities, second-order
// cones, Hermitian PSD memberships and a linear objective to minimize.
#pragma once

#include "seqopf/conic/affine.hpp"

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace seqopf::conic {

struct RealEquality {
  LinExpr expr;  // expr == 0
  std::string label;
};

struct ComplexEquality {
  CExpr expr;  // expr == 0
  std::string label;
};

/// expr == 0 for a Hermitian-valued matrix expression; only the diagonal and
/// the strict upper triangle carry independent conditions.
struct HermitianEquality {
  CMatExpr expr;
  std::string label;
};

struct Inequality {
  LinExpr expr;  // expr >= 0
  std::string label;
};

/// entries[0] >= || entries[1..] ||
struct SecondOrderCone {
  std::vector<LinExpr> entries;
  std::string label;
};

/// expr is Hermitian positive semidefinite.
struct HermitianPsd {
  CMatExpr expr;
  std::string label;
};

struct ConstraintResidual {
  std::string label;
  double value = 0.0;
};

class ConicProblem {
 public:
  int add_variable(const std::string& name) {
    if (index_.count(name)) throw ModelError("duplicate variable name '" + name + "'");
    const int idx = static_cast<int>(names_.size());
    names_.push_back(name);
    index_.emplace(name, idx);
    return idx;
  }

  int num_variables() const { return static_cast<int>(names_.size()); }
  const std::string& variable_name(int i) const { return names_.at(i); }

  std::optional<int> find_variable(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  LinExpr add_real(const std::string& name) { return LinExpr::var(add_variable(name)); }

  /// n x n Hermitian matrix of fresh variables: n real diagonal entries and a
  /// real/imaginary pair for each strictly upper entry.
  CMatExpr add_hermitian(const std::string& name, int n) {
    CMatExpr m(n, n);
    for (int i = 0; i < n; ++i) {
      m(i, i) = CExpr::var(add_variable(name + "[" + std::to_string(i) + "," + std::to_string(i) + "]"));
      for (int j = i + 1; j < n; ++j) {
        const std::string base = name + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
        const int re = add_variable(base + ".re");
        const int im = add_variable(base + ".im");
        CExpr e;
        e.terms = {{re, cplx(1.0, 0.0)}, {im, cplx(0.0, 1.0)}};
        m(i, j) = e;
        m(j, i) = e.conj();
      }
    }
    return m;
  }

  CMatExpr add_complex_matrix(const std::string& name, int rows, int cols) {
    CMatExpr m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = add_complex(name + "[" + std::to_string(i) + "," + std::to_string(j) + "]");
    return m;
  }

  CExpr add_complex(const std::string& name) {
    const int re = add_variable(name + ".re");
    const int im = add_variable(name + ".im");
    CExpr e;
    e.terms = {{re, cplx(1.0, 0.0)}, {im, cplx(0.0, 1.0)}};
    return e;
  }

  void add_equality(LinExpr e, std::string label) { real_eq_.push_back({std::move(e.normalize()), std::move(label)}); }
  void add_equality(CExpr e, std::string label) { complex_eq_.push_back({std::move(e.normalize()), std::move(label)}); }
  void add_hermitian_equality(CMatExpr e, std::string label) {
    if (e.rows() != e.cols()) throw ModelError("Hermitian equality '" + label + "' is not square");
    herm_eq_.push_back({std::move(e), std::move(label)});
  }
  void add_inequality(LinExpr e, std::string label) { ineq_.push_back({std::move(e.normalize()), std::move(label)}); }
  void add_soc(std::vector<LinExpr> entries, std::string label) {
    if (entries.size() < 2) throw ModelError("second-order cone '" + label + "' needs at least two entries");
    soc_.push_back({std::move(entries), std::move(label)});
  }
  void add_psd(CMatExpr e, std::string label) {
    if (e.rows() != e.cols()) throw ModelError("PSD block '" + label + "' is not square");
    psd_.push_back({std::move(e), std::move(label)});
  }

  void set_objective(LinExpr e) { objective_ = std::move(e.normalize()); }
  const LinExpr& objective() const { return objective_; }

  const std::vector<RealEquality>& real_equalities() const { return real_eq_; }
  const std::vector<ComplexEquality>& complex_equalities() const { return complex_eq_; }
  const std::vector<HermitianEquality>& hermitian_equalities() const { return herm_eq_; }
  const std::vector<Inequality>& inequalities() const { return ineq_; }
  const std::vector<SecondOrderCone>& socs() const { return soc_; }
  const std::vector<HermitianPsd>& psd_blocks() const { return psd_; }

  /// Residual magnitude of every equality at `x` (complex and matrix
  /// equalities report their largest entry modulus).
  std::vector<ConstraintResidual> equality_residuals(const RVector& x) const {
    std::vector<ConstraintResidual> out;
    for (const auto& e : real_eq_) out.push_back({e.label, std::abs(e.expr.eval(x))});
    for (const auto& e : complex_eq_) out.push_back({e.label, std::abs(e.expr.eval(x))});
    for (const auto& e : herm_eq_) {
      CMatrix m = e.expr.eval(x);
      out.push_back({e.label, m.size() ? m.cwiseAbs().maxCoeff() : 0.0});
    }
    return out;
  }

  double max_equality_residual(const RVector& x) const {
    double worst = 0.0;
    for (const auto& r : equality_residuals(x)) worst = std::max(worst, r.value);
    return worst;
  }

  /// Most negative inequality slack at `x` (0 when all hold).
  double max_inequality_violation(const RVector& x) const {
    double worst = 0.0;
    for (const auto& e : ineq_) worst = std::max(worst, -e.expr.eval(x));
    return worst;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
  std::vector<RealEquality> real_eq_;
  std::vector<ComplexEquality> complex_eq_;
  std::vector<HermitianEquality> herm_eq_;
  std::vector<Inequality> ineq_;
  std::vector<SecondOrderCone> soc_;
  std::vector<HermitianPsd> psd_;
  LinExpr objective_;
};

}  // namespace seqopf::conic
