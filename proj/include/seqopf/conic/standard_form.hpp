// Real standard conic form and the encoder that produces it from a
// ConicProblem:
//
//   minimize  c'x   subject to  A x = b,  G x + s = h,  s in K
//
// K is a product of a non-negative orthant, second-order cones and real PSD
// cones (stored as svec: lower triangle, column-major, off-diagonals scaled by
// sqrt 2).  Complex rows are split into real and imaginary parts and Hermitian
// PSD blocks are embedded as real symmetric blocks of twice the size.
#pragma once

#include "seqopf/conic/problem.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <numeric>

namespace seqopf::conic {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// [[Re H, -Im H], [Im H, Re H]].  H is PSD iff the embedding is, and every
/// eigenvalue of H appears twice in the embedding.
inline RMatrix hermitian_embedding(const CMatrix& h, double tol = 1e-12) {
  if (!is_hermitian(h, tol)) throw ModelError("hermitian_embedding: input is not Hermitian");
  const Eigen::Index n = h.rows();
  RMatrix out(2 * n, 2 * n);
  out.topLeftCorner(n, n) = h.real();
  out.topRightCorner(n, n) = -h.imag();
  out.bottomLeftCorner(n, n) = h.imag();
  out.bottomRightCorner(n, n) = h.real();
  return out;
}

inline int svec_size(int k) { return k * (k + 1) / 2; }

inline RVector svec(const RMatrix& x) {
  const int k = static_cast<int>(x.rows());
  RVector out(svec_size(k));
  int pos = 0;
  for (int j = 0; j < k; ++j)
    for (int i = j; i < k; ++i) out(pos++) = (i == j) ? x(i, j) : std::sqrt(2.0) * 0.5 * (x(i, j) + x(j, i));
  return out;
}

inline RMatrix smat(const Eigen::Ref<const RVector>& v, int k) {
  RMatrix out(k, k);
  int pos = 0;
  for (int j = 0; j < k; ++j)
    for (int i = j; i < k; ++i) {
      if (i == j) out(i, i) = v(pos++);
      else out(i, j) = out(j, i) = v(pos++) / std::sqrt(2.0);
    }
  return out;
}

struct ConeDims {
  int nonneg = 0;
  std::vector<int> soc;  // cone sizes
  std::vector<int> psd;  // matrix orders

  int rows() const {
    int r = nonneg;
    for (int q : soc) r += q;
    for (int k : psd) r += svec_size(k);
    return r;
  }
  /// Barrier degree.
  int degree() const {
    int d = nonneg + static_cast<int>(soc.size());
    for (int k : psd) d += k;
    return d;
  }
};

struct StandardConicForm {
  RVector c;
  double c_offset = 0.0;
  SparseMatrix A;
  RVector b;
  SparseMatrix G;
  RVector h;
  ConeDims cones;

  // Diagonal equilibration: x = D x_s, rows scaled by E, objective by cost_scale.
  RVector col_scale;
  RVector eq_row_scale;
  RVector cone_row_scale;
  double cost_scale = 1.0;

  /// Labels of the originating constraints, one per real row.
  std::vector<std::string> eq_labels;
  std::vector<std::string> cone_labels;

  int num_vars() const { return static_cast<int>(c.size()); }

  RVector unscale_x(const RVector& xs) const { return col_scale.cwiseProduct(xs); }
  RVector scale_x(const RVector& x) const { return x.cwiseQuotient(col_scale); }
};

struct EncodeSettings {
  bool equilibrate = true;
  int ruiz_iterations = 25;
};

namespace detail {

inline void push_row(std::vector<Triplet>& trip, int row, const LinExpr& e, double sign, double prune) {
  double scale = 0.0;
  for (const auto& t : e.terms) scale = std::max(scale, std::abs(t.second));
  for (const auto& [col, val] : e.terms)
    if (std::abs(val) > prune * scale) trip.emplace_back(row, col, sign * val);
}

inline constexpr double kPrune = 1e-14;

}  // namespace detail

/// Builds the (optionally equilibrated) real standard form.
inline StandardConicForm encode(const ConicProblem& prob, const EncodeSettings& settings = {}) {
  StandardConicForm f;
  const int n = prob.num_variables();

  // Equality rows.
  std::vector<Triplet> at;
  std::vector<double> b;
  auto add_eq = [&](const LinExpr& e, const std::string& label) {
    if (e.terms.empty()) {
      if (std::abs(e.constant) > 1e-9)
        throw ModelError("equality '" + label + "' has no variables and a nonzero constant");
      return;
    }
    const int row = static_cast<int>(b.size());
    detail::push_row(at, row, e, 1.0, detail::kPrune);
    b.push_back(-e.constant);
    f.eq_labels.push_back(label);
  };
  for (const auto& e : prob.real_equalities()) add_eq(e.expr, e.label);
  for (const auto& e : prob.complex_equalities()) {
    add_eq(e.expr.real(), e.label + ".re");
    add_eq(e.expr.imag(), e.label + ".im");
  }
  for (const auto& e : prob.hermitian_equalities()) {
    const int k = e.expr.rows();
    for (int i = 0; i < k; ++i) {
      add_eq(e.expr(i, i).real(), e.label + "(" + std::to_string(i) + "," + std::to_string(i) + ")");
      for (int j = i + 1; j < k; ++j) {
        const std::string tag = e.label + "(" + std::to_string(i) + "," + std::to_string(j) + ")";
        add_eq(e.expr(i, j).real(), tag + ".re");
        add_eq(e.expr(i, j).imag(), tag + ".im");
      }
    }
  }

  // Cone rows: s = h - G x, so G carries the negated coefficients.
  std::vector<Triplet> gt;
  std::vector<double> h;
  auto add_cone_row = [&](const LinExpr& e, const std::string& label) {
    const int row = static_cast<int>(h.size());
    detail::push_row(gt, row, e, -1.0, detail::kPrune);
    h.push_back(e.constant);
    f.cone_labels.push_back(label);
  };
  for (const auto& e : prob.inequalities()) add_cone_row(e.expr, e.label);
  f.cones.nonneg = static_cast<int>(prob.inequalities().size());
  for (const auto& q : prob.socs()) {
    for (std::size_t i = 0; i < q.entries.size(); ++i) add_cone_row(q.entries[i], q.label + "[" + std::to_string(i) + "]");
    f.cones.soc.push_back(static_cast<int>(q.entries.size()));
  }
  for (const auto& blk : prob.psd_blocks()) {
    const int k = blk.expr.rows();
    const int k2 = 2 * k;
    // Real embedding entry (r, c) as a LinExpr.
    auto entry = [&](int r, int c) -> LinExpr {
      const bool rlo = r >= k, clo = c >= k;
      const int i = r % k, j = c % k;
      const CExpr& e = blk.expr(i, j);
      if (rlo == clo) return e.real();
      return rlo ? e.imag() : e.imag() * -1.0;
    };
    for (int c = 0; c < k2; ++c)
      for (int r = c; r < k2; ++r) {
        LinExpr e = (r == c) ? entry(r, c) : (entry(r, c) + entry(c, r)) * (0.5 * std::sqrt(2.0));
        add_cone_row(e, blk.label);
      }
    f.cones.psd.push_back(k2);
  }

  const int p = static_cast<int>(b.size());
  const int m = static_cast<int>(h.size());
  f.A.resize(p, n);
  f.A.setFromTriplets(at.begin(), at.end());
  f.G.resize(m, n);
  f.G.setFromTriplets(gt.begin(), gt.end());
  f.b = Eigen::Map<RVector>(b.data(), p);
  f.h = Eigen::Map<RVector>(h.data(), m);
  f.c = RVector::Zero(n);
  for (const auto& [i, v] : prob.objective().terms) f.c(i) += v;
  f.c_offset = prob.objective().constant;

  f.col_scale = RVector::Ones(n);
  f.eq_row_scale = RVector::Ones(p);
  f.cone_row_scale = RVector::Ones(m);
  if (!settings.equilibrate) return f;

  // Ruiz equilibration; rows of one SOC or PSD block share a factor so the
  // cone is mapped onto itself.
  std::vector<int> group(m);
  {
    int row = 0, gid = 0;
    for (int i = 0; i < f.cones.nonneg; ++i) group[row++] = gid++;
    for (int q : f.cones.soc) {
      for (int i = 0; i < q; ++i) group[row++] = gid;
      ++gid;
    }
    for (int k : f.cones.psd) {
      for (int i = 0; i < svec_size(k); ++i) group[row++] = gid;
      ++gid;
    }
  }
  SparseMatrix A = f.A, G = f.G;
  RVector D = RVector::Ones(n), EA = RVector::Ones(p), EG = RVector::Ones(m);
  for (int it = 0; it < settings.ruiz_iterations; ++it) {
    RVector cn = RVector::Zero(n), rA = RVector::Zero(p), rG = RVector::Zero(m);
    for (int j = 0; j < n; ++j) {
      for (SparseMatrix::InnerIterator itA(A, j); itA; ++itA) {
        const double v = std::abs(itA.value());
        cn(j) = std::max(cn(j), v);
        rA(itA.row()) = std::max(rA(itA.row()), v);
      }
      for (SparseMatrix::InnerIterator itG(G, j); itG; ++itG) {
        const double v = std::abs(itG.value());
        cn(j) = std::max(cn(j), v);
        rG(itG.row()) = std::max(rG(itG.row()), v);
      }
    }
    std::vector<double> gmax(m > 0 ? group.back() + 1 : 0, 0.0);
    for (int i = 0; i < m; ++i) gmax[group[i]] = std::max(gmax[group[i]], rG(i));
    for (int i = 0; i < m; ++i) rG(i) = gmax[group[i]];

    RVector dc(n), da(p), dg(m);
    for (int j = 0; j < n; ++j) dc(j) = cn(j) > 0 ? 1.0 / std::sqrt(cn(j)) : 1.0;
    for (int i = 0; i < p; ++i) da(i) = rA(i) > 0 ? 1.0 / std::sqrt(rA(i)) : 1.0;
    for (int i = 0; i < m; ++i) dg(i) = rG(i) > 0 ? 1.0 / std::sqrt(rG(i)) : 1.0;
    A = da.asDiagonal() * A * dc.asDiagonal();
    G = dg.asDiagonal() * G * dc.asDiagonal();
    D = D.cwiseProduct(dc);
    EA = EA.cwiseProduct(da);
    EG = EG.cwiseProduct(dg);
    const double spread = std::max({(dc.array() - 1.0).abs().maxCoeff(), p ? (da.array() - 1.0).abs().maxCoeff() : 0.0,
                                    m ? (dg.array() - 1.0).abs().maxCoeff() : 0.0});
    if (spread < 1e-3) break;
  }
  f.A = A;
  f.G = G;
  f.b = EA.cwiseProduct(f.b);
  f.h = EG.cwiseProduct(f.h);
  RVector cs = D.cwiseProduct(f.c);
  const double cmax = cs.size() ? cs.cwiseAbs().maxCoeff() : 0.0;
  f.cost_scale = cmax > 0.0 ? 1.0 / cmax : 1.0;
  f.c = f.cost_scale * cs;
  f.col_scale = D;
  f.eq_row_scale = EA;
  f.cone_row_scale = EG;
  return f;
}

}  // namespace seqopf::conic
