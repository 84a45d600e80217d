// Primal-dual interior-point method for the standard conic form, using the
// homogeneous self-dual embedding with Nesterov-Todd scaling and a
// Mehrotra-type predictor-corrector.
#pragma once

#include "seqopf/conic/ldl.hpp"
#include "seqopf/conic/standard_form.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

namespace seqopf::conic {

enum class SolveTag { Solved, InaccurateSolved, Infeasible, Unbounded, NumericalFailure };

inline const char* to_string(SolveTag t) {
  switch (t) {
    case SolveTag::Solved: return "solved";
    case SolveTag::InaccurateSolved: return "inaccurate";
    case SolveTag::Infeasible: return "infeasible";
    case SolveTag::Unbounded: return "unbounded";
    case SolveTag::NumericalFailure: return "numerical_failure";
  }
  return "?";
}

struct SolverSettings {
  double tol = 1e-8;             // feasibility and relative gap
  double inaccurate_tol = 1e-5;  // fallback acceptance
  int max_iter = 100;
  bool equilibrate = true;
  double step_fraction = 0.99;
  double regularization = 1e-7;
  int refine_steps = 10;
  bool verbose = false;
};

struct IpmResult {
  SolveTag tag = SolveTag::NumericalFailure;
  int iterations = 0;
  double primal_residual = 0.0;  // relative, scaled problem
  double dual_residual = 0.0;
  double relative_gap = 0.0;
  double primal_objective = 0.0;  // scaled problem
  double dual_objective = 0.0;
  RVector x, y, z, s;  // scaled problem
  std::string message;
};

namespace ipm_detail {

/// Block layout of the cone rows.
struct Layout {
  ConeDims dims;
  std::vector<int> soc_off;
  std::vector<int> psd_off;

  explicit Layout(const ConeDims& d) : dims(d) {
    int off = d.nonneg;
    for (int q : d.soc) {
      soc_off.push_back(off);
      off += q;
    }
    for (int k : d.psd) {
      psd_off.push_back(off);
      off += svec_size(k);
    }
  }
  int rows() const { return dims.rows(); }
  int nsoc() const { return static_cast<int>(dims.soc.size()); }
  int npsd() const { return static_cast<int>(dims.psd.size()); }
};

/// Identity element of the cone.
inline RVector unit(const Layout& L) {
  RVector e = RVector::Zero(L.rows());
  e.head(L.dims.nonneg).setOnes();
  for (int k = 0; k < L.nsoc(); ++k) e(L.soc_off[k]) = 1.0;
  for (int k = 0; k < L.npsd(); ++k) {
    const int n = L.dims.psd[k];
    int pos = L.psd_off[k];
    for (int j = 0; j < n; ++j) {
      e(pos) = 1.0;
      pos += n - j;
    }
  }
  return e;
}

/// Smallest t with x + t e on the cone boundary (negative when x is interior).
inline double max_violation(const Layout& L, const RVector& x) {
  double t = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < L.dims.nonneg; ++i) t = std::max(t, -x(i));
  for (int k = 0; k < L.nsoc(); ++k) {
    const int o = L.soc_off[k], q = L.dims.soc[k];
    t = std::max(t, x.segment(o + 1, q - 1).norm() - x(o));
  }
  for (int k = 0; k < L.npsd(); ++k) {
    const int n = L.dims.psd[k];
    RMatrix X = smat(x.segment(L.psd_off[k], svec_size(n)), n);
    Eigen::SelfAdjointEigenSolver<RMatrix> es(X, Eigen::EigenvaluesOnly);
    t = std::max(t, -es.eigenvalues()(0));
  }
  return t;
}

/// Jordan product u o v.
inline RVector jprod(const Layout& L, const RVector& u, const RVector& v) {
  RVector out(L.rows());
  const int l = L.dims.nonneg;
  out.head(l) = u.head(l).cwiseProduct(v.head(l));
  for (int k = 0; k < L.nsoc(); ++k) {
    const int o = L.soc_off[k], q = L.dims.soc[k];
    out(o) = u.segment(o, q).dot(v.segment(o, q));
    out.segment(o + 1, q - 1) = u(o) * v.segment(o + 1, q - 1) + v(o) * u.segment(o + 1, q - 1);
  }
  for (int k = 0; k < L.npsd(); ++k) {
    const int n = L.dims.psd[k], o = L.psd_off[k], m = svec_size(n);
    RMatrix U = smat(u.segment(o, m), n), V = smat(v.segment(o, m), n);
    out.segment(o, m) = svec(0.5 * (U * V + V * U));
  }
  return out;
}

/// Solves lambda o x = w for x, where lambda is the scaled point (diagonal in
/// the PSD blocks, stored as its eigenvalues).
inline RVector jdiv(const Layout& L, const RVector& lambda, const RVector& w) {
  RVector out(L.rows());
  const int l = L.dims.nonneg;
  out.head(l) = w.head(l).cwiseQuotient(lambda.head(l));
  for (int k = 0; k < L.nsoc(); ++k) {
    const int o = L.soc_off[k], q = L.dims.soc[k];
    const double u0 = lambda(o);
    const auto u1 = lambda.segment(o + 1, q - 1);
    const double det = u0 * u0 - u1.squaredNorm();
    const double x0 = (u0 * w(o) - u1.dot(w.segment(o + 1, q - 1))) / det;
    out(o) = x0;
    out.segment(o + 1, q - 1) = (w.segment(o + 1, q - 1) - x0 * u1) / u0;
  }
  for (int k = 0; k < L.npsd(); ++k) {
    const int n = L.dims.psd[k], o = L.psd_off[k], m = svec_size(n);
    RMatrix Y = smat(w.segment(o, m), n);
    const auto lam = lambda.segment(o, n);
    RMatrix X(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) X(i, j) = 2.0 * Y(i, j) / (lam(i) + lam(j));
    out.segment(o, m) = svec(X);
  }
  return out;
}

/// Nesterov-Todd scaling W with W z = W^{-T} s = lambda.
struct Scaling {
  RVector w;  // non-negative orthant
  std::vector<RVector> soc_v;
  std::vector<double> soc_beta;
  std::vector<RMatrix> psd_R, psd_Rinv;
  RVector lambda;  // PSD blocks store eigenvalues in the first n slots of the segment

  static Scaling identity(const Layout& L) {
    Scaling sc;
    sc.w = RVector::Ones(L.dims.nonneg);
    for (int q : L.dims.soc) {
      RVector v = RVector::Zero(q);
      v(0) = 1.0;
      sc.soc_v.push_back(v);
      sc.soc_beta.push_back(1.0);
    }
    for (int n : L.dims.psd) {
      sc.psd_R.push_back(RMatrix::Identity(n, n));
      sc.psd_Rinv.push_back(RMatrix::Identity(n, n));
    }
    return sc;
  }
};

inline double soc_det(const Eigen::Ref<const RVector>& x) {
  return x(0) * x(0) - x.tail(x.size() - 1).squaredNorm();
}

inline Scaling compute_scaling(const Layout& L, const RVector& s, const RVector& z) {
  Scaling sc;
  sc.lambda = RVector::Zero(L.rows());
  const int l = L.dims.nonneg;
  sc.w = (s.head(l).array() / z.head(l).array()).sqrt();
  sc.lambda.head(l) = (s.head(l).array() * z.head(l).array()).sqrt();
  for (int k = 0; k < L.nsoc(); ++k) {
    const int o = L.soc_off[k], q = L.dims.soc[k];
    const double ds = soc_det(s.segment(o, q)), dz = soc_det(z.segment(o, q));
    if (!(ds > 0.0) || !(dz > 0.0)) throw NumericError("iterate left the second-order cone");
    const double sn = std::sqrt(ds), zn = std::sqrt(dz);
    RVector sb = s.segment(o, q) / sn, zb = z.segment(o, q) / zn;
    const double gamma = std::sqrt(0.5 * (1.0 + sb.dot(zb)));
    RVector jz = -zb;
    jz(0) = zb(0);
    RVector wb = (sb + jz) / (2.0 * gamma);
    RVector v = wb;
    v(0) += 1.0;
    v /= std::sqrt(2.0 * (wb(0) + 1.0));
    const double beta = std::sqrt(sn / zn);
    sc.soc_v.push_back(v);
    sc.soc_beta.push_back(beta);
  }
  for (int k = 0; k < L.npsd(); ++k) {
    const int n = L.dims.psd[k], o = L.psd_off[k], m = svec_size(n);
    RMatrix S = smat(s.segment(o, m), n), Z = smat(z.segment(o, m), n);
    Eigen::LLT<RMatrix> ls(S), lz(Z);
    if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) throw NumericError("iterate left the PSD cone");
    RMatrix Ls = ls.matrixL(), Lz = lz.matrixL();
    Eigen::JacobiSVD<RMatrix> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
    RVector lam = svd.singularValues();
    if (!(lam.minCoeff() > 0.0)) throw NumericError("degenerate PSD scaling");
    RVector isq = lam.array().rsqrt();
    sc.psd_R.push_back(Ls * svd.matrixV() * isq.asDiagonal());
    sc.psd_Rinv.push_back(isq.asDiagonal() * svd.matrixU().transpose() * Lz.transpose());
    sc.lambda.segment(o, n) = lam;
  }
  // SOC lambda = W z
  for (int k = 0; k < L.nsoc(); ++k) {
    const int o = L.soc_off[k], q = L.dims.soc[k];
    const RVector& v = sc.soc_v[k];
    RVector zz = z.segment(o, q);
    RVector jz = -zz;
    jz(0) = zz(0);
    sc.lambda.segment(o, q) = sc.soc_beta[k] * (2.0 * v * v.dot(zz) - jz);
  }
  return sc;
}

/// Full lambda vector in svec form (PSD blocks expanded to diagonal matrices).
inline RVector lambda_vec(const Layout& L, const Scaling& sc) {
  RVector out = sc.lambda;
  for (int k = 0; k < L.npsd(); ++k) {
    const int n = L.dims.psd[k], o = L.psd_off[k];
    RVector lam = sc.lambda.segment(o, n);
    out.segment(o, svec_size(n)) = svec(RMatrix(lam.asDiagonal()));
  }
  return out;
}

enum class Op { W, Wt, Winv, Winvt };

/// Applies W, W', W^{-1} or W^{-T} to a cone-sized vector.
inline RVector apply(const Layout& L, const Scaling& sc, Op op, const RVector& u) {
  RVector out(L.rows());
  const int l = L.dims.nonneg;
  if (op == Op::W || op == Op::Wt) out.head(l) = sc.w.cwiseProduct(u.head(l));
  else out.head(l) = u.head(l).cwiseQuotient(sc.w);
  for (int k = 0; k < L.nsoc(); ++k) {
    const int o = L.soc_off[k], q = L.dims.soc[k];
    const RVector& v = sc.soc_v[k];
    RVector x = u.segment(o, q);
    RVector jx = -x;
    jx(0) = x(0);
    if (op == Op::W || op == Op::Wt) {
      out.segment(o, q) = sc.soc_beta[k] * (2.0 * v * v.dot(x) - jx);
    } else {
      RVector jv = -v;
      jv(0) = v(0);
      out.segment(o, q) = (2.0 * jv * jv.dot(x) - jx) / sc.soc_beta[k];
    }
  }
  for (int k = 0; k < L.npsd(); ++k) {
    const int n = L.dims.psd[k], o = L.psd_off[k], m = svec_size(n);
    RMatrix U = smat(u.segment(o, m), n);
    const RMatrix& R = sc.psd_R[k];
    const RMatrix& Ri = sc.psd_Rinv[k];
    RMatrix X;
    switch (op) {
      case Op::W: X = R.transpose() * U * R; break;
      case Op::Wt: X = R * U * R.transpose(); break;
      case Op::Winv: X = Ri.transpose() * U * Ri; break;
      case Op::Winvt: X = Ri * U * Ri.transpose(); break;
    }
    out.segment(o, m) = svec(X);
  }
  return out;
}

/// Largest step alpha such that lambda + alpha * d stays in the cone (d given
/// in the scaled space); infinity when unbounded.
inline double max_step(const Layout& L, const RVector& lambda, const RVector& d) {
  double amax = std::numeric_limits<double>::infinity();
  const int l = L.dims.nonneg;
  for (int i = 0; i < l; ++i)
    if (d(i) < 0.0) amax = std::min(amax, -lambda(i) / d(i));
  for (int k = 0; k < L.nsoc(); ++k) {
    const int o = L.soc_off[k], q = L.dims.soc[k];
    const auto x = lambda.segment(o, q);
    const auto dx = d.segment(o, q);
    // (x0 + a d0)^2 - |x1 + a d1|^2 = A a^2 + B a + C, and x0 + a d0 >= 0.
    const double A = soc_det(dx);
    const double B = 2.0 * (x(0) * dx(0) - x.tail(q - 1).dot(dx.tail(q - 1)));
    const double C = soc_det(x);
    double best = std::numeric_limits<double>::infinity();
    auto consider = [&](double a) {
      if (a > 0.0) best = std::min(best, a);
    };
    if (std::abs(A) < 1e-14 * std::max(1.0, std::abs(B))) {
      if (B < 0.0) consider(-C / B);
    } else {
      const double disc = B * B - 4.0 * A * C;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        const double q1 = -0.5 * (B + (B >= 0 ? sq : -sq));
        consider(q1 / A);
        if (q1 != 0.0) consider(C / q1);
      }
    }
    if (dx(0) < 0.0) best = std::min(best, -x(0) / dx(0));
    amax = std::min(amax, best);
  }
  for (int k = 0; k < L.npsd(); ++k) {
    const int n = L.dims.psd[k], o = L.psd_off[k], m = svec_size(n);
    RMatrix D = smat(d.segment(o, m), n);
    RVector isq = lambda.segment(o, n).array().rsqrt();
    RMatrix M = isq.asDiagonal() * D * isq.asDiagonal();
    Eigen::SelfAdjointEigenSolver<RMatrix> es(M, Eigen::EigenvaluesOnly);
    const double emin = es.eigenvalues()(0);
    if (emin < 0.0) amax = std::min(amax, -1.0 / emin);
  }
  return amax;
}

/// Scaled KKT system in the unknowns (dx, dy, W dz):
///   [[0, A', Gs'], [A, 0, 0], [Gs, 0, -I]],  Gs = W^{-T} G,
/// factored with static regularization and corrected by iterative refinement
/// against the unregularized matrix.
class Kkt {
 public:
  Kkt(const SparseMatrix& A, const SparseMatrix& G, const Layout& L, double reg, int refine)
      : A_(A), G_(G), Grow_(G), L_(L), reg_(reg), refine_(refine) {
    n_ = static_cast<int>(G.cols());
    p_ = static_cast<int>(A.rows());
    m_ = static_cast<int>(G.rows());
    // Support columns and dense rows of each SOC / PSD block.
    auto block = [&](int off, int rows) {
      std::vector<int> cols;
      for (int r = off; r < off + rows; ++r)
        for (RowMajor::InnerIterator it(Grow_, r); it; ++it) cols.push_back(static_cast<int>(it.col()));
      std::sort(cols.begin(), cols.end());
      cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
      RMatrix dense = RMatrix::Zero(rows, static_cast<Eigen::Index>(cols.size()));
      for (int r = off; r < off + rows; ++r)
        for (RowMajor::InnerIterator it(Grow_, r); it; ++it) {
          auto pos = std::lower_bound(cols.begin(), cols.end(), static_cast<int>(it.col())) - cols.begin();
          dense(r - off, pos) = it.value();
        }
      supports_.push_back(std::move(cols));
      dense_.push_back(std::move(dense));
    };
    for (int k = 0; k < L.nsoc(); ++k) block(L.soc_off[k], L.dims.soc[k]);
    for (int k = 0; k < L.npsd(); ++k) block(L.psd_off[k], svec_size(L.dims.psd[k]));
  }

  void factor(const Scaling& sc) {
    sc_ = &sc;
    std::vector<Triplet> t;
    const int zoff = n_ + p_;
    for (int i = 0; i < n_; ++i) t.emplace_back(i, i, reg_);
    for (int j = 0; j < A_.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(A_, j); it; ++it) t.emplace_back(n_ + static_cast<int>(it.row()), j, it.value());
    for (int i = 0; i < p_; ++i) t.emplace_back(n_ + i, n_ + i, -reg_);
    const int l = L_.dims.nonneg;
    for (int r = 0; r < l; ++r)
      for (RowMajor::InnerIterator a(Grow_, r); a; ++a) t.emplace_back(zoff + r, static_cast<int>(a.col()), a.value() / sc.w(r));
    int blk = 0;
    for (int k = 0; k < L_.nsoc(); ++k, ++blk) {
      const RMatrix& Gk = dense_[blk];
      RVector jv = -sc.soc_v[k];
      jv(0) = sc.soc_v[k](0);
      RMatrix JG = -Gk;
      JG.row(0) = Gk.row(0);
      RMatrix T = (2.0 * jv * (jv.transpose() * Gk) - JG) / sc.soc_beta[k];
      put(t, zoff + L_.soc_off[k], supports_[blk], T);
    }
    for (int k = 0; k < L_.npsd(); ++k, ++blk) {
      const int n = L_.dims.psd[k];
      const RMatrix& Gk = dense_[blk];
      const RMatrix& Ri = sc.psd_Rinv[k];
      RMatrix T(Gk.rows(), Gk.cols());
      for (Eigen::Index c = 0; c < Gk.cols(); ++c) T.col(c) = svec(Ri * smat(Gk.col(c), n) * Ri.transpose());
      put(t, zoff + L_.psd_off[k], supports_[blk], T);
    }
    for (int i = 0; i < m_; ++i) t.emplace_back(zoff + i, zoff + i, -1.0);
    SparseMatrix K(n_ + p_ + m_, n_ + p_ + m_);
    K.setFromTriplets(t.begin(), t.end());
    std::vector<int> sign(n_ + p_ + m_, -1);
    std::fill(sign.begin(), sign.begin() + n_, 1);
    ldlt_.factor(K, sign);
  }

  /// Solves  A'dy + G'dz = r1,  A dx = r2,  G dx - W'W dz = r3.
  /// Also returns the scaled dual step W dz in `dzs`.
  void solve(const RVector& r1, const RVector& r2, const RVector& r3, RVector& dx, RVector& dy, RVector& dz,
             RVector& dzs) const {
    const Scaling& sc = *sc_;
    RVector rhs(n_ + p_ + m_);
    rhs.head(n_) = r1;
    rhs.segment(n_, p_) = r2;
    rhs.tail(m_) = apply(L_, sc, Op::Winvt, r3);
    RVector sol = ldlt_.solve(rhs);
    const double scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
    for (int it = 0; it < refine_; ++it) {
      RVector res = rhs - multiply(sol);
      if (res.lpNorm<Eigen::Infinity>() <= 1e-14 * scale) break;
      sol += ldlt_.solve(res);
    }
    dx = sol.head(n_);
    dy = sol.segment(n_, p_);
    dzs = sol.tail(m_);
    dz = apply(L_, sc, Op::Winv, dzs);
  }

 private:
  using RowMajor = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  RVector multiply(const RVector& v) const {
    const Scaling& sc = *sc_;
    RVector out(n_ + p_ + m_);
    const RVector x = v.head(n_), y = v.segment(n_, p_), z = v.tail(m_);
    out.head(n_) = A_.transpose() * y + G_.transpose() * apply(L_, sc, Op::Winv, z);
    out.segment(n_, p_) = A_ * x;
    out.tail(m_) = apply(L_, sc, Op::Winvt, RVector(G_ * x)) - z;
    return out;
  }

  static void put(std::vector<Triplet>& t, int row0, const std::vector<int>& cols, const RMatrix& T) {
    for (Eigen::Index r = 0; r < T.rows(); ++r)
      for (std::size_t c = 0; c < cols.size(); ++c)
        if (T(r, static_cast<Eigen::Index>(c)) != 0.0) t.emplace_back(row0 + static_cast<int>(r), cols[c], T(r, static_cast<Eigen::Index>(c)));
  }

  const SparseMatrix& A_;
  const SparseMatrix& G_;
  RowMajor Grow_;
  const Layout& L_;
  double reg_;
  int refine_;
  int n_ = 0, p_ = 0, m_ = 0;
  std::vector<std::vector<int>> supports_;
  std::vector<RMatrix> dense_;
  const Scaling* sc_ = nullptr;
  QuasidefiniteLdl ldlt_;
};

}  // namespace ipm_detail

/// Runs the interior-point method on an (already scaled) standard form.
inline IpmResult solve_ipm(const StandardConicForm& f, const SolverSettings& st = {}) {
  using namespace ipm_detail;
  IpmResult res;
  const Layout L(f.cones);
  const int n = f.num_vars();
  const int p = static_cast<int>(f.b.size());
  const int m = L.rows();
  if (f.G.rows() != m || f.h.size() != m) throw ModelError("cone dimensions do not match G");
  const RVector& c = f.c;
  const RVector& b = f.b;
  const RVector& h = f.h;
  const double nu = L.dims.degree();
  const RVector e = unit(L);

  Kkt kkt(f.A, f.G, L, st.regularization, st.refine_steps);

  // Starting point.
  RVector x, y, z, s;
  try {
    Scaling id = Scaling::identity(L);
    kkt.factor(id);
    RVector dx, dz, unused;
    kkt.solve(RVector::Zero(n), b, h, x, y, dz, unused);
    s = -dz;
    kkt.solve(-c, RVector::Zero(p), RVector::Zero(m), dx, y, z, unused);
  } catch (const NumericError& ex) {
    res.message = std::string("initialization: ") + ex.what();
    return res;
  }
  auto shift = [&](RVector& v) {
    if (m == 0) return;
    const double t = max_violation(L, v);
    if (t >= -1e-8 * std::max(1.0, v.norm())) v += (1.0 + t) * e;
  };
  shift(s);
  shift(z);
  double tau = 1.0, kappa = 1.0;

  const double resx0 = std::max(1.0, c.norm());
  const double resy0 = std::max(1.0, b.norm());
  const double resz0 = std::max(1.0, h.norm());

  double best_metric = std::numeric_limits<double>::infinity();
  IpmResult best;
  // Latest infeasibility certificates, used when the iteration stalls.
  double last_pinf = std::numeric_limits<double>::infinity(), last_dinf = last_pinf;
  IpmResult pcert, dcert;

  for (int iter = 0; iter <= st.max_iter; ++iter) {
    // Residuals.
    RVector hrx = -(f.A.transpose() * y) - f.G.transpose() * z;
    RVector hry = f.A * x;
    RVector hrz = s + f.G * x;
    const double hresx = hrx.norm(), hresy = hry.norm(), hresz = hrz.norm();
    RVector rx = hrx - c * tau;
    RVector ry = hry - b * tau;
    RVector rz = hrz - h * tau;
    const double cx = c.dot(x), by = b.dot(y), hz = h.dot(z);
    const double rt = kappa + cx + by + hz;
    const double gap = s.dot(z);
    const double mu = (gap + tau * kappa) / (nu + 1.0);

    const double pcost = cx / tau, dcost = -(by + hz) / tau;
    double relgap = std::numeric_limits<double>::infinity();
    if (pcost < 0.0) relgap = gap / -pcost;
    else if (dcost > 0.0) relgap = gap / dcost;
    relgap = std::min(relgap, gap / (tau * std::max(1.0, std::min(std::abs(pcost), std::abs(dcost)))));
    const double pres = std::max(ry.norm() / resy0, rz.norm() / resz0) / tau;
    const double dres = rx.norm() / resx0 / tau;
    const double pinfres = (hz + by < 0.0) ? hresx / resx0 / (-(hz + by)) : std::numeric_limits<double>::infinity();
    const double dinfres = (cx < 0.0) ? std::max(hresy / resy0, hresz / resz0) / (-cx) : std::numeric_limits<double>::infinity();

    if (st.verbose)
      std::fprintf(stderr, "%3d  pcost % .8e  dcost % .8e  gap %.2e  pres %.2e  dres %.2e  k/t %.2e  pinf %.1e  dinf %.1e\n",
                   iter, pcost, dcost, gap / (tau * tau), pres, dres, kappa / tau, pinfres, dinfres);

    auto fill = [&](IpmResult& r, SolveTag tag) {
      r.tag = tag;
      r.iterations = iter;
      r.primal_residual = pres;
      r.dual_residual = dres;
      r.relative_gap = relgap;
      r.primal_objective = pcost;
      r.dual_objective = dcost;
      r.x = x / tau;
      r.y = y / tau;
      r.z = z / tau;
      r.s = s / tau;
    };

    const double absgap = gap / (tau * tau);
    const bool gap_ok = absgap <= st.tol || relgap <= st.tol;
    if (pres <= st.tol && dres <= st.tol && gap_ok) {
      fill(res, SolveTag::Solved);
      return res;
    }
    if (pinfres <= st.tol) {
      fill(res, SolveTag::Infeasible);
      res.y = y / -(hz + by);
      res.z = z / -(hz + by);
      return res;
    }
    if (dinfres <= st.tol) {
      fill(res, SolveTag::Unbounded);
      res.x = x / -cx;
      res.s = s / -cx;
      return res;
    }
    if (std::isfinite(pinfres)) {
      last_pinf = pinfres;
      fill(pcert, SolveTag::Infeasible);
      pcert.y = y / -(hz + by);
      pcert.z = z / -(hz + by);
    }
    if (std::isfinite(dinfres)) {
      last_dinf = dinfres;
      fill(dcert, SolveTag::Unbounded);
      dcert.x = x / -cx;
      dcert.s = s / -cx;
    }
    {
      const double metric = std::max({pres, dres, std::min(relgap, absgap)});
      if (metric < best_metric) {
        best_metric = metric;
        fill(best, SolveTag::NumericalFailure);
      }
    }
    if (iter == st.max_iter) break;

    // Newton system.
    Scaling sc;
    try {
      sc = compute_scaling(L, s, z);
      kkt.factor(sc);
    } catch (const NumericError& ex) {
      res.message = ex.what();
      break;
    }
    const RVector lam = lambda_vec(L, sc);
    const RVector lamsq = jprod(L, lam, lam);

    RVector x1, y1, z1, z1s;
    kkt.solve(-c, b, h, x1, y1, z1, z1s);

    double dtau_a = 0.0, dkappa_a = 0.0;
    RVector dsa_scaled, dza_scaled;

    auto direction = [&](double eta, const RVector& rc, double rk, RVector& dx, RVector& dy, RVector& dz, RVector& ds,
                         double& dtau, double& dkappa) {
      RVector lrc = jdiv(L, sc.lambda, rc);
      RVector x0, y0, z0, z0s;
      kkt.solve(eta * rx, -eta * ry, RVector(-eta * rz - apply(L, sc, Op::Wt, lrc)), x0, y0, z0, z0s);
      const double f4 = eta * rt + rk / tau;
      dtau = (f4 + c.dot(x0) + b.dot(y0) + h.dot(z0)) / (kappa / tau - c.dot(x1) - b.dot(y1) - h.dot(z1));
      dx = x0 + dtau * x1;
      dy = y0 + dtau * y1;
      dz = z0 + dtau * z1;
      RVector dzs = z0s + dtau * z1s;
      RVector dss = lrc - dzs;
      ds = apply(L, sc, Op::Wt, dss);
      dkappa = (rk - kappa * dtau) / tau;
      dsa_scaled = dss;
      dza_scaled = dzs;
    };

    RVector dx, dy, dz, ds;
    double dtau = 0.0, dkappa = 0.0;
    try {
      // Predictor.
      direction(1.0, -lamsq, -tau * kappa, dx, dy, dz, ds, dtau, dkappa);
      double amax = std::min(max_step(L, sc.lambda, dsa_scaled), max_step(L, sc.lambda, dza_scaled));
      if (dtau < 0.0) amax = std::min(amax, -tau / dtau);
      if (dkappa < 0.0) amax = std::min(amax, -kappa / dkappa);
      const double aaff = std::min(1.0, amax);
      const double sigma = std::pow(1.0 - aaff, 3);
      dtau_a = dtau;
      dkappa_a = dkappa;
      RVector cross = jprod(L, dsa_scaled, dza_scaled);

      // Corrector.
      RVector rc = -lamsq + sigma * mu * e - cross;
      const double rk = -tau * kappa + sigma * mu - dtau_a * dkappa_a;
      direction(1.0 - sigma, rc, rk, dx, dy, dz, ds, dtau, dkappa);
      amax = std::min(max_step(L, sc.lambda, dsa_scaled), max_step(L, sc.lambda, dza_scaled));
      if (dtau < 0.0) amax = std::min(amax, -tau / dtau);
      if (dkappa < 0.0) amax = std::min(amax, -kappa / dkappa);
      const double alpha = std::min(1.0, st.step_fraction * amax);
      if (!(alpha > 0.0) || !std::isfinite(alpha)) throw NumericError("zero step length");

      x += alpha * dx;
      y += alpha * dy;
      z += alpha * dz;
      s += alpha * ds;
      tau += alpha * dtau;
      kappa += alpha * dkappa;
    } catch (const NumericError& ex) {
      res.message = ex.what();
      break;
    }
    if (!(tau > 0.0) || !(kappa > 0.0) || !x.allFinite()) {
      res.message = "iterate lost interiority";
      break;
    }
  }

  const std::string why = res.message;
  if (best_metric > st.inaccurate_tol && std::min(last_pinf, last_dinf) <= st.inaccurate_tol) {
    // tau collapsed before the certificate reached full accuracy
    res = last_pinf <= last_dinf ? pcert : dcert;
    char buf[64];
    std::snprintf(buf, sizeof buf, "certificate residual %.1e", std::min(last_pinf, last_dinf));
    res.message = buf + (why.empty() ? std::string() : "; " + why);
    return res;
  }
  res = best;
  res.message = why;
  if (best_metric <= st.inaccurate_tol) res.tag = SolveTag::InaccurateSolved;
  else res.tag = SolveTag::NumericalFailure;
  if (res.message.empty()) res.message = "stopped with residual " + std::to_string(best_metric);
  return res;
}

}  // namespace seqopf::conic
