// Sparse LDL' factorization for quasidefinite matrices with dynamic
// regularization of pivots whose sign disagrees with the expected inertia.
#pragma once

#include "seqopf/phase.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

#include <vector>

namespace seqopf::conic {

class QuasidefiniteLdl {
 public:
  using SparseMatrix = Eigen::SparseMatrix<double>;

  /// `lower` holds the lower triangle (diagonal included) of the symmetric
  /// matrix; `sign` is +1/-1 per row.
  void factor(const SparseMatrix& lower, const std::vector<int>& sign, double eps = 1e-13, double delta = 1e-8) {
    n_ = static_cast<int>(lower.rows());
    SparseMatrix full = lower.selfadjointView<Eigen::Lower>();
    Eigen::AMDOrdering<int> amd;
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> pinv;
    amd(full, pinv);
    perm_ = pinv.inverse();
    pinv_ = pinv;
    SparseMatrix up(n_, n_);
    up.selfadjointView<Eigen::Upper>() = lower.selfadjointView<Eigen::Lower>().twistedBy(perm_);
    up.makeCompressed();
    std::vector<int> psign(n_);
    for (int i = 0; i < n_; ++i) psign[perm_.indices()(i)] = sign[i];

    const int* Ap = up.outerIndexPtr();
    const int* Ai = up.innerIndexPtr();
    const double* Ax = up.valuePtr();

    // Elimination tree and column counts.
    std::vector<int> work(n_, 0), lnz(n_, 0);
    etree_.assign(n_, -1);
    for (int j = 0; j < n_; ++j) {
      work[j] = j;
      for (int p = Ap[j]; p < Ap[j + 1]; ++p) {
        int i = Ai[p];
        while (i < j && work[i] != j) {
          if (etree_[i] == -1) etree_[i] = j;
          ++lnz[i];
          work[i] = j;
          i = etree_[i];
        }
      }
    }
    Lp_.assign(n_ + 1, 0);
    for (int i = 0; i < n_; ++i) Lp_[i + 1] = Lp_[i] + lnz[i];
    Li_.assign(Lp_[n_], 0);
    Lx_.assign(Lp_[n_], 0.0);
    D_.assign(n_, 0.0);
    Dinv_.assign(n_, 0.0);
    regularized_ = 0;

    std::vector<char> marked(n_, 0);
    std::vector<double> y(n_, 0.0);
    std::vector<int> yidx(n_), buffer(n_), next(Lp_.begin(), Lp_.end() - 1);
    for (int k = 0; k < n_; ++k) {
      int nnz = 0;
      for (int p = Ap[k]; p < Ap[k + 1]; ++p) {
        const int b = Ai[p];
        if (b == k) {
          D_[k] += Ax[p];
          continue;
        }
        y[b] = Ax[p];
        if (marked[b]) continue;
        marked[b] = 1;
        int ne = 0;
        buffer[ne++] = b;
        for (int t = etree_[b]; t != -1 && t < k && !marked[t]; t = etree_[t]) {
          marked[t] = 1;
          buffer[ne++] = t;
        }
        while (ne) yidx[nnz++] = buffer[--ne];
      }
      for (int i = nnz - 1; i >= 0; --i) {
        const int c = yidx[i];
        const double yc = y[c];
        for (int j = Lp_[c]; j < next[c]; ++j) y[Li_[j]] -= Lx_[j] * yc;
        Li_[next[c]] = k;
        Lx_[next[c]] = yc * Dinv_[c];
        D_[k] -= yc * Lx_[next[c]];
        ++next[c];
        y[c] = 0.0;
        marked[c] = 0;
      }
      if (psign[k] * D_[k] <= eps) {
        D_[k] = psign[k] * delta;
        ++regularized_;
      }
      Dinv_[k] = 1.0 / D_[k];
    }
  }

  RVector solve(const RVector& b) const {
    RVector x = perm_ * b;
    for (int i = 0; i < n_; ++i)
      for (int j = Lp_[i]; j < Lp_[i + 1]; ++j) x(Li_[j]) -= Lx_[j] * x(i);
    for (int i = 0; i < n_; ++i) x(i) *= Dinv_[i];
    for (int i = n_ - 1; i >= 0; --i)
      for (int j = Lp_[i]; j < Lp_[i + 1]; ++j) x(i) -= Lx_[j] * x(Li_[j]);
    return pinv_ * x;
  }

  int regularized_pivots() const { return regularized_; }

 private:
  int n_ = 0;
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm_, pinv_;
  std::vector<int> etree_, Lp_, Li_;
  std::vector<double> Lx_, D_, Dinv_;
  int regularized_ = 0;
};

}  // namespace seqopf::conic
