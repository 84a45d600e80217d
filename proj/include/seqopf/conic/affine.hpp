// Real- and complex-affine expressions over a real decision vector, and dense
// matrices of complex-affine expressions used to write matrix constraints.
#pragma once

#include "seqopf/phase.hpp"

#include <algorithm>
#include <utility>
#include <vector>

namespace seqopf::conic {

struct LinExpr {
  std::vector<std::pair<int, double>> terms;
  double constant = 0.0;

  static LinExpr var(int idx, double coef = 1.0) { return LinExpr{{{idx, coef}}, 0.0}; }
  static LinExpr value(double c) { return LinExpr{{}, c}; }

  double eval(const RVector& x) const {
    double acc = constant;
    for (const auto& [i, c] : terms) acc += c * x(i);
    return acc;
  }

  LinExpr& normalize() {
    std::sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<int, double>> merged;
    for (const auto& t : terms) {
      if (!merged.empty() && merged.back().first == t.first) merged.back().second += t.second;
      else merged.push_back(t);
    }
    std::erase_if(merged, [](const auto& t) { return t.second == 0.0; });
    terms = std::move(merged);
    return *this;
  }

  LinExpr& operator+=(const LinExpr& o) {
    terms.insert(terms.end(), o.terms.begin(), o.terms.end());
    constant += o.constant;
    return normalize();
  }
  LinExpr& operator-=(const LinExpr& o) { return *this += o * -1.0; }
  LinExpr& operator*=(double s) {
    for (auto& t : terms) t.second *= s;
    constant *= s;
    return *this;
  }
  friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
  friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
  friend LinExpr operator*(LinExpr a, double s) { return a *= s; }
  friend LinExpr operator*(double s, LinExpr a) { return a *= s; }
  friend LinExpr operator+(LinExpr a, double c) { a.constant += c; return a; }
  friend LinExpr operator-(LinExpr a, double c) { a.constant -= c; return a; }
};

/// Complex-affine function of the real decision vector.
struct CExpr {
  std::vector<std::pair<int, cplx>> terms;
  cplx constant{0.0, 0.0};

  static CExpr var(int idx, cplx coef = 1.0) { return CExpr{{{idx, coef}}, 0.0}; }
  static CExpr value(cplx c) { return CExpr{{}, c}; }

  cplx eval(const RVector& x) const {
    cplx acc = constant;
    for (const auto& [i, c] : terms) acc += c * x(i);
    return acc;
  }

  CExpr& normalize() {
    std::sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<int, cplx>> merged;
    for (const auto& t : terms) {
      if (!merged.empty() && merged.back().first == t.first) merged.back().second += t.second;
      else merged.push_back(t);
    }
    std::erase_if(merged, [](const auto& t) { return t.second == cplx(0.0); });
    terms = std::move(merged);
    return *this;
  }

  CExpr conj() const {
    CExpr out = *this;
    for (auto& t : out.terms) t.second = std::conj(t.second);
    out.constant = std::conj(constant);
    return out;
  }

  LinExpr real() const {
    LinExpr out;
    for (const auto& [i, c] : terms) out.terms.emplace_back(i, c.real());
    out.constant = constant.real();
    return out.normalize();
  }

  LinExpr imag() const {
    LinExpr out;
    for (const auto& [i, c] : terms) out.terms.emplace_back(i, c.imag());
    out.constant = constant.imag();
    return out.normalize();
  }

  /// Accumulates s * o without normalizing; call normalize() afterwards.
  void axpy(cplx s, const CExpr& o) {
    if (s == cplx(0.0)) return;
    for (const auto& [i, c] : o.terms) terms.emplace_back(i, s * c);
    constant += s * o.constant;
  }

  CExpr& operator+=(const CExpr& o) {
    axpy(1.0, o);
    return normalize();
  }
  CExpr& operator-=(const CExpr& o) {
    axpy(-1.0, o);
    return normalize();
  }
  CExpr& operator*=(cplx s) {
    for (auto& t : terms) t.second *= s;
    constant *= s;
    return *this;
  }
  friend CExpr operator+(CExpr a, const CExpr& b) { return a += b; }
  friend CExpr operator-(CExpr a, const CExpr& b) { return a -= b; }
  friend CExpr operator*(CExpr a, cplx s) { return a *= s; }
  friend CExpr operator*(cplx s, CExpr a) { return a *= s; }
};

/// Dense matrix of complex-affine expressions.
class CMatExpr {
 public:
  CMatExpr() = default;
  CMatExpr(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols) {}

  static CMatExpr constant(const CMatrix& m) {
    CMatExpr out(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
    for (int i = 0; i < out.rows_; ++i)
      for (int j = 0; j < out.cols_; ++j) out(i, j).constant = m(i, j);
    return out;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  CExpr& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  const CExpr& operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

  CMatrix eval(const RVector& x) const {
    CMatrix m(rows_, cols_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) m(i, j) = (*this)(i, j).eval(x);
    return m;
  }

  CMatExpr adjoint() const {
    CMatExpr out(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) out(j, i) = (*this)(i, j).conj();
    return out;
  }

  /// Rows/columns at `idx` of a square expression.
  CMatExpr sub(const std::vector<int>& idx) const {
    CMatExpr out(static_cast<int>(idx.size()), static_cast<int>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < idx.size(); ++j) out(static_cast<int>(i), static_cast<int>(j)) = (*this)(idx[i], idx[j]);
    return out;
  }

  std::vector<CExpr> diag() const {
    std::vector<CExpr> out;
    for (int i = 0; i < std::min(rows_, cols_); ++i) out.push_back((*this)(i, i));
    return out;
  }

  CMatExpr hadamard(const RMatrix& r) const {
    check_same(static_cast<int>(r.rows()), static_cast<int>(r.cols()));
    CMatExpr out = *this;
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) out(i, j) *= r(i, j);
    return out;
  }

  CMatExpr& operator+=(const CMatExpr& o) {
    check_same(o.rows_, o.cols_);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  CMatExpr& operator-=(const CMatExpr& o) {
    check_same(o.rows_, o.cols_);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  friend CMatExpr operator+(CMatExpr a, const CMatExpr& b) { return a += b; }
  friend CMatExpr operator-(CMatExpr a, const CMatExpr& b) { return a -= b; }

  friend CMatExpr operator*(const CMatrix& m, const CMatExpr& e) {
    if (m.cols() != e.rows_) throw ModelError("expression product dimension mismatch");
    CMatExpr out(static_cast<int>(m.rows()), e.cols_);
    for (int i = 0; i < out.rows_; ++i)
      for (int j = 0; j < out.cols_; ++j) {
        CExpr& acc = out(i, j);
        for (int k = 0; k < e.rows_; ++k) acc.axpy(m(i, k), e(k, j));
        acc.normalize();
      }
    return out;
  }

  friend CMatExpr operator*(const CMatExpr& e, const CMatrix& m) {
    if (e.cols_ != m.rows()) throw ModelError("expression product dimension mismatch");
    CMatExpr out(e.rows_, static_cast<int>(m.cols()));
    for (int i = 0; i < out.rows_; ++i)
      for (int j = 0; j < out.cols_; ++j) {
        CExpr& acc = out(i, j);
        for (int k = 0; k < e.cols_; ++k) acc.axpy(m(k, j), e(i, k));
        acc.normalize();
      }
    return out;
  }

 private:
  void check_same(int r, int c) const {
    if (r != rows_ || c != cols_) throw ModelError("expression matrices differ in shape");
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<CExpr> data_;
};

/// Block matrix [[a, b], [c, d]].
inline CMatExpr block2x2(const CMatExpr& a, const CMatExpr& b, const CMatExpr& c, const CMatExpr& d) {
  CMatExpr out(a.rows() + c.rows(), a.cols() + b.cols());
  auto put = [&](const CMatExpr& m, int r0, int c0) {
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) out(r0 + i, c0 + j) = m(i, j);
  };
  put(a, 0, 0);
  put(b, 0, a.cols());
  put(c, a.rows(), 0);
  put(d, a.rows(), a.cols());
  return out;
}

}  // namespace seqopf::conic
