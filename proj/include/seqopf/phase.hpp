// Phase sets, complex matrix aliases and the library's error types.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqopf {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// Per-phase complex quantity indexed by phase letter (a=0, b=1, c=2).
/// Entries for phases outside the owning element's phase set are zero.
using PhaseArray = std::array<cplx, 3>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that violates a model or call precondition.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure that did not reach its goal.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Subset of {a, b, c} stored as a bit mask.
class PhaseSet {
 public:
  constexpr PhaseSet() = default;
  constexpr explicit PhaseSet(std::uint8_t mask) : mask_(mask & 7u) {}

  static constexpr PhaseSet abc() { return PhaseSet(7); }
  static constexpr PhaseSet single(int phase) { return PhaseSet(static_cast<std::uint8_t>(1u << phase)); }

  /// Parses strings such as "abc", "ac", "b" (case-insensitive).
  static PhaseSet parse(const std::string& text) {
    std::uint8_t m = 0;
    for (char ch : text) {
      switch (ch) {
        case 'a': case 'A': m |= 1; break;
        case 'b': case 'B': m |= 2; break;
        case 'c': case 'C': m |= 4; break;
        default: throw ModelError("invalid phase letter '" + std::string(1, ch) + "' in \"" + text + "\"");
      }
    }
    return PhaseSet(m);
  }

  constexpr std::uint8_t mask() const { return mask_; }
  constexpr bool empty() const { return mask_ == 0; }
  constexpr bool contains(int phase) const { return (mask_ >> phase) & 1u; }
  constexpr int size() const { return (mask_ & 1) + ((mask_ >> 1) & 1) + ((mask_ >> 2) & 1); }
  constexpr bool is_subset_of(PhaseSet other) const { return (mask_ & ~other.mask_) == 0; }
  constexpr bool is_three_phase() const { return mask_ == 7; }

  /// Phase letters in a-b-c order.
  std::vector<int> phases() const {
    std::vector<int> out;
    for (int p = 0; p < 3; ++p)
      if (contains(p)) out.push_back(p);
    return out;
  }

  /// Position of `phase` inside this set's reduced ordering, or -1.
  int index_of(int phase) const {
    if (!contains(phase)) return -1;
    int idx = 0;
    for (int p = 0; p < phase; ++p)
      if (contains(p)) ++idx;
    return idx;
  }

  /// Positions of `sub`'s phases inside this set's reduced ordering.
  std::vector<int> positions_of(PhaseSet sub) const {
    std::vector<int> out;
    for (int p : sub.phases()) out.push_back(index_of(p));
    return out;
  }

  std::string str() const {
    std::string s;
    for (int p : phases()) s.push_back(static_cast<char>('a' + p));
    return s;
  }

  friend constexpr bool operator==(PhaseSet, PhaseSet) = default;

 private:
  std::uint8_t mask_ = 0;
};

inline char phase_letter(int phase) { return static_cast<char>('a' + phase); }

/// Rows/columns `idx` of a square matrix.
inline CMatrix submatrix(const CMatrix& m, const std::vector<int>& idx) {
  CMatrix out(idx.size(), idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j) out(i, j) = m(idx[i], idx[j]);
  return out;
}

/// Restricts a matrix indexed by `outer` phases to the `inner` phases.
inline CMatrix project(const CMatrix& m, PhaseSet outer, PhaseSet inner) {
  return submatrix(m, outer.positions_of(inner));
}

inline CVector project(const CVector& v, PhaseSet outer, PhaseSet inner) {
  auto idx = outer.positions_of(inner);
  CVector out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out(i) = v(idx[i]);
  return out;
}

/// Reduced vector of the entries of `full` on `phases`.
inline CVector reduce(const PhaseArray& full, PhaseSet phases) {
  auto ph = phases.phases();
  CVector out(ph.size());
  for (std::size_t i = 0; i < ph.size(); ++i) out(i) = full[ph[i]];
  return out;
}

inline PhaseArray expand(const CVector& reduced, PhaseSet phases) {
  PhaseArray out{};
  auto ph = phases.phases();
  for (std::size_t i = 0; i < ph.size(); ++i) out[ph[i]] = reduced(i);
  return out;
}

inline bool is_hermitian(const CMatrix& m, double tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

inline CMatrix hermitian_part(const CMatrix& m) { return 0.5 * (m + m.adjoint()); }

}  // namespace seqopf
