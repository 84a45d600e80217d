// Fortescue (symmetrical component) transformation.
//
// Uses the power-invariant normalization A = (1/sqrt 3)[[1,1,1],[1,a^2,a],[1,a,a^2]],
// which makes A unitary, so second-order quantities transform by congruence:
//   v_abc = A v_012 A^H,   z_abc = A z_012 A^H.
#pragma once

#include "seqopf/phase.hpp"

#include <numbers>

namespace seqopf::symcomp {

enum class Frame { phase, sequence };

/// A 3x3 matrix tagged with the frame it lives in.
template <Frame F>
struct Framed {
  CMatrix m;

  explicit Framed(CMatrix value) : m(std::move(value)) {
    if (m.rows() != 3 || m.cols() != 3)
      throw ModelError("sequence transforms are defined for 3x3 matrices only, got " +
                       std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
};

using PhaseFrame = Framed<Frame::phase>;
using SequenceFrame = Framed<Frame::sequence>;

/// a = 1 at 120 degrees.
inline cplx rotation() { return std::polar(1.0, 2.0 * std::numbers::pi / 3.0); }

inline const CMatrix& fortescue_matrix() {
  static const CMatrix A = [] {
    const cplx a = rotation();
    const cplx a2 = a * a;
    CMatrix m(3, 3);
    m << 1.0, 1.0, 1.0,
         1.0, a2, a,
         1.0, a, a2;
    return CMatrix(m / std::sqrt(3.0));
  }();
  return A;
}

inline SequenceFrame phase_to_sequence(const PhaseFrame& x) {
  const CMatrix& A = fortescue_matrix();
  return SequenceFrame(A.adjoint() * x.m * A);
}

inline PhaseFrame sequence_to_phase(const SequenceFrame& x) {
  const CMatrix& A = fortescue_matrix();
  return PhaseFrame(A * x.m * A.adjoint());
}

/// z_012 = A^H z_abc A.  For a circulant line (self zs, mutual zm) this is
/// diag(zs + 2zm, zs - zm, zs - zm).
inline CMatrix impedance_to_sequence(const CMatrix& z_abc) {
  return phase_to_sequence(PhaseFrame(z_abc)).m;
}

inline CMatrix impedance_to_phase(const CMatrix& z_012) {
  return sequence_to_phase(SequenceFrame(z_012)).m;
}

/// Voltage-vector transform V_012 = A^H V_abc.
inline CVector vector_to_sequence(const CVector& v_abc) {
  if (v_abc.size() != 3) throw ModelError("sequence transform needs a three-phase vector");
  return fortescue_matrix().adjoint() * v_abc;
}

inline CVector vector_to_phase(const CVector& v_012) {
  if (v_012.size() != 3) throw ModelError("sequence transform needs a three-phase vector");
  return fortescue_matrix() * v_012;
}

}  // namespace seqopf::symcomp
