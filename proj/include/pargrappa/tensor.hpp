#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

// Complex containers, centered orthonormal 2-D Fourier transforms, row
// sampling masks and the complex <-> real-isomorphic representations used by
// the reconstruction engines.

namespace pargrappa {

using Cx = std::complex<double>;
using CxMat = Eigen::MatrixXcd;  // an image or k-space plane, n_y rows x n_x cols
using CxVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using ByteMat = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

bool all_finite(const CxMat& m);

// Time series of multi-coil planes. Plane (t, c) is an n_y x n_x complex
// matrix; k-space or image domain depending on context.
class CoilSeries {
 public:
  CoilSeries() = default;
  CoilSeries(int nt, int nc, int ny, int nx);

  int nt() const { return nt_; }
  int nc() const { return nc_; }
  int ny() const { return ny_; }
  int nx() const { return nx_; }

  CxMat& at(int t, int c) { return planes_[static_cast<size_t>(t) * nc_ + c]; }
  const CxMat& at(int t, int c) const { return planes_[static_cast<size_t>(t) * nc_ + c]; }

 private:
  int nt_ = 0, nc_ = 0, ny_ = 0, nx_ = 0;
  std::vector<CxMat> planes_;
};

// Row-regular sampling pattern: row r is acquired iff
// (r - phase_offset) mod accel == 0.
struct SamplingMask {
  int ny = 0;
  int nx = 0;
  int accel = 1;
  int phase_offset = 0;

  SamplingMask() = default;
  SamplingMask(int ny_, int nx_, int accel_, int phase_offset_ = 0);

  bool row_acquired(int r) const {
    int m = (r - phase_offset) % accel;
    return (m < 0 ? m + accel : m) == 0;
  }
  std::vector<int> acquired_rows() const;
  std::vector<int> missing_rows() const;

  ByteMat to_matrix() const;
  // Recovers (accel, phase_offset) from a 0/1 matrix; throws if the rows are
  // not a regular comb.
  static SamplingMask from_matrix(const ByteMat& m);
};

// Centered (DC at floor(n/2)) orthonormal 2-D DFT pair: ft2(ift2(k)) == k and
// both preserve the l2 norm.
CxMat ft2(const CxMat& img);
CxMat ift2(const CxMat& k);

CxMat fftshift2(const CxMat& m);
CxMat ifftshift2(const CxMat& m);

// Zero-fills unacquired rows; acquired rows are copied verbatim.
CoilSeries subsample(const CoilSeries& ks, const SamplingMask& mask);

// Elementwise complex mean over the coil axis at one time point.
CxMat coil_average(const CoilSeries& ks, int t);

// [Re; Im] stacking of a complex vector (Eq-style isomorphism).
RVec to_iso_vector(const CxVec& f);
CxVec from_iso_vector(const RVec& v);  // throws on odd length

// [[W_R, -W_I], [W_I, W_R]] block matrix of a complex matrix.
RMat to_iso_matrix(const CxMat& w);
bool iso_blocks_consistent(const RMat& m, double tol = 0.0);

// D = [W_R, W_I], the unduplicated weight representation.
RMat weights_to_D(const CxMat& w);
CxMat D_to_weights(const RMat& d);

// 2p x 2 skew-symmetric representation of an iso vector f_k = [f_kR; f_kI]:
// columns [f_kR; -f_kI] and [f_kI; f_kR].
RMat fk_to_Fk(const RVec& fk);

}  // namespace pargrappa
