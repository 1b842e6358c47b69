#include "pargrappa/tensor.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace pargrappa {

bool all_finite(const CxMat& m) {
  return m.real().allFinite() && m.imag().allFinite();
}

CoilSeries::CoilSeries(int nt, int nc, int ny, int nx)
    : nt_(nt), nc_(nc), ny_(ny), nx_(nx) {
  if (nt < 1 || nc < 1 || ny < 1 || nx < 1)
    throw std::invalid_argument("CoilSeries: all dimensions must be >= 1");
  planes_.assign(static_cast<size_t>(nt) * nc, CxMat::Zero(ny, nx));
}

SamplingMask::SamplingMask(int ny_, int nx_, int accel_, int phase_offset_)
    : ny(ny_), nx(nx_), accel(accel_), phase_offset(phase_offset_) {
  if (ny < 1 || nx < 1) throw std::invalid_argument("SamplingMask: empty grid");
  if (accel < 1) throw std::invalid_argument("SamplingMask: accel must be >= 1");
  if (phase_offset < 0 || phase_offset >= accel)
    throw std::invalid_argument("SamplingMask: phase_offset must lie in [0, accel)");
  if (phase_offset >= ny)
    throw std::invalid_argument("SamplingMask: no acquired row in grid");
}

std::vector<int> SamplingMask::acquired_rows() const {
  std::vector<int> rows;
  for (int r = 0; r < ny; ++r)
    if (row_acquired(r)) rows.push_back(r);
  return rows;
}

std::vector<int> SamplingMask::missing_rows() const {
  std::vector<int> rows;
  for (int r = 0; r < ny; ++r)
    if (!row_acquired(r)) rows.push_back(r);
  return rows;
}

ByteMat SamplingMask::to_matrix() const {
  ByteMat m(ny, nx);
  for (int r = 0; r < ny; ++r) m.row(r).setConstant(row_acquired(r) ? 1 : 0);
  return m;
}

SamplingMask SamplingMask::from_matrix(const ByteMat& m) {
  const int ny = static_cast<int>(m.rows());
  const int nx = static_cast<int>(m.cols());
  if (ny < 1 || nx < 1) throw std::invalid_argument("mask: empty matrix");
  std::vector<int> rows;
  for (int r = 0; r < ny; ++r) {
    const std::uint8_t v0 = m(r, 0);
    for (int c = 0; c < nx; ++c) {
      if (m(r, c) > 1) throw std::invalid_argument("mask: values must be 0/1");
      if (m(r, c) != v0) throw std::invalid_argument("mask: rows must be uniform");
    }
    if (v0) rows.push_back(r);
  }
  if (rows.empty()) throw std::invalid_argument("mask: no acquired row");
  int accel = ny;  // single acquired row: period defaults to the full extent
  if (rows.size() > 1) {
    accel = rows[1] - rows[0];
    for (size_t i = 1; i + 1 < rows.size(); ++i)
      if (rows[i + 1] - rows[i] != accel)
        throw std::invalid_argument("mask: acquired rows are not a regular comb");
  }
  const int phase_offset = rows[0];
  if (phase_offset >= accel)
    throw std::invalid_argument("mask: first acquired row exceeds the period");
  SamplingMask out(ny, nx, accel, phase_offset);
  // The trailing partial period must agree too.
  for (int r = 0; r < ny; ++r)
    if (out.row_acquired(r) != (m(r, 0) != 0))
      throw std::invalid_argument("mask: acquired rows are not a regular comb");
  return out;
}

namespace {

// fftshift of a length-n axis moves index 0 to floor(n/2).
inline int shift_fwd(int n) { return n / 2; }

CxMat roll(const CxMat& m, int dr, int dc) {
  const int ny = static_cast<int>(m.rows());
  const int nx = static_cast<int>(m.cols());
  CxMat out(ny, nx);
  for (int c = 0; c < nx; ++c) {
    const int cc = (c + dc) % nx;
    for (int r = 0; r < ny; ++r) out((r + dr) % ny, cc) = m(r, c);
  }
  return out;
}

std::mutex g_plan_mutex;
std::map<std::tuple<int, int, int>, fftw_plan> g_plans;

fftw_plan plan_for(int ny, int nx, int sign) {
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  auto key = std::make_tuple(ny, nx, sign);
  auto it = g_plans.find(key);
  if (it != g_plans.end()) return it->second;
  std::vector<Cx> scratch_in(static_cast<size_t>(ny) * nx);
  std::vector<Cx> scratch_out(static_cast<size_t>(ny) * nx);
  // Eigen matrices are column-major; a 2-D DFT is axis-symmetric, so plan the
  // transposed shape and index columns as fftw "rows".
  fftw_plan p = fftw_plan_dft_2d(
      nx, ny, reinterpret_cast<fftw_complex*>(scratch_in.data()),
      reinterpret_cast<fftw_complex*>(scratch_out.data()), sign,
      FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!p) throw std::runtime_error("fftw: planning failed");
  g_plans.emplace(key, p);
  return p;
}

CxMat dft2(const CxMat& in, int sign) {
  const int ny = static_cast<int>(in.rows());
  const int nx = static_cast<int>(in.cols());
  fftw_plan p = plan_for(ny, nx, sign);
  CxMat src = in;  // fftw_execute_dft may not alias in place with this plan
  CxMat out(ny, nx);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(src.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

}  // namespace

CxMat fftshift2(const CxMat& m) {
  return roll(m, shift_fwd(static_cast<int>(m.rows())), shift_fwd(static_cast<int>(m.cols())));
}

CxMat ifftshift2(const CxMat& m) {
  const int ny = static_cast<int>(m.rows());
  const int nx = static_cast<int>(m.cols());
  return roll(m, ny - shift_fwd(ny), nx - shift_fwd(nx));
}

CxMat ft2(const CxMat& img) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(img.size()));
  return fftshift2(dft2(ifftshift2(img), FFTW_FORWARD)) * scale;
}

CxMat ift2(const CxMat& k) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(k.size()));
  return fftshift2(dft2(ifftshift2(k), FFTW_BACKWARD)) * scale;
}

CoilSeries subsample(const CoilSeries& ks, const SamplingMask& mask) {
  if (mask.ny != ks.ny() || mask.nx != ks.nx())
    throw std::invalid_argument("subsample: mask dimensions do not match series");
  CoilSeries out(ks.nt(), ks.nc(), ks.ny(), ks.nx());
  for (int t = 0; t < ks.nt(); ++t)
    for (int c = 0; c < ks.nc(); ++c) {
      CxMat& dst = out.at(t, c);
      const CxMat& src = ks.at(t, c);
      for (int r = 0; r < ks.ny(); ++r)
        if (mask.row_acquired(r)) dst.row(r) = src.row(r);
    }
  return out;
}

CxMat coil_average(const CoilSeries& ks, int t) {
  if (t < 0 || t >= ks.nt()) throw std::out_of_range("coil_average: bad time index");
  CxMat acc = ks.at(t, 0);
  for (int c = 1; c < ks.nc(); ++c) acc += ks.at(t, c);
  return acc / static_cast<double>(ks.nc());
}

RVec to_iso_vector(const CxVec& f) {
  RVec v(2 * f.size());
  v.head(f.size()) = f.real();
  v.tail(f.size()) = f.imag();
  return v;
}

CxVec from_iso_vector(const RVec& v) {
  if (v.size() % 2 != 0)
    throw std::invalid_argument("from_iso_vector: length must be even");
  const Eigen::Index m = v.size() / 2;
  CxVec f(m);
  f.real() = v.head(m);
  f.imag() = v.tail(m);
  return f;
}

RMat to_iso_matrix(const CxMat& w) {
  const Eigen::Index a = w.rows(), b = w.cols();
  RMat m(2 * a, 2 * b);
  m.topLeftCorner(a, b) = w.real();
  m.topRightCorner(a, b) = -w.imag();
  m.bottomLeftCorner(a, b) = w.imag();
  m.bottomRightCorner(a, b) = w.real();
  return m;
}

bool iso_blocks_consistent(const RMat& m, double tol) {
  if (m.rows() % 2 != 0 || m.cols() % 2 != 0) return false;
  const Eigen::Index a = m.rows() / 2, b = m.cols() / 2;
  const double d1 = (m.topLeftCorner(a, b) - m.bottomRightCorner(a, b)).cwiseAbs().maxCoeff();
  const double d2 = (m.topRightCorner(a, b) + m.bottomLeftCorner(a, b)).cwiseAbs().maxCoeff();
  return d1 <= tol && d2 <= tol;
}

RMat weights_to_D(const CxMat& w) {
  RMat d(w.rows(), 2 * w.cols());
  d.leftCols(w.cols()) = w.real();
  d.rightCols(w.cols()) = w.imag();
  return d;
}

CxMat D_to_weights(const RMat& d) {
  if (d.cols() % 2 != 0)
    throw std::invalid_argument("D_to_weights: column count must be even");
  const Eigen::Index p = d.cols() / 2;
  CxMat w(d.rows(), p);
  w.real() = d.leftCols(p);
  w.imag() = d.rightCols(p);
  return w;
}

RMat fk_to_Fk(const RVec& fk) {
  if (fk.size() % 2 != 0)
    throw std::invalid_argument("fk_to_Fk: length must be even");
  const Eigen::Index p = fk.size() / 2;
  RMat m(2 * p, 2);
  m.col(0).head(p) = fk.head(p);
  m.col(0).tail(p) = -fk.tail(p);
  m.col(1).head(p) = fk.tail(p);
  m.col(1).tail(p) = fk.head(p);
  return m;
}

}  // namespace pargrappa
