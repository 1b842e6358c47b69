#include "pargrappa/grappa.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "pargrappa/io.hpp"
#include "pargrappa/threading.hpp"

namespace pargrappa {

namespace {
constexpr double kGramConditionLimit = 1e12;
}

KernelSpec::KernelSpec(int rows, int cols) : k_rows(rows), k_cols(cols) {
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("KernelSpec: kernel dimensions must be >= 1");
}

std::vector<int> grappa_source_rows(int r, const SamplingMask& mask, int k_rows) {
  const std::vector<int> acq = mask.acquired_rows();
  std::vector<int> cand = acq;
  std::sort(cand.begin(), cand.end(), [r](int a, int b) {
    const int da = std::abs(a - r), db = std::abs(b - r);
    if (da != db) return da < db;
    return a < b;  // tie -> the row above
  });
  std::vector<int> rows;
  for (int a : cand) {
    rows.push_back(a);
    if (static_cast<int>(rows.size()) == k_rows) break;
  }
  // Degenerate masks with fewer acquired rows than kernel rows: repeat.
  size_t i = 0;
  while (static_cast<int>(rows.size()) < k_rows) rows.push_back(rows[i++ % rows.size()]);
  std::sort(rows.begin(), rows.end());
  return rows;
}

std::vector<int> window_cols(int c, int k_cols, int nx) {
  if (k_cols > nx) throw std::invalid_argument("kernel wider than the array");
  int start = c - k_cols / 2;
  start = std::clamp(start, 0, nx - k_cols);
  std::vector<int> cols(k_cols);
  for (int i = 0; i < k_cols; ++i) cols[i] = start + i;
  return cols;
}

int nearest_acquired_row(int r, const SamplingMask& mask) {
  int best = -1, best_d = mask.ny + 1;
  for (int a : mask.acquired_rows()) {
    const int d = std::abs(a - r);
    if (d < best_d || (d == best_d && a < r)) {
      best = a;
      best_d = d;
    }
  }
  return best;
}

std::vector<MissingClass> missing_classes(const SamplingMask& mask, const KernelSpec& kernel) {
  std::map<std::vector<int>, std::vector<int>> by_pattern;
  for (int r : mask.missing_rows()) {
    std::vector<int> offs = grappa_source_rows(r, mask, kernel.k_rows);
    for (int& o : offs) o -= r;
    by_pattern[offs].push_back(r);
  }
  std::vector<MissingClass> out;
  out.reserve(by_pattern.size() * mask.nx);
  for (int c = 0; c < mask.nx; ++c) {
    const std::vector<int> cols = window_cols(c, kernel.k_cols, mask.nx);
    for (const auto& [pattern, rows] : by_pattern) {
      MissingClass mc;
      mc.col = c;
      mc.row_offsets = pattern;
      mc.src_cols = cols;
      mc.target_rows = rows;
      out.push_back(std::move(mc));
    }
  }
  return out;
}

namespace {

// Columns of one placement appended to (targets, sources) at column base.
void fill_placement(const CoilSeries& calib, int target_row, int target_col,
                    const std::vector<int>& src_rows, const std::vector<int>& src_cols,
                    CxMat& targets, CxMat& sources, int base) {
  const int nc = calib.nc();
  for (int t = 0; t < calib.nt(); ++t) {
    for (int coil = 0; coil < nc; ++coil)
      targets(coil, base + t) = calib.at(t, coil)(target_row, target_col);
    int slot = 0;
    for (int sr : src_rows)
      for (int sc : src_cols) {
        for (int coil = 0; coil < nc; ++coil)
          sources(slot * nc + coil, base + t) = calib.at(t, coil)(sr, sc);
        ++slot;
      }
  }
}

}  // namespace

std::vector<int> assigned_missing_rows(int anchor, const SamplingMask& mask) {
  std::vector<int> rows;
  for (int r : mask.missing_rows())
    if (nearest_acquired_row(r, mask) == anchor) rows.push_back(r);
  return rows;
}

CalibrationSystem gather_calibration_system(const CoilSeries& calib, const SamplingMask& mask,
                                            const KernelSpec& kernel, KPoint target,
                                            CalibRole role) {
  if (calib.nt() < 1) throw std::invalid_argument("gather: empty calibration series");
  if (calib.ny() != mask.ny || calib.nx() != mask.nx)
    throw std::invalid_argument("gather: mask does not match calibration dims");
  if (target.row < 0 || target.row >= mask.ny || target.col < 0 || target.col >= mask.nx)
    throw std::invalid_argument("gather: target outside the array");

  std::vector<int> src_rows;
  if (role == CalibRole::Grappa) {
    if (mask.row_acquired(target.row))
      throw std::invalid_argument("gather: GRAPPA target must be a would-be-missing point");
    src_rows = grappa_source_rows(target.row, mask, kernel.k_rows);
  } else {
    if (!mask.row_acquired(target.row))
      throw std::invalid_argument("gather: BGRAPPA target must be an acquired anchor");
    src_rows = assigned_missing_rows(target.row, mask);
    if (src_rows.empty())
      throw std::invalid_argument("gather: anchor has no assigned missing rows");
  }
  const std::vector<int> src_cols = window_cols(target.col, kernel.k_cols, mask.nx);
  const int p = static_cast<int>(src_rows.size() * src_cols.size()) * calib.nc();

  CalibrationSystem sys;
  sys.targets.resize(calib.nc(), calib.nt());
  sys.sources.resize(p, calib.nt());
  fill_placement(calib, target.row, target.col, src_rows, src_cols, sys.targets, sys.sources, 0);
  return sys;
}

CxMat estimate_weights(const CalibrationSystem& sys) {
  const CxMat& S = sys.sources;
  const CxMat& T = sys.targets;
  if (S.cols() != T.cols() || S.cols() < 1)
    throw std::invalid_argument("estimate_weights: inconsistent system");
  const CxMat gram = S * S.adjoint();

  Eigen::SelfAdjointEigenSolver<CxMat> eig(gram, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  const double lo = ev.minCoeff(), hi = ev.maxCoeff();
  if (lo > 0.0 && hi / lo < kGramConditionLimit) {
    const CxMat rhs = S * T.adjoint();               // gram * W^dag = S T^dag
    return gram.llt().solve(rhs).adjoint().eval();
  }
  // Minimum-norm fallback: W = T pinv(S).
  Eigen::JacobiSVD<CxMat> svd(S, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cut = sv.size() ? sv(0) * 1e-12 : 0.0;
  CxMat w = CxMat::Zero(T.rows(), S.rows());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) <= cut) break;
    w += (T * svd.matrixV().col(i)) * svd.matrixU().col(i).adjoint() / sv(i);
  }
  return w;
}

WeightSet estimate_weights_all(const CoilSeries& calib, const SamplingMask& mask,
                               const KernelSpec& kernel) {
  WeightSet ws;
  ws.kernel = kernel;
  ws.classes = missing_classes(mask, kernel);
  ws.weights.resize(ws.classes.size());
  const int nc = calib.nc();
  parallel_for(static_cast<int>(ws.classes.size()), 1, [&](int i) {
    const MissingClass& mc = ws.classes[i];
    const int p = static_cast<int>(mc.row_offsets.size() * mc.src_cols.size()) * nc;
    const int m = calib.nt() * static_cast<int>(mc.target_rows.size());
    CalibrationSystem sys;
    sys.targets.resize(nc, m);
    sys.sources.resize(p, m);
    int base = 0;
    for (int r : mc.target_rows) {
      std::vector<int> rows = mc.row_offsets;
      for (int& o : rows) o += r;
      fill_placement(calib, r, mc.col, rows, mc.src_cols, sys.targets, sys.sources, base);
      base += calib.nt();
    }
    ws.weights[i] = estimate_weights(sys);
  });
  return ws;
}

void interpolate_missing(std::vector<CxMat>& planes, const SamplingMask& mask,
                         const WeightSet& weights, bool use_iso_path) {
  const int nc = static_cast<int>(planes.size());
  if (nc < 1) throw std::invalid_argument("interpolate: no coil planes");
  if (planes[0].rows() != mask.ny || planes[0].cols() != mask.nx)
    throw std::invalid_argument("interpolate: mask does not match planes");
  if (weights.classes.size() != weights.weights.size())
    throw std::invalid_argument("interpolate: weight set is missing classes");
  // The weight set must cover exactly this mask's missing points.
  size_t covered = 0;
  for (const MissingClass& mc : weights.classes) {
    for (int r : mc.target_rows)
      if (mask.row_acquired(r))
        throw std::invalid_argument("interpolate: weight class targets an acquired row");
    covered += mc.target_rows.size();
  }
  if (covered != mask.missing_rows().size() * static_cast<size_t>(mask.nx))
    throw std::invalid_argument("interpolate: weight set does not cover the mask");

  for (size_t i = 0; i < weights.classes.size(); ++i) {
    const MissingClass& mc = weights.classes[i];
    const CxMat& w = weights.weights[i];
    const int p = static_cast<int>(mc.row_offsets.size() * mc.src_cols.size()) * nc;
    if (w.rows() != nc || w.cols() != p)
      throw std::invalid_argument("interpolate: weight shape does not match class");
    const RMat w_iso = use_iso_path ? to_iso_matrix(w) : RMat();
    CxVec f_kc(p);
    for (int r : mc.target_rows) {
      int slot = 0;
      for (int dr : mc.row_offsets)
        for (int sc : mc.src_cols) {
          for (int coil = 0; coil < nc; ++coil) f_kc(slot * nc + coil) = planes[coil](r + dr, sc);
          ++slot;
        }
      CxVec f_ec;
      if (use_iso_path) {
        f_ec = from_iso_vector(w_iso * to_iso_vector(f_kc));
      } else {
        f_ec = w * f_kc;
      }
      for (int coil = 0; coil < nc; ++coil) planes[coil](r, mc.col) = f_ec(coil);
    }
  }
}

std::vector<CxMat> grappa_reconstruct(const CoilSeries& sub, const CoilSeries& calib,
                                      const SamplingMask& mask, const KernelSpec& kernel,
                                      int threads) {
  if (sub.nc() != calib.nc())
    throw std::invalid_argument("grappa_reconstruct: coil counts differ");
  if (sub.ny() != mask.ny || sub.nx() != mask.nx)
    throw std::invalid_argument("grappa_reconstruct: mask does not match series");

  WeightSet ws;
  const bool any_missing = !mask.missing_rows().empty();
  if (any_missing) ws = estimate_weights_all(calib, mask, kernel);

  std::vector<CxMat> images(sub.nt());
  parallel_for(sub.nt(), threads, [&](int t) {
    std::vector<CxMat> planes(sub.nc());
    for (int c = 0; c < sub.nc(); ++c) planes[c] = sub.at(t, c);
    if (any_missing) interpolate_missing(planes, mask, ws);
    CxMat avg = planes[0];
    for (int c = 1; c < sub.nc(); ++c) avg += planes[c];
    avg /= static_cast<double>(sub.nc());
    images[t] = ift2(avg);
  });
  return images;
}

}  // namespace pargrappa
