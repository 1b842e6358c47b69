#pragma once

#include <filesystem>
#include <vector>

#include "pargrappa/tensor.hpp"

// Classical GRAPPA: per-missing-point-class interpolation weights estimated
// from fully sampled calibration frames, then applied to fill unacquired
// k-space rows.

namespace pargrappa {

struct KernelSpec {
  int k_rows = 2;  // acquired source rows bracketing the target (GRAPPA role)
  int k_cols = 1;  // centered column window, clamped at array edges

  KernelSpec() = default;
  KernelSpec(int rows, int cols);
  int p(int nc) const { return nc * k_rows * k_cols; }
};

// The k_rows acquired rows nearest to row r (distance tie -> the row above),
// sorted ascending. Falls back to repeating the nearest rows only when fewer
// distinct acquired rows exist.
std::vector<int> grappa_source_rows(int r, const SamplingMask& mask, int k_rows);

// Centered k_cols window around column c, clamped to [0, nx), sorted.
std::vector<int> window_cols(int c, int k_cols, int nx);

// Nearest acquired row to missing row r (tie -> the acquired row above).
int nearest_acquired_row(int r, const SamplingMask& mask);

// Missing rows whose nearest acquired row is `anchor`, ascending. These form
// the f_k window of a BGRAPPA group; together the anchors tile the missing
// rows exactly once.
std::vector<int> assigned_missing_rows(int anchor, const SamplingMask& mask);

// All missing-point classes of a mask: one per (column, relative source-row
// pattern). Interior rows with the same period offset share a class; boundary
// rows whose clamped windows differ get their own.
struct MissingClass {
  int col = 0;
  std::vector<int> row_offsets;   // source rows relative to the target row
  std::vector<int> src_cols;      // absolute source columns (clamped window)
  std::vector<int> target_rows;   // member rows, ascending
};
std::vector<MissingClass> missing_classes(const SamplingMask& mask, const KernelSpec& kernel);

struct CalibrationSystem {
  CxMat targets;  // n_C x M
  CxMat sources;  // p x M, column m corresponds to targets column m
};

enum class CalibRole { Grappa, Bgrappa };

struct KPoint {
  int row = 0;
  int col = 0;
};

// One placement: M = n_cal columns gathered across the calibration frames.
// Grappa role: target at a would-be-missing point, sources at the bracketing
// acquired rows. Bgrappa role: target at an acquired (anchor) row, sources at
// the missing rows assigned to that anchor. Source layout is location-major,
// coil-minor: sources slot*nC + coil.
CalibrationSystem gather_calibration_system(const CoilSeries& calib, const SamplingMask& mask,
                                            const KernelSpec& kernel, KPoint target,
                                            CalibRole role);

// Eq.-style least squares: W = T S^dag (S S^dag)^{-1}; minimum-norm
// pseudoinverse when the source Gram is singular or condition > 1e12.
CxMat estimate_weights(const CalibrationSystem& sys);

struct WeightSet {
  KernelSpec kernel;
  std::vector<MissingClass> classes;
  std::vector<CxMat> weights;  // per class, n_C x p
};

WeightSet estimate_weights_all(const CoilSeries& calib, const SamplingMask& mask,
                               const KernelSpec& kernel);

// Fills unacquired entries of frame t in place; acquired entries are not
// touched. planes must hold the n_C coil matrices of one time point.
// use_iso_path evaluates Eq. 2.4's real block product instead of the complex
// product (identical to rounding).
void interpolate_missing(std::vector<CxMat>& planes, const SamplingMask& mask,
                         const WeightSet& weights, bool use_iso_path = false);

// Full pipeline per frame: interpolate -> coil average -> ift2. Weights are
// estimated once from the calibration series and fixed over time.
std::vector<CxMat> grappa_reconstruct(const CoilSeries& sub, const CoilSeries& calib,
                                      const SamplingMask& mask, const KernelSpec& kernel,
                                      int threads = 1);

// Weight sets persist as a KTS1 rank-3 tensor (class x n_C x p, zero-padded
// to the widest class) next to a plain-text header <path>.hdr naming the
// kernel geometry and per-class layout.
void save_weightset(const std::filesystem::path& path, const WeightSet& ws);
WeightSet load_weightset(const std::filesystem::path& path);

}  // namespace pargrappa
