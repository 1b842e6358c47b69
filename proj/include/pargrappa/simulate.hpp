#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pargrappa/tensor.hpp"

// Synthetic fMRI experiment generator: labeled phantom, designed coil
// sensitivities, block task design, initial-frame signal scaling, k-space
// noise, subsampling, and the matching calibration scan.

namespace pargrappa {

struct Phantom {
  CxMat image;      // true noiseless complex object
  ByteMat tissue;   // 0 background, 1 white, 2 grey, 3 CSF
  ByteMat brain;    // nonzero inside the head
};

// Deterministic piecewise phantom. Styles: "brain" (elliptical head with
// tissue bands and ventricles) or "disk".
Phantom make_phantom(int ny, int nx, const std::string& style = "brain");

struct SensitivityMaps {
  std::vector<CxMat> maps;  // n_C planes
};

// Smooth complex coil profiles centered around the FOV perimeter. The global
// amplitude is normalized so that, under the default acquisition settings,
// the reference reconstruction of a beta1 = 0.045 task lands at CNR ~ 0.75.
SensitivityMaps make_sensitivities(int nc, int ny, int nx);

// Elementwise product per coil.
std::vector<CxMat> coil_weight(const CxMat& img, const SensitivityMaps& maps);

// factors[frame][tissue-1] for the first three frames, tissues
// {white, grey, CSF}; each >= 1 and non-increasing across frames.
using TissueFactors = std::array<std::array<double, 3>, 3>;
TissueFactors default_tissue_factors();

void scale_initial_frames(std::vector<CxMat>& frames, const ByteMat& tissue,
                          const TissueFactors& factors);

struct NoiseSpec {
  double variance_scale = 0.0036;  // per-component variance is scale * n_y * n_x
  std::uint64_t seed = 0;
};

// Adds iid N(0, scale * n_y * n_x) to the real and imaginary part of every
// element; the (stream_tag, frame, coil) tuple seeds independent streams.
void add_kspace_noise(CoilSeries& ks, const NoiseSpec& spec, std::uint64_t stream_tag = 0);

// Magnitude increased additively by beta1, phase by theta1, inside the ROI
// only. Rejects theta1 != 0 on a zero-magnitude ROI voxel.
CxMat inject_task(const CxMat& img, const ByteMat& roi, double beta1, double theta1);

struct ExperimentDesign {
  int n_rest_head = 20;
  int epoch_count = 16;
  int off_len = 15;
  int on_len = 15;
  int n_rest_tail = 10;
  int discard = 20;

  int n_tr() const { return n_rest_head + epoch_count * (off_len + on_len) + n_rest_tail; }
  int n_img() const { return n_tr() - discard; }
  std::vector<int> schedule() const;             // 0/1 per frame, length n_tr
  std::vector<int> design_after_discard() const;
};

// 28-voxel blob in the left-motor-cortex analog of the phantom.
ByteMat default_roi(const Phantom& ph, int n_voxels = 28);

struct SimParams {
  int ny = 96, nx = 96, nc = 8;
  int accel = 3;
  int phase_offset = 0;
  int ncal = 30;
  std::uint64_t seed = 0;
  double beta1 = 0.045;
  double theta1 = 3.14159265358979323846 / 120.0;
  double noise_scale = 0.0036;
  ExperimentDesign design;
  bool with_task = true;
  bool keep_full = true;  // retain the unsubsampled noisy series
  std::string phantom_style = "brain";
};

struct SimOutput {
  SamplingMask mask;
  CoilSeries calib;       // ncal full noisy frames (the calibration scan tail)
  CoilSeries subsampled;  // n_img zero-filled frames
  CoilSeries full;        // n_img full noisy frames when keep_full
  std::vector<int> design;
  CxMat truth_nontask;    // coil-mean-sensitivity-weighted object
  CxMat truth_task;
  ByteMat brain, roi, tissue;
};

SimOutput simulate_experiment(const SimParams& params);

// Per frame: coil average then ift2 (the no-acceleration baseline).
std::vector<CxMat> reference_reconstruct(const CoilSeries& full, int threads = 1);

}  // namespace pargrappa
