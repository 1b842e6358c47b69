#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "pargrappa/grappa.hpp"
#include "pargrappa/tensor.hpp"

// Bayesian GRAPPA. The GRAPPA linear model is reoriented so the acquired
// frequencies are the response and the unacquired neighbours the latent
// predictors; priors for the latent values, the weights and the residual
// variance are assessed from the calibration scan and the per-group posterior
// mode is found by iterated conditional modes.

namespace pargrappa {

struct IcmScalars {
  double n_k = 1;      // prior scalar for f_k
  double n_w = 1;      // prior scalar for the weights
  double alpha_k = 1;  // inverse-gamma shape
  double delta = 1;    // inverse-gamma scale
};

struct IcmConfig {
  int max_iter = 10;
  double rel_tol = 1e-8;
  bool bootstrap_calibration = false;  // redraw calibration frames per time point
  int bootstrap_size = 0;
  std::optional<double> prior_scalar_override;  // replaces n_k and n_w when set
  std::uint64_t seed = 0;
  int threads = 1;
};

struct IcmState {
  RVec f_k;        // iso, length 2p
  RMat D;          // n_C x 2p
  double tau2 = 0;
  int iterations = 0;
  bool converged = false;
};

// One anchor-row geometry shared by all anchors with the same missing-row
// offsets (interior anchors share; boundary anchors differ).
struct BgrappaPattern {
  std::vector<int> row_offsets;  // assigned missing rows relative to the anchor
  std::vector<int> anchor_rows;  // ascending
};
std::vector<BgrappaPattern> bgrappa_patterns(const SamplingMask& mask);

struct GroupPrior {
  RVec f_k0;  // iso, length 2p
  RMat D0;    // n_C x 2p
};

struct Hyperparameters {
  double n_k = 0, n_w = 0, alpha_k = 0, delta = 0, tau0_sq = 0;
  int n_cal = 0;
  bool tau0_clamped = false;
  std::vector<BgrappaPattern> patterns;
  // priors[pattern][anchor_index * nx + col]
  std::vector<std::vector<GroupPrior>> priors;

  IcmScalars scalars() const { return {n_k, n_w, alpha_k, delta}; }
};

// Assessment per missing-point group (Fig. 4 role swap): D0 from the
// role-swapped least squares, f_k0 as the temporal mean of the sources, the
// scalars from n_cal and the pooled residual k-space variance. `frames`
// restricts to a subset of calibration frames (bootstrap mode).
Hyperparameters assess_hyperparameters(const CoilSeries& calib, const SamplingMask& mask,
                                       const KernelSpec& kernel,
                                       const std::vector<int>* frames = nullptr,
                                       std::optional<double> prior_scalar_override = {},
                                       int threads = 1);

// Posterior conditional modes. W is the iso design assembled from the current
// D; f_e is the iso-stacked acquired vector (length 2 n_C).
RVec icm_update_fk(const RMat& w, const RVec& f_e, double n_k, const RVec& f_k0);
RMat icm_update_D(const RVec& f_k, const RVec& f_e, double n_w, const RMat& d0);
double icm_theta(const RVec& f_k, const RMat& d, const RVec& f_e, const RVec& f_k0,
                 const RMat& d0, const IcmScalars& s);
double icm_update_tau2(const RVec& f_k, const RMat& d, const RVec& f_e, const RVec& f_k0,
                       const RMat& d0, const IcmScalars& s);

// Joint log-posterior (up to an additive constant) whose coordinate-wise
// maximizers are exactly the three updates above.
double icm_log_posterior(const RVec& f_k, const RMat& d, double tau2, const RVec& f_e,
                         const RVec& f_k0, const RMat& d0, const IcmScalars& s);

// Full ICM loop from the prior means; stops when the max relative l2 change
// of f_k and D drops below rel_tol or after max_iter sweeps.
IcmState icm_map(const RVec& f_e, const RVec& f_k0, const RMat& d0, const IcmScalars& s,
                 const IcmConfig& cfg,
                 const std::function<void(const IcmState&)>& observer = {});

struct FrameLog {
  int t = 0;
  int groups = 0;
  int max_sweeps = 0;
  double mean_tau2 = 0;
  double ms = 0;
};

// `filled` (optional) receives the estimated full coil k-space; acquired
// entries pass through unmodified.
std::vector<CxMat> bgrappa_reconstruct(const CoilSeries& sub, const CoilSeries& calib,
                                       const SamplingMask& mask, const KernelSpec& kernel,
                                       const IcmConfig& cfg,
                                       std::vector<FrameLog>* frame_log = nullptr,
                                       CoilSeries* filled = nullptr);

}  // namespace pargrappa
