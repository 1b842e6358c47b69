#pragma once

#include <optional>
#include <vector>

#include "pargrappa/tensor.hpp"

// Activation statistics (magnitude and phase GLM, right-tailed t, BH-FDR) and
// image quality metrics (MSE, entropy, temporal variance, SNR/CNR).

namespace pargrappa {

struct GlmFit {
  double beta0 = 0;
  double beta1 = 0;
  double se_beta1 = 0;
  double sigma = 0;  // residual standard deviation, sqrt(RSS / (n-2))
  double t = 0;
  double p = 1;
};

// OLS on X = [1, x]; right-tailed p under Student-t(n-2). A zero residual
// variance reports t = 0, p = 1.
GlmFit fit_glm(const RVec& y, const std::vector<int>& x);

// Same contract on the temporally unwrapped phase series.
GlmFit fit_phase_glm(const RVec& phi, const std::vector<int>& x);

// Cumulative +-2pi correction whenever successive samples jump by more
// than pi.
RVec unwrap_phase(const RVec& phi);

// Right tail of Student-t with df degrees of freedom, 1e-10 accurate.
double student_t_right_tail(double t, double df);

// Benjamini-Hochberg step-up at level q; returns one flag per p-value.
std::vector<std::uint8_t> fdr_threshold(const std::vector<double>& p, double q = 0.05);

// Mean squared error over masked voxels; the phase variant wraps the
// difference into (-pi, pi].
double mse_magnitude(const CxMat& recon, const CxMat& truth, const ByteMat& mask);
double mse_phase(const CxMat& recon, const CxMat& truth, const ByteMat& mask);

// E = -sum (v/vmax) ln(v/vmax), vmax = sqrt(sum v^2), 0 ln 0 := 0.
double image_entropy(const RMat& magnitudes);

constexpr double kSnrCap = 1e12;

struct TemporalStats {
  RMat beta0, beta1, sigma;  // per-voxel GLM results on the magnitude series
  RMat variance;             // residual temporal variance
  RMat snr;                  // beta0 / sigma, capped at kSnrCap
  RMat t_stat;
  double roi_cnr = 0;        // mean over ROI of beta1 / sigma
};

// design == nullopt fits an intercept-only model (beta1 = 0, sigma = sample
// standard deviation).
TemporalStats temporal_stats(const std::vector<CxMat>& series,
                             const std::optional<std::vector<int>>& design,
                             const ByteMat& roi);

// Per coil: subtract the angular temporal mean, fit a second-order 2-D
// polynomial to each frame's residual phase over the brain voxels, remove it,
// and restore the mean. Magnitudes are untouched.
CoilSeries phase_drift_correct(const CoilSeries& images, const ByteMat& brain);

}  // namespace pargrappa
