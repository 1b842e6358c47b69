#include "pargrappa/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pargrappa/rng.hpp"
#include "pargrappa/threading.hpp"

namespace pargrappa {

namespace {
constexpr std::uint64_t kStreamExperiment = 0x45585045ull;  // "EXPE"
constexpr std::uint64_t kStreamCalibration = 0x43414C49ull; // "CALI"
}  // namespace

Phantom make_phantom(int ny, int nx, const std::string& style) {
  if (ny < 16 || nx < 16)
    throw std::invalid_argument("make_phantom: dimensions must be >= 16");
  if (style != "brain" && style != "disk")
    throw std::invalid_argument("make_phantom: unknown style " + style);

  Phantom ph;
  ph.image = CxMat::Zero(ny, nx);
  ph.tissue = ByteMat::Zero(ny, nx);
  ph.brain = ByteMat::Zero(ny, nx);

  const double cy = (ny - 1) / 2.0, cx = (nx - 1) / 2.0;
  const double ry = (style == "disk") ? 0.42 * std::min(ny, nx) : 0.42 * ny;
  const double rx = (style == "disk") ? 0.42 * std::min(ny, nx) : 0.38 * nx;

  for (int r = 0; r < ny; ++r)
    for (int c = 0; c < nx; ++c) {
      const double u = (r - cy) / ry;
      const double v = (c - cx) / rx;
      const double rho = std::sqrt(u * u + v * v);
      if (rho > 1.0) continue;
      ph.brain(r, c) = 1;

      int label;
      if (rho > 0.85) {
        label = 3;  // CSF rim
      } else if (rho > 0.62) {
        label = 2;  // grey band
      } else {
        label = 1;  // white core
      }
      // Two small CSF ventricles near the center.
      const double dv1 = std::hypot((u + 0.12) / 0.16, (v + 0.18) / 0.10);
      const double dv2 = std::hypot((u + 0.12) / 0.16, (v - 0.18) / 0.10);
      if (dv1 <= 1.0 || dv2 <= 1.0) label = 3;
      ph.tissue(r, c) = static_cast<std::uint8_t>(label);

      const double base = (label == 1) ? 0.90 : (label == 2) ? 1.05 : 1.30;
      const double texture = 1.0 + 0.06 * std::sin(3.0 * u + 1.3) * std::cos(2.0 * v - 0.7);
      const double phase = 0.35 * u + 0.55 * v + 0.25 * u * v;
      ph.image(r, c) = std::polar(base * texture, phase);
    }
  return ph;
}

SensitivityMaps make_sensitivities(int nc, int ny, int nx) {
  if (nc < 1) throw std::invalid_argument("make_sensitivities: need at least one coil");
  const double cy = (ny - 1) / 2.0, cx = (nx - 1) / 2.0;
  const double sigma = 0.45 * std::min(ny, nx);
  const double two_pi = 2.0 * 3.14159265358979323846;

  SensitivityMaps sm;
  sm.maps.assign(nc, CxMat::Zero(ny, nx));
  for (int c = 0; c < nc; ++c) {
    const double ang = two_pi * c / nc;
    const double pr = cy + 0.5 * (ny - 1) * std::sin(ang);
    const double pc = cx + 0.5 * (nx - 1) * std::cos(ang);
    for (int r = 0; r < ny; ++r)
      for (int x = 0; x < nx; ++x) {
        const double d2 = (r - pr) * (r - pr) + (x - pc) * (x - pc);
        const double amp = 0.35 + std::exp(-d2 / (2.0 * sigma * sigma));
        const double phase = 0.30 * ((r - cy) * std::sin(ang) + (x - cx) * std::cos(ang)) /
                                 std::min(ny, nx) +
                             0.05 * ang;
        sm.maps[c](r, x) = std::polar(amp, phase);
      }
  }

  // Normalize the coil-mean gain over the head region so the default
  // acquisition (noise 0.0036 n_y n_x, n_C-coil average, beta1 = 0.045)
  // reproduces the reference CNR of 0.75.
  CxMat mean = sm.maps[0];
  for (int c = 1; c < nc; ++c) mean += sm.maps[c];
  mean /= static_cast<double>(nc);
  const double r_head = 0.38 * std::min(ny, nx);
  double gain = 0;
  int count = 0;
  for (int r = 0; r < ny; ++r)
    for (int x = 0; x < nx; ++x)
      if (std::hypot(r - cy, x - cx) <= r_head) {
        gain += std::abs(mean(r, x));
        ++count;
      }
  gain /= count;
  const double target = (0.75 / 0.045) * std::sqrt(0.0036 * ny * nx / nc);
  const double scale = target / gain;
  for (auto& m : sm.maps) m *= scale;
  return sm;
}

std::vector<CxMat> coil_weight(const CxMat& img, const SensitivityMaps& maps) {
  std::vector<CxMat> out;
  out.reserve(maps.maps.size());
  for (const auto& m : maps.maps) {
    if (m.rows() != img.rows() || m.cols() != img.cols())
      throw std::invalid_argument("coil_weight: map dimensions do not match image");
    out.push_back(m.cwiseProduct(img));
  }
  return out;
}

TissueFactors default_tissue_factors() {
  // First frame per the experimental ratios; frames two and three step
  // linearly back to 1.
  TissueFactors f;
  const std::array<double, 3> first = {1.40, 1.55, 1.75};
  for (int frame = 0; frame < 3; ++frame)
    for (int k = 0; k < 3; ++k)
      f[frame][k] = 1.0 + (first[k] - 1.0) * (3 - frame) / 3.0;
  return f;
}

void scale_initial_frames(std::vector<CxMat>& frames, const ByteMat& tissue,
                          const TissueFactors& factors) {
  for (int frame = 0; frame < 3; ++frame)
    for (int k = 0; k < 3; ++k) {
      if (factors[frame][k] < 1.0)
        throw std::invalid_argument("scale_initial_frames: factors must be >= 1");
      if (frame > 0 && factors[frame][k] > factors[frame - 1][k])
        throw std::invalid_argument("scale_initial_frames: factors must not increase");
    }
  const int n = std::min<int>(3, static_cast<int>(frames.size()));
  for (int frame = 0; frame < n; ++frame) {
    CxMat& img = frames[frame];
    if (img.rows() != tissue.rows() || img.cols() != tissue.cols())
      throw std::invalid_argument("scale_initial_frames: tissue labels do not match image");
    for (Eigen::Index r = 0; r < img.rows(); ++r)
      for (Eigen::Index c = 0; c < img.cols(); ++c) {
        const int label = tissue(r, c);
        if (label >= 1 && label <= 3) img(r, c) *= factors[frame][label - 1];
      }
  }
}

void add_kspace_noise(CoilSeries& ks, const NoiseSpec& spec, std::uint64_t stream_tag) {
  if (spec.variance_scale == 0.0) return;
  const double sigma = std::sqrt(spec.variance_scale * ks.ny() * ks.nx());
  for (int t = 0; t < ks.nt(); ++t)
    for (int c = 0; c < ks.nc(); ++c) {
      auto rng = make_engine(mix_seed(spec.seed, stream_tag, static_cast<std::uint64_t>(t),
                                      static_cast<std::uint64_t>(c)));
      std::normal_distribution<double> n(0.0, sigma);
      CxMat& plane = ks.at(t, c);
      for (Eigen::Index r = 0; r < plane.rows(); ++r)
        for (Eigen::Index x = 0; x < plane.cols(); ++x) {
          const double re = n(rng), im = n(rng);
          plane(r, x) += Cx(re, im);
        }
    }
}

CxMat inject_task(const CxMat& img, const ByteMat& roi, double beta1, double theta1) {
  if (roi.rows() != img.rows() || roi.cols() != img.cols())
    throw std::invalid_argument("inject_task: ROI does not match image");
  CxMat out = img;
  if (beta1 == 0.0 && theta1 == 0.0) return out;
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      if (!roi(r, c)) continue;
      const double mag = std::abs(img(r, c));
      if (mag == 0.0 && theta1 != 0.0)
        throw std::invalid_argument("inject_task: phase task on a zero-magnitude voxel");
      out(r, c) = std::polar(mag + beta1, std::arg(img(r, c)) + theta1);
    }
  return out;
}

std::vector<int> ExperimentDesign::schedule() const {
  std::vector<int> s;
  s.reserve(n_tr());
  s.insert(s.end(), n_rest_head, 0);
  for (int e = 0; e < epoch_count; ++e) {
    s.insert(s.end(), off_len, 0);
    s.insert(s.end(), on_len, 1);
  }
  s.insert(s.end(), n_rest_tail, 0);
  return s;
}

std::vector<int> ExperimentDesign::design_after_discard() const {
  std::vector<int> s = schedule();
  if (discard < 0 || discard >= static_cast<int>(s.size()))
    throw std::invalid_argument("ExperimentDesign: discard exceeds the series");
  return {s.begin() + discard, s.end()};
}

ByteMat default_roi(const Phantom& ph, int n_voxels) {
  const int ny = static_cast<int>(ph.brain.rows());
  const int nx = static_cast<int>(ph.brain.cols());
  // Left-motor-cortex analog: above and left of center.
  const double target_r = (ny - 1) / 2.0 - 0.28 * 0.42 * ny;
  const double target_c = (nx - 1) / 2.0 - 0.45 * 0.38 * nx;
  std::vector<std::pair<double, std::pair<int, int>>> cand;
  for (int r = 0; r < ny; ++r)
    for (int c = 0; c < nx; ++c)
      if (ph.brain(r, c))
        cand.push_back({std::hypot(r - target_r, c - target_c), {r, c}});
  if (static_cast<int>(cand.size()) < n_voxels)
    throw std::invalid_argument("default_roi: brain smaller than the ROI");
  std::sort(cand.begin(), cand.end());
  ByteMat roi = ByteMat::Zero(ny, nx);
  for (int i = 0; i < n_voxels; ++i) roi(cand[i].second.first, cand[i].second.second) = 1;
  return roi;
}

SimOutput simulate_experiment(const SimParams& params) {
  const ExperimentDesign& design = params.design;
  if (params.ncal < 2) throw std::invalid_argument("simulate: ncal must be >= 2");

  SimOutput out;
  const Phantom ph = make_phantom(params.ny, params.nx, params.phantom_style);
  const SensitivityMaps maps = make_sensitivities(params.nc, params.ny, params.nx);
  out.mask = SamplingMask(params.ny, params.nx, params.accel, params.phase_offset);
  out.brain = ph.brain;
  out.tissue = ph.tissue;
  out.roi = default_roi(ph);

  CxMat mean_map = maps.maps[0];
  for (int c = 1; c < params.nc; ++c) mean_map += maps.maps[c];
  mean_map /= static_cast<double>(params.nc);

  const CxMat task_img = params.with_task
                             ? inject_task(ph.image, out.roi, params.beta1, params.theta1)
                             : ph.image;
  out.truth_nontask = mean_map.cwiseProduct(ph.image);
  out.truth_task = mean_map.cwiseProduct(task_img);

  // Scaled copies of the first three (rest) frames.
  std::vector<CxMat> initial(3, ph.image);
  scale_initial_frames(initial, ph.tissue, default_tissue_factors());
  std::vector<std::vector<CxMat>> initial_k(3);
  for (int f = 0; f < 3; ++f) {
    initial_k[f].resize(params.nc);
    const auto weighted = coil_weight(initial[f], maps);
    for (int c = 0; c < params.nc; ++c) initial_k[f][c] = ft2(weighted[c]);
  }
  std::vector<CxMat> nontask_k(params.nc), task_k(params.nc);
  {
    const auto w0 = coil_weight(ph.image, maps);
    const auto w1 = coil_weight(task_img, maps);
    for (int c = 0; c < params.nc; ++c) {
      nontask_k[c] = ft2(w0[c]);
      task_k[c] = ft2(w1[c]);
    }
  }

  const NoiseSpec noise{params.noise_scale, params.seed};
  const std::vector<int> sched = design.schedule();
  const int n_img = design.n_img();
  out.design = design.design_after_discard();

  // Experimental series: frames `discard`.. of the task/non-task schedule.
  CoilSeries full(n_img, params.nc, params.ny, params.nx);
  for (int t = 0; t < n_img; ++t) {
    const int abs_t = t + design.discard;
    const std::vector<CxMat>& src =
        (abs_t < 3) ? initial_k[abs_t] : (sched[abs_t] ? task_k : nontask_k);
    for (int c = 0; c < params.nc; ++c) full.at(t, c) = src[c];
  }
  {
    // Noise streams are indexed by absolute frame so the discard window is a
    // pure omission.
    NoiseSpec n = noise;
    for (int t = 0; t < n_img; ++t)
      for (int c = 0; c < params.nc; ++c) {
        auto rng = make_engine(mix_seed(n.seed, kStreamExperiment,
                                        static_cast<std::uint64_t>(t + design.discard),
                                        static_cast<std::uint64_t>(c)));
        if (n.variance_scale == 0.0) continue;
        std::normal_distribution<double> g(0.0, std::sqrt(n.variance_scale * params.ny * params.nx));
        CxMat& plane = full.at(t, c);
        for (int r = 0; r < params.ny; ++r)
          for (int x = 0; x < params.nx; ++x) plane(r, x) += Cx(g(rng), g(rng));
      }
  }
  out.subsampled = subsample(full, out.mask);
  if (params.keep_full)
    out.full = std::move(full);

  // Calibration scan: the last ncal frames of a separate non-task series. The
  // scan is at least long enough that its tail clears the scaled start frames
  // even under shortened experiment designs.
  const int cal_tr = std::max(design.n_tr(), params.ncal + 3);
  out.calib = CoilSeries(params.ncal, params.nc, params.ny, params.nx);
  for (int j = 0; j < params.ncal; ++j) {
    const int abs_t = cal_tr - params.ncal + j;
    for (int c = 0; c < params.nc; ++c) {
      out.calib.at(j, c) = nontask_k[c];
      if (noise.variance_scale == 0.0) continue;
      auto rng = make_engine(mix_seed(noise.seed, kStreamCalibration,
                                      static_cast<std::uint64_t>(abs_t),
                                      static_cast<std::uint64_t>(c)));
      std::normal_distribution<double> g(0.0, std::sqrt(noise.variance_scale * params.ny * params.nx));
      CxMat& plane = out.calib.at(j, c);
      for (int r = 0; r < params.ny; ++r)
        for (int x = 0; x < params.nx; ++x) plane(r, x) += Cx(g(rng), g(rng));
    }
  }
  return out;
}

std::vector<CxMat> reference_reconstruct(const CoilSeries& full, int threads) {
  std::vector<CxMat> images(full.nt());
  parallel_for(full.nt(), threads, [&](int t) {
    images[t] = ift2(coil_average(full, t));
  });
  return images;
}

}  // namespace pargrappa
