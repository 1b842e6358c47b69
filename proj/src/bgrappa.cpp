#include "pargrappa/bgrappa.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "pargrappa/threading.hpp"

namespace pargrappa {

namespace {
constexpr double kTau0Floor = 1e-12;

double rel_change(const RVec& now, const RVec& before) {
  const double base = before.norm();
  const double diff = (now - before).norm();
  return base > 0 ? diff / base : (diff > 0 ? 1.0 : 0.0);
}

double rel_change(const RMat& now, const RMat& before) {
  const double base = before.norm();
  const double diff = (now - before).norm();
  return base > 0 ? diff / base : (diff > 0 ? 1.0 : 0.0);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

std::vector<BgrappaPattern> bgrappa_patterns(const SamplingMask& mask) {
  std::map<std::vector<int>, std::vector<int>> by_offsets;
  for (int a : mask.acquired_rows()) {
    std::vector<int> rows = assigned_missing_rows(a, mask);
    if (rows.empty()) continue;
    for (int& r : rows) r -= a;
    by_offsets[rows].push_back(a);
  }
  std::vector<BgrappaPattern> out;
  out.reserve(by_offsets.size());
  for (auto& [offsets, anchors] : by_offsets) out.push_back({offsets, anchors});
  return out;
}

Hyperparameters assess_hyperparameters(const CoilSeries& calib, const SamplingMask& mask,
                                       const KernelSpec& kernel,
                                       const std::vector<int>* frames,
                                       std::optional<double> prior_scalar_override,
                                       int threads) {
  if (calib.ny() != mask.ny || calib.nx() != mask.nx)
    throw std::invalid_argument("assess: mask does not match calibration dims");
  std::vector<int> idx;
  if (frames) {
    idx = *frames;
    for (int t : idx)
      if (t < 0 || t >= calib.nt()) throw std::invalid_argument("assess: frame index out of range");
  } else {
    idx.resize(calib.nt());
    std::iota(idx.begin(), idx.end(), 0);
  }
  const int n_cal = static_cast<int>(idx.size());
  if (n_cal < 2) throw std::invalid_argument("assess: need at least 2 calibration frames");

  Hyperparameters hp;
  hp.n_cal = n_cal;
  hp.n_k = hp.n_w = prior_scalar_override.value_or(static_cast<double>(n_cal));
  hp.alpha_k = n_cal - 1;

  // Pooled residual k-space variance over coils and acquired locations,
  // real and imaginary parts counted separately.
  const std::vector<int> acq = mask.acquired_rows();
  double var_sum = 0;
  for (int c = 0; c < calib.nc(); ++c)
    for (int r : acq)
      for (int x = 0; x < calib.nx(); ++x) {
        double mre = 0, mim = 0;
        for (int t : idx) {
          const Cx v = calib.at(t, c)(r, x);
          mre += v.real();
          mim += v.imag();
        }
        mre /= n_cal;
        mim /= n_cal;
        double sre = 0, sim = 0;
        for (int t : idx) {
          const Cx v = calib.at(t, c)(r, x);
          sre += (v.real() - mre) * (v.real() - mre);
          sim += (v.imag() - mim) * (v.imag() - mim);
        }
        var_sum += (sre + sim) / (n_cal - 1);
      }
  const double denom = 2.0 * calib.nc() * static_cast<double>(acq.size()) * calib.nx();
  hp.tau0_sq = var_sum / denom;
  if (hp.tau0_sq < kTau0Floor) {
    hp.tau0_sq = kTau0Floor;
    hp.tau0_clamped = true;
    std::cerr << "warning: degenerate calibration variance, clamping tau0^2 to "
              << kTau0Floor << "\n";
  }
  hp.delta = (n_cal - 1) * hp.tau0_sq;

  hp.patterns = bgrappa_patterns(mask);
  hp.priors.resize(hp.patterns.size());
  const int nc = calib.nc();
  const int nx = calib.nx();
  for (size_t pi = 0; pi < hp.patterns.size(); ++pi) {
    const BgrappaPattern& pat = hp.patterns[pi];
    const int n_anchor = static_cast<int>(pat.anchor_rows.size());
    hp.priors[pi].resize(static_cast<size_t>(n_anchor) * nx);
    // D0 is estimated per class (pattern x column), pooled over the class's
    // anchors and frames exactly like the forward weight estimation; f_k0 is
    // the per-location temporal mean of the sources.
    parallel_for(nx, threads, [&, pi](int col) {
      const BgrappaPattern& pattern = hp.patterns[pi];
      const std::vector<int> cols = window_cols(col, kernel.k_cols, nx);
      const int p = static_cast<int>(pattern.row_offsets.size() * cols.size()) * nc;
      const int n_anchors = static_cast<int>(pattern.anchor_rows.size());

      CalibrationSystem sys;
      sys.targets.resize(nc, n_cal * n_anchors);
      sys.sources.resize(p, n_cal * n_anchors);
      CxVec src(p);
      for (int ai = 0; ai < n_anchors; ++ai) {
        const int anchor = pattern.anchor_rows[ai];
        CxVec mean_src = CxVec::Zero(p);
        for (int m = 0; m < n_cal; ++m) {
          const int t = idx[m];
          const int column = ai * n_cal + m;
          for (int coil = 0; coil < nc; ++coil)
            sys.targets(coil, column) = calib.at(t, coil)(anchor, col);
          int slot = 0;
          for (int dr : pattern.row_offsets)
            for (int sc : cols) {
              for (int coil = 0; coil < nc; ++coil)
                src(slot * nc + coil) = calib.at(t, coil)(anchor + dr, sc);
              ++slot;
            }
          sys.sources.col(column) = src;
          mean_src += src;
        }
        GroupPrior& prior = hp.priors[pi][static_cast<size_t>(ai) * nx + col];
        prior.f_k0 = to_iso_vector((mean_src / n_cal).eval());
      }
      const RMat d0 = weights_to_D(estimate_weights(sys));
      for (int ai = 0; ai < n_anchors; ++ai)
        hp.priors[pi][static_cast<size_t>(ai) * nx + col].D0 = d0;
    });
  }
  return hp;
}

RVec icm_update_fk(const RMat& w, const RVec& f_e, double n_k, const RVec& f_k0) {
  const Eigen::Index tp = w.cols();
  const Eigen::Index tn = w.rows();
  const RVec rhs = w.transpose() * f_e + n_k * f_k0;
  if (tp <= tn) {
    RMat a = w.transpose() * w;
    a.diagonal().array() += n_k;
    return a.llt().solve(rhs);
  }
  // (W'W + n_k I)^{-1} r = (r - W'(n_k I + W W')^{-1} W r) / n_k
  RMat small = w * w.transpose();
  small.diagonal().array() += n_k;
  const RVec y = small.llt().solve((w * rhs).eval());
  return (rhs - w.transpose() * y) / n_k;
}

RMat icm_update_D(const RVec& f_k, const RVec& f_e, double n_w, const RMat& d0) {
  const Eigen::Index nc = d0.rows();
  if (f_e.size() != 2 * nc) throw std::invalid_argument("icm_update_D: f_e must have length 2 n_C");
  if (f_k.size() != d0.cols()) throw std::invalid_argument("icm_update_D: f_k does not match D0");
  const RMat fk_mat = fk_to_Fk(f_k);  // 2p x 2
  RMat fe_mat(nc, 2);
  fe_mat.col(0) = f_e.head(nc);
  fe_mat.col(1) = f_e.tail(nc);
  const RMat rhs = fe_mat * fk_mat.transpose() + n_w * d0;  // n_C x 2p
  // Right-divide by (F_k F_k' + n_w I), rank-2 Woodbury.
  Eigen::Matrix2d small = fk_mat.transpose() * fk_mat;
  small.diagonal().array() += n_w;
  const RMat rf = rhs * fk_mat;  // n_C x 2
  const RMat corr = small.ldlt().solve(rf.transpose()).transpose() * fk_mat.transpose();
  return (rhs - corr) / n_w;
}

double icm_theta(const RVec& f_k, const RMat& d, const RVec& f_e, const RVec& f_k0,
                 const RMat& d0, const IcmScalars& s) {
  const RMat w = to_iso_matrix(D_to_weights(d));
  const double fit = (f_e - w * f_k).squaredNorm();
  const double fk_pen = s.n_k * (f_k - f_k0).squaredNorm();
  const double d_pen = s.n_w * (d - d0).squaredNorm();
  return fit + fk_pen + s.alpha_k * s.delta + d_pen;
}

double icm_update_tau2(const RVec& f_k, const RMat& d, const RVec& f_e, const RVec& f_k0,
                       const RMat& d0, const IcmScalars& s) {
  const double nc = static_cast<double>(d.rows());
  const double p = static_cast<double>(d.cols()) / 2.0;
  const double theta = icm_theta(f_k, d, f_e, f_k0, d0, s);
  if (!(theta > 0)) throw std::runtime_error("icm: Theta must be positive (delta > 0 required)");
  return theta / (2.0 * (2.0 * nc + 2.0 * p + 2.0 * nc * p + 1.0));
}

double icm_log_posterior(const RVec& f_k, const RMat& d, double tau2, const RVec& f_e,
                         const RVec& f_k0, const RMat& d0, const IcmScalars& s) {
  const double nc = static_cast<double>(d.rows());
  const double p = static_cast<double>(d.cols()) / 2.0;
  const double expo = 2.0 * nc + 2.0 * p + 2.0 * nc * p + 1.0;
  return -expo * std::log(tau2) - icm_theta(f_k, d, f_e, f_k0, d0, s) / (2.0 * tau2);
}

IcmState icm_map(const RVec& f_e, const RVec& f_k0, const RMat& d0, const IcmScalars& s,
                 const IcmConfig& cfg, const std::function<void(const IcmState&)>& observer) {
  if (!(s.n_k > 0) || !(s.n_w > 0) || !(s.delta > 0) || !(s.alpha_k > 0))
    throw std::invalid_argument("icm_map: prior scalars must be positive");
  IcmState st;
  st.f_k = f_k0;
  st.D = d0;
  st.tau2 = icm_update_tau2(st.f_k, st.D, f_e, f_k0, d0, s);
  if (observer) observer(st);
  for (int it = 1; it <= cfg.max_iter; ++it) {
    const RMat w = to_iso_matrix(D_to_weights(st.D));
    const RVec fk_new = icm_update_fk(w, f_e, s.n_k, f_k0);
    const RMat d_new = icm_update_D(fk_new, f_e, s.n_w, d0);
    const double tau_new = icm_update_tau2(fk_new, d_new, f_e, f_k0, d0, s);
    const double change = std::max(rel_change(fk_new, st.f_k), rel_change(d_new, st.D));
    st.f_k = fk_new;
    st.D = d_new;
    st.tau2 = tau_new;
    st.iterations = it;
    if (!st.f_k.allFinite() || !st.D.allFinite() || !std::isfinite(st.tau2))
      throw std::runtime_error("icm: non-finite iterate (degenerate hyperparameters)");
    if (observer) observer(st);
    if (change < cfg.rel_tol) {
      st.converged = true;
      break;
    }
  }
  return st;
}

std::vector<CxMat> bgrappa_reconstruct(const CoilSeries& sub, const CoilSeries& calib,
                                       const SamplingMask& mask, const KernelSpec& kernel,
                                       const IcmConfig& cfg,
                                       std::vector<FrameLog>* frame_log,
                                       CoilSeries* filled) {
  if (sub.nc() != calib.nc())
    throw std::invalid_argument("bgrappa_reconstruct: coil counts differ");
  if (sub.ny() != mask.ny || sub.nx() != mask.nx)
    throw std::invalid_argument("bgrappa_reconstruct: mask does not match series");
  if (cfg.bootstrap_calibration &&
      (cfg.bootstrap_size < 2 || cfg.bootstrap_size > calib.nt()))
    throw std::invalid_argument("bgrappa_reconstruct: bootstrap size out of range");

  const bool any_missing = !mask.missing_rows().empty();
  Hyperparameters shared;
  if (any_missing && !cfg.bootstrap_calibration)
    shared = assess_hyperparameters(calib, mask, kernel, nullptr, cfg.prior_scalar_override,
                                    cfg.threads);

  const int nc = sub.nc();
  const int nx = sub.nx();
  std::vector<CxMat> images(sub.nt());
  if (frame_log) frame_log->assign(sub.nt(), FrameLog{});
  if (filled) *filled = CoilSeries(sub.nt(), nc, sub.ny(), sub.nx());

  parallel_for(sub.nt(), cfg.threads, [&](int t) {
    const auto t0 = std::chrono::steady_clock::now();
    Hyperparameters local;
    const Hyperparameters* hp = &shared;
    if (any_missing && cfg.bootstrap_calibration) {
      // Deterministic per-frame subsample, without replacement, ascending.
      std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(t)));
      std::vector<int> all(calib.nt());
      std::iota(all.begin(), all.end(), 0);
      std::shuffle(all.begin(), all.end(), rng);
      std::vector<int> pick(all.begin(), all.begin() + cfg.bootstrap_size);
      std::sort(pick.begin(), pick.end());
      local = assess_hyperparameters(calib, mask, kernel, &pick, cfg.prior_scalar_override, 1);
      hp = &local;
    }

    std::vector<CxMat> planes(nc);
    for (int c = 0; c < nc; ++c) planes[c] = sub.at(t, c);

    int groups = 0, max_sweeps = 0;
    double tau_sum = 0;
    if (any_missing) {
      const IcmScalars scalars = hp->scalars();
      RVec f_e(2 * nc);
      for (size_t pi = 0; pi < hp->patterns.size(); ++pi) {
        const BgrappaPattern& pat = hp->patterns[pi];
        const std::vector<int>& offs = pat.row_offsets;
        for (size_t ai = 0; ai < pat.anchor_rows.size(); ++ai) {
          const int anchor = pat.anchor_rows[ai];
          for (int col = 0; col < nx; ++col) {
            const std::vector<int> cols = window_cols(col, kernel.k_cols, nx);
            for (int coil = 0; coil < nc; ++coil) {
              const Cx v = planes[coil](anchor, col);
              f_e(coil) = v.real();
              f_e(nc + coil) = v.imag();
            }
            const GroupPrior& prior = hp->priors[pi][ai * static_cast<size_t>(nx) + col];
            const IcmState st = icm_map(f_e, prior.f_k0, prior.D0, scalars, cfg);
            const CxVec fk = from_iso_vector(st.f_k);
            int slot = 0;
            for (int dr : offs)
              for (int sc : cols) {
                if (sc == col)
                  for (int coil = 0; coil < nc; ++coil)
                    planes[coil](anchor + dr, sc) = fk(slot * nc + coil);
                ++slot;
              }
            ++groups;
            max_sweeps = std::max(max_sweeps, st.iterations);
            tau_sum += st.tau2;
          }
        }
      }
    }

    if (filled)
      for (int c = 0; c < nc; ++c) filled->at(t, c) = planes[c];

    CxMat avg = planes[0];
    for (int c = 1; c < nc; ++c) avg += planes[c];
    avg /= static_cast<double>(nc);
    images[t] = ift2(avg);

    if (frame_log) {
      FrameLog& fl = (*frame_log)[t];
      fl.t = t;
      fl.groups = groups;
      fl.max_sweeps = max_sweeps;
      fl.mean_tau2 = groups ? tau_sum / groups : 0.0;
      fl.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
  });
  return images;
}

}  // namespace pargrappa
