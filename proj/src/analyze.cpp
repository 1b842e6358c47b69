#include "pargrappa/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pargrappa {

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_to_pi(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a - kPi;
}

// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15, kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_right_tail(double t, double df) {
  if (df <= 0) throw std::invalid_argument("student_t_right_tail: df must be positive");
  const double x = df / (df + t * t);
  const double half_tail = 0.5 * inc_beta(df / 2.0, 0.5, x);
  return t >= 0 ? half_tail : 1.0 - half_tail;
}

GlmFit fit_glm(const RVec& y, const std::vector<int>& x) {
  const int n = static_cast<int>(y.size());
  if (static_cast<int>(x.size()) != n)
    throw std::invalid_argument("fit_glm: design length does not match series");
  if (n < 3) throw std::invalid_argument("fit_glm: need at least 3 samples");
  int n1 = 0;
  for (int v : x) {
    if (v != 0 && v != 1) throw std::invalid_argument("fit_glm: design must be 0/1");
    n1 += v;
  }
  if (n1 == 0 || n1 == n)
    throw std::invalid_argument("fit_glm: design needs both task and rest frames");

  // Normal equations for X = [1, x].
  const double sx = n1, sxx = n1;
  double sy = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    sy += y(i);
    if (x[i]) sxy += y(i);
  }
  const double det = n * sxx - sx * sx;
  GlmFit fit;
  fit.beta1 = (n * sxy - sx * sy) / det;
  fit.beta0 = (sy - fit.beta1 * sx) / n;

  double rss = 0;
  for (int i = 0; i < n; ++i) {
    const double r = y(i) - fit.beta0 - fit.beta1 * x[i];
    rss += r * r;
  }
  const int df = n - 2;
  const double s2 = rss / df;
  fit.sigma = std::sqrt(s2);
  fit.se_beta1 = std::sqrt(s2 * n / det);
  if (fit.se_beta1 == 0.0 || !std::isfinite(fit.se_beta1)) {
    fit.t = 0.0;
    fit.p = 1.0;
  } else {
    fit.t = fit.beta1 / fit.se_beta1;
    fit.p = student_t_right_tail(fit.t, df);
  }
  return fit;
}

RVec unwrap_phase(const RVec& phi) {
  RVec out(phi.size());
  if (phi.size() == 0) return out;
  out(0) = phi(0);
  for (Eigen::Index i = 1; i < phi.size(); ++i)
    out(i) = out(i - 1) + wrap_to_pi(phi(i) - phi(i - 1));
  return out;
}

GlmFit fit_phase_glm(const RVec& phi, const std::vector<int>& x) {
  return fit_glm(unwrap_phase(phi), x);
}

std::vector<std::uint8_t> fdr_threshold(const std::vector<double>& p, double q) {
  const size_t m = p.size();
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("fdr: p-values must lie in [0,1]");
  std::vector<std::uint8_t> sig(m, 0);
  if (m == 0) return sig;
  std::vector<double> sorted(p);
  std::sort(sorted.begin(), sorted.end());
  double cutoff = -1.0;
  for (size_t k = m; k >= 1; --k) {
    if (sorted[k - 1] <= static_cast<double>(k) * q / static_cast<double>(m)) {
      cutoff = sorted[k - 1];
      break;
    }
  }
  if (cutoff < 0) return sig;
  for (size_t i = 0; i < m; ++i) sig[i] = p[i] <= cutoff ? 1 : 0;
  return sig;
}

namespace {

template <typename F>
double masked_mean(const CxMat& a, const CxMat& b, const ByteMat& mask, F f) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != mask.rows() ||
      a.cols() != mask.cols())
    throw std::invalid_argument("mse: dimensions do not match");
  double sum = 0;
  long count = 0;
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      if (mask(r, c)) {
        sum += f(a(r, c), b(r, c));
        ++count;
      }
  if (count == 0) throw std::invalid_argument("mse: empty mask");
  return sum / count;
}

}  // namespace

double mse_magnitude(const CxMat& recon, const CxMat& truth, const ByteMat& mask) {
  return masked_mean(recon, truth, mask, [](Cx a, Cx b) {
    const double d = std::abs(a) - std::abs(b);
    return d * d;
  });
}

double mse_phase(const CxMat& recon, const CxMat& truth, const ByteMat& mask) {
  return masked_mean(recon, truth, mask, [](Cx a, Cx b) {
    const double d = wrap_to_pi(std::arg(a) - std::arg(b));
    return d * d;
  });
}

double image_entropy(const RMat& magnitudes) {
  if ((magnitudes.array() < 0).any())
    throw std::invalid_argument("entropy: magnitudes must be non-negative");
  const double vmax = std::sqrt(magnitudes.array().square().sum());
  if (vmax == 0.0) return 0.0;
  double e = 0;
  for (Eigen::Index r = 0; r < magnitudes.rows(); ++r)
    for (Eigen::Index c = 0; c < magnitudes.cols(); ++c) {
      const double ratio = magnitudes(r, c) / vmax;
      if (ratio > 0) e -= ratio * std::log(ratio);
    }
  return e;
}

TemporalStats temporal_stats(const std::vector<CxMat>& series,
                             const std::optional<std::vector<int>>& design,
                             const ByteMat& roi) {
  if (series.size() < 3) throw std::invalid_argument("temporal_stats: need at least 3 frames");
  const int n = static_cast<int>(series.size());
  const Eigen::Index ny = series[0].rows(), nx = series[0].cols();
  if (roi.rows() != ny || roi.cols() != nx)
    throw std::invalid_argument("temporal_stats: ROI does not match images");

  TemporalStats st;
  st.beta0 = RMat::Zero(ny, nx);
  st.beta1 = RMat::Zero(ny, nx);
  st.sigma = RMat::Zero(ny, nx);
  st.variance = RMat::Zero(ny, nx);
  st.snr = RMat::Zero(ny, nx);
  st.t_stat = RMat::Zero(ny, nx);

  double cnr_sum = 0;
  long roi_count = 0;
  RVec y(n);
  for (Eigen::Index r = 0; r < ny; ++r)
    for (Eigen::Index c = 0; c < nx; ++c) {
      for (int t = 0; t < n; ++t) y(t) = std::abs(series[t](r, c));
      double beta0, beta1, sigma, tstat;
      if (design) {
        const GlmFit fit = fit_glm(y, *design);
        beta0 = fit.beta0;
        beta1 = fit.beta1;
        sigma = fit.sigma;
        tstat = fit.t;
      } else {
        beta0 = y.mean();
        beta1 = 0;
        sigma = std::sqrt((y.array() - beta0).square().sum() / (n - 1));
        tstat = 0;
      }
      st.beta0(r, c) = beta0;
      st.beta1(r, c) = beta1;
      st.sigma(r, c) = sigma;
      st.variance(r, c) = sigma * sigma;
      st.t_stat(r, c) = tstat;
      st.snr(r, c) = sigma > 0 ? std::min(beta0 / sigma, kSnrCap) : kSnrCap;
      if (roi(r, c)) {
        cnr_sum += sigma > 0 ? beta1 / sigma : (beta1 == 0 ? 0.0 : kSnrCap);
        ++roi_count;
      }
    }
  st.roi_cnr = roi_count ? cnr_sum / roi_count : 0.0;
  return st;
}

CoilSeries phase_drift_correct(const CoilSeries& images, const ByteMat& brain) {
  if (images.nt() < 2)
    throw std::invalid_argument("phase_drift_correct: need at least 2 frames");
  if (brain.rows() != images.ny() || brain.cols() != images.nx())
    throw std::invalid_argument("phase_drift_correct: brain mask does not match images");
  std::vector<std::pair<int, int>> voxels;
  for (int r = 0; r < images.ny(); ++r)
    for (int c = 0; c < images.nx(); ++c)
      if (brain(r, c)) voxels.push_back({r, c});
  if (voxels.size() < 6)
    throw std::invalid_argument("phase_drift_correct: need at least 6 brain voxels");

  const double sy = 2.0 / std::max(1, images.ny() - 1);
  const double sx = 2.0 / std::max(1, images.nx() - 1);
  auto basis = [&](int r, int c) {
    Eigen::Matrix<double, 6, 1> b;
    const double u = r * sy - 1.0, v = c * sx - 1.0;
    b << 1.0, u, v, u * u, u * v, v * v;
    return b;
  };

  CoilSeries out(images.nt(), images.nc(), images.ny(), images.nx());
  for (int coil = 0; coil < images.nc(); ++coil) {
    // Angular temporal mean per voxel.
    RMat mean_phase(images.ny(), images.nx());
    for (int r = 0; r < images.ny(); ++r)
      for (int c = 0; c < images.nx(); ++c) {
        Cx acc = 0;
        for (int t = 0; t < images.nt(); ++t) {
          const Cx v = images.at(t, coil)(r, c);
          if (std::abs(v) > 0) acc += v / std::abs(v);
        }
        mean_phase(r, c) = (std::abs(acc) > 0) ? std::arg(acc) : 0.0;
      }

    Eigen::Matrix<double, 6, 6> gram = Eigen::Matrix<double, 6, 6>::Zero();
    for (const auto& [r, c] : voxels) {
      const auto b = basis(r, c);
      gram += b * b.transpose();
    }
    const auto solver = gram.ldlt();

    for (int t = 0; t < images.nt(); ++t) {
      const CxMat& frame = images.at(t, coil);
      RMat resid(images.ny(), images.nx());
      for (int r = 0; r < images.ny(); ++r)
        for (int c = 0; c < images.nx(); ++c)
          resid(r, c) = wrap_to_pi(std::arg(frame(r, c)) - mean_phase(r, c));
      Eigen::Matrix<double, 6, 1> rhs = Eigen::Matrix<double, 6, 1>::Zero();
      for (const auto& [r, c] : voxels) rhs += basis(r, c) * resid(r, c);
      const Eigen::Matrix<double, 6, 1> coef = solver.solve(rhs);

      // mean + resid equals the original phase mod 2pi, so removing the fit
      // is a pure rotation.
      CxMat& dst = out.at(t, coil);
      for (int r = 0; r < images.ny(); ++r)
        for (int c = 0; c < images.nx(); ++c) {
          const double fitted = basis(r, c).dot(coef);
          dst(r, c) = frame(r, c) * std::polar(1.0, -fitted);
        }
    }
  }
  return out;
}

}  // namespace pargrappa
