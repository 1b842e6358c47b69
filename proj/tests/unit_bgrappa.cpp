#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "pargrappa/bgrappa.hpp"
#include "pargrappa/simulate.hpp"

using namespace pargrappa;

namespace {

CxMat random_cx(int ny, int nx, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  CxMat m(ny, nx);
  for (int r = 0; r < ny; ++r)
    for (int c = 0; c < nx; ++c) m(r, c) = Cx(n(rng), n(rng));
  return m;
}

RVec random_vec(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  RVec v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

RMat random_mat(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  RMat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

oracles::PosteriorInstance random_instance(int nc, int p, std::mt19937_64& rng) {
  oracles::PosteriorInstance in;
  in.f_e = random_vec(2 * nc, rng);
  in.f_k0 = random_vec(2 * p, rng);
  in.d0 = random_mat(nc, 2 * p, rng);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  in.n_k = u(rng);
  in.n_w = u(rng);
  in.alpha_k = u(rng);
  in.delta = u(rng);
  return in;
}

IcmScalars scalars_of(const oracles::PosteriorInstance& in) {
  return {in.n_k, in.n_w, in.alpha_k, in.delta};
}

}  // namespace

TEST_CASE("bgrappa pattern geometry at acceleration 3") {
  const SamplingMask mask(13, 4, 3);
  const auto patterns = bgrappa_patterns(mask);
  // Interior anchors take one missing row above and one below; the edges
  // produce their own patterns.
  bool interior = false;
  for (const auto& pat : patterns)
    if (pat.row_offsets == std::vector<int>{-1, 1}) {
      interior = true;
      CHECK(pat.anchor_rows == std::vector<int>{3, 6, 9});
    }
  CHECK(interior);
  // Every missing row appears exactly once over all patterns.
  std::vector<int> covered;
  for (const auto& pat : patterns)
    for (int a : pat.anchor_rows)
      for (int off : pat.row_offsets) covered.push_back(a + off);
  std::sort(covered.begin(), covered.end());
  CHECK(covered == mask.missing_rows());
}

TEST_CASE("assess_hyperparameters scalar formulas") {
  const int nc = 2, ny = 6, nx = 4, ncal = 30;
  const SamplingMask mask(ny, nx, 3);
  std::mt19937_64 rng(1);
  CoilSeries calib(ncal, nc, ny, nx);
  for (int t = 0; t < ncal; ++t)
    for (int c = 0; c < nc; ++c) calib.at(t, c) = random_cx(ny, nx, rng);
  const Hyperparameters hp = assess_hyperparameters(calib, mask, KernelSpec(2, 1));
  CHECK(hp.n_k == 30.0);
  CHECK(hp.n_w == 30.0);
  CHECK(hp.alpha_k == 29.0);
  CHECK(hp.delta == doctest::Approx(29.0 * hp.tau0_sq).epsilon(1e-12));
  CHECK(hp.tau0_sq > 0.5);  // unit-variance noise pools near 1
  CHECK(hp.tau0_sq < 2.0);
  CHECK_FALSE(hp.tau0_clamped);

  SUBCASE("constant series clamps tau0") {
    CoilSeries flat(3, nc, ny, nx);
    for (int t = 0; t < 3; ++t)
      for (int c = 0; c < nc; ++c) flat.at(t, c).setConstant(Cx(1.0, -2.0));
    const Hyperparameters hpf = assess_hyperparameters(flat, mask, KernelSpec(2, 1));
    CHECK(hpf.tau0_clamped);
    CHECK(hpf.tau0_sq == 1e-12);
  }
  SUBCASE("fewer than two frames is an error") {
    CoilSeries one(1, nc, ny, nx);
    CHECK_THROWS_AS(assess_hyperparameters(one, mask, KernelSpec(2, 1)), std::invalid_argument);
  }
  SUBCASE("prior scalar override replaces n_k and n_w only") {
    const Hyperparameters hpo =
        assess_hyperparameters(calib, mask, KernelSpec(2, 1), nullptr, 1.0);
    CHECK(hpo.n_k == 1.0);
    CHECK(hpo.n_w == 1.0);
    CHECK(hpo.alpha_k == 29.0);
  }
}

TEST_CASE("assess_hyperparameters two-frame hand fixture") {
  // One coil, 3x1 grid, acceleration 3: anchor row 0 with sources rows 1, 2.
  const int nc = 1, ny = 3, nx = 1;
  const SamplingMask mask(ny, nx, 3);
  CoilSeries calib(2, nc, ny, nx);
  calib.at(0, 0) << Cx(1, 1), Cx(2, 0), Cx(4, -2);
  calib.at(1, 0) << Cx(3, 5), Cx(6, 2), Cx(0, 4);
  const Hyperparameters hp = assess_hyperparameters(calib, mask, KernelSpec(2, 1));
  // tau0^2: acquired location is row 0 only; var(Re)=var(1,3)=2, var(Im)=var(1,5)=8,
  // pooled over {Re, Im}: (2+8)/2 = 5.
  CHECK(hp.tau0_sq == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(hp.alpha_k == 1.0);
  CHECK(hp.delta == doctest::Approx(5.0).epsilon(1e-12));
  // f_k0: temporal means of rows 1 and 2: (4, 1) and (2, 1), iso-stacked.
  REQUIRE(hp.patterns.size() == 1);
  const RVec& fk0 = hp.priors[0][0].f_k0;
  REQUIRE(fk0.size() == 4);
  CHECK(fk0(0) == doctest::Approx(4.0));
  CHECK(fk0(1) == doctest::Approx(2.0));
  CHECK(fk0(2) == doctest::Approx(1.0));
  CHECK(fk0(3) == doctest::Approx(1.0));
}

TEST_CASE("icm_update_fk limits and closed forms") {
  std::mt19937_64 rng(2);
  const int nc = 3, p = 3;
  SUBCASE("huge n_k pins the prior mean") {
    const RMat w = random_mat(2 * nc, 2 * p, rng);
    const RVec f_e = random_vec(2 * nc, rng);
    const RVec f_k0 = random_vec(2 * p, rng);
    const RVec fk = icm_update_fk(w, f_e, 1e12, f_k0);
    CHECK((fk - f_k0).norm() / f_k0.norm() < 1e-4);
  }
  SUBCASE("orthonormal design with n_k = 1 averages data and prior") {
    CxMat unitary = CxMat::Zero(p, p);
    unitary(0, 0) = std::polar(1.0, 0.3);
    unitary(1, 1) = std::polar(1.0, -1.2);
    unitary(2, 2) = std::polar(1.0, 2.0);
    const RMat w = to_iso_matrix(unitary);
    const RVec f_e = random_vec(2 * p, rng);
    const RVec f_k0 = random_vec(2 * p, rng);
    const RVec fk = icm_update_fk(w, f_e, 1.0, f_k0);
    const RVec expect = (w.transpose() * f_e + f_k0) / 2.0;
    CHECK((fk - expect).norm() < 1e-12);
  }
}

TEST_CASE("icm_update_D limits") {
  std::mt19937_64 rng(3);
  const int nc = 2, p = 3;
  const RMat d0 = random_mat(nc, 2 * p, rng);
  const RVec f_e = random_vec(2 * nc, rng);
  SUBCASE("huge n_w pins the prior weights") {
    const RVec f_k = random_vec(2 * p, rng);
    const RMat d = icm_update_D(f_k, f_e, 1e12, d0);
    CHECK((d - d0).norm() / d0.norm() < 1e-4);
  }
  SUBCASE("zero f_k returns D0 exactly") {
    const RMat d = icm_update_D(RVec::Zero(2 * p), f_e, 2.5, d0);
    CHECK((d - d0).norm() < 1e-12);
  }
}

TEST_CASE("icm_update_tau2 closed forms") {
  SUBCASE("pure prior point leaves only alpha_k delta") {
    std::mt19937_64 rng(4);
    const int nc = 2, p = 3;
    const RMat d0 = random_mat(nc, 2 * p, rng);
    const RVec f_k0 = random_vec(2 * p, rng);
    const RMat w = to_iso_matrix(D_to_weights(d0));
    const RVec f_e = w * f_k0;
    const IcmScalars s{2.0, 3.0, 4.0, 0.5};
    const double tau2 = icm_update_tau2(f_k0, d0, f_e, f_k0, d0, s);
    const double denom = 2.0 * (2 * nc + 2 * p + 2 * nc * p + 1);
    CHECK(tau2 == doctest::Approx(4.0 * 0.5 / denom).epsilon(1e-12));
  }
  SUBCASE("hand fixture with n_C = 1, p = 1") {
    RMat d(1, 2), d0(1, 2);
    d << 0.5, 0.0;
    d0 << 0.0, 0.0;
    RVec f_k(2), f_k0(2), f_e(2);
    f_k << 1.0, 0.0;
    f_k0 << 0.0, 0.0;
    f_e << 1.0, 0.0;
    const IcmScalars s{1.0, 1.0, 1.0, 1.0};
    // Theta = (1 - 0.5)^2 + 1 + 1*0.25 + 1 = 2.5; denominator 2(2+2+2+1) = 14.
    CHECK(icm_update_tau2(f_k, d, f_e, f_k0, d0, s) == doctest::Approx(2.5 / 14.0).epsilon(1e-12));
  }
  SUBCASE("quadratic scaling in the data") {
    std::mt19937_64 rng(5);
    const int nc = 2, p = 2;
    const RMat d0 = random_mat(nc, 2 * p, rng);
    const RVec f_k = random_vec(2 * p, rng);
    const RVec f_k0 = random_vec(2 * p, rng);
    const RVec f_e = random_vec(2 * nc, rng);
    const IcmScalars s{1.5, 2.5, 2.0, 0.7};
    const double base = icm_update_tau2(f_k, d0, f_e, f_k0, d0, s);
    const double c = 3.0;
    const IcmScalars s2{1.5, 2.5, 2.0, 0.7 * c * c};
    const double scaled = icm_update_tau2((c * f_k).eval(), d0, (c * f_e).eval(),
                                          (c * f_k0).eval(), d0, s2);
    CHECK(scaled == doctest::Approx(c * c * base).epsilon(1e-12));
  }
}

TEST_CASE("icm updates match the derivative-free conditional maximizer") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 3; ++trial) {
    const int nc = 2, p = 3;
    const auto in = random_instance(nc, p, rng);
    const IcmScalars s = scalars_of(in);
    const RVec f_k_cur = random_vec(2 * p, rng);
    const RMat d_cur = random_mat(nc, 2 * p, rng);
    const double tau2 = 0.7;

    const RMat w = to_iso_matrix(D_to_weights(d_cur));
    const RVec fk_closed = icm_update_fk(w, in.f_e, in.n_k, in.f_k0);
    const RVec fk_oracle = oracles::ascend_fk(in, f_k_cur, d_cur, tau2);
    CHECK((fk_closed - fk_oracle).norm() / fk_closed.norm() < 1e-5);
    CHECK(oracles::fd_gradient_norm_fk(in, fk_closed, d_cur, tau2) < 1e-6);

    const RMat d_closed = icm_update_D(f_k_cur, in.f_e, in.n_w, in.d0);
    const RMat d_oracle = oracles::ascend_D(in, f_k_cur, d_cur, tau2);
    CHECK((d_closed - d_oracle).norm() / d_closed.norm() < 1e-5);
    CHECK(oracles::fd_gradient_norm_D(in, f_k_cur, d_closed, tau2) < 1e-6);

    const double tau_closed = icm_update_tau2(f_k_cur, d_cur, in.f_e, in.f_k0, in.d0, s);
    const double tau_oracle = oracles::ascend_tau2(in, f_k_cur, d_cur);
    CHECK(tau_closed == doctest::Approx(tau_oracle).epsilon(1e-6));
    CHECK(std::fabs(oracles::fd_gradient_tau2(in, f_k_cur, d_cur, tau_closed)) < 1e-6);
  }
}

TEST_CASE("fast solves agree with the dense printed formulas") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const int nc = 2, p = 4;  // 2p > 2nc exercises the Woodbury branch
    const RMat d = random_mat(nc, 2 * p, rng);
    const RMat w = to_iso_matrix(D_to_weights(d));
    const RVec f_e = random_vec(2 * nc, rng);
    const RVec f_k0 = random_vec(2 * p, rng);
    const double n_k = 1.7, n_w = 2.3;

    RMat a = w.transpose() * w;
    a.diagonal().array() += n_k;
    const RVec dense_fk = a.inverse() * (w.transpose() * f_e + n_k * f_k0);
    CHECK((icm_update_fk(w, f_e, n_k, f_k0) - dense_fk).norm() <=
          1e-10 * std::max(1.0, dense_fk.norm()));

    const RVec f_k = random_vec(2 * p, rng);
    const RMat d0 = random_mat(nc, 2 * p, rng);
    const RMat fk_mat = fk_to_Fk(f_k);
    RMat fe_mat(nc, 2);
    fe_mat.col(0) = f_e.head(nc);
    fe_mat.col(1) = f_e.tail(nc);
    RMat gram = fk_mat * fk_mat.transpose();
    gram.diagonal().array() += n_w;
    const RMat dense_d = (fe_mat * fk_mat.transpose() + n_w * d0) * gram.inverse();
    CHECK((icm_update_D(f_k, f_e, n_w, d0) - dense_d).norm() <=
          1e-10 * std::max(1.0, dense_d.norm()));
  }
}

TEST_CASE("icm_map behaviour") {
  std::mt19937_64 rng(8);
  const int nc = 2, p = 3;
  SUBCASE("prior-consistent data is a one-sweep fixed point") {
    auto in = random_instance(nc, p, rng);
    in.f_e = to_iso_matrix(D_to_weights(in.d0)) * in.f_k0;
    const IcmState st = icm_map(in.f_e, in.f_k0, in.d0, scalars_of(in), IcmConfig{});
    CHECK(st.iterations == 1);
    CHECK((st.f_k - in.f_k0).norm() < 1e-12);
    CHECK((st.D - in.d0).norm() < 1e-12);
  }
  SUBCASE("log-posterior is non-decreasing over sweeps") {
    for (int trial = 0; trial < 5; ++trial) {
      const auto in = random_instance(nc, p, rng);
      std::vector<double> lp;
      icm_map(in.f_e, in.f_k0, in.d0, scalars_of(in), IcmConfig{},
              [&](const IcmState& st) {
                lp.push_back(oracles::oracle_log_posterior(in, st.f_k, st.D, st.tau2));
              });
      for (size_t i = 1; i < lp.size(); ++i)
        CHECK(lp[i] >= lp[i - 1] - 1e-9 * std::fabs(lp[i - 1]));
    }
  }
  SUBCASE("prior dominance at 1e12") {
    auto in = random_instance(nc, p, rng);
    in.n_k = in.n_w = 1e12;
    const IcmState st = icm_map(in.f_e, in.f_k0, in.d0, scalars_of(in), IcmConfig{});
    CHECK((st.f_k - in.f_k0).norm() / in.f_k0.norm() < 1e-4);
    CHECK((st.D - in.d0).norm() / in.d0.norm() < 1e-4);
  }
  SUBCASE("library log-posterior matches the oracle") {
    const auto in = random_instance(nc, p, rng);
    const RVec f_k = random_vec(2 * p, rng);
    const RMat d = random_mat(nc, 2 * p, rng);
    CHECK(icm_log_posterior(f_k, d, 0.9, in.f_e, in.f_k0, in.d0, scalars_of(in)) ==
          doctest::Approx(oracles::oracle_log_posterior(in, f_k, d, 0.9)).epsilon(1e-12));
  }
}

TEST_CASE("bgrappa_reconstruct") {
  std::mt19937_64 rng(9);
  SUBCASE("no acceleration degenerates to coil average + ift2") {
    CoilSeries full(2, 2, 8, 8);
    for (int t = 0; t < 2; ++t)
      for (int c = 0; c < 2; ++c) full.at(t, c) = random_cx(8, 8, rng);
    const auto images =
        bgrappa_reconstruct(full, full, SamplingMask(8, 8, 1), KernelSpec(2, 1), IcmConfig{});
    for (int t = 0; t < 2; ++t)
      CHECK((images[t] - ift2(coil_average(full, t))).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("acquired entries pass through, missing entries are written") {
    const int nc = 2, ny = 9, nx = 5, ncal = 8;
    const SamplingMask mask(ny, nx, 3);
    CoilSeries calib(ncal, nc, ny, nx);
    for (int t = 0; t < ncal; ++t)
      for (int c = 0; c < nc; ++c) calib.at(t, c) = random_cx(ny, nx, rng);
    CoilSeries frame(1, nc, ny, nx);
    for (int c = 0; c < nc; ++c) frame.at(0, c) = random_cx(ny, nx, rng);
    const CoilSeries sub = subsample(frame, mask);
    CoilSeries filled;
    bgrappa_reconstruct(sub, calib, mask, KernelSpec(2, 1), IcmConfig{}, nullptr, &filled);
    for (int c = 0; c < nc; ++c) {
      for (int r : mask.acquired_rows())
        CHECK((filled.at(0, c).row(r) - sub.at(0, c).row(r)).cwiseAbs().maxCoeff() == 0.0);
      for (int r : mask.missing_rows())
        CHECK(filled.at(0, c).row(r).cwiseAbs().minCoeff() > 0.0);
    }
  }
  SUBCASE("full-size bootstrap draw equals the non-bootstrap output") {
    const int nc = 2, ny = 6, nx = 4, ncal = 6;
    const SamplingMask mask(ny, nx, 2);
    CoilSeries calib(ncal, nc, ny, nx);
    for (int t = 0; t < ncal; ++t)
      for (int c = 0; c < nc; ++c) calib.at(t, c) = random_cx(ny, nx, rng);
    CoilSeries sub(2, nc, ny, nx);
    for (int t = 0; t < 2; ++t)
      for (int c = 0; c < nc; ++c) sub.at(t, c) = random_cx(ny, nx, rng);
    const CoilSeries subbed = subsample(sub, mask);

    IcmConfig plain;
    IcmConfig boot;
    boot.bootstrap_calibration = true;
    boot.bootstrap_size = ncal;
    boot.seed = 1234;
    const auto a = bgrappa_reconstruct(subbed, calib, mask, KernelSpec(2, 1), plain);
    const auto b = bgrappa_reconstruct(subbed, calib, mask, KernelSpec(2, 1), boot);
    for (size_t t = 0; t < a.size(); ++t)
      CHECK((a[t] - b[t]).cwiseAbs().maxCoeff() == 0.0);
  }
}
