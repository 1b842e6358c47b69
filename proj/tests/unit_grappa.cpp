#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>

#include "oracles.hpp"
#include "pargrappa/grappa.hpp"

using namespace pargrappa;

namespace {

CxMat random_cx(int ny, int nx, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  CxMat m(ny, nx);
  for (int r = 0; r < ny; ++r)
    for (int c = 0; c < nx; ++c) m(r, c) = Cx(n(rng), n(rng));
  return m;
}

// Synthetic k-space where every missing value satisfies an exact per-class
// linear relation on its sources; returns the full series.
CoilSeries consistent_series(int nt, int nc, int ny, int nx, const SamplingMask& mask,
                             const KernelSpec& kernel, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // One weight matrix per relative source pattern, shared across columns.
  std::map<std::vector<int>, CxMat> w0;
  for (const MissingClass& mc : missing_classes(mask, kernel)) {
    const int p = static_cast<int>(mc.row_offsets.size() * mc.src_cols.size()) * nc;
    if (!w0.count(mc.row_offsets)) w0[mc.row_offsets] = random_cx(nc, p, rng);
  }
  CoilSeries full(nt, nc, ny, nx);
  for (int t = 0; t < nt; ++t) {
    std::vector<CxMat> planes(nc, CxMat::Zero(ny, nx));
    for (int c = 0; c < nc; ++c) {
      planes[c] = random_cx(ny, nx, rng);
      for (int r = 0; r < ny; ++r)
        if (!mask.row_acquired(r)) planes[c].row(r).setZero();
    }
    for (const MissingClass& mc : missing_classes(mask, kernel)) {
      const CxMat& w = w0.at(mc.row_offsets);
      for (int r : mc.target_rows) {
        CxVec src(w.cols());
        int slot = 0;
        for (int dr : mc.row_offsets)
          for (int sc : mc.src_cols) {
            for (int coil = 0; coil < nc; ++coil) src(slot * nc + coil) = planes[coil](r + dr, sc);
            ++slot;
          }
        const CxVec val = w * src;
        for (int coil = 0; coil < nc; ++coil) planes[coil](r, mc.col) = val(coil);
      }
    }
    for (int c = 0; c < nc; ++c) full.at(t, c) = planes[c];
  }
  return full;
}

}  // namespace

TEST_CASE("kernel geometry") {
  const SamplingMask mask(12, 6, 3);
  SUBCASE("2x1 kernel brackets interior missing rows") {
    CHECK(grappa_source_rows(4, mask, 2) == std::vector<int>{3, 6});
    CHECK(grappa_source_rows(5, mask, 2) == std::vector<int>{3, 6});
  }
  SUBCASE("bottom boundary rows clamp to in-bounds acquired rows") {
    CHECK(grappa_source_rows(10, mask, 2) == std::vector<int>{6, 9});
    CHECK(grappa_source_rows(11, mask, 2) == std::vector<int>{6, 9});
  }
  SUBCASE("acceleration-2 tie picks the row above") {
    const SamplingMask m2(8, 4, 2);
    CHECK(grappa_source_rows(3, m2, 2) == std::vector<int>{2, 4});
  }
  SUBCASE("column windows clamp by shifting inside") {
    CHECK(window_cols(0, 3, 6) == std::vector<int>{0, 1, 2});
    CHECK(window_cols(3, 3, 6) == std::vector<int>{2, 3, 4});
    CHECK(window_cols(5, 3, 6) == std::vector<int>{3, 4, 5});
  }
  SUBCASE("nearest acquired row assignment tiles the missing rows") {
    std::vector<int> seen;
    for (int a : mask.acquired_rows())
      for (int r : assigned_missing_rows(a, mask)) seen.push_back(r);
    std::sort(seen.begin(), seen.end());
    CHECK(seen == mask.missing_rows());
  }
}

TEST_CASE("gather_calibration_system shapes and roles") {
  const int nc = 4, ncal = 30;
  const SamplingMask mask(8, 5, 2);
  CoilSeries calib(ncal, nc, 8, 5);
  std::mt19937_64 rng(3);
  for (int t = 0; t < ncal; ++t)
    for (int c = 0; c < nc; ++c) calib.at(t, c) = random_cx(8, 5, rng);

  SUBCASE("p = n_C k_rows k_cols and M = n_cal for one placement") {
    const auto sys = gather_calibration_system(calib, mask, KernelSpec(2, 1), {3, 2},
                                               CalibRole::Grappa);
    CHECK(sys.sources.rows() == 8);  // 4 coils * 2 rows * 1 col
    CHECK(sys.sources.cols() == 30);
    CHECK(sys.targets.rows() == 4);
    CHECK(sys.targets.cols() == 30);
  }
  SUBCASE("GRAPPA targets reappear as BGRAPPA sources at matched locations") {
    // Missing row 3 is assigned to anchor 2, so the BGRAPPA system at (2, c)
    // must carry row 3's values among its sources.
    const auto g = gather_calibration_system(calib, mask, KernelSpec(2, 1), {3, 2},
                                             CalibRole::Grappa);
    const auto b = gather_calibration_system(calib, mask, KernelSpec(2, 1), {2, 2},
                                             CalibRole::Bgrappa);
    const auto assigned = assigned_missing_rows(2, mask);
    REQUIRE(assigned == std::vector<int>{3});
    CHECK((b.sources - g.targets).cwiseAbs().maxCoeff() == 0.0);
    // And the BGRAPPA target is the acquired anchor row itself.
    for (int t = 0; t < ncal; ++t)
      for (int c = 0; c < nc; ++c) CHECK(b.targets(c, t) == calib.at(t, c)(2, 2));
  }
  SUBCASE("role preconditions") {
    CHECK_THROWS_AS(gather_calibration_system(calib, mask, KernelSpec(2, 1), {2, 2},
                                              CalibRole::Grappa),
                    std::invalid_argument);
    CHECK_THROWS_AS(gather_calibration_system(calib, mask, KernelSpec(2, 1), {3, 2},
                                              CalibRole::Bgrappa),
                    std::invalid_argument);
  }
}

TEST_CASE("estimate_weights recovers an exact linear model") {
  std::mt19937_64 rng(5);
  const int nc = 2, p = 4, m = 16;
  const CxMat w0 = random_cx(nc, p, rng);
  CalibrationSystem sys;
  sys.sources = random_cx(p, m, rng);
  sys.targets = w0 * sys.sources;
  const CxMat w = estimate_weights(sys);
  CHECK((w - w0).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("estimate_weights with identity sources returns the targets") {
  const int p = 3;
  CalibrationSystem sys;
  sys.sources = CxMat::Identity(p, p);
  std::mt19937_64 rng(6);
  sys.targets = random_cx(2, p, rng);
  CHECK((estimate_weights(sys) - sys.targets).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("estimate_weights matches the normal-equations oracle") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    CalibrationSystem sys;
    sys.sources = random_cx(4, 10, rng);
    sys.targets = random_cx(2, 10, rng);
    const CxMat w = estimate_weights(sys);
    const CxMat w_oracle = oracles::normal_equations_weights(sys.targets, sys.sources);
    CHECK((w - w_oracle).cwiseAbs().maxCoeff() < 1e-10);
    // Normal-equations residual invariant.
    const double lhs = ((sys.targets - w * sys.sources) * sys.sources.adjoint()).norm();
    CHECK(lhs <= 1e-8 * sys.targets.norm());
  }
}

TEST_CASE("estimate_weights falls back to a minimum-norm fit when underdetermined") {
  std::mt19937_64 rng(8);
  const CxMat w0 = random_cx(2, 6, rng);
  CalibrationSystem sys;
  sys.sources = random_cx(6, 2, rng);  // M = 2 < p = 6
  sys.targets = w0 * sys.sources;
  const CxMat w = estimate_weights(sys);
  CHECK((sys.targets - w * sys.sources).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(w.norm() <= w0.norm() + 1e-9);
}

TEST_CASE("interpolation fills an exactly consistent frame") {
  const int nc = 2, ny = 8, nx = 5, ncal = 4;
  const SamplingMask mask(ny, nx, 2);
  const KernelSpec kernel(2, 1);
  // One linear relation underlies both the calibration and the test frame.
  const CoilSeries both = consistent_series(ncal + 1, nc, ny, nx, mask, kernel, 99);
  CoilSeries calib(ncal, nc, ny, nx);
  CoilSeries truth(1, nc, ny, nx);
  for (int t = 0; t < ncal; ++t)
    for (int c = 0; c < nc; ++c) calib.at(t, c) = both.at(t, c);
  for (int c = 0; c < nc; ++c) truth.at(0, c) = both.at(ncal, c);
  const CoilSeries sub = subsample(truth, mask);

  const WeightSet ws = estimate_weights_all(calib, mask, kernel);
  std::vector<CxMat> planes(nc);
  for (int c = 0; c < nc; ++c) planes[c] = sub.at(0, c);
  interpolate_missing(planes, mask, ws);
  for (int c = 0; c < nc; ++c) {
    CHECK((planes[c] - truth.at(0, c)).cwiseAbs().maxCoeff() < 1e-8);
    for (int r : mask.acquired_rows())
      CHECK((planes[c].row(r) - sub.at(0, c).row(r)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("single missing point matches the dense multiply oracle") {
  const int nc = 2, ny = 4, nx = 3, ncal = 12;
  const SamplingMask mask(ny, nx, 2);
  const KernelSpec kernel(2, 1);
  std::mt19937_64 rng(21);
  CoilSeries calib(ncal, nc, ny, nx);
  for (int t = 0; t < ncal; ++t)
    for (int c = 0; c < nc; ++c) calib.at(t, c) = random_cx(ny, nx, rng);
  const WeightSet ws = estimate_weights_all(calib, mask, kernel);

  CoilSeries frame(1, nc, ny, nx);
  for (int c = 0; c < nc; ++c) frame.at(0, c) = random_cx(ny, nx, rng);
  const CoilSeries sub = subsample(frame, mask);
  std::vector<CxMat> planes(nc);
  for (int c = 0; c < nc; ++c) planes[c] = sub.at(0, c);
  interpolate_missing(planes, mask, ws);

  // Recompute the fill for missing point (1, 1) by hand.
  size_t ci = 0;
  for (; ci < ws.classes.size(); ++ci) {
    if (ws.classes[ci].col == 1 &&
        std::count(ws.classes[ci].target_rows.begin(), ws.classes[ci].target_rows.end(), 1))
      break;
  }
  REQUIRE(ci < ws.classes.size());
  const MissingClass& mc = ws.classes[ci];
  CxVec src(ws.weights[ci].cols());
  int slot = 0;
  for (int dr : mc.row_offsets)
    for (int sc : mc.src_cols) {
      for (int coil = 0; coil < nc; ++coil) src(slot * nc + coil) = sub.at(0, coil)(1 + dr, sc);
      ++slot;
    }
  const CxVec expect = oracles::loop_matvec(ws.weights[ci], src);
  for (int coil = 0; coil < nc; ++coil)
    CHECK(std::abs(planes[coil](1, 1) - expect(coil)) < 1e-12);
}

TEST_CASE("complex and iso interpolation paths agree to 1e-12") {
  const int nc = 3, ny = 9, nx = 4, ncal = 20;
  const SamplingMask mask(ny, nx, 3);
  const KernelSpec kernel(2, 1);
  std::mt19937_64 rng(31);
  CoilSeries calib(ncal, nc, ny, nx);
  for (int t = 0; t < ncal; ++t)
    for (int c = 0; c < nc; ++c) calib.at(t, c) = random_cx(ny, nx, rng);
  const WeightSet ws = estimate_weights_all(calib, mask, kernel);

  CoilSeries frame(1, nc, ny, nx);
  for (int c = 0; c < nc; ++c) frame.at(0, c) = random_cx(ny, nx, rng);
  const CoilSeries sub = subsample(frame, mask);
  std::vector<CxMat> a(nc), b(nc);
  for (int c = 0; c < nc; ++c) a[c] = b[c] = sub.at(0, c);
  interpolate_missing(a, mask, ws, false);
  interpolate_missing(b, mask, ws, true);
  for (int c = 0; c < nc; ++c) CHECK((a[c] - b[c]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("weight sets built for a different mask are rejected") {
  std::mt19937_64 rng(55);
  const int nc = 2, ny = 8, nx = 4;
  CoilSeries calib(6, nc, ny, nx);
  for (int t = 0; t < 6; ++t)
    for (int c = 0; c < nc; ++c) calib.at(t, c) = random_cx(ny, nx, rng);
  const WeightSet ws = estimate_weights_all(calib, SamplingMask(ny, nx, 2), KernelSpec(2, 1));
  std::vector<CxMat> planes(nc, CxMat::Zero(ny, nx));
  CHECK_THROWS_AS(interpolate_missing(planes, SamplingMask(ny, nx, 4), ws, false),
                  std::invalid_argument);
}

TEST_CASE("missing points of one class share a weight matrix") {
  const SamplingMask mask(12, 4, 3);
  const KernelSpec kernel(2, 1);
  const auto classes = missing_classes(mask, kernel);
  // Interior offset-1 rows 4, 7 share the (-1, +2) pattern in every column.
  bool found = false;
  for (const auto& mc : classes)
    if (mc.col == 2 && mc.row_offsets == std::vector<int>{-1, 2}) {
      CHECK(std::count(mc.target_rows.begin(), mc.target_rows.end(), 4) == 1);
      CHECK(std::count(mc.target_rows.begin(), mc.target_rows.end(), 7) == 1);
      found = true;
    }
  CHECK(found);
}

TEST_CASE("grappa_reconstruct") {
  std::mt19937_64 rng(41);
  SUBCASE("full sampling degenerates to coil average + ift2") {
    const int nc = 2, ny = 8, nx = 8;
    CoilSeries full(2, nc, ny, nx);
    for (int t = 0; t < 2; ++t)
      for (int c = 0; c < nc; ++c) full.at(t, c) = random_cx(ny, nx, rng);
    const auto images = grappa_reconstruct(full, full, SamplingMask(ny, nx, 1), KernelSpec(2, 1));
    for (int t = 0; t < 2; ++t)
      CHECK((images[t] - ift2(coil_average(full, t))).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("16x16 two-coil exact relation reconstructs below 1e-6") {
    const int nc = 2, ny = 16, nx = 16;
    const SamplingMask mask(ny, nx, 2);
    const KernelSpec kernel(2, 1);
    const CoilSeries both = consistent_series(11, nc, ny, nx, mask, kernel, 7);
    CoilSeries calib(10, nc, ny, nx);
    CoilSeries truth(1, nc, ny, nx);
    for (int t = 0; t < 10; ++t)
      for (int c = 0; c < nc; ++c) calib.at(t, c) = both.at(t, c);
    for (int c = 0; c < nc; ++c) truth.at(0, c) = both.at(10, c);
    const CoilSeries sub = subsample(truth, mask);
    const auto rec = grappa_reconstruct(sub, calib, mask, kernel);
    const CxMat expect = ift2(coil_average(truth, 0));
    CHECK((rec[0] - expect).cwiseAbs().maxCoeff() < 1e-6);
  }
}
