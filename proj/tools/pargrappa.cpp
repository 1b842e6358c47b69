// Command-line front end: simulate | reconstruct | analyze | compare | export-pgm.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "pargrappa/analyze.hpp"
#include "pargrappa/bgrappa.hpp"
#include "pargrappa/grappa.hpp"
#include "pargrappa/io.hpp"
#include "pargrappa/simulate.hpp"
#include "pargrappa/threading.hpp"

namespace fs = std::filesystem;
using namespace pargrappa;

namespace {

KernelSpec parse_kernel(const std::string& spec) {
  const auto x = spec.find('x');
  if (x == std::string::npos)
    throw std::invalid_argument("kernel must look like ROWSxCOLS, e.g. 2x1");
  return KernelSpec(std::stoi(spec.substr(0, x)), std::stoi(spec.substr(x + 1)));
}

RMat magnitude_of(const CxMat& m) { return m.cwiseAbs(); }
RMat phase_of(const CxMat& m) {
  RMat out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out(r, c) = std::arg(m(r, c));
  return out;
}

void write_frame_log(const fs::path& path, const std::vector<FrameLog>& log) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << "t,groups,max_sweeps,mean_tau2,ms\n";
  for (const auto& fl : log)
    f << fl.t << "," << fl.groups << "," << fl.max_sweeps << "," << fl.mean_tau2 << ","
      << fl.ms << "\n";
}

struct SimulateArgs {
  SimParams params;
  std::string out_dir;
  bool no_task = false;
};

void run_simulate(const SimulateArgs& a) {
  SimParams p = a.params;
  p.with_task = !a.no_task;
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);

  std::cout << "simulate: ny=" << p.ny << " nx=" << p.nx << " ncoils=" << p.nc
            << " accel=" << p.accel << " phase-offset=" << p.phase_offset
            << " ncal=" << p.ncal << " seed=" << p.seed << " beta1=" << p.beta1
            << " theta1=" << p.theta1 << " noise-scale=" << p.noise_scale
            << " frames=" << p.design.n_img() << " task=" << (p.with_task ? "yes" : "no")
            << "\n";

  const SimOutput out = simulate_experiment(p);
  io::write_kts_series(dir / "calib.kts", out.calib);
  io::write_kts_series(dir / "subsampled.kts", out.subsampled);
  if (p.keep_full) io::write_kts_series(dir / "full.kts", out.full);
  io::write_kts_image(dir / "truth_nontask.kts", out.truth_nontask);
  io::write_kts_image(dir / "truth_task.kts", out.truth_task);
  io::write_kms(dir / "sampling.kms", out.mask.to_matrix());
  io::write_kms(dir / "brain.kms", out.brain);
  io::write_kms(dir / "roi.kms", out.roi);
  io::write_kms(dir / "tissue.kms", out.tissue);
  io::write_design_csv(dir / "design.csv", out.design);
  std::cout << "simulate: wrote " << dir.string() << "\n";
}

struct ReconstructArgs {
  std::string method = "bgrappa";
  std::string dir;
  std::string input, calib, mask;
  std::string out = "recon.kts";
  std::string log;
  std::string kernel = "2x1";
  int max_iter = 10;
  double rel_tol = 1e-8;
  int bootstrap = 0;
  double prior_scalar = 0;
  std::uint64_t seed = 0;
  int threads = 0;
};

void run_reconstruct(const ReconstructArgs& a) {
  const fs::path dir(a.dir.empty() ? "." : a.dir);
  const fs::path in_path = a.input.empty()
                               ? dir / (a.method == "reference" ? "full.kts" : "subsampled.kts")
                               : fs::path(a.input);
  const CoilSeries sub = io::read_kts_series(in_path);

  std::vector<CxMat> images;
  std::vector<FrameLog> log(sub.nt());
  const auto t0 = std::chrono::steady_clock::now();
  if (a.method == "reference") {
    images = reference_reconstruct(sub, a.threads);
  } else {
    const fs::path mask_path = a.mask.empty() ? dir / "sampling.kms" : fs::path(a.mask);
    const fs::path calib_path = a.calib.empty() ? dir / "calib.kts" : fs::path(a.calib);
    const SamplingMask mask = SamplingMask::from_matrix(io::read_kms(mask_path));
    const CoilSeries calib = io::read_kts_series(calib_path);
    const KernelSpec kernel = parse_kernel(a.kernel);
    if (a.method == "grappa") {
      images = grappa_reconstruct(sub, calib, mask, kernel, a.threads);
    } else if (a.method == "bgrappa") {
      IcmConfig cfg;
      cfg.max_iter = a.max_iter;
      cfg.rel_tol = a.rel_tol;
      cfg.threads = a.threads;
      cfg.seed = a.seed;
      if (a.bootstrap > 0) {
        cfg.bootstrap_calibration = true;
        cfg.bootstrap_size = a.bootstrap;
      }
      if (a.prior_scalar > 0) cfg.prior_scalar_override = a.prior_scalar;
      images = bgrappa_reconstruct(sub, calib, mask, kernel, cfg, &log);
    } else {
      throw std::invalid_argument("unknown method: " + a.method);
    }
  }
  const double total_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  io::write_kts_images(a.out, images);
  if (!a.log.empty()) {
    for (int t = 0; t < static_cast<int>(log.size()); ++t) log[t].t = t;
    write_frame_log(a.log, log);
  }
  std::cout << "reconstruct: method=" << a.method << " frames=" << images.size() << " "
            << total_ms / std::max<size_t>(1, images.size()) << " ms/frame -> " << a.out << "\n";
}

struct AnalyzeArgs {
  std::string recon;
  std::string design;
  std::string truth_nontask, truth_task;
  std::string brain, roi;
  std::string out_dir = ".";
  double q = 0.05;
  bool phase = false;
};

struct RoiSummary {
  int significant = 0;
  double mean_t = 0;
};

RoiSummary run_analyze(const AnalyzeArgs& a) {
  const std::vector<CxMat> recon = io::read_kts_images(a.recon);
  const int ny = static_cast<int>(recon[0].rows());
  const int nx = static_cast<int>(recon[0].cols());
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);

  ByteMat brain = a.brain.empty() ? ByteMat::Constant(ny, nx, 1) : io::read_kms(a.brain);
  ByteMat roi = a.roi.empty() ? ByteMat::Zero(ny, nx) : io::read_kms(a.roi);

  std::optional<std::vector<int>> design;
  if (!a.design.empty()) {
    std::vector<int> x = io::read_design_csv(a.design);
    const long ones = std::count(x.begin(), x.end(), 1);
    if (ones > 0 && ones < static_cast<long>(x.size())) design = std::move(x);
  }

  const TemporalStats stats = temporal_stats(recon, design, roi);

  // Voxel table with BH-FDR flags.
  std::vector<double> pvals(static_cast<size_t>(ny) * nx, 1.0);
  std::vector<GlmFit> fits(static_cast<size_t>(ny) * nx);
  RVec y(recon.size());
  for (int r = 0; r < ny; ++r)
    for (int c = 0; c < nx; ++c) {
      GlmFit fit;
      if (design) {
        for (size_t t = 0; t < recon.size(); ++t) y(static_cast<Eigen::Index>(t)) =
            a.phase ? std::arg(recon[t](r, c)) : std::abs(recon[t](r, c));
        fit = a.phase ? fit_phase_glm(y, *design) : fit_glm(y, *design);
      }
      fits[static_cast<size_t>(r) * nx + c] = fit;
      pvals[static_cast<size_t>(r) * nx + c] = fit.p;
    }
  const std::vector<std::uint8_t> sig = fdr_threshold(pvals, a.q);

  {
    std::ofstream f(dir / "stats.csv");
    f << "voxel_row,voxel_col,beta0,beta1,t,p,significant\n";
    for (int r = 0; r < ny; ++r)
      for (int c = 0; c < nx; ++c) {
        const GlmFit& fit = fits[static_cast<size_t>(r) * nx + c];
        f << r << "," << c << "," << fit.beta0 << "," << fit.beta1 << "," << fit.t << ","
          << fit.p << "," << int(sig[static_cast<size_t>(r) * nx + c]) << "\n";
      }
  }

  // Quality metrics against the non-task truth on the first frame.
  double mse_in = 0, mse_out = 0, entropy_v = 0, mean_snr_in = 0;
  if (!a.truth_nontask.empty()) {
    const CxMat truth = io::read_kts_image(a.truth_nontask);
    ByteMat outside = brain;
    for (int r = 0; r < ny; ++r)
      for (int c = 0; c < nx; ++c) outside(r, c) = brain(r, c) ? 0 : 1;
    mse_in = mse_magnitude(recon[0], truth, brain);
    mse_out = mse_magnitude(recon[0], truth, outside);
  }
  entropy_v = image_entropy(magnitude_of(recon[0]));
  long nb = 0;
  for (int r = 0; r < ny; ++r)
    for (int c = 0; c < nx; ++c)
      if (brain(r, c)) {
        mean_snr_in += stats.snr(r, c);
        ++nb;
      }
  mean_snr_in = nb ? mean_snr_in / nb : 0;
  {
    std::ofstream f(dir / "quality.csv");
    f << "mse_in,mse_out,entropy,mean_snr_in,roi_cnr\n";
    f << mse_in << "," << mse_out << "," << entropy_v << "," << mean_snr_in << ","
      << stats.roi_cnr << "\n";
  }

  io::write_pgm(dir / "magnitude.pgm", magnitude_of(recon[0]));
  io::write_pgm(dir / "phase.pgm", phase_of(recon[0]));
  io::write_pgm(dir / "tmap.pgm", stats.t_stat);

  RoiSummary summary;
  double t_sum = 0;
  int t_count = 0;
  for (int r = 0; r < ny; ++r)
    for (int c = 0; c < nx; ++c)
      if (roi(r, c)) {
        if (sig[static_cast<size_t>(r) * nx + c]) ++summary.significant;
        t_sum += stats.t_stat(r, c);
        ++t_count;
      }
  summary.mean_t = t_count ? t_sum / t_count : 0;
  std::cout << "analyze: roi significant=" << summary.significant << " mean_t=" << summary.mean_t
            << " mse_in=" << mse_in << " entropy=" << entropy_v << " roi_cnr=" << stats.roi_cnr
            << " -> " << dir.string() << "\n";
  return summary;
}

struct CompareArgs {
  std::string dir;
  std::string accel_list;
  std::string recon_a, recon_b;
  std::string out = "compare.csv";
  std::string kernel = "2x1";
  int threads = 0;
  std::uint64_t seed = 0;
};

struct MethodMetrics {
  double mse_in = 0, mse_out = 0, entropy = 0, mean_t = 0;
  int roi_sig = 0;
};

MethodMetrics metrics_for(const std::vector<CxMat>& images, const CxMat& truth,
                          const ByteMat& brain, const ByteMat& roi,
                          const std::optional<std::vector<int>>& design, double q) {
  MethodMetrics m;
  const int ny = static_cast<int>(images[0].rows());
  const int nx = static_cast<int>(images[0].cols());
  ByteMat outside(ny, nx);
  for (int r = 0; r < ny; ++r)
    for (int c = 0; c < nx; ++c) outside(r, c) = brain(r, c) ? 0 : 1;
  m.mse_in = mse_magnitude(images[0], truth, brain);
  m.mse_out = mse_magnitude(images[0], truth, outside);
  m.entropy = image_entropy(images[0].cwiseAbs());
  if (design && images.size() >= 3) {
    const TemporalStats st = temporal_stats(images, design, roi);
    std::vector<double> pv;
    pv.reserve(static_cast<size_t>(ny) * nx);
    RVec y(images.size());
    std::vector<double> pvals(static_cast<size_t>(ny) * nx, 1.0);
    for (int r = 0; r < ny; ++r)
      for (int c = 0; c < nx; ++c) {
        for (size_t t = 0; t < images.size(); ++t)
          y(static_cast<Eigen::Index>(t)) = std::abs(images[t](r, c));
        pvals[static_cast<size_t>(r) * nx + c] = fit_glm(y, *design).p;
      }
    const auto sig = fdr_threshold(pvals, q);
    double t_sum = 0;
    int n_roi = 0;
    for (int r = 0; r < ny; ++r)
      for (int c = 0; c < nx; ++c)
        if (roi(r, c)) {
          if (sig[static_cast<size_t>(r) * nx + c]) ++m.roi_sig;
          t_sum += st.t_stat(r, c);
          ++n_roi;
        }
    m.mean_t = n_roi ? t_sum / n_roi : 0;
  }
  return m;
}

void write_compare_header(std::ofstream& f) {
  f << "accel,method_a,method_b,mse_in_a,mse_in_b,delta_mse_in,mse_out_a,mse_out_b,"
       "delta_mse_out,entropy_a,entropy_b,delta_entropy,roi_sig_a,roi_sig_b,delta_roi_sig,"
       "mean_t_a,mean_t_b,delta_mean_t\n";
}

void write_compare_row(std::ofstream& f, int accel, const std::string& ma, const std::string& mb,
                       const MethodMetrics& a, const MethodMetrics& b) {
  f << accel << "," << ma << "," << mb << "," << a.mse_in << "," << b.mse_in << ","
    << (a.mse_in - b.mse_in) << "," << a.mse_out << "," << b.mse_out << ","
    << (a.mse_out - b.mse_out) << "," << a.entropy << "," << b.entropy << ","
    << (a.entropy - b.entropy) << "," << a.roi_sig << "," << b.roi_sig << ","
    << (a.roi_sig - b.roi_sig) << "," << a.mean_t << "," << b.mean_t << ","
    << (a.mean_t - b.mean_t) << "\n";
}

void run_compare(const CompareArgs& a) {
  std::ofstream f(a.out);
  if (!f) throw std::runtime_error("cannot open for writing: " + a.out);
  write_compare_header(f);

  if (!a.recon_a.empty() || !a.recon_b.empty()) {
    if (a.recon_a.empty() || a.recon_b.empty())
      throw std::invalid_argument("compare: need both --recon-a and --recon-b");
    const fs::path dir(a.dir.empty() ? "." : a.dir);
    const auto ia = io::read_kts_images(a.recon_a);
    const auto ib = io::read_kts_images(a.recon_b);
    const CxMat truth = io::read_kts_image(dir / "truth_nontask.kts");
    const ByteMat brain = io::read_kms(dir / "brain.kms");
    const ByteMat roi = io::read_kms(dir / "roi.kms");
    std::optional<std::vector<int>> design;
    if (fs::exists(dir / "design.csv")) {
      auto x = io::read_design_csv(dir / "design.csv");
      const long ones = std::count(x.begin(), x.end(), 1);
      if (ones > 0 && ones < static_cast<long>(x.size()) &&
          x.size() == ia.size() && ia.size() >= 3)
        design = std::move(x);
    }
    const auto ma = metrics_for(ia, truth, brain, roi, design, 0.05);
    const auto mb = metrics_for(ib, truth, brain, roi, design, 0.05);
    write_compare_row(f, 0, "a", "b", ma, mb);
    std::cout << "compare: wrote " << a.out << "\n";
    return;
  }

  if (a.dir.empty()) throw std::invalid_argument("compare: need --dir or --recon-a/--recon-b");
  const fs::path dir(a.dir);
  const CoilSeries full = io::read_kts_series(dir / "full.kts");
  const CoilSeries calib = io::read_kts_series(dir / "calib.kts");
  const CxMat truth = io::read_kts_image(dir / "truth_nontask.kts");
  const ByteMat brain = io::read_kms(dir / "brain.kms");
  const ByteMat roi = io::read_kms(dir / "roi.kms");
  std::optional<std::vector<int>> design;
  if (fs::exists(dir / "design.csv")) {
    auto x = io::read_design_csv(dir / "design.csv");
    const long ones = std::count(x.begin(), x.end(), 1);
    if (ones > 0 && ones < static_cast<long>(x.size()) &&
        static_cast<int>(x.size()) == full.nt() && full.nt() >= 3)
      design = std::move(x);
  }
  const KernelSpec kernel = parse_kernel(a.kernel);

  std::vector<int> accels;
  std::stringstream ss(a.accel_list.empty() ? "3" : a.accel_list);
  for (std::string tok; std::getline(ss, tok, ',');) accels.push_back(std::stoi(tok));

  for (int accel : accels) {
    const SamplingMask mask(full.ny(), full.nx(), accel, 0);
    const CoilSeries sub = subsample(full, mask);
    const auto g = grappa_reconstruct(sub, calib, mask, kernel, a.threads);
    IcmConfig cfg;
    cfg.threads = a.threads;
    cfg.seed = a.seed;
    const auto b = bgrappa_reconstruct(sub, calib, mask, kernel, cfg);
    const auto mg = metrics_for(g, truth, brain, roi, design, 0.05);
    const auto mb = metrics_for(b, truth, brain, roi, design, 0.05);
    write_compare_row(f, accel, "grappa", "bgrappa", mg, mb);
  }
  std::cout << "compare: wrote " << a.out << "\n";
}

struct ExportArgs {
  std::string input;
  int frame = 0;
  std::string mode = "magnitude";
  std::string out = "out.pgm";
};

void run_export(const ExportArgs& a) {
  const auto images = io::read_kts_images(a.input);
  if (a.frame < 0 || a.frame >= static_cast<int>(images.size()))
    throw std::invalid_argument("export-pgm: frame out of range");
  if (a.mode == "magnitude")
    io::write_pgm(a.out, magnitude_of(images[a.frame]));
  else if (a.mode == "phase")
    io::write_pgm(a.out, phase_of(images[a.frame]));
  else
    throw std::invalid_argument("export-pgm: mode must be magnitude or phase");
  std::cout << "export-pgm: wrote " << a.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parallel MRI reconstruction: GRAPPA and Bayesian GRAPPA with an fMRI "
               "simulation harness and activation statistics"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* cmd_sim = app.add_subcommand("simulate", "generate a synthetic fMRI acquisition");
  cmd_sim->add_option("--ny", sim.params.ny);
  cmd_sim->add_option("--nx", sim.params.nx);
  cmd_sim->add_option("--ncoils", sim.params.nc);
  cmd_sim->add_option("--accel", sim.params.accel);
  cmd_sim->add_option("--phase-offset", sim.params.phase_offset);
  cmd_sim->add_option("--ncal", sim.params.ncal);
  cmd_sim->add_option("--seed", sim.params.seed);
  cmd_sim->add_option("--beta1", sim.params.beta1);
  cmd_sim->add_option("--theta1", sim.params.theta1);
  cmd_sim->add_option("--noise-scale", sim.params.noise_scale);
  cmd_sim->add_option("--head", sim.params.design.n_rest_head);
  cmd_sim->add_option("--epochs", sim.params.design.epoch_count);
  cmd_sim->add_option("--off", sim.params.design.off_len);
  cmd_sim->add_option("--on", sim.params.design.on_len);
  cmd_sim->add_option("--tail", sim.params.design.n_rest_tail);
  cmd_sim->add_option("--discard", sim.params.design.discard);
  cmd_sim->add_option("--style", sim.params.phantom_style);
  cmd_sim->add_flag("--no-task", sim.no_task);
  cmd_sim->add_option("--out", sim.out_dir)->required();

  ReconstructArgs rec;
  auto* cmd_rec = app.add_subcommand("reconstruct", "fill unacquired k-space and image the series");
  cmd_rec->add_option("--method", rec.method)->check(CLI::IsMember({"grappa", "bgrappa", "reference"}));
  cmd_rec->add_option("--dir", rec.dir);
  cmd_rec->add_option("--input", rec.input);
  cmd_rec->add_option("--calib", rec.calib);
  cmd_rec->add_option("--mask", rec.mask);
  cmd_rec->add_option("--out", rec.out);
  cmd_rec->add_option("--log", rec.log);
  cmd_rec->add_option("--kernel", rec.kernel);
  cmd_rec->add_option("--max-iter", rec.max_iter);
  cmd_rec->add_option("--rel-tol", rec.rel_tol);
  cmd_rec->add_option("--bootstrap-calib", rec.bootstrap);
  cmd_rec->add_option("--prior-scalar", rec.prior_scalar);
  cmd_rec->add_option("--seed", rec.seed);
  cmd_rec->add_option("--threads", rec.threads);

  AnalyzeArgs ana;
  auto* cmd_ana = app.add_subcommand("analyze", "GLM activation statistics and quality metrics");
  cmd_ana->add_option("--recon", ana.recon)->required();
  cmd_ana->add_option("--design", ana.design);
  cmd_ana->add_option("--truth-nontask", ana.truth_nontask);
  cmd_ana->add_option("--truth-task", ana.truth_task);
  cmd_ana->add_option("--brain", ana.brain);
  cmd_ana->add_option("--roi", ana.roi);
  cmd_ana->add_option("--q", ana.q);
  cmd_ana->add_flag("--phase", ana.phase);
  cmd_ana->add_option("--out", ana.out_dir);

  CompareArgs cmp;
  auto* cmd_cmp = app.add_subcommand("compare", "GRAPPA vs BGRAPPA metric table");
  cmd_cmp->add_option("--dir", cmp.dir);
  cmd_cmp->add_option("--accel", cmp.accel_list);
  cmd_cmp->add_option("--recon-a", cmp.recon_a);
  cmd_cmp->add_option("--recon-b", cmp.recon_b);
  cmd_cmp->add_option("--kernel", cmp.kernel);
  cmd_cmp->add_option("--threads", cmp.threads);
  cmd_cmp->add_option("--seed", cmp.seed);
  cmd_cmp->add_option("--out", cmp.out);

  ExportArgs exp;
  auto* cmd_exp = app.add_subcommand("export-pgm", "render a frame as 8-bit PGM");
  cmd_exp->add_option("--input", exp.input)->required();
  cmd_exp->add_option("--frame", exp.frame);
  cmd_exp->add_option("--mode", exp.mode)->check(CLI::IsMember({"magnitude", "phase"}));
  cmd_exp->add_option("--out", exp.out);

  try {
    app.parse(argc, argv);
    if (cmd_sim->parsed()) run_simulate(sim);
    if (cmd_rec->parsed()) run_reconstruct(rec);
    if (cmd_ana->parsed()) run_analyze(ana);
    if (cmd_cmp->parsed()) run_compare(cmp);
    if (cmd_exp->parsed()) run_export(exp);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
