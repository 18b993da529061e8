#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "crfrestore/solver.hpp"
#include "support.hpp"

using namespace crf;
using crf::testing::random_image;
using crf::testing::synthetic_scene;

namespace {

SolverConfig small_config(Task task, PriorKind prior, double sigma) {
  SolverConfig c = task == Task::denoise ? paper_denoise_preset(sigma, prior) : paper_inpaint_preset(sigma, prior);
  c.iterations = 3;
  c.seed = 42;
  return c;
}

// Independent evaluation of the penalized objective from its definition.
double objective_oracle(const SolverState& s, const IterationModel& m, const Problem& pb) {
  const auto& sys = pb.sys();
  const std::size_t ps = sys.patch_size();
  const double sigma2 = pb.sigma2();
  double total = 0.0;
  for (auto i : m.active) {
    const auto pos = sys.position(i);
    const auto c = m.cluster_of(i);
    Eigen::VectorXd z = s.z.col(Eigen::Index(i));
    double data = 0.0;
    double split = 0.0;
    double couple = 0.0;
    for (std::size_t a = 0; a < ps; ++a)
      for (std::size_t b = 0; b < ps; ++b) {
        const Eigen::Index j = Eigen::Index(a * ps + b);
        const std::size_t r = pos.row + a;
        const std::size_t col = pos.col + b;
        const double xv = s.x(r, col);
        const double yv = pb.y()(r, col);
        split += (xv - z[j]) * (xv - z[j]);
        if (pb.inpainting()) {
          const double h = (*pb.mask())(r, col) ? 1.0 : 0.0;
          const double qv = s.q(j, Eigen::Index(i));
          if (sigma2 > 0.0) data += h * (yv - qv) * (yv - qv);
          couple += (h * z[j] - qv) * (h * z[j] - qv);
        } else if (sigma2 > 0.0) {
          data += (yv - z[j]) * (yv - z[j]);
        }
      }
    double prior = 0.0;
    if (pb.cfg().prior == PriorKind::gaussian) {
      const auto& g = m.gaussian[c];
      const Eigen::MatrixXd cov = g.cov.matrix();
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
      const Eigen::VectorXd r = z - g.mu;
      prior = 0.5 * r.dot(ldlt.solve(r)) + 0.5 * ldlt.vectorD().array().log().sum() +
              0.5 * double(z.size()) * std::log(2.0 * M_PI);
    } else {
      const auto& g = m.gsm[c];
      const double v = s.v[i];
      const Eigen::MatrixXd cov = v * g.sigma.matrix();
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
      const Eigen::VectorXd r = z - std::sqrt(v) * g.mu_u;
      prior = 0.5 * r.dot(ldlt.solve(r)) + 0.5 * ldlt.vectorD().array().log().sum() +
              0.5 * double(z.size()) * std::log(2.0 * M_PI);
      prior += -g.alpha * std::log(g.beta) + std::lgamma(g.alpha) - (g.alpha - 1.0) * std::log(v) + g.beta * v;
    }
    total += prior + 0.5 * s.lambda * split + (sigma2 > 0.0 ? data / (2.0 * sigma2) : 0.0) + 0.5 * s.rho * couple;
  }
  return total;
}

}  // namespace

TEST(SolverConfig, PresetsAndValidation) {
  const SolverConfig d = paper_denoise_preset(25.0);
  EXPECT_EQ(d.lambda0, 1e-4);
  EXPECT_EQ(d.gamma1, 1.2);
  EXPECT_EQ(d.iterations, 10);
  EXPECT_EQ(d.patch_size, 8u);
  EXPECT_EQ(d.k_total, 40u);
  EXPECT_EQ(d.window, 40u);
  EXPECT_EQ(d.reference_stride, 5u);
  EXPECT_EQ(d.gsm.alpha, 0.5);
  const SolverConfig p = paper_inpaint_preset(0.0, PriorKind::gaussian);
  EXPECT_EQ(p.lambda0, 1e-6);
  EXPECT_EQ(p.rho0, 0.02);
  EXPECT_EQ(p.gamma1, 1.35);
  EXPECT_EQ(p.gamma2, 1.5);
  EXPECT_NO_THROW(p.validate());
  SolverConfig bad = d;
  bad.gamma1 = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = d;
  bad.k_total = 1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = d;
  bad.sigma = -1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Initialize, DenoiseCopiesObservation) {
  const Image y = random_image(20, 20, 1);
  const SolverConfig cfg = small_config(Task::denoise, PriorKind::gsm, 10.0);
  const Problem pb(y, nullptr, cfg);
  const SolverState s = initialize(pb);
  EXPECT_EQ(s.x, y);
  EXPECT_TRUE(s.z.isZero(0.0));
  EXPECT_EQ(s.lambda, cfg.lambda0);
  EXPECT_EQ(s.rho, cfg.rho0);
  for (double v : s.v) EXPECT_EQ(v, 1.0);
}

TEST(Initialize, InpaintFullMaskCopiesObservation) {
  const Image y = random_image(20, 20, 2);
  const Mask mask(20, 20, true);
  const SolverConfig cfg = small_config(Task::inpaint, PriorKind::gsm, 0.0);
  const SolverState s = initialize(Problem(y, &mask, cfg));
  EXPECT_EQ(s.x, y);
  EXPECT_TRUE(s.q.isZero(0.0));
}

TEST(Initialize, FillKeepsObservedAndStaysInNeighbourRange) {
  const Image clean = synthetic_scene(48, 40);
  const Mask mask = make_mask(48, 40, 0.3, 5);
  const Image y = apply_mask(clean, mask);
  const SolverConfig cfg = small_config(Task::inpaint, PriorKind::gsm, 0.0);
  const SolverState s = initialize(Problem(y, &mask, cfg));
  double lo = 1e9;
  double hi = -1e9;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (mask[i]) {
      lo = std::min(lo, y[i]);
      hi = std::max(hi, y[i]);
    }
  for (std::size_t r = 0; r < 40; ++r)
    for (std::size_t c = 0; c < 48; ++c) {
      if (mask(r, c)) {
        EXPECT_EQ(s.x(r, c), y(r, c));
        continue;
      }
      EXPECT_GE(s.x(r, c), lo);
      EXPECT_LE(s.x(r, c), hi);
      // pixels with observed neighbours are filled in the first sweep from those alone
      double nlo = 1e9;
      double nhi = -1e9;
      for (std::size_t rr = r ? r - 1 : 0; rr <= std::min<std::size_t>(39, r + 1); ++rr)
        for (std::size_t cc = c ? c - 1 : 0; cc <= std::min<std::size_t>(47, c + 1); ++cc)
          if (mask(rr, cc)) {
            nlo = std::min(nlo, y(rr, cc));
            nhi = std::max(nhi, y(rr, cc));
          }
      if (nlo <= nhi) {
        EXPECT_GE(s.x(r, c), nlo - 1e-12);
        EXPECT_LE(s.x(r, c), nhi + 1e-12);
      }
    }
}

TEST(Initialize, PatchWithoutObservationsIsRejected) {
  const Image y(24, 24, 100.0);
  Mask mask(24, 24, true);
  for (std::size_t r = 8; r < 17; ++r)
    for (std::size_t c = 8; c < 17; ++c) mask.set(r, c, false);
  const SolverConfig cfg = small_config(Task::inpaint, PriorKind::gsm, 0.0);
  try {
    initialize(Problem(y, &mask, cfg));
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("keep probability"), std::string::npos);
  }
}

TEST(Problem, TaskAndMaskConsistency) {
  const Image y = random_image(16, 16, 3);
  SolverConfig cfg = small_config(Task::inpaint, PriorKind::gaussian, 0.0);
  EXPECT_THROW(Problem(y, nullptr, cfg), std::invalid_argument);
  const Mask wrong(15, 16, true);
  EXPECT_THROW(Problem(y, &wrong, cfg), DimensionError);
  cfg.task = Task::denoise;
  Mask partial(16, 16, true);
  partial.set(3, false);
  EXPECT_THROW(Problem(y, &partial, cfg), std::invalid_argument);
}

TEST(UpdateQ, ClosedFormCases) {
  const Image clean = synthetic_scene(24, 24);
  const Mask mask = make_mask(24, 24, 0.6, 9);
  const Image y = apply_mask(add_noise(clean, 10.0, 1), mask);
  SolverConfig cfg = small_config(Task::inpaint, PriorKind::gaussian, 10.0);
  const Problem pb(y, &mask, cfg);
  SolverState s = initialize(pb);
  const Eigen::MatrixXd w = working_patches(s, pb.sys());
  const IterationModel m = estimate_model(w, pb, 0);
  load_active_z(s, m, w);

  // sigma^2 rho = 1: q = (y + H z) / 2 on observed coordinates
  s.rho = 1.0 / 100.0;
  update_q(s, m, pb);
  for (auto i : m.active) {
    const Eigen::VectorXd h = pb.observed(i);
    const Eigen::VectorXd expect = (h.array() * (pb.y_patch(i) + s.z.col(Eigen::Index(i))).array() / 2.0).matrix();
    EXPECT_LT((s.q.col(Eigen::Index(i)) - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
  // per-coordinate stationarity of h (y - q)^2 / (2 sigma^2) + rho/2 (h z - q)^2
  s.rho = 0.37;
  update_q(s, m, pb);
  for (auto i : m.active) {
    const Eigen::VectorXd h = pb.observed(i);
    const Eigen::VectorXd yv = pb.y_patch(i);
    for (Eigen::Index j = 0; j < h.size(); ++j) {
      const double q = s.q(j, Eigen::Index(i));
      const double grad = h[j] * (q - yv[j]) / 100.0 + s.rho * (q - h[j] * s.z(j, Eigen::Index(i)));
      EXPECT_LE(std::abs(grad), 1e-10);
      if (h[j] == 0.0) EXPECT_EQ(q, 0.0);
    }
  }
  // rho -> infinity: q -> H z
  s.rho = 1e12;
  update_q(s, m, pb);
  for (auto i : m.active) {
    const Eigen::VectorXd hz = pb.observed(i).cwiseProduct(s.z.col(Eigen::Index(i)));
    EXPECT_LT((s.q.col(Eigen::Index(i)) - hz).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(UpdateQ, NoiselessIsObservation) {
  const Image clean = synthetic_scene(24, 24);
  const Mask mask = make_mask(24, 24, 0.5, 2);
  const Image y = apply_mask(clean, mask);
  const SolverConfig cfg = small_config(Task::inpaint, PriorKind::gsm, 0.0);
  const Problem pb(y, &mask, cfg);
  SolverState s = initialize(pb);
  const Eigen::MatrixXd w = working_patches(s, pb.sys());
  const IterationModel m = estimate_model(w, pb, 0);
  load_active_z(s, m, w);
  update_q(s, m, pb);
  for (auto i : m.active)
    EXPECT_EQ(Eigen::VectorXd(s.q.col(Eigen::Index(i))), Eigen::VectorXd(pb.observed(i).cwiseProduct(pb.y_patch(i))));
}

TEST(UpdateX, AveragesActivePatches) {
  const Image y = random_image(20, 18, 4);
  const SolverConfig cfg = small_config(Task::denoise, PriorKind::gaussian, 10.0);
  const Problem pb(y, nullptr, cfg);
  SolverState s = initialize(pb);
  const Eigen::MatrixXd w = working_patches(s, pb.sys());
  const IterationModel m = estimate_model(w, pb, 0);
  load_active_z(s, m, w);
  update_x(s, m, pb.sys());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(s.x[i], y[i], 1e-12);
}

TEST(Objective, PenaltiesVanishAtConsensus) {
  const Image y = add_noise(synthetic_scene(32, 32), 10.0, 3);
  const SolverConfig cfg = small_config(Task::denoise, PriorKind::gsm, 10.0);
  const Problem pb(y, nullptr, cfg);
  SolverState s = initialize(pb);
  const Eigen::MatrixXd w = working_patches(s, pb.sys());
  const IterationModel m = estimate_model(w, pb, 0);
  update_v(s, m, w, pb);
  load_active_z(s, m, w);  // z_i = R_i x = y_i: split and data terms are zero
  double prior_only = 0.0;
  for (auto i : m.active)
    prior_only += gsm_neg_log_prior(m.gsm[m.cluster_of(i)], s.v[i], s.z.col(Eigen::Index(i)));
  EXPECT_NEAR(objective(s, m, pb), prior_only, 1e-9 * std::abs(prior_only));
  s.lambda = 1e3;
  EXPECT_NEAR(objective(s, m, pb), prior_only, 1e-9 * std::abs(prior_only));
}

TEST(Objective, DoublingLambdaIncreasesWithResidual) {
  const Image y = add_noise(synthetic_scene(32, 32), 20.0, 4);
  const SolverConfig cfg = small_config(Task::denoise, PriorKind::gaussian, 20.0);
  const Problem pb(y, nullptr, cfg);
  SolverState s = initialize(pb);
  const Eigen::MatrixXd w = working_patches(s, pb.sys());
  const IterationModel m = estimate_model(w, pb, 0);
  load_active_z(s, m, w);
  update_z(s, m, pb);
  const double before = objective(s, m, pb);
  s.lambda *= 2.0;
  EXPECT_GT(objective(s, m, pb), before);
}

TEST(Objective, MatchesSummationOracle) {
  for (auto task : {Task::denoise, Task::inpaint})
    for (auto prior : {PriorKind::gaussian, PriorKind::gsm}) {
      const Image clean = synthetic_scene(28, 26);
      const Mask mask = make_mask(28, 26, 0.5, 7);
      const double sigma = task == Task::denoise ? 15.0 : 5.0;
      Image y = add_noise(clean, sigma, 8);
      if (task == Task::inpaint) y = apply_mask(y, mask);
      SolverConfig cfg = small_config(task, prior, sigma);
      const Problem pb(y, task == Task::inpaint ? &mask : nullptr, cfg);
      SolverState s = initialize(pb);
      const Eigen::MatrixXd w = working_patches(s, pb.sys());
      const IterationModel m = estimate_model(w, pb, 0);
      update_v(s, m, w, pb);
      load_active_z(s, m, w);
      if (pb.inpainting()) update_q(s, m, pb);
      s.lambda = 0.3;
      update_z(s, m, pb);
      const double got = objective(s, m, pb);
      const double expect = objective_oracle(s, m, pb);
      EXPECT_NEAR(got, expect, 1e-10 * std::abs(expect));
    }
}

TEST(Run, NoiselessDenoiseIsNearIdentity) {
  const Image clean = synthetic_scene(40, 40);
  SolverConfig cfg = paper_denoise_preset(0.0);
  cfg.iterations = 1;
  const RunResult r = run(clean, nullptr, cfg);
  EXPECT_GE(psnr(clean, r.restored), 60.0);
}

TEST(Run, FullMaskNoiselessInpaintIsNearIdentity) {
  const Image clean = synthetic_scene(40, 40);
  const Mask mask(40, 40, true);
  const RunResult r = run(clean, &mask, paper_inpaint_preset(0.0));
  EXPECT_GE(psnr(clean, r.restored), 60.0);
}

TEST(Run, DenoisingImprovesPsnr) {
  const Image clean = synthetic_scene(64, 64);
  const Image noisy = add_noise(clean, 20.0, 11);
  for (auto prior : {PriorKind::gaussian, PriorKind::gsm}) {
    SolverConfig cfg = paper_denoise_preset(20.0, prior);
    cfg.iterations = 4;
    const RunResult r = run(noisy, nullptr, cfg);
    EXPECT_GT(psnr(clean, r.restored), psnr(clean, noisy) + 5.0);
  }
}

TEST(Run, InpaintingImprovesOnInitializer) {
  const Image clean = synthetic_scene(64, 64);
  const Mask mask = make_mask(64, 64, 0.5, 12);
  const Image y = apply_mask(clean, mask);
  SolverConfig cfg = paper_inpaint_preset(0.0);
  cfg.iterations = 4;
  const SolverState init = initialize(Problem(y, &mask, cfg));
  const RunResult r = run(y, &mask, cfg);
  EXPECT_GT(psnr(clean, r.restored), psnr(clean, clamped(init.x)));
  for (std::size_t i = 0; i < y.size(); ++i) {
    EXPECT_GE(r.restored[i], 0.0);
    EXPECT_LE(r.restored[i], 255.0);
  }
}

TEST(Run, PenaltyScheduleIsExactlyGeometric) {
  const Image y = add_noise(synthetic_scene(32, 32), 10.0, 13);
  const Mask mask = make_mask(32, 32, 0.7, 13);
  SolverConfig cfg = paper_inpaint_preset(10.0);
  cfg.iterations = 5;
  const RunResult r = run(apply_mask(y, mask), &mask, cfg);
  ASSERT_EQ(r.diagnostics.size(), 5u);
  for (int l = 0; l < 5; ++l) {
    EXPECT_EQ(r.diagnostics[l].iteration, l + 1);
    EXPECT_EQ(r.diagnostics[l].lambda, cfg.lambda0 * std::pow(cfg.gamma1, l));
    EXPECT_EQ(r.diagnostics[l].rho, cfg.rho0 * std::pow(cfg.gamma2, l));
  }
}

TEST(Run, BlockDescentAtFixedModel) {
  const Image clean = synthetic_scene(64, 64);
  const Mask mask = make_mask(64, 64, 0.5, 14);
  for (auto task : {Task::denoise, Task::inpaint})
    for (auto prior : {PriorKind::gaussian, PriorKind::gsm}) {
      const double sigma = task == Task::denoise ? 20.0 : 0.0;
      SolverConfig cfg = task == Task::denoise ? paper_denoise_preset(sigma, prior) : paper_inpaint_preset(sigma, prior);
      cfg.iterations = 4;
      Image y = add_noise(clean, sigma, 15);
      if (task == Task::inpaint) y = apply_mask(y, mask);
      double last = 0.0;
      int checks = 0;
      RunOptions opts;
      opts.observer = [&](Stage st, const SolverState& s, const IterationModel& m, const Problem& pb) {
        const double f = objective(s, m, pb);
        if (st != Stage::model_ready) {
          EXPECT_LE(f, last + 1e-8 * std::abs(last)) << "stage " << int(st) << " iteration " << s.iteration;
          ++checks;
        }
        last = f;
      };
      run(y, task == Task::inpaint ? &mask : nullptr, cfg, opts);
      EXPECT_EQ(checks, task == Task::inpaint ? 12 : 8);
    }
}

TEST(Run, DiagnosticsMatchFinalStageState) {
  const Image clean = synthetic_scene(48, 48);
  const Image noisy = add_noise(clean, 20.0, 16);
  SolverConfig cfg = paper_denoise_preset(20.0);
  cfg.iterations = 3;
  std::vector<double> residuals;
  std::vector<double> objectives;
  std::vector<double> psnrs;
  RunOptions opts;
  opts.reference = &clean;
  opts.observer = [&](Stage st, const SolverState& s, const IterationModel& m, const Problem& pb) {
    if (st != Stage::x_updated) return;
    residuals.push_back(split_residual(s, m, pb.sys()));
    objectives.push_back(objective(s, m, pb));
    psnrs.push_back(psnr(clean, clamped(s.x)));
  };
  const RunResult r = run(noisy, nullptr, cfg, opts);
  ASSERT_EQ(r.diagnostics.size(), 3u);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_EQ(r.diagnostics[l].split_residual, residuals[l]);
    EXPECT_EQ(r.diagnostics[l].objective, objectives[l]);
    EXPECT_EQ(r.diagnostics[l].psnr, psnrs[l]);
    EXPECT_GT(r.diagnostics[l].active_patches, 0u);
  }
  EXPECT_EQ(psnr(clean, r.restored), psnrs.back());
}

TEST(Run, DeterministicAcrossThreadCounts) {
  const Image clean = synthetic_scene(48, 48);
  const Mask mask = make_mask(48, 48, 0.4, 17);
  const Image y = apply_mask(clean, mask);
  SolverConfig cfg = paper_inpaint_preset(0.0);
  cfg.iterations = 3;
  cfg.seed = 99;
  const RunResult a = run(y, &mask, cfg);
  const RunResult b = run(y, &mask, cfg);
  cfg.threads = 4;
  const RunResult c = run(y, &mask, cfg);
  EXPECT_EQ(a.restored, b.restored);
  EXPECT_EQ(a.restored, c.restored);
  for (std::size_t l = 0; l < a.diagnostics.size(); ++l) {
    EXPECT_EQ(a.diagnostics[l].objective, c.diagnostics[l].objective);
  }
}

TEST(Run, ReferenceShapeChecked) {
  const Image y = random_image(20, 20, 18);
  const Image ref = random_image(21, 20, 18);
  RunOptions opts;
  opts.reference = &ref;
  EXPECT_THROW(run(y, nullptr, small_config(Task::denoise, PriorKind::gsm, 10.0), opts), DimensionError);
}

TEST(Diagnostics, CsvLayout) {
  std::vector<IterationRecord> recs(2);
  recs[0] = {1, 1e-4, 0.02, 123.5, 25.25, 0.0, 10, 0.0};
  recs[1] = {2, 1.2e-4, 0.03, 120.0, 26.5, 0.0, 10, 0.0};
  std::ostringstream with;
  write_diagnostics_csv(with, recs, true);
  EXPECT_EQ(with.str(),
            "iteration,lambda,rho,objective,psnr\n1,0.0001,0.02,123.5,25.250000\n2,0.00012,0.03,120,26.500000\n");
  std::ostringstream without;
  write_diagnostics_csv(without, recs, false);
  EXPECT_EQ(without.str(), "iteration,lambda,rho,objective\n1,0.0001,0.02,123.5\n2,0.00012,0.03,120\n");
}
