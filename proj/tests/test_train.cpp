#include <catch2/catch_amalgamated.hpp>
#include <numeric>
#include <sstream>

#include "support/test_oracles.hpp"
#include "tpemimo/train.hpp"

using namespace tpemimo;
using Catch::Approx;

namespace {

TrainingConfig small_config() {
  TrainingConfig cfg;
  cfg.dims = SystemDims(8, 2);
  cfg.order_j = 2;
  cfg.dataset_size = 50;
  cfg.batch_size = 10;
  cfg.epochs = 300;
  cfg.lr0 = 1e-3;
  cfg.decay = std::pow(0.9, 1.0 / 30.0);
  cfg.master_seed = 7;
  return cfg;
}

std::vector<int> all_indices(int n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

std::vector<ChannelSample> materialize(const Dataset& ds) {
  std::vector<ChannelSample> v;
  for (int m = 0; m < ds.size; ++m) v.push_back(ds.sample(m));
  return v;
}

}  // namespace

TEST_CASE("dataset is reproducible per index and across worker counts") {
  TrainingConfig cfg = small_config();
  const Dataset ds = generate_dataset(cfg);

  // M=1 equals sample_channel on the index-0 substream
  Substream rng(cfg.master_seed, "train/channel", 0);
  const ChannelSample direct = sample_channel(cfg.dims, rng);
  REQUIRE((ds.sample(0).h_complex - direct.h_complex).cwiseAbs().maxCoeff() == 0.0);

  const TrainingFeatures f1 = compute_features(ds, cfg.order_j, {}, 1);
  const TrainingFeatures f4 = compute_features(ds, cfg.order_j, {}, 4);
  for (int m = 0; m < ds.size; ++m) {
    REQUIRE((f1.per_sample[m].b - f4.per_sample[m].b).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((f1.per_sample[m].c - f4.per_sample[m].c).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(f1.per_sample[m].d == f4.per_sample[m].d);
  }
}

TEST_CASE("cached zf targets match a fresh dense solve") {
  const Dataset ds = generate_dataset(small_config());
  for (int m : {0, 7, 23}) {
    const MatrixXd direct = zf_matrix(ds.sample(m));
    REQUIRE((ds.zf_target(m) - direct).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("spectral loss equals the dense matrix loss") {
  const Dataset ds = generate_dataset(small_config());
  const int j = 3;
  const TrainingFeatures feats = compute_features(ds, j);
  const auto samples = materialize(ds);
  Substream wr(3, "w");
  for (int rep = 0; rep < 5; ++rep) {
    VectorXd w(j);
    for (int l = 0; l < j; ++l) w(l) = wr.normal();
    const double fast = loss(w, feats, all_indices(ds.size));
    const double dense = oracle::dense_loss(w, samples, j);
    REQUIRE(fast == Approx(dense).epsilon(1e-9));
  }
}

TEST_CASE("zero coefficients reduce the loss to the target norm") {
  const Dataset ds = generate_dataset(small_config());
  const TrainingFeatures feats = compute_features(ds, 2);
  double acc = 0.0;
  for (int m = 0; m < ds.size; ++m) acc += zf_matrix(ds.sample(m)).squaredNorm();
  REQUIRE(loss(VectorXd::Zero(2), feats, all_indices(ds.size)) ==
          Approx(acc / ds.size).epsilon(1e-9));
}

TEST_CASE("alpha_opt coefficients agree with the Neumann-based dense route") {
  const ChannelSample s = oracle::random_sample(8, 2, 77);
  const int j = 3;
  const double a = alpha_opt(s);
  Dataset one{SystemDims(8, 2), 1, 0};
  // single synthetic sample: build features directly
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram(s), Eigen::EigenvaluesOnly);
  TrainingFeatures feats;
  feats.order_j = j;
  feats.per_sample.push_back(features_from_eigenvalues(es.eigenvalues(), j, {}));
  const double fast = loss(coeffs_from_alpha(a, j).w, feats, all_indices(1));
  const MatrixXd w_tpe = neumann_partial_sum(gram(s), a, j) * s.h_real.transpose();
  const double dense = (zf_matrix(s) - w_tpe).squaredNorm();
  REQUIRE(fast == Approx(dense).epsilon(1e-9));
}

TEST_CASE("Cayley-Hamilton: J = K fits one sample exactly") {
  // the real representation doubles every Gram eigenvalue, so one sample has
  // K distinct eigenvalues: a degree-(K-1) polynomial already interpolates
  // the inverse exactly, and the J = 2K normal equations are singular
  for (int k : {2, 4}) {
    const ChannelSample s = oracle::random_sample(k + 2, k, 5);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram(s), Eigen::EigenvaluesOnly);
    TrainingFeatures feats;
    feats.order_j = k;
    feats.per_sample.push_back(features_from_eigenvalues(es.eigenvalues(), k, {}));
    const FitResult fit = closed_form_fit(feats);
    REQUIRE(std::abs(fit.loss) <= 1e-10);  // spectral route: cancellation floor
    REQUIRE(oracle::dense_loss(fit.coeffs.w, {s}, k) <= 1e-18);

    TrainingFeatures doubled;
    doubled.order_j = 2 * k;
    doubled.per_sample.push_back(
        features_from_eigenvalues(es.eigenvalues(), 2 * k, {}));
    REQUIRE_THROWS_AS(closed_form_fit(doubled), IllPosedFitError);
  }
}

TEST_CASE("analytic gradient matches central differences") {
  const Dataset ds = generate_dataset(small_config());
  const int j = 4;
  const TrainingFeatures feats = compute_features(ds, j);
  Substream wr(11, "w");
  for (int rep = 0; rep < 20; ++rep) {
    VectorXd w(j);
    for (int l = 0; l < j; ++l) w(l) = 2.0 * wr.normal();
    std::vector<int> batch;
    for (int m = 0; m < ds.size; ++m)
      if (wr.uniform01() < 0.4) batch.push_back(m);
    if (batch.empty()) batch.push_back(rep % ds.size);
    const VectorXd ga = grad(w, feats, batch);
    const VectorXd gn = oracle::central_difference_grad(
        [&](const VectorXd& v) { return loss(v, feats, batch); }, w, 1e-6);
    for (int i = 0; i < j; ++i) {
      const double denom = std::max({std::abs(ga(i)), std::abs(gn(i)), 1e-12});
      REQUIRE(std::abs(ga(i) - gn(i)) / denom < 1e-6);
    }
  }
}

TEST_CASE("gradient matches the dense-matrix oracle") {
  const Dataset ds = generate_dataset(small_config());
  const int j = 3;
  const TrainingFeatures feats = compute_features(ds, j);
  const auto samples = materialize(ds);
  VectorXd w(j);
  w << 0.9, -0.3, 0.05;
  const VectorXd ga = grad(w, feats, all_indices(ds.size));
  const VectorXd gd = oracle::dense_grad(w, samples, j);
  REQUIRE((ga - gd).cwiseAbs().maxCoeff() <
          1e-9 * std::max(1.0, gd.cwiseAbs().maxCoeff()));
}

TEST_CASE("gradient vanishes at the closed-form optimum") {
  const Dataset ds = generate_dataset(small_config());
  const TrainingFeatures feats = compute_features(ds, 3);
  const FitResult fit = closed_form_fit(feats);
  const VectorXd g = grad(fit.coeffs.w, feats, all_indices(ds.size));
  const VectorXd g0 = grad(VectorXd::Zero(3), feats, all_indices(ds.size));
  REQUIRE(g.cwiseAbs().maxCoeff() <= 1e-9 * g0.cwiseAbs().maxCoeff());
}

TEST_CASE("orthonormal channel, J=1: gradient is -2(1-w)||H^T||_F^2") {
  const ChannelSample s(oracle::random_orthonormal(8, 2, 3));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram(s), Eigen::EigenvaluesOnly);
  TrainingFeatures feats;
  feats.order_j = 1;
  feats.per_sample.push_back(features_from_eigenvalues(es.eigenvalues(), 1, {}));
  const double h_norm2 = s.h_real.squaredNorm();
  for (double w0 : {0.0, 0.5, 2.0}) {
    const VectorXd g = grad(VectorXd::Constant(1, w0), feats, all_indices(1));
    REQUIRE(g(0) == Approx(-2.0 * (1.0 - w0) * h_norm2).margin(1e-9));
  }
  REQUIRE(grad(VectorXd::Ones(1), feats, all_indices(1)).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("adam step mechanics") {
  const AdamParams params;
  OptimizerState state = OptimizerState::init(2, 1e-3);
  VectorXd theta = (VectorXd(2) << 1.0, -2.0).finished();
  const VectorXd before = theta;

  adam_step(params, state, theta, VectorXd::Zero(2));
  REQUIRE(state.step_count == 1);
  REQUIRE((theta - before).cwiseAbs().maxCoeff() == 0.0);  // zero gradient: no move
  REQUIRE(state.m1.cwiseAbs().maxCoeff() == 0.0);

  // constant gradient: the update magnitude approaches lr per coordinate
  const VectorXd g = (VectorXd(2) << 3.7, -0.004).finished();
  for (int t = 0; t < 500; ++t) adam_step(params, state, theta, g);
  VectorXd prev = theta;
  adam_step(params, state, theta, g);
  REQUIRE(std::abs(std::abs((theta - prev)(0)) - state.lr_current) <
          0.01 * state.lr_current);
  REQUIRE(std::abs(std::abs((theta - prev)(1)) - state.lr_current) <
          0.01 * state.lr_current);
  REQUIRE(state.step_count == 502);
}

TEST_CASE("learning-rate schedule") {
  REQUIRE(lr_schedule(1e-3, 0, 0.9) == 1e-3);
  REQUIRE(lr_schedule(1e-3, 1, 0.9) == Approx(9e-4).epsilon(1e-12));
  REQUIRE(lr_schedule(1e-3, 5, 0.9) == Approx(5.9049e-4).epsilon(1e-12));
  REQUIRE_THROWS_AS(lr_schedule(1e-3, -1, 0.9), ValidationError);
}

TEST_CASE("closed-form fit: scalar case and global optimality") {
  const ChannelSample s = oracle::random_sample(6, 2, 19);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram(s), Eigen::EigenvaluesOnly);
  TrainingFeatures feats;
  feats.order_j = 1;
  feats.per_sample.push_back(features_from_eigenvalues(es.eigenvalues(), 1, {}));
  const FitResult fit = closed_form_fit(feats);
  // w0 = <A_0, W_ZF> / <A_0, A_0> = tr(I) / tr(G)
  const double expected = 4.0 / gram(s).trace();
  REQUIRE(fit.coeffs.w(0) == Approx(expected).epsilon(1e-12));

  for (std::uint64_t seed : {1, 2, 3}) {
    TrainingConfig cfg = small_config();
    cfg.master_seed = seed;
    cfg.order_j = 3;
    const Dataset ds = generate_dataset(cfg);
    const TrainingFeatures f = compute_features(ds, 3);
    const FitResult best = closed_form_fit(f);
    double alpha_mean = 0.0;
    for (int m = 0; m < ds.size; ++m) alpha_mean += alpha_opt(ds.sample(m));
    alpha_mean /= ds.size;
    const double analytic =
        loss(coeffs_from_alpha(alpha_mean, 3).w, f, all_indices(ds.size));
    REQUIRE(best.loss <= analytic);
  }
}

TEST_CASE("training is deterministic and beats its initialization") {
  const TrainingConfig cfg = small_config();
  const TrainResult r1 = train(cfg, 1);
  const TrainResult r2 = train(cfg, 2);
  REQUIRE((r1.coeffs.w - r2.coeffs.w).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(r1.history.size() == r2.history.size());
  for (std::size_t e = 0; e < r1.history.size(); ++e)
    REQUIRE(r1.history[e].mean_loss == r2.history[e].mean_loss);

  const Dataset ds = generate_dataset(cfg);
  const TrainingFeatures feats = compute_features(ds, cfg.order_j);
  const VectorXd w0 = coeffs_from_alpha(alpha_constant(cfg.dims), cfg.order_j).w;
  const double init_loss = loss(w0, feats, all_indices(ds.size));
  REQUIRE(r1.final_loss < init_loss);
  REQUIRE(r1.final_loss >= closed_form_fit(feats).loss - 1e-12);
}

TEST_CASE("epoch-mean loss trends down after the transient") {
  const TrainResult r = train(small_config(), 1);
  int upticks = 0, checked = 0;
  for (std::size_t e = 10; e + 1 < r.history.size(); ++e) {
    ++checked;
    if (r.history[e + 1].mean_loss > r.history[e].mean_loss) ++upticks;
  }
  REQUIRE(upticks <= checked / 20);  // <= 5% transient upticks
}

TEST_CASE("schedule is recorded exactly in the history") {
  const TrainResult r = train(small_config(), 1);
  const TrainingConfig cfg = small_config();
  for (const EpochRecord& rec : r.history)
    REQUIRE(rec.lr == Approx(cfg.lr0 * std::pow(cfg.decay, rec.epoch)).epsilon(1e-12));
}

TEST_CASE("absurd learning rate diverges with the epoch index attached") {
  TrainingConfig cfg = small_config();
  cfg.lr0 = 1e160;
  cfg.epochs = 5;
  try {
    train(cfg, 1);
    FAIL("expected divergence");
  } catch (const TrainingDivergedError& e) {
    REQUIRE(e.epoch >= 0);
    REQUIRE(e.epoch < 5);
  }
}

template <typename T>
concept MentionsModulation = requires(T c) { c.constellation; } ||
                             requires(T c) { c.snr_db; };

TEST_CASE("training ignores constellation and noise state") {
  // the training config carries no constellation or SNR at all, so learned
  // coefficients apply to any modulation by construction
  static_assert(!MentionsModulation<TrainingConfig>);
  const TrainResult r = train(small_config(), 1);
  REQUIRE(r.coeffs.order_j == small_config().order_j);
}

TEST_CASE("mmse-target features use the regularized target") {
  const Dataset ds = generate_dataset(small_config());
  const double mu = 0.25;
  const TrainingFeatures feats = compute_features(ds, 2, TrainTarget::mmse(mu));
  const auto samples = materialize(ds);
  VectorXd w(2);
  w << 1.1, -0.4;
  double dense = 0.0;
  for (const ChannelSample& s : samples) {
    const MatrixXd wt = mmse_matrix(s, mu);
    const MatrixXd wt_tpe = oracle::dense_tpe(oracle::dense_basis(s, 2), w);
    dense += (wt - wt_tpe).squaredNorm();
  }
  dense /= samples.size();
  REQUIRE(loss(w, feats, all_indices(ds.size)) == Approx(dense).epsilon(1e-9));
}

TEST_CASE("history csv format") {
  LossHistory h = {{0, 1e-3, 0.5}, {1, 9e-4, 0.25}};
  std::ostringstream os;
  write_history_csv(h, os);
  REQUIRE(os.str() ==
          "epoch,lr,mean_loss\n0,0.001,0.5\n1,0.00089999999999999998,0.25\n");
}

TEST_CASE("ill-posed fit is reported as such") {
  // J far beyond what one tiny sample's spectrum can support
  const ChannelSample s = oracle::random_sample(2, 1, 23);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram(s), Eigen::EigenvaluesOnly);
  TrainingFeatures feats;
  feats.order_j = 12;
  feats.per_sample.push_back(features_from_eigenvalues(es.eigenvalues(), 12, {}));
  REQUIRE_THROWS_AS(closed_form_fit(feats), IllPosedFitError);
}
