#pragma once

// Offline coefficient learning. The Frobenius matching loss for one sample,
//   || W_target - sum_l w_l G^l H^T ||_F^2,
// is an exact quadratic in w whose coefficients depend only on the spectrum
// of G:
//   <A_k, A_l>_F       = tr G^{k+l+1}            (A_k = G^k H^T)
//   <A_k, W_ZF>_F      = tr G^k
//   ||W_ZF||_F^2       = tr G^{-1}
// so each sample is reduced to a small vector of spectral power sums once,
// and every loss/gradient evaluation afterwards is O(J^2). The dense matrix
// route lives in the test suite as the cross-check oracle.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tpemimo/detect.hpp"
#include "tpemimo/errors.hpp"
#include "tpemimo/model.hpp"
#include "tpemimo/parallel.hpp"
#include "tpemimo/rng.hpp"

namespace tpemimo {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Training target: W_ZF by default; optionally the MMSE matrix with a fixed
// regularizer baked in (not part of the acceptance path).
struct TrainTarget {
  enum class Kind { Zf, Mmse };
  Kind kind = Kind::Zf;
  double mmse_mu = 0.0;

  static TrainTarget zf() { return {}; }
  static TrainTarget mmse(double mu) {
    if (mu <= 0.0) throw ValidationError("TrainTarget: mmse mu must be > 0");
    return {Kind::Mmse, mu};
  }
};

struct TrainingConfig {
  SystemDims dims;
  int order_j = 0;
  int dataset_size = 10000;  // Table II: M
  int batch_size = 200;      // Table II
  int epochs = 2000;         // Table II
  double lr0 = 1e-3;         // Table II initial learning rate
  double decay = 0.9;        // Table II exponential decay rate, applied per epoch
  AdamParams adam;
  std::uint64_t master_seed = 1;
  TrainTarget target;

  void validate() const {
    SystemDims(dims.n, dims.k);  // re-check invariants
    if (order_j < 1 || order_j > kMaxTpeOrder)
      throw ValidationError("TrainingConfig: order_j must be in [1, 64]");
    if (dataset_size < 1) throw ValidationError("TrainingConfig: dataset_size >= 1");
    if (batch_size < 1) throw ValidationError("TrainingConfig: batch_size >= 1");
    if (epochs < 1) throw ValidationError("TrainingConfig: epochs >= 1");
    if (!(lr0 > 0.0)) throw ValidationError("TrainingConfig: lr0 > 0");
    if (!(decay > 0.0 && decay <= 1.0))
      throw ValidationError("TrainingConfig: decay in (0, 1]");
  }
};

// Channel samples are regenerated on demand from (master_seed, index); the
// handle stays O(1) in memory at any M.
struct Dataset {
  SystemDims dims;
  int size = 0;
  std::uint64_t master_seed = 0;

  ChannelSample sample(int index) const {
    Substream rng(master_seed, "train/channel", static_cast<std::uint64_t>(index));
    return sample_channel(dims, rng);
  }

  MatrixXd zf_target(int index) const { return zf_matrix(sample(index)); }
};

inline Dataset generate_dataset(const TrainingConfig& config) {
  config.validate();
  return Dataset{config.dims, config.dataset_size, config.master_seed};
}

// Per-sample quadratic form of the loss: L_m(w) = w'Bw - 2c'w + d.
struct SampleFeatures {
  MatrixXd b;  // J x J
  VectorXd c;  // J
  double d = 0.0;
};

struct TrainingFeatures {
  int order_j = 0;
  std::vector<SampleFeatures> per_sample;
};

inline SampleFeatures features_from_eigenvalues(const VectorXd& lambda,
                                                int order_j,
                                                const TrainTarget& target) {
  SampleFeatures f;
  f.b.resize(order_j, order_j);
  f.c.resize(order_j);
  // power sums S(p) = sum_i lambda_i^p for p = 0 .. 2J-1
  VectorXd s(2 * order_j);
  for (int p = 0; p < 2 * order_j; ++p)
    s(p) = p == 0 ? static_cast<double>(lambda.size())
                  : lambda.array().pow(p).sum();
  for (int k = 0; k < order_j; ++k)
    for (int l = 0; l < order_j; ++l) f.b(k, l) = s(k + l + 1);
  if (target.kind == TrainTarget::Kind::Zf) {
    for (int k = 0; k < order_j; ++k) f.c(k) = s(k);
    f.d = (1.0 / lambda.array()).sum();
  } else {
    const double mu = target.mmse_mu;
    for (int k = 0; k < order_j; ++k)
      f.c(k) = (lambda.array().pow(k + 1) / (lambda.array() + mu)).sum();
    f.d = (lambda.array() / (lambda.array() + mu).square()).sum();
  }
  return f;
}

inline TrainingFeatures compute_features(const Dataset& dataset, int order_j,
                                         const TrainTarget& target = {},
                                         int workers = 1) {
  TrainingFeatures feats;
  feats.order_j = order_j;
  feats.per_sample.resize(dataset.size);
  parallel_chunks(dataset.size, workers, [&](int, std::int64_t begin, std::int64_t end) {
    for (std::int64_t m = begin; m < end; ++m) {
      const ChannelSample sample = dataset.sample(static_cast<int>(m));
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram(sample),
                                                 Eigen::EigenvaluesOnly);
      feats.per_sample[m] =
          features_from_eigenvalues(es.eigenvalues(), order_j, target);
    }
  });
  return feats;
}

// Batch aggregate (index-ascending accumulation, fixed reduction order).
inline SampleFeatures batch_quadratic(const TrainingFeatures& feats,
                                      std::span<const int> batch) {
  if (batch.empty()) throw ValidationError("batch must be nonempty");
  const int j = feats.order_j;
  SampleFeatures agg;
  agg.b = MatrixXd::Zero(j, j);
  agg.c = VectorXd::Zero(j);
  agg.d = 0.0;
  for (int idx : batch) {
    const SampleFeatures& f = feats.per_sample.at(idx);
    agg.b += f.b;
    agg.c += f.c;
    agg.d += f.d;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  agg.b *= inv;
  agg.c *= inv;
  agg.d *= inv;
  return agg;
}

inline double loss(const VectorXd& w, const TrainingFeatures& feats,
                   std::span<const int> batch) {
  const SampleFeatures agg = batch_quadratic(feats, batch);
  return w.dot(agg.b * w) - 2.0 * agg.c.dot(w) + agg.d;
}

// dL/dw_k = (2/|batch|) sum_m <A_k, W_TPE - W_target>_F = 2 (B w - c)
inline VectorXd grad(const VectorXd& w, const TrainingFeatures& feats,
                     std::span<const int> batch) {
  const SampleFeatures agg = batch_quadratic(feats, batch);
  return 2.0 * (agg.b * w - agg.c);
}

inline double lr_schedule(double lr0, int epoch, double decay) {
  if (epoch < 0) throw ValidationError("lr_schedule: epoch must be >= 0");
  return lr0 * std::pow(decay, epoch);
}

struct OptimizerState {
  VectorXd m1;
  VectorXd m2;
  std::int64_t step_count = 0;
  double lr_current = 0.0;

  static OptimizerState init(int order_j, double lr0) {
    OptimizerState s;
    s.m1 = VectorXd::Zero(order_j);
    s.m2 = VectorXd::Zero(order_j);
    s.lr_current = lr0;
    return s;
  }
};

// Standard Adam update with bias correction; uses state.lr_current.
inline void adam_step(const AdamParams& params, OptimizerState& state,
                      VectorXd& theta, const VectorXd& gradient) {
  state.step_count += 1;
  state.m1 = params.beta1 * state.m1 + (1.0 - params.beta1) * gradient;
  state.m2 = params.beta2 * state.m2 +
             (1.0 - params.beta2) * gradient.cwiseProduct(gradient);
  const double c1 = 1.0 - std::pow(params.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(params.beta2, static_cast<double>(state.step_count));
  const VectorXd m_hat = state.m1 / c1;
  const VectorXd v_hat = state.m2 / c2;
  theta.array() -=
      state.lr_current * m_hat.array() / (v_hat.array().sqrt() + params.epsilon);
}

struct FitResult {
  TpeCoefficients coeffs;
  double loss = 0.0;
};

// Exact minimizer of the dataset loss via the normal equations B w = c.
inline FitResult closed_form_fit(const TrainingFeatures& feats) {
  const int j = feats.order_j;
  std::vector<int> all(feats.per_sample.size());
  std::iota(all.begin(), all.end(), 0);
  const SampleFeatures agg = batch_quadratic(feats, all);
  Eigen::LDLT<MatrixXd> ldlt(agg.b);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14)
    throw IllPosedFitError(
        "normal equations too ill-conditioned; reduce the TPE order J");
  FitResult fit;
  fit.coeffs.order_j = j;
  fit.coeffs.w = ldlt.solve(agg.c);
  fit.coeffs.origin = CoeffOrigin::learned("closed_form_fit");
  fit.loss = fit.coeffs.w.dot(agg.b * fit.coeffs.w) -
             2.0 * agg.c.dot(fit.coeffs.w) + agg.d;
  return fit;
}

inline FitResult closed_form_fit(const Dataset& dataset, int order_j,
                                 const TrainTarget& target = {}, int workers = 1) {
  return closed_form_fit(compute_features(dataset, order_j, target, workers));
}

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
};

using LossHistory = std::vector<EpochRecord>;

inline void write_history_csv(const LossHistory& history, std::ostream& os) {
  os << "epoch,lr,mean_loss\n";
  char buf[96];
  for (const EpochRecord& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", r.epoch, r.lr, r.mean_loss);
    os << buf;
  }
}

struct TrainResult {
  TpeCoefficients coeffs;
  LossHistory history;
  double final_loss = 0.0;  // full-dataset loss of the returned coefficients
};

// Deterministic Fisher-Yates permutation from the per-epoch shuffle stream.
inline std::vector<int> epoch_permutation(int size, std::uint64_t master_seed,
                                          int epoch) {
  std::vector<int> perm(size);
  std::iota(perm.begin(), perm.end(), 0);
  Substream rng(master_seed, "train/shuffle", static_cast<std::uint64_t>(epoch));
  for (int i = size - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

inline TrainResult train(const TrainingConfig& config, int workers = 1) {
  config.validate();
  const Dataset dataset = generate_dataset(config);
  const TrainingFeatures feats =
      compute_features(dataset, config.order_j, config.target, workers);

  // theta starts from the constant-normalization-factor coefficients
  VectorXd theta =
      coeffs_from_alpha(alpha_constant(config.dims), config.order_j).w;
  OptimizerState state = OptimizerState::init(config.order_j, config.lr0);

  TrainResult result;
  result.history.reserve(config.epochs);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    state.lr_current = lr_schedule(config.lr0, epoch, config.decay);
    const std::vector<int> perm =
        epoch_permutation(config.dataset_size, config.master_seed, epoch);
    double loss_sum = 0.0;
    int batches = 0;
    for (int start = 0; start < config.dataset_size; start += config.batch_size) {
      const int len = std::min(config.batch_size, config.dataset_size - start);
      const std::span<const int> batch(perm.data() + start, static_cast<size_t>(len));
      const SampleFeatures agg = batch_quadratic(feats, batch);
      const double batch_loss =
          theta.dot(agg.b * theta) - 2.0 * agg.c.dot(theta) + agg.d;
      if (!std::isfinite(batch_loss))
        throw TrainingDivergedError("training loss became non-finite", epoch);
      const VectorXd g = 2.0 * (agg.b * theta - agg.c);
      adam_step(config.adam, state, theta, g);
      loss_sum += batch_loss;
      ++batches;
    }
    result.history.push_back({epoch, state.lr_current, loss_sum / batches});
  }

  result.coeffs.order_j = config.order_j;
  result.coeffs.w = theta;
  result.coeffs.origin = CoeffOrigin::learned("adam");
  std::vector<int> all(config.dataset_size);
  std::iota(all.begin(), all.end(), 0);
  result.final_loss = loss(theta, feats, all);
  if (!std::isfinite(result.final_loss))
    throw TrainingDivergedError("final loss non-finite", config.epochs);
  return result;
}

}  // namespace tpemimo
