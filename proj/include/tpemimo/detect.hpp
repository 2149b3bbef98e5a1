#pragma once

// Linear detectors and their truncated-polynomial-expansion approximations.
// Everything runs on the real-valued representation; the Gram matrix is
// G = H^T H (2K x 2K) and the TPE detector is W = sum_l w_l G^l H^T applied
// matrix-free as a chain of matrix-vector products.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "tpemimo/errors.hpp"
#include "tpemimo/model.hpp"
#include "tpemimo/rng.hpp"

namespace tpemimo {

inline constexpr double kRcondSingular = 1e-12;
inline constexpr int kMaxTpeOrder = 64;  // exact int64 binomials end here

inline MatrixXd gram(const ChannelSample& sample) {
  return sample.h_real.transpose() * sample.h_real;
}

namespace detail {

inline Eigen::LDLT<MatrixXd> gram_ldlt_checked(const MatrixXd& g) {
  Eigen::LDLT<MatrixXd> ldlt(g);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < kRcondSingular)
    throw DegenerateChannelError("Gram matrix numerically singular");
  return ldlt;
}

}  // namespace detail

// W_ZF = (H^T H)^{-1} H^T
inline MatrixXd zf_matrix(const ChannelSample& sample) {
  return detail::gram_ldlt_checked(gram(sample)).solve(sample.h_real.transpose());
}

// W_MMSE = (H^T H + mu I)^{-1} H^T; mu = 0 falls back to the ZF path.
inline MatrixXd mmse_matrix(const ChannelSample& sample, double mu) {
  if (mu < 0.0) throw ValidationError("mmse_matrix: mu must be >= 0");
  if (mu == 0.0) return zf_matrix(sample);
  MatrixXd g = gram(sample);
  g.diagonal().array() += mu;
  return g.ldlt().solve(sample.h_real.transpose());
}

inline VectorXd zf_detect(const ChannelSample& sample, const VectorXd& y) {
  return detail::gram_ldlt_checked(gram(sample))
      .solve(sample.h_real.transpose() * y);
}

// Hard-decision MMSE with per-stream bias compensation: the raw filter output
// is shrunk by (1 - mu * [(G+muI)^{-1}]_ii), which misplaces outer QAM levels;
// dividing it back out makes the slicer comparable to ZF.
inline VectorXd mmse_detect(const ChannelSample& sample, const VectorXd& y,
                            double mu, bool unbiased = true) {
  if (mu == 0.0) return zf_detect(sample, y);
  MatrixXd g = gram(sample);
  g.diagonal().array() += mu;
  Eigen::LDLT<MatrixXd> ldlt(g);
  VectorXd xhat = ldlt.solve(sample.h_real.transpose() * y);
  if (unbiased) {
    const MatrixXd ginv = ldlt.solve(MatrixXd::Identity(g.rows(), g.cols()));
    xhat.array() /= (1.0 - mu * ginv.diagonal().array());
  }
  return xhat;
}

struct EigenRange {
  double min = 0.0;
  double max = 0.0;
};

inline EigenRange gram_eigen_range(const MatrixXd& g) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(g, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw DegenerateChannelError("eigenvalue computation failed");
  return {es.eigenvalues()(0), es.eigenvalues()(es.eigenvalues().size() - 1)};
}

// alpha_opt = 2 / (lambda_min + lambda_max), the asymptotically optimal
// normalization factor.
inline double alpha_opt(const ChannelSample& sample) {
  const EigenRange r = gram_eigen_range(gram(sample));
  if (r.min + r.max <= 0.0)
    throw DegenerateChannelError("alpha_opt: nonpositive spectrum");
  return 2.0 / (r.min + r.max);
}

// Channel-independent baseline: the midpoint rule evaluated at the
// Marchenko-Pastur support edges (1 -+ sqrt(beta))^2 collapses to 1/(1+beta).
inline double alpha_constant_for(double beta) {
  if (beta < 0.0 || beta > 1.0)
    throw ValidationError("alpha_constant: beta must be in [0, 1]");
  return 1.0 / (1.0 + beta);
}

inline double alpha_constant(const SystemDims& dims) {
  return alpha_constant_for(dims.beta());
}

inline double mp_lower_edge(double beta) {
  const double s = 1.0 - std::sqrt(beta);
  return s * s;
}

// Largest-eigenvalue estimate by plain power iteration from a seeded start.
// The Rayleigh quotient is nondecreasing in the iteration count for PSD G.
inline double power_iteration_lambda_max(const MatrixXd& g, int iterations,
                                         Substream& rng) {
  if (iterations < 1)
    throw ValidationError("power_iteration: iterations must be >= 1");
  VectorXd v(g.rows());
  do {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  } while (v.norm() == 0.0);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    VectorXd gv = g * v;
    lambda = v.dot(gv);
    const double nrm = gv.norm();
    if (nrm == 0.0) return 0.0;
    v = gv / nrm;
  }
  return lambda;
}

inline double alpha_power(const ChannelSample& sample, int iterations,
                          Substream& rng) {
  const MatrixXd g = gram(sample);
  const double lmax = power_iteration_lambda_max(g, iterations, rng);
  const double lmin = mp_lower_edge(sample.dims().beta());
  return 2.0 / (lmax + lmin);
}

struct NormalizationStrategy {
  enum class Kind { ExactEig, PowerMethod, Constant };
  Kind kind = Kind::ExactEig;
  int power_iterations = 20;

  static NormalizationStrategy exact_eig() { return {Kind::ExactEig, 0}; }
  static NormalizationStrategy power_method(int iterations) {
    return {Kind::PowerMethod, iterations};
  }
  static NormalizationStrategy constant() { return {Kind::Constant, 0}; }
};

inline double normalization_alpha(const NormalizationStrategy& strategy,
                                  const ChannelSample& sample, Substream& rng) {
  switch (strategy.kind) {
    case NormalizationStrategy::Kind::ExactEig:
      return alpha_opt(sample);
    case NormalizationStrategy::Kind::PowerMethod:
      return alpha_power(sample, strategy.power_iterations, rng);
    case NormalizationStrategy::Kind::Constant:
      return alpha_constant(sample.dims());
  }
  throw ValidationError("normalization_alpha: unknown strategy");
}

struct CoeffOrigin {
  enum class Kind { FromAlpha, Learned };
  Kind kind = Kind::FromAlpha;
  double alpha = 0.0;            // FromAlpha only
  std::string checkpoint_id;     // Learned only

  static CoeffOrigin from_alpha(double a) { return {Kind::FromAlpha, a, {}}; }
  static CoeffOrigin learned(std::string id) {
    return {Kind::Learned, 0.0, std::move(id)};
  }
};

struct TpeCoefficients {
  int order_j = 0;
  VectorXd w;
  CoeffOrigin origin;
};

// sum_{n=l}^{J-1} C(n, l) = C(J, l+1), accumulated in exact integer
// arithmetic; C(64, 32) is the largest value and fits in int64.
inline std::int64_t binomial_tail_sum(int order_j, int l) {
  if (order_j < 1 || order_j > kMaxTpeOrder)
    throw ValidationError("TPE order must be in [1, 64] for exact coefficients");
  if (l < 0 || l >= order_j) throw ValidationError("binomial_tail_sum: bad l");
  std::uint64_t sum = 0;
  std::uint64_t c = 1;  // C(l, l)
  for (int n = l; n < order_j; ++n) {
    sum += c;
    // C(n+1, l) = C(n, l) * (n+1) / (n+1-l)
    const unsigned __int128 wide = static_cast<unsigned __int128>(c) *
                                   static_cast<unsigned>(n + 1);
    c = static_cast<std::uint64_t>(wide / static_cast<unsigned>(n + 1 - l));
  }
  return static_cast<std::int64_t>(sum);
}

// w_l = alpha * (-alpha)^l * sum_{n=l}^{J-1} C(n, l)
inline TpeCoefficients coeffs_from_alpha(double alpha, int order_j) {
  if (!(alpha > 0.0)) throw ValidationError("coeffs_from_alpha: alpha must be > 0");
  TpeCoefficients c;
  c.order_j = order_j;
  c.w.resize(order_j);
  double sign_pow = 1.0;  // (-alpha)^l
  for (int l = 0; l < order_j; ++l) {
    c.w(l) = alpha * sign_pow * static_cast<double>(binomial_tail_sum(order_j, l));
    sign_pow *= -alpha;
  }
  c.origin = CoeffOrigin::from_alpha(alpha);
  return c;
}

// alpha * sum_{l=0}^{J-1} (I - alpha X)^l. If lambda_max is supplied the
// Lemma validity range 0 < alpha < 2/lambda_max is enforced.
inline MatrixXd neumann_partial_sum(const MatrixXd& x, double alpha, int order_j,
                                    std::optional<double> lambda_max = {}) {
  if (order_j < 1) throw ValidationError("neumann_partial_sum: J must be >= 1");
  if (lambda_max && !(alpha > 0.0 && alpha < 2.0 / *lambda_max))
    throw ValidationError("neumann_partial_sum: alpha outside (0, 2/lambda_max)");
  const Eigen::Index n = x.rows();
  const MatrixXd step = MatrixXd::Identity(n, n) - alpha * x;
  MatrixXd term = MatrixXd::Identity(n, n);
  MatrixXd acc = MatrixXd::Zero(n, n);
  for (int l = 0; l < order_j; ++l) {
    acc += term;
    if (l + 1 < order_j) term = term * step;
  }
  return alpha * acc;
}

struct MatVecCount {
  int by_h = 0;   // products by H
  int by_ht = 0;  // products by H^T
};

// Iterative detection: x0 = H^T y, x_l = H^T (H x_{l-1}); output sum w_l x_l.
// Costs J products by H^T and J-1 by H; no matrix-matrix products.
inline VectorXd tpe_detect(const ChannelSample& sample, const VectorXd& y,
                           const TpeCoefficients& coeffs,
                           MatVecCount* count = nullptr) {
  if (coeffs.order_j < 1 || coeffs.w.size() != coeffs.order_j)
    throw ValidationError("tpe_detect: malformed coefficients");
  if (y.size() != sample.h_real.rows())
    throw ValidationError("tpe_detect: y dimension mismatch");
  const MatrixXd& h = sample.h_real;
  VectorXd xl = h.transpose() * y;
  if (count) ++count->by_ht;
  VectorXd out = coeffs.w(0) * xl;
  for (int l = 1; l < coeffs.order_j; ++l) {
    const VectorXd hx = h * xl;
    xl = h.transpose() * hx;
    if (count) {
      ++count->by_h;
      ++count->by_ht;
    }
    out += coeffs.w(l) * xl;
  }
  return out;
}

// Dense materialization sum_l w_l G^l H^T; the reference path for training
// and tests, not the detection hot path.
inline MatrixXd tpe_matrix(const ChannelSample& sample,
                           const TpeCoefficients& coeffs) {
  if (coeffs.order_j < 1 || coeffs.w.size() != coeffs.order_j)
    throw ValidationError("tpe_matrix: malformed coefficients");
  const MatrixXd g = gram(sample);
  MatrixXd p = sample.h_real.transpose();  // G^l H^T
  MatrixXd acc = MatrixXd::Zero(p.rows(), p.cols());
  for (int l = 0; l < coeffs.order_j; ++l) {
    acc += coeffs.w(l) * p;
    if (l + 1 < coeffs.order_j) p = g * p;
  }
  return acc;
}

}  // namespace tpemimo
