#pragma once

// Uplink system model: i.i.d. Rayleigh channel sampling, the complex <-> real
// block representation, and noisy transmission y = Hx + n.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>

#include "tpemimo/errors.hpp"
#include "tpemimo/rng.hpp"

namespace tpemimo {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

struct SystemDims {
  int n = 0;  // receive antennas
  int k = 0;  // single-antenna users

  SystemDims() = default;
  SystemDims(int n_antennas, int k_users) : n(n_antennas), k(k_users) {
    if (k < 1) throw ValidationError("SystemDims: K must be >= 1");
    if (n < k) throw ValidationError("SystemDims: N must be >= K");
  }

  double beta() const { return static_cast<double>(k) / n; }
  bool operator==(const SystemDims&) const = default;
};

// [[Re(Hc), -Im(Hc)], [Im(Hc), Re(Hc)]]
inline MatrixXd realify(const MatrixXcd& hc) {
  const Eigen::Index n = hc.rows(), k = hc.cols();
  MatrixXd h(2 * n, 2 * k);
  h.topLeftCorner(n, k) = hc.real();
  h.topRightCorner(n, k) = -hc.imag();
  h.bottomLeftCorner(n, k) = hc.imag();
  h.bottomRightCorner(n, k) = hc.real();
  return h;
}

// stack(Re v, Im v)
inline VectorXd realvec(const VectorXcd& v) {
  VectorXd r(2 * v.size());
  r.head(v.size()) = v.real();
  r.tail(v.size()) = v.imag();
  return r;
}

inline VectorXcd complexvec(const VectorXd& r) {
  const Eigen::Index k = r.size() / 2;
  VectorXcd v(k);
  v.real() = r.head(k);
  v.imag() = r.tail(k);
  return v;
}

struct ChannelSample {
  MatrixXcd h_complex;  // N x K
  MatrixXd h_real;      // 2N x 2K
  StreamKey seed_tag;   // provenance; default-initialized for synthetic samples

  ChannelSample() = default;
  explicit ChannelSample(MatrixXcd hc, StreamKey tag = {})
      : h_complex(std::move(hc)), h_real(realify(h_complex)), seed_tag(std::move(tag)) {}

  SystemDims dims() const {
    return SystemDims(static_cast<int>(h_complex.rows()),
                      static_cast<int>(h_complex.cols()));
  }
};

// Entries i.i.d. CN(0, 1/N): real and imaginary parts each N(0, 1/(2N)), so
// E||h_k||^2 = 1 per column.
inline ChannelSample sample_channel(const SystemDims& dims, Substream& rng) {
  const double sd = std::sqrt(1.0 / (2.0 * dims.n));
  MatrixXcd hc(dims.n, dims.k);
  for (int j = 0; j < dims.k; ++j)
    for (int i = 0; i < dims.n; ++i)
      hc(i, j) = std::complex<double>(rng.normal(sd), rng.normal(sd));
  return ChannelSample(std::move(hc), rng.key());
}

struct NoiseSpec {
  double n0 = 0.0;     // complex noise variance per receive antenna
  double snr_db = 0.0; // 10*log10(Ex/N0)

  static NoiseSpec from_snr_db(double snr_db, double symbol_energy) {
    if (symbol_energy <= 0.0) throw ValidationError("NoiseSpec: Ex must be > 0");
    NoiseSpec s;
    s.snr_db = snr_db;
    s.n0 = symbol_energy / std::pow(10.0, snr_db / 10.0);
    return s;
  }

  // n0 == 0 is the noiseless limit (snr_db = +inf), used by sanity checks.
  static NoiseSpec from_n0(double n0, double symbol_energy) {
    if (n0 < 0.0) throw ValidationError("NoiseSpec: N0 must be >= 0");
    NoiseSpec s;
    s.n0 = n0;
    s.snr_db = n0 == 0.0 ? std::numeric_limits<double>::infinity()
                         : 10.0 * std::log10(symbol_energy / n0);
    return s;
  }
};

// y = Hx + n with n i.i.d. N(0, N0/2) per real component.
inline VectorXd transmit(const ChannelSample& sample, const VectorXd& x_real,
                         const NoiseSpec& noise, Substream& rng) {
  if (x_real.size() != sample.h_real.cols())
    throw ValidationError("transmit: x dimension mismatch");
  VectorXd y = sample.h_real * x_real;
  const double sd = std::sqrt(noise.n0 / 2.0);
  if (sd > 0.0)
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += rng.normal(sd);
  return y;
}

}  // namespace tpemimo
