#pragma once

// Monte-Carlo BER evaluation. Trials are independent jobs keyed by
// (master_seed, detector index, SNR index, trial index); tallies are exact
// integers merged by addition, so sweeps are reproducible bit-for-bit at any
// worker count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tpemimo/constellation.hpp"
#include "tpemimo/detect.hpp"
#include "tpemimo/errors.hpp"
#include "tpemimo/model.hpp"
#include "tpemimo/parallel.hpp"
#include "tpemimo/rng.hpp"

namespace tpemimo {

struct DetectorSpec {
  enum class Kind { Zf, Mmse, Tpe };
  enum class CoeffSource { AlphaOpt, AlphaConstant, AlphaPower, Learned };

  Kind kind = Kind::Zf;
  CoeffSource source = CoeffSource::AlphaOpt;  // TPE only
  int order_j = 0;                             // TPE only
  int power_iterations = 20;                   // AlphaPower only
  std::string checkpoint_path;                 // Learned only
  std::optional<TpeCoefficients> resolved;     // bound coefficients

  static DetectorSpec zf() { return {}; }
  static DetectorSpec mmse() {
    DetectorSpec d;
    d.kind = Kind::Mmse;
    return d;
  }
  static DetectorSpec tpe(CoeffSource source, int order_j) {
    DetectorSpec d;
    d.kind = Kind::Tpe;
    d.source = source;
    d.order_j = order_j;
    return d;
  }

  std::string label() const {
    switch (kind) {
      case Kind::Zf: return "zf";
      case Kind::Mmse: return "mmse";
      case Kind::Tpe:
        switch (source) {
          case CoeffSource::AlphaOpt: return "tpe_alpha_opt";
          case CoeffSource::AlphaConstant: return "tpe_alpha_const";
          case CoeffSource::AlphaPower: return "tpe_alpha_power";
          case CoeffSource::Learned: return "tpe_learned";
        }
    }
    return "unknown";
  }
};

struct SweepConfig {
  SystemDims dims;
  Constellation constellation;
  std::vector<double> snr_grid_db;
  std::vector<DetectorSpec> detectors;
  std::int64_t min_bits = 1'000'000;
  std::int64_t min_errors = 100;
  std::int64_t max_bits = 100'000'000;
  std::uint64_t master_seed = 1;

  void validate() const {
    SystemDims(dims.n, dims.k);
    if (snr_grid_db.empty()) throw ValidationError("SweepConfig: empty SNR grid");
    for (std::size_t i = 1; i < snr_grid_db.size(); ++i)
      if (!(snr_grid_db[i] > snr_grid_db[i - 1]))
        throw ValidationError("SweepConfig: SNR grid must be strictly increasing");
    if (detectors.empty()) throw ValidationError("SweepConfig: no detectors");
    if (min_bits < 1 || min_errors < 0 || max_bits < min_bits)
      throw ValidationError("SweepConfig: bad stopping rule");
    for (const DetectorSpec& d : detectors)
      if (d.kind == DetectorSpec::Kind::Tpe &&
          (d.order_j < 1 || d.order_j > kMaxTpeOrder))
        throw ValidationError("SweepConfig: TPE detector needs J in [1, 64]");
  }
};

struct TrialResult {
  std::int64_t bits = 0;
  std::int64_t errors = 0;
  std::int64_t resampled = 0;  // degenerate-channel retries (diagnostics)
};

namespace detail {

inline VectorXd run_detector(const DetectorSpec& det, const ChannelSample& sample,
                             const VectorXd& y, double mu, Substream& power_rng) {
  switch (det.kind) {
    case DetectorSpec::Kind::Zf:
      return zf_detect(sample, y);
    case DetectorSpec::Kind::Mmse:
      return mmse_detect(sample, y, mu);
    case DetectorSpec::Kind::Tpe: {
      if (det.resolved) return tpe_detect(sample, y, *det.resolved);
      double alpha = 0.0;
      if (det.source == DetectorSpec::CoeffSource::AlphaOpt)
        alpha = alpha_opt(sample);
      else if (det.source == DetectorSpec::CoeffSource::AlphaPower)
        alpha = alpha_power(sample, det.power_iterations, power_rng);
      else
        throw ValidationError("detector has no bound coefficients");
      return tpe_detect(sample, y, coeffs_from_alpha(alpha, det.order_j));
    }
  }
  throw ValidationError("unknown detector kind");
}

}  // namespace detail

// One independent realization: fresh channel, payload, and noise. A
// degenerate channel is resampled deterministically via the attempt index.
inline TrialResult ber_trial(std::int64_t trial_index, const SweepConfig& config,
                             const DetectorSpec& detector, int detector_index,
                             int snr_index) {
  const Constellation& c = config.constellation;
  const int k = config.dims.k;
  const int bits_per_trial = k * c.bits_per_symbol;
  const double snr_db = config.snr_grid_db.at(snr_index);
  const NoiseSpec noise = NoiseSpec::from_snr_db(snr_db, c.symbol_energy);
  const double mu = noise.n0 / c.symbol_energy;

  TrialResult result;
  constexpr int kMaxAttempts = 32;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t sub =
        static_cast<std::uint64_t>(trial_index) * kMaxAttempts + attempt;
    const auto d = static_cast<std::uint64_t>(detector_index);
    const auto s = static_cast<std::uint64_t>(snr_index);
    Substream ch_rng(config.master_seed, "sweep/channel", d, s, sub);
    Substream payload_rng(config.master_seed, "sweep/payload", d, s, sub);
    Substream noise_rng(config.master_seed, "sweep/noise", d, s, sub);
    Substream power_rng(config.master_seed, "sweep/power", d, s, sub);

    const ChannelSample sample = sample_channel(config.dims, ch_rng);
    std::vector<std::uint8_t> bits(bits_per_trial);
    for (auto& b : bits) b = static_cast<std::uint8_t>(payload_rng.next_u64() & 1);
    const VectorXd x = realvec(modulate(bits, c, k));
    const VectorXd y = transmit(sample, x, noise, noise_rng);

    VectorXd xhat;
    try {
      xhat = detail::run_detector(detector, sample, y, mu, power_rng);
    } catch (const DegenerateChannelError&) {
      ++result.resampled;
      continue;
    }
    const std::vector<std::uint8_t> decided = demodulate(xhat, c);
    result.bits = bits_per_trial;
    for (int b = 0; b < bits_per_trial; ++b)
      result.errors += bits[b] != decided[b];
    return result;
  }
  throw DegenerateChannelError("trial kept hitting degenerate channels");
}

struct BerPoint {
  double snr_db = 0.0;
  std::int64_t bits = 0;
  std::int64_t errors = 0;
  double ber = 0.0;
  bool censored = false;
  std::int64_t resampled = 0;
};

struct BerCurve {
  std::string detector;
  int order_j = 0;
  std::vector<BerPoint> points;
};

// Trials run in fixed-size batches; the stop rule is evaluated on batch
// boundaries only, so the trial count is a deterministic function of the
// config regardless of worker count.
inline BerPoint ber_point(const SweepConfig& config, const DetectorSpec& detector,
                          int detector_index, int snr_index, int workers) {
  const int bits_per_trial = config.dims.k * config.constellation.bits_per_symbol;
  constexpr std::int64_t kBatchTrials = 4096;

  BerPoint point;
  point.snr_db = config.snr_grid_db.at(snr_index);
  std::int64_t next_trial = 0;
  while (true) {
    std::vector<TrialResult> slots(static_cast<std::size_t>(std::max(1, workers)));
    const std::int64_t base = next_trial;
    parallel_chunks(kBatchTrials, workers,
                    [&](int chunk, std::int64_t begin, std::int64_t end) {
      TrialResult acc;
      for (std::int64_t t = begin; t < end; ++t) {
        const TrialResult r =
            ber_trial(base + t, config, detector, detector_index, snr_index);
        acc.bits += r.bits;
        acc.errors += r.errors;
        acc.resampled += r.resampled;
      }
      slots[static_cast<std::size_t>(chunk)] = acc;
    });
    for (const TrialResult& r : slots) {
      point.bits += r.bits;
      point.errors += r.errors;
      point.resampled += r.resampled;
    }
    next_trial += kBatchTrials;
    const bool satisfied =
        point.bits >= config.min_bits && point.errors >= config.min_errors;
    const bool exhausted = point.bits >= config.max_bits;
    if (satisfied || exhausted) {
      point.censored = !satisfied;
      break;
    }
  }
  point.ber = static_cast<double>(point.errors) / static_cast<double>(point.bits);
  return point;
}

inline std::vector<BerCurve> ber_sweep(const SweepConfig& config, int workers = 1) {
  config.validate();
  std::vector<BerCurve> curves;
  curves.reserve(config.detectors.size());
  for (int d = 0; d < static_cast<int>(config.detectors.size()); ++d) {
    const DetectorSpec& det = config.detectors[d];
    BerCurve curve;
    curve.detector = det.label();
    curve.order_j = det.kind == DetectorSpec::Kind::Tpe ? det.order_j : 0;
    for (int s = 0; s < static_cast<int>(config.snr_grid_db.size()); ++s)
      curve.points.push_back(ber_point(config, det, d, s, workers));
    curves.push_back(std::move(curve));
  }
  return curves;
}

inline void export_csv(const std::vector<BerCurve>& curves, std::ostream& os) {
  os << "detector,J,snr_db,bits,errors,ber,censored\n";
  char buf[192];
  for (const BerCurve& c : curves)
    for (const BerPoint& p : c.points) {
      std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%lld,%lld,%.17g,%d\n",
                    c.detector.c_str(), c.order_j, p.snr_db,
                    static_cast<long long>(p.bits),
                    static_cast<long long>(p.errors), p.ber, p.censored ? 1 : 0);
      os << buf;
    }
}

inline std::vector<BerCurve> read_ber_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "detector,J,snr_db,bits,errors,ber,censored")
    throw SchemaError("ber csv: bad header");
  std::vector<BerCurve> curves;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    BerPoint p;
    std::string det;
    int j = 0;
    auto next = [&](const char* what) {
      if (!std::getline(ss, field, ',')) throw SchemaError(std::string("ber csv: missing ") + what);
      return field;
    };
    det = next("detector");
    j = std::stoi(next("J"));
    p.snr_db = std::stod(next("snr_db"));
    p.bits = std::stoll(next("bits"));
    p.errors = std::stoll(next("errors"));
    p.ber = std::stod(next("ber"));
    p.censored = std::stoi(next("censored")) != 0;
    if (curves.empty() || curves.back().detector != det || curves.back().order_j != j)
      curves.push_back(BerCurve{det, j, {}});
    curves.back().points.push_back(p);
  }
  return curves;
}

// SNR of the last downward crossing of `target`, interpolated linearly in
// (snr, log10 ber); censored points are skipped.
inline std::optional<double> snr_at_ber(const BerCurve& curve, double target) {
  std::optional<double> crossing;
  const auto& pts = curve.points;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const BerPoint& a = pts[i];
    const BerPoint& b = pts[i + 1];
    if (a.censored || b.censored) continue;
    if (a.ber <= 0.0 || b.ber <= 0.0) continue;
    if (a.ber >= target && target >= b.ber && a.ber > b.ber) {
      const double ya = std::log10(a.ber), yb = std::log10(b.ber);
      crossing = a.snr_db + (std::log10(target) - ya) * (b.snr_db - a.snr_db) / (yb - ya);
    }
  }
  return crossing;
}

// {scenario, target_ber, per-detector crossing and gap to the ZF curve}
inline void write_summary_json(const std::vector<BerCurve>& curves,
                               const std::string& scenario, std::ostream& os,
                               double target = 1e-3) {
  nlohmann::json j;
  j["scenario"] = scenario;
  j["target_ber"] = target;
  std::optional<double> zf_cross;
  for (const BerCurve& c : curves)
    if (c.detector == "zf") zf_cross = snr_at_ber(c, target);
  j["detectors"] = nlohmann::json::array();
  for (const BerCurve& c : curves) {
    nlohmann::json e;
    e["detector"] = c.detector;
    e["J"] = c.order_j;
    const std::optional<double> cross = snr_at_ber(c, target);
    e["snr_at_target_db"] = cross ? nlohmann::json(*cross) : nlohmann::json();
    e["gap_to_zf_db"] = (cross && zf_cross) ? nlohmann::json(*cross - *zf_cross)
                                            : nlohmann::json();
    j["detectors"].push_back(e);
  }
  os << j.dump(2) << '\n';
}

}  // namespace tpemimo
