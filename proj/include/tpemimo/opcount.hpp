#pragma once

// Complex-multiplication counts for the detection stage, evaluated as exact
// integers. Formulas (per channel use):
//   ZF/MMSE:              NK^2/2 + K^3/2 + 3NK/2 + 5K^2/2
//   TPE (constant alpha): 2JNK - NK + JK
//   TPE (power alpha):    2JNK - NK + JK + KJ(J-1)/2 + 2(K+J)
//   TPE (learned):        2JNK - NK + JK

#include <cstdint>
#include <string>

#include "tpemimo/errors.hpp"
#include "tpemimo/model.hpp"

namespace tpemimo {

enum class DetectorKind { Zf, Mmse, TpeConstant, TpePower, TpeLearned };

inline std::string detector_kind_name(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::Zf: return "zf";
    case DetectorKind::Mmse: return "mmse";
    case DetectorKind::TpeConstant: return "tpe_constant";
    case DetectorKind::TpePower: return "tpe_power";
    case DetectorKind::TpeLearned: return "tpe_learned";
  }
  throw ValidationError("unknown detector kind");
}

struct OpCount {
  std::int64_t complex_mults = 0;
  std::string formula_tag;
};

namespace detail {

inline std::int64_t exact_half(std::int64_t numerator, const char* what) {
  if (numerator % 2 != 0)
    throw ValidationError(std::string(what) + ": formula is not integral for these dims");
  return numerator / 2;
}

}  // namespace detail

inline OpCount count_ops(DetectorKind kind, const SystemDims& dims, int order_j = 0) {
  const std::int64_t n = dims.n, k = dims.k, j = order_j;
  switch (kind) {
    case DetectorKind::Zf:
    case DetectorKind::Mmse: {
      // (NK^2 + K^3 + 3NK + 5K^2) / 2
      const std::int64_t num = n * k * k + k * k * k + 3 * n * k + 5 * k * k;
      return {detail::exact_half(num, "zf/mmse"), "zf_mmse"};
    }
    case DetectorKind::TpeConstant:
    case DetectorKind::TpeLearned: {
      if (j < 1) throw ValidationError("count_ops: TPE rows need J >= 1");
      const std::int64_t ops = 2 * j * n * k - n * k + j * k;
      return {ops, kind == DetectorKind::TpeLearned ? "tpe_learned" : "tpe_constant"};
    }
    case DetectorKind::TpePower: {
      if (j < 1) throw ValidationError("count_ops: TPE rows need J >= 1");
      const std::int64_t base = 2 * j * n * k - n * k + j * k;
      const std::int64_t extra = k * j * (j - 1) / 2 + 2 * (k + j);
      return {base + extra, "tpe_power"};
    }
  }
  throw ValidationError("count_ops: unknown detector kind");
}

// percentage saved by `proposed` relative to `baseline`
inline double savings_percent(const OpCount& proposed, const OpCount& baseline) {
  if (baseline.complex_mults <= 0) throw ValidationError("savings: empty baseline");
  return 100.0 * (1.0 - static_cast<double>(proposed.complex_mults) /
                            static_cast<double>(baseline.complex_mults));
}

}  // namespace tpemimo
