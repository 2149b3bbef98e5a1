#include <catch2/catch_amalgamated.hpp>

#include "tpemimo/opcount.hpp"

using namespace tpemimo;

TEST_CASE("zf/mmse complex multiplication count at 128x16") {
  const SystemDims dims(128, 16);
  REQUIRE(count_ops(DetectorKind::Zf, dims).complex_mults == 22144);
  REQUIRE(count_ops(DetectorKind::Mmse, dims).complex_mults == 22144);
}

TEST_CASE("tpe rows at 128x16") {
  const SystemDims dims(128, 16);
  REQUIRE(count_ops(DetectorKind::TpeLearned, dims, 4).complex_mults == 14400);
  REQUIRE(count_ops(DetectorKind::TpeConstant, dims, 5).complex_mults == 18512);
  const double saving =
      savings_percent(count_ops(DetectorKind::TpeLearned, dims, 4),
                      count_ops(DetectorKind::TpeConstant, dims, 5));
  REQUIRE(std::abs(saving - 22.21) < 0.005);
}

TEST_CASE("tpe rows at 64x16 including the power-method overhead") {
  const SystemDims dims(64, 16);
  REQUIRE(count_ops(DetectorKind::TpeLearned, dims, 8).complex_mults == 15488);
  REQUIRE(count_ops(DetectorKind::TpePower, dims, 10).complex_mults == 20388);
  const double saving =
      savings_percent(count_ops(DetectorKind::TpeLearned, dims, 8),
                      count_ops(DetectorKind::TpePower, dims, 10));
  REQUIRE(std::abs(saving - 24.03) < 0.005);
}

TEST_CASE("counts are exact integers, not rounded floats") {
  // power-method row at J=2: base + K*J(J-1)/2 + 2(K+J)
  const SystemDims dims(8, 2);
  const auto c = count_ops(DetectorKind::TpePower, dims, 2);
  REQUIRE(c.complex_mults == (2 * 2 * 8 * 2 - 8 * 2 + 2 * 2) + 2 + 2 * (2 + 2));
  REQUIRE(c.formula_tag == "tpe_power");
}

TEST_CASE("validation and odd dims") {
  const SystemDims dims(8, 2);
  REQUIRE_THROWS_AS(count_ops(DetectorKind::TpeLearned, dims, 0), ValidationError);
  // K^2(N+K) + K(3N+5K) is even for every N, K, so odd dims stay integral
  REQUIRE(count_ops(DetectorKind::Zf, SystemDims(5, 3)).complex_mults == 81);
  REQUIRE(count_ops(DetectorKind::Zf, SystemDims(5, 2)).complex_mults ==
          (5 * 4 + 8 + 30 + 20) / 2);
}
