#pragma once

// Coefficient files: one schema-versioned JSON document shared by training
// (writer) and detection (reader).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "tpemimo/detect.hpp"
#include "tpemimo/errors.hpp"

namespace tpemimo {

inline constexpr int kCheckpointSchemaVersion = 1;

struct Checkpoint {
  int n = 0;
  int k = 0;
  TpeCoefficients coeffs;
  std::optional<std::uint64_t> train_seed;
  std::optional<double> loss_final;
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["N"] = ckpt.n;
  j["K"] = ckpt.k;
  j["J"] = ckpt.coeffs.order_j;
  j["w"] = std::vector<double>(ckpt.coeffs.w.data(),
                               ckpt.coeffs.w.data() + ckpt.coeffs.w.size());
  if (ckpt.coeffs.origin.kind == CoeffOrigin::Kind::FromAlpha) {
    j["origin"] = "from_alpha";
    j["alpha"] = ckpt.coeffs.origin.alpha;
  } else {
    j["origin"] = "learned";
  }
  if (ckpt.train_seed) j["train_seed"] = *ckpt.train_seed;
  if (ckpt.loss_final) j["loss_final"] = *ckpt.loss_final;
  return j;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os << checkpoint_to_json(ckpt).dump(2) << '\n';
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j,
                                       const std::string& id) {
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
    throw SchemaError("checkpoint: missing schema_version");
  if (j["schema_version"].get<int>() != kCheckpointSchemaVersion)
    throw SchemaError("checkpoint: unknown schema_version " +
                      j["schema_version"].dump());
  Checkpoint ckpt;
  try {
    ckpt.n = j.at("N").get<int>();
    ckpt.k = j.at("K").get<int>();
    ckpt.coeffs.order_j = j.at("J").get<int>();
    const auto w = j.at("w").get<std::vector<double>>();
    ckpt.coeffs.w = Eigen::Map<const VectorXd>(w.data(), w.size());
    const auto origin = j.at("origin").get<std::string>();
    if (origin == "from_alpha")
      ckpt.coeffs.origin = CoeffOrigin::from_alpha(j.at("alpha").get<double>());
    else if (origin == "learned")
      ckpt.coeffs.origin = CoeffOrigin::learned(id);
    else
      throw SchemaError("checkpoint: unknown origin '" + origin + "'");
    if (j.contains("train_seed"))
      ckpt.train_seed = j["train_seed"].get<std::uint64_t>();
    if (j.contains("loss_final")) ckpt.loss_final = j["loss_final"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
  if (ckpt.coeffs.w.size() != ckpt.coeffs.order_j)
    throw SchemaError("checkpoint: w length does not match J");
  if (!ckpt.coeffs.w.allFinite())
    throw SchemaError("checkpoint: non-finite coefficient");
  return ckpt;
}

// Parse failures surface nlohmann's diagnostics, which include the byte
// offset of the offending token.
inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("checkpoint parse error in " + path + ": " + e.what());
  }
  return checkpoint_from_json(j, path);
}

}  // namespace tpemimo
