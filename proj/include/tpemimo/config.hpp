#pragma once

// JSON run configs (train / sweep) and the run manifest. Every file is
// schema-versioned; readers reject unknown versions. Unspecified training
// fields fall back to the documented defaults.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tpemimo/checkpoint.hpp"
#include "tpemimo/errors.hpp"
#include "tpemimo/sim.hpp"
#include "tpemimo/train.hpp"
#include "tpemimo/version.hpp"

namespace tpemimo {

inline constexpr int kConfigSchemaVersion = 1;

namespace detail {

inline nlohmann::json parse_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("parse error in " + path + ": " + e.what());
  }
}

inline void check_schema(const nlohmann::json& j, const std::string& what) {
  if (!j.is_object()) throw ValidationError(what + ": not a JSON object");
  if (!j.contains("schema_version"))
    throw ValidationError(what + ": missing schema_version");
  if (!j["schema_version"].is_number_integer() ||
      j["schema_version"].get<int>() != kConfigSchemaVersion)
    throw ValidationError(what + ": unknown schema_version " +
                          j["schema_version"].dump());
}

template <typename T>
T field(const nlohmann::json& j, const char* name) {
  if (!j.contains(name))
    throw ValidationError(std::string("missing field '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("bad value for field '") + name + "'");
  }
}

template <typename T>
T field_or(const nlohmann::json& j, const char* name, T fallback) {
  if (!j.contains(name)) return fallback;
  return field<T>(j, name);
}

inline SystemDims dims_from_json(const nlohmann::json& j) {
  const auto d = field<nlohmann::json>(j, "dims");
  return SystemDims(field<int>(d, "n"), field<int>(d, "k"));
}

}  // namespace detail

// ---- training config ----

inline TrainingConfig train_config_from_json(const nlohmann::json& j) {
  detail::check_schema(j, "train config");
  TrainingConfig cfg;
  cfg.dims = detail::dims_from_json(j);
  cfg.order_j = detail::field<int>(j, "order_j");
  cfg.dataset_size = detail::field_or<int>(j, "dataset_size", cfg.dataset_size);
  cfg.batch_size = detail::field_or<int>(j, "batch_size", cfg.batch_size);
  cfg.epochs = detail::field_or<int>(j, "epochs", cfg.epochs);
  cfg.lr0 = detail::field_or<double>(j, "lr0", cfg.lr0);
  cfg.decay = detail::field_or<double>(j, "decay", cfg.decay);
  if (j.contains("adam")) {
    const auto& a = j["adam"];
    cfg.adam.beta1 = detail::field_or<double>(a, "beta1", cfg.adam.beta1);
    cfg.adam.beta2 = detail::field_or<double>(a, "beta2", cfg.adam.beta2);
    cfg.adam.epsilon = detail::field_or<double>(a, "epsilon", cfg.adam.epsilon);
  }
  cfg.master_seed = detail::field_or<std::uint64_t>(j, "master_seed", 1);
  if (j.contains("target")) {
    const auto& t = j["target"];
    if (t.is_string() && t.get<std::string>() == "zf")
      cfg.target = TrainTarget::zf();
    else if (t.is_object() && detail::field<std::string>(t, "kind") == "mmse")
      cfg.target = TrainTarget::mmse(detail::field<double>(t, "mu"));
    else
      throw ValidationError("train config: target must be \"zf\" or {kind:mmse,mu}");
  }
  cfg.validate();
  return cfg;
}

inline nlohmann::json train_config_to_json(const TrainingConfig& cfg) {
  nlohmann::json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["dims"] = {{"n", cfg.dims.n}, {"k", cfg.dims.k}};
  j["order_j"] = cfg.order_j;
  j["dataset_size"] = cfg.dataset_size;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["lr0"] = cfg.lr0;
  j["decay"] = cfg.decay;
  j["adam"] = {{"beta1", cfg.adam.beta1},
               {"beta2", cfg.adam.beta2},
               {"epsilon", cfg.adam.epsilon}};
  j["master_seed"] = cfg.master_seed;
  if (cfg.target.kind == TrainTarget::Kind::Zf)
    j["target"] = "zf";
  else
    j["target"] = {{"kind", "mmse"}, {"mu", cfg.target.mmse_mu}};
  return j;
}

// ---- sweep config ----

inline DetectorSpec detector_from_json(const nlohmann::json& j) {
  const auto kind = detail::field<std::string>(j, "kind");
  if (kind == "zf") return DetectorSpec::zf();
  if (kind == "mmse") return DetectorSpec::mmse();
  if (kind != "tpe")
    throw ValidationError("detector kind must be zf, mmse, or tpe (got '" +
                          kind + "')");
  const auto source = detail::field<std::string>(j, "source");
  DetectorSpec d;
  if (source == "alpha_opt")
    d = DetectorSpec::tpe(DetectorSpec::CoeffSource::AlphaOpt,
                          detail::field<int>(j, "j"));
  else if (source == "alpha_const")
    d = DetectorSpec::tpe(DetectorSpec::CoeffSource::AlphaConstant,
                          detail::field<int>(j, "j"));
  else if (source == "alpha_power") {
    d = DetectorSpec::tpe(DetectorSpec::CoeffSource::AlphaPower,
                          detail::field<int>(j, "j"));
    d.power_iterations = detail::field_or<int>(j, "power_iterations", 20);
    if (d.power_iterations < 1)
      throw ValidationError("tpe detector: power_iterations must be >= 1");
  } else if (source == "learned") {
    d = DetectorSpec::tpe(DetectorSpec::CoeffSource::Learned,
                          detail::field<int>(j, "j"));
    d.checkpoint_path = detail::field<std::string>(j, "checkpoint");
  } else {
    throw ValidationError(
        "tpe detector source must be alpha_opt, alpha_const, alpha_power, or "
        "learned (got '" + source + "')");
  }
  return d;
}

inline nlohmann::json detector_to_json(const DetectorSpec& d) {
  nlohmann::json j;
  switch (d.kind) {
    case DetectorSpec::Kind::Zf: j["kind"] = "zf"; return j;
    case DetectorSpec::Kind::Mmse: j["kind"] = "mmse"; return j;
    case DetectorSpec::Kind::Tpe: break;
  }
  j["kind"] = "tpe";
  j["j"] = d.order_j;
  switch (d.source) {
    case DetectorSpec::CoeffSource::AlphaOpt: j["source"] = "alpha_opt"; break;
    case DetectorSpec::CoeffSource::AlphaConstant: j["source"] = "alpha_const"; break;
    case DetectorSpec::CoeffSource::AlphaPower:
      j["source"] = "alpha_power";
      j["power_iterations"] = d.power_iterations;
      break;
    case DetectorSpec::CoeffSource::Learned:
      j["source"] = "learned";
      j["checkpoint"] = d.checkpoint_path;
      break;
  }
  return j;
}

// Parses a sweep config and binds learned-detector checkpoints. Relative
// checkpoint paths are resolved against `base_dir` (the config file's
// directory); the resolved path lands back in the spec so the manifest
// snapshot is replayable from anywhere.
inline SweepConfig sweep_config_from_json(const nlohmann::json& j,
                                          const std::string& base_dir = ".",
                                          bool load_checkpoints = true) {
  detail::check_schema(j, "sweep config");
  SweepConfig cfg;
  cfg.dims = detail::dims_from_json(j);
  const auto cj = detail::field<nlohmann::json>(j, "constellation");
  cfg.constellation = make_qam(detail::field<int>(cj, "order"),
                               detail::field_or<double>(cj, "symbol_energy", 1.0));
  cfg.snr_grid_db = detail::field<std::vector<double>>(j, "snr_grid_db");
  cfg.min_bits = detail::field_or<std::int64_t>(j, "min_bits", cfg.min_bits);
  cfg.min_errors = detail::field_or<std::int64_t>(j, "min_errors", cfg.min_errors);
  cfg.max_bits = detail::field_or<std::int64_t>(j, "max_bits", cfg.max_bits);
  cfg.master_seed = detail::field_or<std::uint64_t>(j, "master_seed", 1);
  if (!j.contains("detectors") || !j["detectors"].is_array())
    throw ValidationError("sweep config: missing detectors array");
  for (const auto& dj : j["detectors"])
    cfg.detectors.push_back(detector_from_json(dj));
  cfg.validate();

  for (DetectorSpec& d : cfg.detectors) {
    if (d.kind != DetectorSpec::Kind::Tpe) continue;
    if (d.source == DetectorSpec::CoeffSource::AlphaConstant) {
      d.resolved = coeffs_from_alpha(alpha_constant(cfg.dims), d.order_j);
    } else if (d.source == DetectorSpec::CoeffSource::Learned && load_checkpoints) {
      std::filesystem::path p(d.checkpoint_path);
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      d.checkpoint_path = p.string();
      Checkpoint ckpt;
      try {
        ckpt = load_checkpoint(d.checkpoint_path);
      } catch (const IoError& e) {
        throw ValidationError("detector " + d.label() + " (J=" +
                              std::to_string(d.order_j) + "): " + e.what());
      }
      if (ckpt.n != cfg.dims.n || ckpt.k != cfg.dims.k)
        throw ValidationError("detector " + d.label() + ": checkpoint dims " +
                              std::to_string(ckpt.n) + "x" + std::to_string(ckpt.k) +
                              " do not match sweep dims");
      if (ckpt.coeffs.order_j != d.order_j)
        throw ValidationError("detector " + d.label() + ": checkpoint J=" +
                              std::to_string(ckpt.coeffs.order_j) +
                              " does not match requested J=" +
                              std::to_string(d.order_j));
      d.resolved = ckpt.coeffs;
    }
  }
  return cfg;
}

inline nlohmann::json sweep_config_to_json(const SweepConfig& cfg) {
  nlohmann::json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["dims"] = {{"n", cfg.dims.n}, {"k", cfg.dims.k}};
  j["constellation"] = {{"order", cfg.constellation.order},
                        {"symbol_energy", cfg.constellation.symbol_energy}};
  j["snr_grid_db"] = cfg.snr_grid_db;
  j["detectors"] = nlohmann::json::array();
  for (const DetectorSpec& d : cfg.detectors)
    j["detectors"].push_back(detector_to_json(d));
  j["min_bits"] = cfg.min_bits;
  j["min_errors"] = cfg.min_errors;
  j["max_bits"] = cfg.max_bits;
  j["master_seed"] = cfg.master_seed;
  return j;
}

// ---- manifest ----

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t master_seed = 0;
  nlohmann::json artifacts;  // name -> path
};

inline void write_manifest(const RunManifest& m, const std::string& path) {
  nlohmann::json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["command"] = m.command;
  j["tool_version"] = kVersion;
  j["master_seed"] = m.master_seed;
  j["config"] = m.config;
  j["artifacts"] = m.artifacts;
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest: " + path);
  os << j.dump(2) << '\n';
  if (!os) throw IoError("failed writing manifest: " + path);
}

// Accepts either a config file or a manifest produced by a previous run (the
// embedded config snapshot is extracted), so any run can be replayed from
// its manifest alone.
inline nlohmann::json load_config_or_manifest(const std::string& path) {
  nlohmann::json j = detail::parse_json_file(path);
  if (j.is_object() && j.contains("command") && j.contains("config")) {
    detail::check_schema(j, "manifest");
    return j["config"];
  }
  return j;
}

}  // namespace tpemimo
