// Command-line front end: train / sweep / count-ops / fit-oracle / gen-data.
// Exit codes: 0 success, 2 validation, 3 numerical failure, 4 I/O.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tpemimo/config.hpp"
#include "tpemimo/opcount.hpp"
#include "tpemimo/version.hpp"

namespace {

using namespace tpemimo;

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct CommonOpts {
  std::string config_path;
  int workers = default_workers();
};

std::string default_manifest_path(const std::string& out) {
  return out + ".manifest.json";
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write: " + path);
  os << text;
  if (!os) throw IoError("failed writing: " + path);
}

int run_train(const CommonOpts& common, const std::string& out_path,
              const std::string& history_path, std::string manifest_path,
              std::optional<std::uint64_t> seed_override,
              std::optional<int> epochs_override, std::optional<int> j_override,
              std::optional<int> m_override, std::optional<double> lr0_override,
              std::optional<double> decay_override) {
  nlohmann::json cj = load_config_or_manifest(common.config_path);
  TrainingConfig cfg = train_config_from_json(cj);
  if (seed_override) cfg.master_seed = *seed_override;
  if (epochs_override) cfg.epochs = *epochs_override;
  if (j_override) cfg.order_j = *j_override;
  if (m_override) cfg.dataset_size = *m_override;
  if (lr0_override) cfg.lr0 = *lr0_override;
  if (decay_override) cfg.decay = *decay_override;
  cfg.validate();

  if (manifest_path.empty()) manifest_path = default_manifest_path(out_path);
  RunManifest manifest;
  manifest.command = "train";
  manifest.config = train_config_to_json(cfg);
  manifest.master_seed = cfg.master_seed;
  manifest.artifacts = {{"checkpoint", out_path}, {"history", history_path}};
  write_manifest(manifest, manifest_path);

  const TrainResult result = train(cfg, common.workers);

  Checkpoint ckpt;
  ckpt.n = cfg.dims.n;
  ckpt.k = cfg.dims.k;
  ckpt.coeffs = result.coeffs;
  ckpt.train_seed = cfg.master_seed;
  ckpt.loss_final = result.final_loss;
  save_checkpoint(ckpt, out_path);

  std::ostringstream hist;
  write_history_csv(result.history, hist);
  write_file(history_path, hist.str());

  std::printf("trained J=%d on %dx%d: final loss %.6g over %d epochs\n",
              cfg.order_j, cfg.dims.n, cfg.dims.k, result.final_loss, cfg.epochs);
  std::printf("checkpoint: %s\nhistory: %s\nmanifest: %s\n", out_path.c_str(),
              history_path.c_str(), manifest_path.c_str());
  return 0;
}

int run_sweep(const CommonOpts& common, const std::string& out_path,
              const std::string& summary_path, std::string manifest_path,
              std::optional<std::uint64_t> seed_override) {
  nlohmann::json cj = load_config_or_manifest(common.config_path);
  if (seed_override) cj["master_seed"] = *seed_override;
  const std::string base_dir =
      std::filesystem::path(common.config_path).parent_path().string();
  SweepConfig cfg = sweep_config_from_json(cj, base_dir.empty() ? "." : base_dir);

  if (manifest_path.empty()) manifest_path = default_manifest_path(out_path);
  RunManifest manifest;
  manifest.command = "sweep";
  manifest.config = sweep_config_to_json(cfg);
  manifest.master_seed = cfg.master_seed;
  manifest.artifacts = {{"ber_csv", out_path}};
  if (!summary_path.empty()) manifest.artifacts["summary"] = summary_path;
  write_manifest(manifest, manifest_path);

  const std::vector<BerCurve> curves = ber_sweep(cfg, common.workers);

  std::ostringstream csv;
  export_csv(curves, csv);
  write_file(out_path, csv.str());
  if (!summary_path.empty()) {
    std::ostringstream sj;
    write_summary_json(curves, std::to_string(cfg.dims.n) + "x" +
                                   std::to_string(cfg.dims.k),
                       sj);
    write_file(summary_path, sj.str());
  }
  std::printf("swept %zu detectors over %zu SNR points\n", cfg.detectors.size(),
              cfg.snr_grid_db.size());
  std::printf("ber csv: %s\nmanifest: %s\n", out_path.c_str(), manifest_path.c_str());
  return 0;
}

DetectorKind parse_detector_kind(const std::string& name) {
  if (name == "zf") return DetectorKind::Zf;
  if (name == "mmse") return DetectorKind::Mmse;
  if (name == "tpe-constant") return DetectorKind::TpeConstant;
  if (name == "tpe-power") return DetectorKind::TpePower;
  if (name == "tpe-learned") return DetectorKind::TpeLearned;
  throw ValidationError(
      "unknown detector '" + name +
      "' (expected zf, mmse, tpe-constant, tpe-power, or tpe-learned)");
}

bool kind_needs_j(DetectorKind k) {
  return k != DetectorKind::Zf && k != DetectorKind::Mmse;
}

int run_count_ops(int n, int k, const std::string& detector, int j,
                  const std::string& compare, int compare_j) {
  const SystemDims dims(n, k);
  const DetectorKind kind = parse_detector_kind(detector);
  if (kind_needs_j(kind) && j < 1)
    throw ValidationError("--j is required for TPE detectors");
  const OpCount ops = count_ops(kind, dims, j);
  std::printf("%s N=%d K=%d%s: %lld complex multiplications\n",
              detector_kind_name(kind).c_str(), n, k,
              kind_needs_j(kind) ? (" J=" + std::to_string(j)).c_str() : "",
              static_cast<long long>(ops.complex_mults));
  if (!compare.empty()) {
    const DetectorKind base_kind = parse_detector_kind(compare);
    if (kind_needs_j(base_kind) && compare_j < 1)
      throw ValidationError("--compare-j is required for TPE baselines");
    const OpCount base = count_ops(base_kind, dims, compare_j);
    std::printf("%s N=%d K=%d%s: %lld complex multiplications\n",
                detector_kind_name(base_kind).c_str(), n, k,
                kind_needs_j(base_kind) ? (" J=" + std::to_string(compare_j)).c_str()
                                        : "",
                static_cast<long long>(base.complex_mults));
    std::printf("saving: %.2f%%\n", savings_percent(ops, base));
  }
  return 0;
}

int run_fit_oracle(const CommonOpts& common, const std::string& checkpoint_path,
                   const std::string& out_path) {
  nlohmann::json cj = load_config_or_manifest(common.config_path);
  TrainingConfig cfg = train_config_from_json(cj);
  const Dataset dataset = generate_dataset(cfg);
  const TrainingFeatures feats =
      compute_features(dataset, cfg.order_j, cfg.target, common.workers);
  const FitResult fit = closed_form_fit(feats);

  std::printf("closed-form fit, J=%d on %dx%d, M=%d\n", cfg.order_j, cfg.dims.n,
              cfg.dims.k, cfg.dataset_size);
  std::printf("w* =");
  for (int l = 0; l < fit.coeffs.order_j; ++l) std::printf(" %.12g", fit.coeffs.w(l));
  std::printf("\nloss* = %.12g\n", fit.loss);

  if (!checkpoint_path.empty()) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    if (ckpt.n != cfg.dims.n || ckpt.k != cfg.dims.k)
      throw ValidationError("checkpoint dims do not match the config");
    if (ckpt.coeffs.order_j != cfg.order_j)
      throw ValidationError("checkpoint J=" + std::to_string(ckpt.coeffs.order_j) +
                            " does not match config order_j=" +
                            std::to_string(cfg.order_j));
    std::vector<int> all(cfg.dataset_size);
    std::iota(all.begin(), all.end(), 0);
    const double ckpt_loss = loss(ckpt.coeffs.w, feats, all);
    std::printf("checkpoint w =");
    for (int l = 0; l < ckpt.coeffs.order_j; ++l)
      std::printf(" %.12g", ckpt.coeffs.w(l));
    std::printf("\ncheckpoint loss = %.12g\n", ckpt_loss);
    std::printf("relative gap = %.6g\n", (ckpt_loss - fit.loss) / fit.loss);
  }
  if (!out_path.empty()) {
    Checkpoint out;
    out.n = cfg.dims.n;
    out.k = cfg.dims.k;
    out.coeffs = fit.coeffs;
    out.train_seed = cfg.master_seed;
    out.loss_final = fit.loss;
    save_checkpoint(out, out_path);
    std::printf("fit checkpoint: %s\n", out_path.c_str());
  }
  return 0;
}

int run_gen_data(const CommonOpts& common, int qam_order, double qam_energy,
                 const std::string& out_path) {
  if (qam_order > 0) {
    const Constellation c = make_qam(qam_order, qam_energy);
    std::ostringstream os;
    export_constellation_csv(c, os);
    write_file(out_path, os.str());
    std::printf("constellation table: %s\n", out_path.c_str());
    return 0;
  }
  nlohmann::json cj = load_config_or_manifest(common.config_path);
  TrainingConfig cfg = train_config_from_json(cj);
  const Dataset dataset = generate_dataset(cfg);
  std::ostringstream os;
  os << "index,frobenius_sq,mean_col_norm_sq\n";
  char buf[96];
  for (int m = 0; m < dataset.size; ++m) {
    const ChannelSample s = dataset.sample(m);
    const double fro = s.h_complex.squaredNorm();
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", m, fro, fro / cfg.dims.k);
    os << buf;
  }
  write_file(out_path, os.str());
  std::printf("dataset audit (%d samples): %s\n", dataset.size, out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TPE-based massive-MIMO uplink detection: training, BER sweeps, "
               "and complexity accounting"};
  app.set_version_flag("--version", tpemimo::kVersion);
  app.require_subcommand(1);

  CommonOpts common;

  // train
  auto* train_cmd = app.add_subcommand("train", "learn TPE coefficients offline");
  std::string train_out = "checkpoint.json", train_hist = "history.csv",
              train_manifest;
  std::optional<std::uint64_t> train_seed;
  std::optional<int> train_epochs, train_j, train_m;
  std::optional<double> train_lr0, train_decay;
  train_cmd->add_option("--config", common.config_path, "config or manifest JSON")
      ->required();
  train_cmd->add_option("--out", train_out, "checkpoint path");
  train_cmd->add_option("--history", train_hist, "loss history CSV path");
  train_cmd->add_option("--manifest", train_manifest, "manifest path");
  train_cmd->add_option("--workers", common.workers, "max worker threads");
  train_cmd->add_option("--seed", train_seed, "override master_seed");
  train_cmd->add_option("--epochs", train_epochs, "override epochs");
  train_cmd->add_option("--j", train_j, "override order_j");
  train_cmd->add_option("--dataset-size", train_m, "override dataset_size");
  train_cmd->add_option("--lr0", train_lr0, "override lr0");
  train_cmd->add_option("--decay", train_decay, "override decay");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Monte-Carlo BER sweep");
  std::string sweep_out = "ber.csv", sweep_summary, sweep_manifest;
  std::optional<std::uint64_t> sweep_seed;
  sweep_cmd->add_option("--config", common.config_path, "config or manifest JSON")
      ->required();
  sweep_cmd->add_option("--out", sweep_out, "BER CSV path");
  sweep_cmd->add_option("--summary", sweep_summary, "summary JSON path");
  sweep_cmd->add_option("--manifest", sweep_manifest, "manifest path");
  sweep_cmd->add_option("--workers", common.workers, "max worker threads");
  sweep_cmd->add_option("--seed", sweep_seed, "override master_seed");

  // count-ops
  auto* count_cmd = app.add_subcommand("count-ops", "complex-multiplication counts");
  int cn = 0, ck = 0, cj = 0, ccj = 0;
  std::string cdet, ccmp;
  count_cmd->add_option("--n", cn, "receive antennas")->required();
  count_cmd->add_option("--k", ck, "users")->required();
  count_cmd->add_option("--detector", cdet, "zf|mmse|tpe-constant|tpe-power|tpe-learned")
      ->required();
  count_cmd->add_option("--j", cj, "TPE order");
  count_cmd->add_option("--compare", ccmp, "baseline detector for savings");
  count_cmd->add_option("--compare-j", ccj, "baseline TPE order");

  // fit-oracle
  auto* fit_cmd = app.add_subcommand(
      "fit-oracle", "closed-form least-squares coefficients and loss gap");
  std::string fit_ckpt, fit_out;
  fit_cmd->add_option("--config", common.config_path, "training config JSON")
      ->required();
  fit_cmd->add_option("--checkpoint", fit_ckpt, "trained checkpoint to compare");
  fit_cmd->add_option("--out", fit_out, "write the fit as a checkpoint");
  fit_cmd->add_option("--workers", common.workers, "max worker threads");

  // gen-data
  auto* gen_cmd = app.add_subcommand(
      "gen-data", "dataset audit CSV or constellation table export");
  int gen_qam = 0;
  double gen_energy = 1.0;
  std::string gen_out = "gen.csv";
  gen_cmd->add_option("--config", common.config_path, "training config JSON");
  gen_cmd->add_option("--qam", gen_qam, "export a QAM table of this order instead");
  gen_cmd->add_option("--energy", gen_energy, "symbol energy for --qam");
  gen_cmd->add_option("--out", gen_out, "output CSV path")->required();
  gen_cmd->add_option("--workers", common.workers, "max worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*train_cmd)
      return run_train(common, train_out, train_hist, train_manifest, train_seed,
                       train_epochs, train_j, train_m, train_lr0, train_decay);
    if (*sweep_cmd)
      return run_sweep(common, sweep_out, sweep_summary, sweep_manifest, sweep_seed);
    if (*count_cmd) return run_count_ops(cn, ck, cdet, cj, ccmp, ccj);
    if (*fit_cmd) return run_fit_oracle(common, fit_ckpt, fit_out);
    if (*gen_cmd) {
      if (gen_qam == 0 && common.config_path.empty())
        throw ValidationError("gen-data needs --config or --qam");
      return run_gen_data(common, gen_qam, gen_energy, gen_out);
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitValidation;
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "schema error: %s\n", e.what());
    return kExitValidation;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  } catch (const TrainingDivergedError& e) {
    std::fprintf(stderr, "training diverged at epoch %d: %s\n", e.epoch, e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
  return 0;
}
