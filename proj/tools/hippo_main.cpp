#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hippo/cli.hpp"
#include "hippo/imaging.hpp"
#include "hippo/io_util.hpp"
#include "hippo/nn/ops.hpp"

namespace {

int fail(int code, const std::string& reason) {
  std::string line = reason;
  for (auto& c : line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error: " << line << std::endl;
  return code;
}

template <typename T>
std::optional<T> opt(const T& value, bool given) {
  return given ? std::optional<T>(value) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace hippo;
  namespace fs = std::filesystem;

  CLI::App app{"Hippocampus segmentation and longitudinal volumetry pipeline"};
  app.require_subcommand(1);
  app.footer(cli::keys_help() +
             "\nExit codes: 0 success, 1 internal error, 2 invalid input.\n"
             "HIPPO_NUM_THREADS caps the BLAS worker threads.");

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "JSON run configuration");
  app.add_option("--set", overrides, "override a config key: key=value (repeatable)")->allow_extra_args(false);

  auto* phantom = app.add_subcommand("phantom", "generate a synthetic longitudinal cohort");
  auto* build = app.add_subcommand("build-data", "slice, normalize, resize and split the cohort");
  auto* train = app.add_subcommand("train", "train a segmentation model");

  auto* predict = app.add_subcommand("predict", "segment scans with a trained checkpoint");
  std::string p_ckpt, p_roi, p_scan, p_out, p_subjects = "test";
  predict->add_option("--checkpoint", p_ckpt, "checkpoint (default <artifacts_dir>/best.ckpt)");
  predict->add_option("--roi", p_roi, "ROI box JSON (default <artifacts_dir>/roi.json when present)");
  predict->add_option("--scan", p_scan, "single NIfTI scan to segment");
  predict->add_option("--out", p_out, "output mask for --scan");
  predict->add_option("--subjects", p_subjects, "manifest mode: test or all")->capture_default_str();

  auto* evaluate = app.add_subcommand("evaluate", "Dice, IoU and continuity of predicted masks");
  std::string e_manifest, e_pred, e_label;
  evaluate->add_option("--predictions", e_manifest, "predictions manifest (default <predictions_dir>/manifest.json)");
  evaluate->add_option("--pred", e_pred, "single predicted mask");
  evaluate->add_option("--label", e_label, "single reference mask");

  auto* analyze = app.add_subcommand("analyze", "volumes, per-subject trajectories and box statistics");
  std::string a_manifest, a_source = "predicted";
  analyze->add_option("--manifest", a_manifest, "mask manifest");
  analyze->add_option("--source", a_source, "predicted or ground_truth")->capture_default_str();

  auto* keys = app.add_subcommand("config", "print the resolved configuration as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, e.what());
  }

  if (const char* env = std::getenv("HIPPO_NUM_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n < 1) throw std::invalid_argument("must be >= 1");
      nn::set_num_threads(n);
    } catch (const std::exception&) {
      return fail(2, std::string("HIPPO_NUM_THREADS must be a positive integer, got '") + env + "'");
    }
  }

  try {
    const auto config = cli::load_run_config(opt(fs::path(config_path), !config_path.empty()), overrides);
    if (keys->parsed()) {
      std::cout << cli::to_json(config).dump(2) << std::endl;
    } else if (phantom->parsed()) {
      cli::cmd_phantom(config);
    } else if (build->parsed()) {
      cli::cmd_build_data(config);
    } else if (train->parsed()) {
      cli::cmd_train(config);
    } else if (predict->parsed()) {
      cli::PredictOptions o;
      o.checkpoint = opt(fs::path(p_ckpt), !p_ckpt.empty());
      o.roi = opt(fs::path(p_roi), !p_roi.empty());
      o.scan = opt(fs::path(p_scan), !p_scan.empty());
      o.out = opt(fs::path(p_out), !p_out.empty());
      o.subjects = p_subjects;
      cli::cmd_predict(config, o);
    } else if (evaluate->parsed()) {
      cli::EvaluateOptions o;
      o.predictions = opt(fs::path(e_manifest), !e_manifest.empty());
      o.pred = opt(fs::path(e_pred), !e_pred.empty());
      o.label = opt(fs::path(e_label), !e_label.empty());
      cli::cmd_evaluate(config, o);
    } else if (analyze->parsed()) {
      cli::AnalyzeOptions o;
      o.manifest = opt(fs::path(a_manifest), !a_manifest.empty());
      o.source = longitudinal::parse_source(a_source);
      cli::cmd_analyze(config, o);
    }
  } catch (const std::invalid_argument& e) {
    return fail(2, e.what());
  } catch (const std::out_of_range& e) {
    return fail(2, e.what());
  } catch (const imaging::NiftiError& e) {
    return fail(2, e.what());
  } catch (const io::InputError& e) {
    return fail(2, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(2, std::string("malformed JSON input: ") + e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(2, e.what());
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
  return 0;
}
