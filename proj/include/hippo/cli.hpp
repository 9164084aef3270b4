#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hippo/datasets.hpp"
#include "hippo/longitudinal.hpp"
#include "hippo/metrics.hpp"
#include "hippo/models.hpp"
#include "hippo/postprocess.hpp"
#include "hippo/synthetic.hpp"
#include "hippo/training.hpp"
#include "json.hpp"

namespace hippo::cli {

struct Paths {
  std::filesystem::path data_dir = "runs/data";
  std::filesystem::path samples_dir = "runs/samples";
  std::filesystem::path artifacts_dir = "runs/train";
  std::filesystem::path predictions_dir = "runs/predictions";
  std::filesystem::path eval_dir = "runs/eval";
  std::filesystem::path analysis_dir = "runs/analysis";
};

/// Every setting of a pipeline run. One top-level seed feeds the cohort
/// generator, the subject split, weight initialization and batch shuffling.
struct RunConfig {
  std::uint64_t seed = 0;
  synthetic::CohortSpec cohort;
  datasets::DatasetRecipe recipe;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  int scans_per_subject = 1;  // 0 = every timepoint
  models::ModelConfig model{models::Variant::nested_unet, 4, 8, true, 0.0, true, 3, 1};
  training::TrainConfig train;
  metrics::LossConfig loss;
  postprocess::PostprocessConfig postprocess;
  int predict_batch_size = 8;
  Paths paths;

  /// Field and cross-field checks (e.g. model-space size divisible by
  /// 2^(depth-1)).
  void validate() const;
};

/// Defaults as a JSON document; this defines the set of valid keys.
nlohmann::json default_config_json();
nlohmann::json to_json(const RunConfig& config);
/// Rejects unknown keys and type mismatches, then validates.
RunConfig run_config_from_json(const nlohmann::json& doc);

/// Applies "dotted.key=value". The value is read as JSON when it parses,
/// otherwise as a string, and must match the default's type.
void apply_override(nlohmann::json& doc, std::string_view assignment);

struct KeyInfo {
  std::string key;
  std::string type;
  std::string default_value;
  std::string description;
};
std::vector<KeyInfo> list_keys();
std::string keys_help();

/// Defaults, then the optional JSON file, then each override in order.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);

/// Writes progress lines to stderr.
void log(const std::string& message);

void cmd_phantom(const RunConfig& config);
void cmd_build_data(const RunConfig& config);
void cmd_train(const RunConfig& config);

struct PredictOptions {
  std::optional<std::filesystem::path> checkpoint;  // default <artifacts>/best.ckpt
  std::optional<std::filesystem::path> roi;         // default <artifacts>/roi.json when present
  std::optional<std::filesystem::path> scan;        // single scan mode
  std::optional<std::filesystem::path> out;         // output mask for single scan mode
  std::string subjects = "test";                    // "test" or "all" in manifest mode
};
void cmd_predict(const RunConfig& config, const PredictOptions& options);

struct EvaluateOptions {
  std::optional<std::filesystem::path> predictions;  // manifest; default <predictions>/manifest.json
  std::optional<std::filesystem::path> pred;         // single pair mode
  std::optional<std::filesystem::path> label;
};
void cmd_evaluate(const RunConfig& config, const EvaluateOptions& options);

struct AnalyzeOptions {
  std::optional<std::filesystem::path> manifest;
  longitudinal::Source source = longitudinal::Source::predicted;
};
void cmd_analyze(const RunConfig& config, const AnalyzeOptions& options);

struct VolumeMetrics {
  double dice_volume = 0.0;
  double dice_slice_mean = 0.0;  // over slices where either mask is nonempty
  double iou_volume = 0.0;
  double continuity_pred = 0.0;
  double continuity_label = 0.0;
};
VolumeMetrics evaluate_pair(const imaging::BinaryMask3D& pred, const imaging::BinaryMask3D& label, imaging::Axis axis);

}  // namespace hippo::cli
