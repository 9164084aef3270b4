#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hippo/datasets.hpp"
#include "hippo/metrics.hpp"
#include "hippo/models.hpp"
#include "hippo/postprocess.hpp"

namespace hippo::training {

enum class OptimizerKind { adam, sgd_momentum };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view optimizer_name(OptimizerKind kind);

struct TrainConfig {
  int max_epochs = 30;
  int batch_size = 8;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double momentum = 0.9;  // sgd_momentum only
  int patience = 10;
  metrics::LossConfig loss;
  std::uint64_t seed = 0;
  int snapshot_sample_index = 0;
  bool save_epoch_checkpoints = true;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Reads the training keys; the loss keys live in a separate object.
TrainConfig train_config_from_json(const nlohmann::json& j, const metrics::LossConfig& loss = {});
nlohmann::json to_json(const metrics::LossConfig& c);
metrics::LossConfig loss_config_from_json(const nlohmann::json& j);

struct LayerGrad {
  std::string layer;
  double mean_abs_grad = 0.0;
};

struct EpochReport {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_dice = 0.0;
  std::vector<LayerGrad> gradient_flow;  // mean over the epoch's batches
  double wall_seconds = 0.0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam or SGD with momentum over a fixed parameter list.
class Optimizer {
 public:
  Optimizer(std::vector<nn::Var<float>> params, OptimizerKind kind, double lr, double momentum = 0.9);
  void step();
  std::size_t steps() const { return t_; }

 private:
  std::vector<nn::Var<float>> params_;
  OptimizerKind kind_;
  double lr_;
  double momentum_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::size_t t_ = 0;
};

struct Batch {
  nn::Tensor<float> images;   // N x C x H x W
  nn::Tensor<float> targets;  // N x 1 x H x W
};

Batch make_batch(const datasets::SampleSet& set, std::span<const std::size_t> indices);
Batch make_batch(const datasets::SampleSet& set);

/// Training objective for a list of heads: combined loss for one head, the
/// deep-supervision mean otherwise. Fills one gradient tensor per head.
double heads_loss(const std::vector<nn::Tensor<float>>& heads, const nn::Tensor<float>& target,
                  const metrics::LossConfig& config, std::vector<nn::Tensor<float>>* grads = nullptr);

/// Forward in training mode, loss, backward. Gradients accumulate into the
/// model parameters (call zero_grad first). Returns the loss.
double forward_backward(const models::Model& model, const Batch& batch, const metrics::LossConfig& config,
                        std::mt19937_64* dropout_rng = nullptr);

struct ValidationResult {
  double loss = 0.0;  // mean per-sample objective
  double dice = 0.0;  // mean per-sample Dice of the final head at 0.5
};

/// Inference-mode evaluation; does not modify the model.
ValidationResult validate(const models::Model& model, const datasets::SampleSet& set,
                          const metrics::LossConfig& config, int batch_size = 8);

/// Mean |grad| per trainable layer (registry order, input to output) for one
/// training-mode pass over `batch`. Works on a copy, so `model` is unchanged.
std::vector<LayerGrad> gradient_flow(const models::Model& model, const Batch& batch,
                                     const metrics::LossConfig& config);

struct TrainResult {
  models::Model best;
  std::vector<EpochReport> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochReport&)>;

/// Epoch loop with seeded shuffling, validation, early stopping on the
/// validation loss and the artifact layout
///   checkpoints/epoch_{n}.ckpt, best.ckpt, history.csv,
///   snapshots/epoch_{n}.png, filters/epoch_{n}.png, gradflow/epoch_{n}.csv
/// An empty artifacts_dir skips all file output. The snapshot sample is taken
/// from `snapshot_set` when given, else from `val_set`. `checkpoint_metadata`
/// is stored in every checkpoint next to the epoch statistics.
TrainResult train(models::Model& model, const datasets::SampleSet& train_set, const datasets::SampleSet& val_set,
                  const TrainConfig& config, const std::filesystem::path& artifacts_dir,
                  const datasets::SampleSet* snapshot_set = nullptr, const EpochCallback& on_epoch = {},
                  const nlohmann::json& checkpoint_metadata = nlohmann::json::object());

/// Tiles the first convolution's kernels (rows = output channel, cols = input
/// channel) into an 8-bit grayscale image, min-max scaled over all weights.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};
GrayImage filter_grid(const models::Model& model, int scale = 8);
/// Input (middle channel) | label | probability, side by side.
GrayImage snapshot_image(const datasets::SliceSample& sample, const nn::Tensor<float>& probs);

/// Probability volume in the scan's geometry: every slice along the recipe
/// axis is normalized, mapped to model space, predicted and mapped back.
imaging::Volume<float> predict_volume(const models::Model& model, const imaging::VoxelGrid& scan,
                                      const datasets::DatasetRecipe& recipe, int batch_size = 8);

/// predict_volume followed by the post-processing chain.
imaging::BinaryMask3D segment_volume(const models::Model& model, const imaging::VoxelGrid& scan,
                                     const datasets::DatasetRecipe& recipe,
                                     const postprocess::PostprocessConfig& config,
                                     const std::optional<postprocess::RoiBox>& roi, int batch_size = 8);

}  // namespace hippo::training
