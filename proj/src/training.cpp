#include "hippo/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "hippo/io_util.hpp"

namespace hippo::training {

using datasets::SampleSet;
using models::Model;
using nn::Shape4;
using nn::Tensor;

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd_momentum") return OptimizerKind::sgd_momentum;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "' (expected adam or sgd_momentum)");
}

std::string_view optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd_momentum"; }

void TrainConfig::validate() const {
  if (max_epochs <= 0) throw std::invalid_argument("train.max_epochs must be > 0");
  if (batch_size <= 0) throw std::invalid_argument("train.batch_size must be > 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("train.learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train.momentum must be in [0, 1)");
  if (patience < 1) throw std::invalid_argument("train.patience must be >= 1");
  if (patience > max_epochs) throw std::invalid_argument("train.patience must not exceed train.max_epochs");
  if (snapshot_sample_index < 0) throw std::invalid_argument("train.snapshot_sample_index must be >= 0");
  loss.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"max_epochs", c.max_epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"optimizer", std::string(optimizer_name(c.optimizer))},
          {"momentum", c.momentum},
          {"patience", c.patience},
          {"seed", c.seed},
          {"snapshot_sample_index", c.snapshot_sample_index},
          {"save_epoch_checkpoints", c.save_epoch_checkpoints}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, const metrics::LossConfig& loss) {
  TrainConfig c;
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.optimizer = parse_optimizer(j.value("optimizer", std::string(optimizer_name(c.optimizer))));
  c.momentum = j.value("momentum", c.momentum);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.snapshot_sample_index = j.value("snapshot_sample_index", c.snapshot_sample_index);
  c.save_epoch_checkpoints = j.value("save_epoch_checkpoints", c.save_epoch_checkpoints);
  c.loss = loss;
  return c;
}

nlohmann::json to_json(const metrics::LossConfig& c) {
  return {{"kind", std::string(metrics::loss_kind_name(c.kind))}, {"bce_weight", c.bce_weight}, {"smooth", c.smooth}};
}

metrics::LossConfig loss_config_from_json(const nlohmann::json& j) {
  metrics::LossConfig c;
  c.kind = metrics::parse_loss_kind(j.value("kind", std::string(metrics::loss_kind_name(c.kind))));
  c.bce_weight = j.value("bce_weight", c.bce_weight);
  c.smooth = j.value("smooth", c.smooth);
  return c;
}

Optimizer::Optimizer(std::vector<nn::Var<float>> params, OptimizerKind kind, double lr, double momentum)
    : params_(std::move(params)), kind_(kind), lr_(lr), momentum_(momentum) {
  for (const auto& p : params_) {
    m_.emplace_back(p->value.size(), 0.0f);
    if (kind_ == OptimizerKind::adam) v_.emplace_back(p->value.size(), 0.0f);
  }
}

void Optimizer::step() {
  ++t_;
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    auto& node = *params_[p];
    if (node.grad.empty()) continue;
    auto value = node.value.values();
    const auto grad = node.grad.values();
    auto& m = m_[p];
    if (kind_ == OptimizerKind::adam) {
      auto& v = v_[p];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        m[i] = static_cast<float>(beta1 * m[i] + (1.0 - beta1) * g);
        v[i] = static_cast<float>(beta2 * v[i] + (1.0 - beta2) * g * g);
        value[i] -= static_cast<float>(lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps));
      }
    } else {
      for (std::size_t i = 0; i < value.size(); ++i) {
        m[i] = static_cast<float>(momentum_ * m[i] + grad[i]);
        value[i] -= static_cast<float>(lr_ * m[i]);
      }
    }
  }
}

Batch make_batch(const SampleSet& set, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: no indices");
  const auto& first = set.samples.at(indices[0]);
  const Shape4 shape{indices.size(), first.image.channels, first.image.rows, first.image.cols};
  Batch b{Tensor<float>(shape), Tensor<float>(Shape4{indices.size(), 1, shape.h, shape.w})};
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const auto& s = set.samples.at(indices[n]);
    if (s.image.channels != shape.c || s.image.rows != shape.h || s.image.cols != shape.w ||
        s.label.rows != shape.h || s.label.cols != shape.w) {
      throw std::invalid_argument("make_batch: sample " + std::to_string(indices[n]) + " has a different shape");
    }
    std::copy(s.image.data.begin(), s.image.data.end(), b.images.sample(n));
    std::transform(s.label.data.begin(), s.label.data.end(), b.targets.sample(n),
                   [](std::uint8_t v) { return static_cast<float>(v); });
  }
  return b;
}

Batch make_batch(const SampleSet& set) {
  std::vector<std::size_t> all(set.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_batch(set, all);
}

double heads_loss(const std::vector<Tensor<float>>& heads, const Tensor<float>& target,
                  const metrics::LossConfig& config, std::vector<Tensor<float>>* grads) {
  if (heads.empty()) throw std::invalid_argument("heads_loss: no heads");
  std::vector<std::span<const float>> views;
  std::vector<std::span<float>> grad_views;
  if (grads) grads->clear();
  for (const auto& h : heads) {
    if (h.shape() != target.shape()) {
      throw std::invalid_argument("heads_loss: head shape " + h.shape().str() + " vs target " + target.shape().str());
    }
    views.push_back(h.values());
    if (grads) grads->emplace_back(h.shape());
  }
  if (grads) {
    for (auto& g : *grads) grad_views.push_back(g.values());
  }
  if (heads.size() == 1) {
    return metrics::combined_loss<float>(views[0], target.values(), config,
                                         grads ? grad_views[0] : std::span<float>());
  }
  return metrics::deep_supervision_loss<float>(views, target.values(), config, grad_views);
}

double forward_backward(const Model& model, const Batch& batch, const metrics::LossConfig& config,
                        std::mt19937_64* dropout_rng) {
  const auto input = nn::constant(batch.images);
  const auto heads = model.forward(input, true, dropout_rng);
  std::vector<Tensor<float>> values;
  for (const auto& h : heads) values.push_back(h->value);
  std::vector<Tensor<float>> grads;
  const double loss = heads_loss(values, batch.targets, config, &grads);
  if (!std::isfinite(loss)) return loss;
  nn::backward<float>(std::span<const nn::Var<float>>(heads), std::span<const Tensor<float>>(grads));
  return loss;
}

namespace {

Tensor<float> single(const Tensor<float>& t, std::size_t n) {
  const auto& s = t.shape();
  Tensor<float> out(Shape4{1, s.c, s.h, s.w});
  std::copy(t.sample(n), t.sample(n) + s.c * s.plane(), out.data());
  return out;
}

std::vector<LayerGrad> layer_grads(const Model& model) {
  std::vector<LayerGrad> out;
  for (const auto& layer : model.registry().layers()) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& p : layer.params) {
      count += p->value.size();
      if (p->grad.empty()) continue;
      for (float g : p->grad.values()) sum += std::abs(static_cast<double>(g));
    }
    out.push_back({layer.name, count ? sum / static_cast<double>(count) : 0.0});
  }
  return out;
}

void write_gray_png(const std::filesystem::path& path, const GrayImage& img) {
  io::write_png(path, img.width, img.height, 1, img.pixels);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

ValidationResult validate(const Model& model, const SampleSet& set, const metrics::LossConfig& config,
                          int batch_size) {
  if (set.empty()) throw std::invalid_argument("validate: empty sample set");
  if (batch_size <= 0) throw std::invalid_argument("validate: batch_size must be > 0");
  ValidationResult r;
  for (std::size_t start = 0; start < set.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(set.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < end; ++i) idx.push_back(i);
    const auto batch = make_batch(set, idx);
    const auto heads = model.predict(batch.images);
    for (std::size_t n = 0; n < idx.size(); ++n) {
      std::vector<Tensor<float>> mine;
      for (const auto& h : heads) mine.push_back(single(h, n));
      r.loss += heads_loss(mine, single(batch.targets, n), config);
      const auto pred = metrics::binarize<float>(mine.back().values(), 0.5);
      r.dice += metrics::dice_score(pred, set.samples[idx[n]].label.data);
    }
  }
  r.loss /= static_cast<double>(set.size());
  r.dice /= static_cast<double>(set.size());
  return r;
}

std::vector<LayerGrad> gradient_flow(const Model& model, const Batch& batch, const metrics::LossConfig& config) {
  auto copy = model.clone();
  copy.zero_grad();
  std::mt19937_64 rng(0);
  forward_backward(copy, batch, config, &rng);
  return layer_grads(copy);
}

GrayImage filter_grid(const Model& model, int scale) {
  if (scale < 1) throw std::invalid_argument("filter_grid: scale must be >= 1");
  const auto& w = model.registry().layers().front().params.front()->value;
  const auto& s = w.shape();
  const auto cell = s.h * static_cast<std::size_t>(scale);
  GrayImage img;
  img.width = s.c * (cell + 1) + 1;
  img.height = s.n * (cell + 1) + 1;
  img.pixels.assign(img.width * img.height, 0);
  const auto [lo, hi] = std::minmax_element(w.values().begin(), w.values().end());
  const double range = static_cast<double>(*hi) - *lo;
  for (std::size_t o = 0; o < s.n; ++o) {
    for (std::size_t i = 0; i < s.c; ++i) {
      for (std::size_t y = 0; y < cell; ++y) {
        for (std::size_t x = 0; x < cell; ++x) {
          const double v = w(o, i, y / static_cast<std::size_t>(scale), x / static_cast<std::size_t>(scale));
          const double norm = range > 0.0 ? (v - *lo) / range : 0.5;
          img.pixels[(o * (cell + 1) + 1 + y) * img.width + i * (cell + 1) + 1 + x] = to_byte(norm);
        }
      }
    }
  }
  return img;
}

GrayImage snapshot_image(const datasets::SliceSample& sample, const Tensor<float>& probs) {
  const auto rows = sample.image.rows;
  const auto cols = sample.image.cols;
  if (probs.shape().h != rows || probs.shape().w != cols) throw std::invalid_argument("snapshot_image: size mismatch");
  GrayImage img;
  img.width = 3 * cols + 2;
  img.height = rows;
  img.pixels.assign(img.width * img.height, 255);
  const std::size_t mid = sample.image.channels / 2;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      auto* row = img.pixels.data() + r * img.width;
      row[c] = to_byte(sample.image.at(mid, r, c));
      row[cols + 1 + c] = sample.label.at(0, r, c) ? 255 : 0;
      row[2 * cols + 2 + c] = to_byte(probs(0, 0, r, c));
    }
  }
  return img;
}

TrainResult train(Model& model, const SampleSet& train_set, const SampleSet& val_set, const TrainConfig& config,
                  const std::filesystem::path& artifacts_dir, const SampleSet* snapshot_set,
                  const EpochCallback& on_epoch, const nlohmann::json& checkpoint_metadata) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (val_set.empty()) throw std::invalid_argument("train: empty validation set");
  const SampleSet& snap_set = snapshot_set && !snapshot_set->empty() ? *snapshot_set : val_set;
  const auto snap_index = static_cast<std::size_t>(config.snapshot_sample_index);
  if (snap_index >= snap_set.size()) {
    throw std::invalid_argument("train.snapshot_sample_index " + std::to_string(snap_index) + " out of range (" +
                                std::to_string(snap_set.size()) + " samples)");
  }
  const bool write = !artifacts_dir.empty();

  std::vector<nn::Var<float>> params;
  for (const auto& [name, p] : model.registry().named_parameters()) params.push_back(p);
  Optimizer optimizer(params, config.optimizer, config.learning_rate, config.momentum);
  std::mt19937_64 shuffle_rng(config.seed);
  std::mt19937_64 dropout_rng(config.seed ^ 0x5deece66dULL);

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result{model.clone(), {}, 0, std::numeric_limits<double>::infinity(), false};
  int since_best = 0;
  std::string history = "epoch,train_loss,val_loss,val_dice\n";
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t_start = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);

    double loss_sum = 0.0;
    std::vector<LayerGrad> flow;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(bs, order.size() - start));
      const auto batch = make_batch(train_set, idx);
      model.zero_grad();
      const double loss = forward_backward(model, batch, config.loss, &dropout_rng);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(n_batches + 1));
      }
      optimizer.step();
      loss_sum += loss * static_cast<double>(idx.size());
      auto grads = layer_grads(model);
      if (flow.empty()) flow = std::move(grads);
      else
        for (std::size_t l = 0; l < flow.size(); ++l) flow[l].mean_abs_grad += grads[l].mean_abs_grad;
      ++n_batches;
    }
    for (auto& f : flow) f.mean_abs_grad /= static_cast<double>(n_batches);

    EpochReport report;
    report.epoch = epoch;
    report.train_loss = loss_sum / static_cast<double>(train_set.size());
    const auto val = validate(model, val_set, config.loss, config.batch_size);
    report.val_loss = val.loss;
    report.val_dice = val.dice;
    if (!std::isfinite(report.val_loss)) {
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    report.gradient_flow = std::move(flow);

    const bool improved = report.val_loss < result.best_val_loss - 1e-12;
    if (improved) {
      result.best_val_loss = report.val_loss;
      result.best_epoch = epoch;
      result.best = model.clone();
      since_best = 0;
    } else {
      ++since_best;
    }

    if (write) {
      const auto tag = "epoch_" + std::to_string(epoch);
      nlohmann::json meta = checkpoint_metadata.is_object() ? checkpoint_metadata : nlohmann::json::object();
      meta["epoch"] = epoch;
      meta["train_loss"] = report.train_loss;
      meta["val_loss"] = report.val_loss;
      meta["val_dice"] = report.val_dice;
      if (config.save_epoch_checkpoints) models::save_checkpoint(model, artifacts_dir / "checkpoints" / (tag + ".ckpt"), meta);
      if (improved) models::save_checkpoint(model, artifacts_dir / "best.ckpt", meta);
      const std::size_t one[1] = {snap_index};
      const auto snap_batch = make_batch(snap_set, one);
      const auto probs = model.predict(snap_batch.images).back();
      write_gray_png(artifacts_dir / "snapshots" / (tag + ".png"), snapshot_image(snap_set.samples[snap_index], probs));
      write_gray_png(artifacts_dir / "filters" / (tag + ".png"), filter_grid(model));
      std::string csv = "layer,mean_abs_grad\n";
      for (const auto& f : report.gradient_flow) csv += f.layer + "," + num(f.mean_abs_grad) + "\n";
      io::write_text_atomic(artifacts_dir / "gradflow" / (tag + ".csv"), csv);
      history += std::to_string(epoch) + "," + num(report.train_loss) + "," + num(report.val_loss) + "," +
                 num(report.val_dice) + "\n";
      io::write_text_atomic(artifacts_dir / "history.csv", history);
    }

    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.history.push_back(report);
    if (on_epoch) on_epoch(result.history.back());
    if (since_best >= config.patience) {
      result.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  return result;
}

namespace {

void insert_plane(imaging::Volume<float>& vol, imaging::Axis axis, std::size_t index,
                  const imaging::Image2D<float>& plane) {
  for (std::size_t r = 0; r < plane.rows; ++r) {
    for (std::size_t c = 0; c < plane.cols; ++c) {
      const float v = plane.at(0, r, c);
      switch (axis) {
        case imaging::Axis::sagittal: vol(index, r, c) = v; break;
        case imaging::Axis::coronal: vol(r, index, c) = v; break;
        case imaging::Axis::axial: vol(r, c, index) = v; break;
      }
    }
  }
}

}  // namespace

imaging::Volume<float> predict_volume(const Model& model, const imaging::VoxelGrid& scan,
                                      const datasets::DatasetRecipe& recipe, int batch_size) {
  scan.validate();
  if (batch_size <= 0) throw std::invalid_argument("predict_volume: batch_size must be > 0");
  if (model.config().in_channels != 3) throw std::invalid_argument("predict_volume: model must take 3 input channels");
  const auto [rows, cols] = imaging::plane_shape(scan.data.shape(), recipe.axis);
  recipe.validate_plane(rows, cols);
  const auto normalized = datasets::normalize_min_max(scan);
  const auto extent = scan.data.extent(recipe.axis);
  const auto m = datasets::model_size(recipe.size_mode);
  imaging::Volume<float> out(scan.data.shape());
  for (std::size_t start = 0; start < extent; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(static_cast<std::size_t>(batch_size), extent - start);
    Tensor<float> batch(Shape4{n, 3, m, m});
    for (std::size_t i = 0; i < n; ++i) {
      const auto input = datasets::make_input(normalized, recipe, static_cast<long>(start + i));
      std::copy(input.data.begin(), input.data.end(), batch.sample(i));
    }
    const auto probs = model.predict(batch).back();
    for (std::size_t i = 0; i < n; ++i) {
      imaging::Image2D<float> p(1, m, m);
      std::copy(probs.sample(i), probs.sample(i) + m * m, p.data.begin());
      insert_plane(out, recipe.axis, start + i, datasets::from_model_space(p, recipe.size_mode, rows, cols));
    }
  }
  return out;
}

imaging::BinaryMask3D segment_volume(const Model& model, const imaging::VoxelGrid& scan,
                                     const datasets::DatasetRecipe& recipe,
                                     const postprocess::PostprocessConfig& config,
                                     const std::optional<postprocess::RoiBox>& roi, int batch_size) {
  const auto probs = predict_volume(model, scan, recipe, batch_size);
  return postprocess::postprocess_probabilities(probs, scan.spacing, config, roi);
}

}  // namespace hippo::training
