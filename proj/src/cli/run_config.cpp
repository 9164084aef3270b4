#include <cmath>
#include <iostream>
#include <map>
#include <stdexcept>

#include "hippo/cli.hpp"
#include "hippo/io_util.hpp"

namespace hippo::cli {

using nlohmann::json;

void RunConfig::validate() const {
  cohort.validate();
  recipe.validate();
  double sum = 0.0;
  for (double r : split_ratios) {
    if (!(r > 0.0)) throw std::invalid_argument("dataset.split_ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("dataset.split_ratios must sum to 1");
  if (scans_per_subject < 0) throw std::invalid_argument("dataset.scans_per_subject must be >= 0");
  model.validate();
  if (model.in_channels != 3 || model.out_channels != 1) {
    throw std::invalid_argument("model must map 3 input channels to 1 output channel");
  }
  training::TrainConfig t = train;
  t.loss = loss;
  t.validate();
  postprocess.validate();
  if (predict_batch_size <= 0) throw std::invalid_argument("predict.batch_size must be > 0");

  const auto size = datasets::model_size(recipe.size_mode);
  if (size % model.required_divisor() != 0) {
    throw std::invalid_argument("dataset.size_mode " + std::string(datasets::size_mode_name(recipe.size_mode)) +
                                " gives " + std::to_string(size) + " px, not divisible by 2^(depth-1) = " +
                                std::to_string(model.required_divisor()) + " for model.depth " +
                                std::to_string(model.depth));
  }
  const auto [rows, cols] = imaging::plane_shape(cohort.base.grid_shape, recipe.axis);
  recipe.validate_plane(rows, cols);
  if (static_cast<std::size_t>(recipe.slices_per_scan) > cohort.base.grid_shape[static_cast<int>(recipe.axis)]) {
    throw std::invalid_argument("dataset.slices_per_scan exceeds the phantom extent along the slicing axis");
  }
}

json to_json(const RunConfig& c) {
  const auto& p = c.cohort.base;
  json doc;
  doc["seed"] = c.seed;
  doc["phantom"] = {{"n_subjects", c.cohort.n_subjects},
                    {"n_timepoints", p.n_timepoints},
                    {"interval_years", p.interval_years},
                    {"shrink_fractions", c.cohort.shrink_fractions},
                    {"statuses", c.cohort.statuses},
                    {"geometry_jitter", c.cohort.geometry_jitter},
                    {"grid_shape", p.grid_shape},
                    {"spacing", p.spacing},
                    {"noise_sigma", p.noise_sigma},
                    {"texture", std::string(synthetic::texture_name(p.texture))},
                    {"semi_axes_mm", p.geometry.semi_axes_mm},
                    {"pair_offset_mm", p.geometry.pair_offset_mm}};
  doc["dataset"] = datasets::to_json(c.recipe);
  doc["dataset"]["split_ratios"] = c.split_ratios;
  doc["dataset"]["scans_per_subject"] = c.scans_per_subject;
  auto model = models::to_json(c.model);
  model.erase("in_channels");
  model.erase("out_channels");
  doc["model"] = model;
  auto train = training::to_json(c.train);
  train.erase("seed");
  doc["train"] = train;
  doc["loss"] = training::to_json(c.loss);
  doc["postprocess"] = postprocess::to_json(c.postprocess);
  doc["predict"] = {{"batch_size", c.predict_batch_size}};
  doc["paths"] = {{"data_dir", c.paths.data_dir.string()},
                  {"samples_dir", c.paths.samples_dir.string()},
                  {"artifacts_dir", c.paths.artifacts_dir.string()},
                  {"predictions_dir", c.paths.predictions_dir.string()},
                  {"eval_dir", c.paths.eval_dir.string()},
                  {"analysis_dir", c.paths.analysis_dir.string()}};
  return doc;
}

json default_config_json() { return to_json(RunConfig{}); }

namespace {

std::string type_name(const json& v) {
  switch (v.type()) {
    case json::value_t::number_integer:
    case json::value_t::number_unsigned: return "integer";
    case json::value_t::number_float: return "number";
    case json::value_t::boolean: return "boolean";
    case json::value_t::string: return "string";
    case json::value_t::array: return v.empty() ? "array" : "array<" + type_name(v.front()) + ">";
    default: return "object";
  }
}

json coerce(const json& def, const json& val, const std::string& key) {
  auto mismatch = [&] {
    return std::invalid_argument("config key '" + key + "' expects " + type_name(def) + ", got " + val.dump());
  };
  switch (def.type()) {
    case json::value_t::number_float:
      if (!val.is_number()) throw mismatch();
      return val.get<double>();
    case json::value_t::number_integer:
    case json::value_t::number_unsigned:
      if (!val.is_number_integer()) throw mismatch();
      if (def.is_number_unsigned() && val.is_number_integer() && !val.is_number_unsigned() && val.get<long long>() < 0) {
        throw mismatch();
      }
      return val;
    case json::value_t::boolean:
      if (!val.is_boolean()) throw mismatch();
      return val;
    case json::value_t::string:
      if (!val.is_string()) throw mismatch();
      return val;
    case json::value_t::array: {
      if (!val.is_array()) throw mismatch();
      if (def.empty()) return val;
      json out = json::array();
      for (const auto& e : val) out.push_back(coerce(def.front(), e, key));
      return out;
    }
    default: throw mismatch();
  }
}

void merge_checked(json& target, const json& defaults, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw std::invalid_argument("config section '" + prefix + "' must be an object");
  for (const auto& [k, v] : patch.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (!defaults.contains(k)) throw std::invalid_argument("unknown config key '" + key + "'");
    if (defaults[k].is_object()) merge_checked(target[k], defaults[k], v, key);
    else target[k] = coerce(defaults[k], v, key);
  }
}

void flatten(const json& doc, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (const auto& [k, v] : doc.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) flatten(v, key, out);
    else out.emplace_back(key, v);
  }
}

const std::map<std::string, std::string>& descriptions() {
  static const std::map<std::string, std::string> d{
      {"seed", "single source of randomness (cohort, split, init, shuffling)"},
      {"phantom.n_subjects", "number of synthetic subjects"},
      {"phantom.n_timepoints", "scans per subject (>= 2)"},
      {"phantom.interval_years", "years between consecutive scans"},
      {"phantom.shrink_fractions", "annual volume loss per status group, assigned round robin"},
      {"phantom.statuses", "status label of each shrink group (healthy, MCI, AD, unknown)"},
      {"phantom.geometry_jitter", "relative per-subject jitter of the ellipsoid geometry"},
      {"phantom.grid_shape", "voxel grid size"},
      {"phantom.spacing", "voxel spacing in mm"},
      {"phantom.noise_sigma", "Gaussian noise standard deviation"},
      {"phantom.texture", "background texture: flat or smooth_gradient"},
      {"phantom.semi_axes_mm", "ellipsoid semi-axes at t = 0"},
      {"phantom.pair_offset_mm", "distance of each ellipsoid center from the axis-2 mid-plane"},
      {"dataset.variant", "same_slice, stacked or center_crop"},
      {"dataset.size_mode", "pad256, resize128 or crop96"},
      {"dataset.label_mode", "center or collapsed"},
      {"dataset.slices_per_scan", "slices taken from each scan around its mid-slice"},
      {"dataset.axis", "slicing axis: sagittal, coronal or axial"},
      {"dataset.split_ratios", "train / val / test fractions of subjects"},
      {"dataset.scans_per_subject", "timepoints per subject used for training data (0 = all)"},
      {"model.variant", "unet, attention_unet or nested_unet"},
      {"model.depth", "resolution levels (3 to 5)"},
      {"model.base_channels", "channels at the first level"},
      {"model.use_batchnorm", "batch normalization after each convolution"},
      {"model.dropout_rate", "dropout after each conv block (training only)"},
      {"model.deep_supervision", "loss heads on every top-row node (nested_unet)"},
      {"train.max_epochs", "maximum number of epochs"},
      {"train.batch_size", "samples per optimizer step"},
      {"train.learning_rate", "optimizer step size"},
      {"train.optimizer", "adam or sgd_momentum"},
      {"train.momentum", "momentum for sgd_momentum"},
      {"train.patience", "epochs without validation improvement before stopping"},
      {"train.snapshot_sample_index", "test sample shown in per-epoch snapshots"},
      {"train.save_epoch_checkpoints", "write checkpoints/epoch_{n}.ckpt every epoch"},
      {"loss.kind", "dice or dice_bce"},
      {"loss.bce_weight", "weight of BCE in dice_bce"},
      {"loss.smooth", "soft Dice stabilizer"},
      {"postprocess.prob_threshold", "probability threshold (strict >)"},
      {"postprocess.min_component_voxels", "drop 3D components smaller than this"},
      {"postprocess.keep_largest_k", "keep only the k largest components (0 = all)"},
      {"postprocess.roi_margin_voxels", "margin added to the training-label bounding box"},
      {"predict.batch_size", "slices per inference batch"},
      {"paths.data_dir", "phantom output (NIfTI + manifest.json)"},
      {"paths.samples_dir", "build-data output"},
      {"paths.artifacts_dir", "training artifacts"},
      {"paths.predictions_dir", "predicted masks + manifest.json"},
      {"paths.eval_dir", "metrics.csv and continuity.csv"},
      {"paths.analysis_dir", "timelines, box stats and plots"},
  };
  return d;
}

}  // namespace

RunConfig run_config_from_json(const json& doc) {
  const json defaults = default_config_json();
  json merged = defaults;
  merge_checked(merged, defaults, doc, "");

  RunConfig c;
  c.seed = merged.at("seed").get<std::uint64_t>();

  const auto& ph = merged.at("phantom");
  c.cohort.n_subjects = ph.at("n_subjects").get<int>();
  c.cohort.shrink_fractions = ph.at("shrink_fractions").get<std::vector<double>>();
  c.cohort.statuses = ph.at("statuses").get<std::vector<std::string>>();
  for (const auto& s : c.cohort.statuses) longitudinal::parse_status(s);
  c.cohort.geometry_jitter = ph.at("geometry_jitter").get<double>();
  c.cohort.seed = c.seed;
  auto& base = c.cohort.base;
  base.n_timepoints = ph.at("n_timepoints").get<int>();
  base.interval_years = ph.at("interval_years").get<double>();
  const auto grid = ph.at("grid_shape").get<std::vector<std::size_t>>();
  const auto spacing = ph.at("spacing").get<std::vector<double>>();
  const auto axes = ph.at("semi_axes_mm").get<std::vector<double>>();
  if (grid.size() != 3 || spacing.size() != 3 || axes.size() != 3) {
    throw std::invalid_argument("phantom.grid_shape, phantom.spacing and phantom.semi_axes_mm need 3 entries");
  }
  for (int a = 0; a < 3; ++a) {
    base.grid_shape[a] = grid[a];
    base.spacing[a] = spacing[a];
    base.geometry.semi_axes_mm[a] = axes[a];
  }
  base.noise_sigma = ph.at("noise_sigma").get<double>();
  base.texture = synthetic::parse_texture(ph.at("texture").get<std::string>());
  base.geometry.pair_offset_mm = ph.at("pair_offset_mm").get<double>();
  base.annual_shrink_fraction = 0.0;
  for (double f : c.cohort.shrink_fractions) base.annual_shrink_fraction = std::max(base.annual_shrink_fraction, f);

  const auto& ds = merged.at("dataset");
  c.recipe = datasets::recipe_from_json(ds);
  const auto ratios = ds.at("split_ratios").get<std::vector<double>>();
  if (ratios.size() != 3) throw std::invalid_argument("dataset.split_ratios needs 3 entries");
  c.split_ratios = {ratios[0], ratios[1], ratios[2]};
  c.scans_per_subject = ds.at("scans_per_subject").get<int>();

  c.model = models::model_config_from_json(merged.at("model"));
  c.loss = training::loss_config_from_json(merged.at("loss"));
  c.train = training::train_config_from_json(merged.at("train"), c.loss);
  c.train.seed = c.seed;
  c.postprocess = postprocess::postprocess_config_from_json(merged.at("postprocess"));
  c.predict_batch_size = merged.at("predict").at("batch_size").get<int>();

  const auto& p = merged.at("paths");
  c.paths.data_dir = p.at("data_dir").get<std::string>();
  c.paths.samples_dir = p.at("samples_dir").get<std::string>();
  c.paths.artifacts_dir = p.at("artifacts_dir").get<std::string>();
  c.paths.predictions_dir = p.at("predictions_dir").get<std::string>();
  c.paths.eval_dir = p.at("eval_dir").get<std::string>();
  c.paths.analysis_dir = p.at("analysis_dir").get<std::string>();

  c.validate();
  return c;
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw std::invalid_argument("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));

  const json defaults = default_config_json();
  const json* def = &defaults;
  json* target = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!def->is_object() || !def->contains(part)) throw std::invalid_argument("unknown config key '" + key + "'");
    def = &(*def)[part];
    if (!target->is_object()) *target = json::object();
    target = &(*target)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (def->is_object()) throw std::invalid_argument("config key '" + key + "' is a section, not a value");
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded() || (def->is_string() && !value.is_string())) value = raw;
  *target = coerce(*def, value, key);
}

std::vector<KeyInfo> list_keys() {
  std::vector<std::pair<std::string, json>> flat;
  flatten(default_config_json(), "", flat);
  std::vector<KeyInfo> out;
  for (const auto& [key, value] : flat) {
    const auto it = descriptions().find(key);
    out.push_back({key, type_name(value), value.dump(), it == descriptions().end() ? "" : it->second});
  }
  return out;
}

std::string keys_help() {
  std::string s = "Config keys (JSON file sections or --set key=value):\n";
  for (const auto& k : list_keys()) {
    s += "  " + k.key + " (" + k.type + ", default " + k.default_value + ")";
    if (!k.description.empty()) s += ": " + k.description;
    s += "\n";
  }
  return s;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (file) {
    doc = json::parse(io::read_text(*file), nullptr, false);
    if (doc.is_discarded()) throw std::invalid_argument(file->string() + ": not valid JSON");
    if (!doc.is_object()) throw std::invalid_argument(file->string() + ": top level must be an object");
    // Validate the file's keys before applying overrides on top.
    const json defaults = default_config_json();
    json merged = defaults;
    merge_checked(merged, defaults, doc, "");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return run_config_from_json(doc);
}

void log(const std::string& message) { std::cerr << "[hippo] " << message << std::endl; }

}  // namespace hippo::cli
