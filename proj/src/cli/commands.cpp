#include <algorithm>
#include <cstdio>
#include <cstring>
#include <map>
#include <set>

#include "hippo/cli.hpp"
#include "hippo/io_util.hpp"

namespace hippo::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  auto doc = json::parse(io::read_text(path), nullptr, false);
  if (doc.is_discarded()) throw std::invalid_argument(path.string() + ": not valid JSON");
  return doc;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

struct ScanEntry {
  std::string subject_id;
  double timepoint_years = 0.0;
  std::string status = "unknown";
  fs::path image;
  fs::path label;
};

std::vector<ScanEntry> read_cohort_manifest(const fs::path& manifest) {
  const auto doc = read_json(manifest);
  if (!doc.contains("scans") || !doc.at("scans").is_array()) {
    throw std::invalid_argument(manifest.string() + ": expected a \"scans\" array");
  }
  std::vector<ScanEntry> out;
  for (const auto& e : doc.at("scans")) {
    ScanEntry s;
    s.subject_id = e.at("subject_id").get<std::string>();
    s.timepoint_years = e.at("timepoint_years").get<double>();
    s.status = e.value("status", std::string("unknown"));
    s.image = resolve(manifest.parent_path(), e.at("image").get<std::string>());
    if (e.contains("label")) s.label = resolve(manifest.parent_path(), e.at("label").get<std::string>());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void cmd_phantom(const RunConfig& config) {
  config.validate();
  log("generating " + std::to_string(config.cohort.n_subjects) + " phantom subjects x " +
      std::to_string(config.cohort.base.n_timepoints) + " timepoints into " + config.paths.data_dir.string());
  synthetic::write_cohort(config.cohort, config.paths.data_dir);
}

void cmd_build_data(const RunConfig& config) {
  config.validate();
  const auto scans = read_cohort_manifest(config.paths.data_dir / "manifest.json");
  std::map<std::string, std::vector<const ScanEntry*>> by_subject;
  for (const auto& s : scans) {
    if (s.label.empty()) throw std::invalid_argument("scan of " + s.subject_id + " has no label");
    by_subject[s.subject_id].push_back(&s);
  }

  std::vector<datasets::Scan> selected;
  std::size_t ordinal = 0;
  for (auto& [id, list] : by_subject) {
    std::stable_sort(list.begin(), list.end(),
                     [](const ScanEntry* a, const ScanEntry* b) { return a->timepoint_years < b->timepoint_years; });
    const std::size_t count = list.size();
    const std::size_t take =
        config.scans_per_subject == 0 ? count : std::min(count, static_cast<std::size_t>(config.scans_per_subject));
    for (std::size_t q = 0; q < take; ++q) {
      const auto* e = list[(ordinal + q) % count];
      datasets::Scan scan;
      scan.image = imaging::load_volume(e->image);
      scan.image.subject_id = e->subject_id;
      scan.image.timepoint_years = e->timepoint_years;
      scan.label = imaging::load_mask(e->label);
      selected.push_back(std::move(scan));
    }
    ++ordinal;
  }

  const auto set = datasets::build_dataset(selected, config.recipe);
  const auto split = datasets::split_dataset(set, config.split_ratios, config.seed);
  const auto& dir = config.paths.samples_dir;
  datasets::save_sample_set(split.train, dir / "train");
  datasets::save_sample_set(split.val, dir / "val");
  datasets::save_sample_set(split.test, dir / "test");

  const std::set<std::string> train_ids(split.subjects[0].begin(), split.subjects[0].end());
  std::vector<imaging::BinaryMask3D> train_labels;
  for (const auto& s : selected) {
    if (train_ids.count(s.image.subject_id)) train_labels.push_back(s.label);
  }
  const auto roi = postprocess::derive_roi(train_labels, config.postprocess.roi_margin_voxels);
  io::write_text_atomic(dir / "roi.json", postprocess::to_json(roi).dump(2));
  io::write_text_atomic(dir / "split.json", json{{"train", split.subjects[0]},
                                                 {"val", split.subjects[1]},
                                                 {"test", split.subjects[2]},
                                                 {"recipe", datasets::to_json(config.recipe)},
                                                 {"seed", config.seed}}
                                                .dump(2));
  log("samples: " + std::to_string(split.train.size()) + " train / " + std::to_string(split.val.size()) + " val / " +
      std::to_string(split.test.size()) + " test in " + dir.string());
}

void cmd_train(const RunConfig& config) {
  config.validate();
  const auto& dir = config.paths.samples_dir;
  const auto train_set = datasets::load_sample_set(dir / "train");
  const auto val_set = datasets::load_sample_set(dir / "val");
  const auto test_set = datasets::load_sample_set(dir / "test");
  if (!(train_set.recipe == config.recipe)) {
    throw std::invalid_argument("samples in " + dir.string() + " were built with a different dataset recipe");
  }
  auto model = models::build_model(config.model, config.seed);
  training::TrainConfig tc = config.train;
  tc.loss = config.loss;
  const auto& out = config.paths.artifacts_dir;
  fs::create_directories(out);
  io::write_text_atomic(out / "config.json", to_json(config).dump(2));
  if (fs::exists(dir / "roi.json")) io::write_text_atomic(out / "roi.json", io::read_text(dir / "roi.json"));
  log("training " + std::string(models::variant_name(config.model.variant)) + " (" +
      std::to_string(model.parameter_count()) + " parameters) on " + std::to_string(train_set.size()) + " samples");
  const json meta{{"recipe", datasets::to_json(config.recipe)}, {"seed", config.seed}};
  const auto result = training::train(
      model, train_set, val_set, tc, out, &test_set,
      [](const training::EpochReport& e) {
        char line[160];
        std::snprintf(line, sizeof(line), "epoch %d train_loss %.5f val_loss %.5f val_dice %.4f (%.1f s)", e.epoch,
                      e.train_loss, e.val_loss, e.val_dice, e.wall_seconds);
        log(line);
      },
      meta);
  io::write_text_atomic(out / "summary.json", json{{"best_epoch", result.best_epoch},
                                                   {"best_val_loss", result.best_val_loss},
                                                   {"epochs_run", result.history.size()},
                                                   {"stopped_early", result.stopped_early}}
                                                  .dump(2));
  log("best epoch " + std::to_string(result.best_epoch) + " val_loss " + num(result.best_val_loss));
}

void cmd_predict(const RunConfig& config, const PredictOptions& options) {
  config.validate();
  const auto ckpt = options.checkpoint.value_or(config.paths.artifacts_dir / "best.ckpt");
  json meta;
  const auto model = models::load_checkpoint(ckpt, &meta);
  const auto recipe = meta.contains("recipe") ? datasets::recipe_from_json(meta.at("recipe")) : config.recipe;
  std::optional<postprocess::RoiBox> roi;
  const auto roi_path = options.roi.value_or(config.paths.artifacts_dir / "roi.json");
  if (options.roi || fs::exists(roi_path)) roi = postprocess::roi_from_json(read_json(roi_path));

  auto run = [&](const imaging::VoxelGrid& scan) {
    return training::segment_volume(model, scan, recipe, config.postprocess, roi, config.predict_batch_size);
  };

  if (options.scan) {
    if (!options.out) throw std::invalid_argument("--scan needs --out");
    const auto scan = imaging::load_volume(*options.scan);
    imaging::save_volume(run(scan), *options.out);
    log("wrote " + options.out->string());
    return;
  }

  if (options.subjects != "test" && options.subjects != "all") {
    throw std::invalid_argument("--subjects must be test or all");
  }
  auto scans = read_cohort_manifest(config.paths.data_dir / "manifest.json");
  if (options.subjects == "test") {
    const auto split = read_json(config.paths.samples_dir / "split.json");
    const auto ids = split.at("test").get<std::vector<std::string>>();
    const std::set<std::string> keep(ids.begin(), ids.end());
    std::erase_if(scans, [&](const ScanEntry& s) { return !keep.count(s.subject_id); });
  }
  const auto& out = config.paths.predictions_dir;
  json manifest{{"format", "hippo-predictions"}, {"version", 1}, {"checkpoint", fs::absolute(ckpt).string()}};
  auto& masks = manifest["masks"] = json::array();
  for (const auto& s : scans) {
    auto scan = imaging::load_volume(s.image);
    const auto name = s.image.filename().string();
    imaging::save_volume(run(scan), out / name);
    json entry{{"subject_id", s.subject_id},
               {"timepoint_years", s.timepoint_years},
               {"status", s.status},
               {"mask", name},
               {"image", fs::absolute(s.image).string()}};
    if (!s.label.empty()) entry["label"] = fs::absolute(s.label).string();
    masks.push_back(entry);
    log("predicted " + name);
  }
  io::write_text_atomic(out / "manifest.json", manifest.dump(2));
}

VolumeMetrics evaluate_pair(const imaging::BinaryMask3D& pred, const imaging::BinaryMask3D& label, imaging::Axis axis) {
  if (pred.data.shape() != label.data.shape()) throw std::invalid_argument("prediction and label shapes differ");
  VolumeMetrics m;
  m.dice_volume = metrics::dice_score(pred.data.values(), label.data.values());
  m.iou_volume = metrics::iou_score(pred.data.values(), label.data.values());
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t s = 0; s < pred.data.extent(axis); ++s) {
    const auto a = imaging::extract_slice(pred, axis, static_cast<long>(s));
    const auto b = imaging::extract_slice(label, axis, static_cast<long>(s));
    const bool any = std::any_of(a.data.begin(), a.data.end(), [](auto v) { return v != 0; }) ||
                     std::any_of(b.data.begin(), b.data.end(), [](auto v) { return v != 0; });
    if (!any) continue;
    sum += metrics::dice_score(a.data, b.data);
    ++n;
  }
  m.dice_slice_mean = n ? sum / static_cast<double>(n) : 1.0;
  m.continuity_pred = postprocess::continuity_metric(pred, axis);
  m.continuity_label = postprocess::continuity_metric(label, axis);
  return m;
}

void cmd_evaluate(const RunConfig& config, const EvaluateOptions& options) {
  struct Pair {
    std::string subject;
    double timepoint;
    fs::path pred;
    fs::path label;
  };
  std::vector<Pair> pairs;
  if (options.pred || options.label) {
    if (!options.pred || !options.label) throw std::invalid_argument("--pred and --label must be given together");
    auto stem = options.pred->filename().string();
    for (const char* ext : {".nii.gz", ".nii"}) {
      if (stem.size() > std::strlen(ext) && stem.ends_with(ext)) {
        stem.resize(stem.size() - std::strlen(ext));
        break;
      }
    }
    pairs.push_back({stem, 0.0, *options.pred, *options.label});
  } else {
    const auto manifest_path = options.predictions.value_or(config.paths.predictions_dir / "manifest.json");
    const auto doc = read_json(manifest_path);
    for (const auto& e : doc.at("masks")) {
      if (!e.contains("label")) {
        throw std::invalid_argument("prediction of " + e.at("subject_id").get<std::string>() + " has no label path");
      }
      pairs.push_back({e.at("subject_id").get<std::string>(), e.at("timepoint_years").get<double>(),
                       resolve(manifest_path.parent_path(), e.at("mask").get<std::string>()),
                       resolve(manifest_path.parent_path(), e.at("label").get<std::string>())});
    }
  }
  std::string metrics_csv = "subject,timepoint,dice_volume,dice_slice_mean,iou_volume\n";
  std::string continuity_csv = "subject,timepoint,continuity_pred,continuity_label\n";
  double dice_sum = 0.0;
  for (const auto& p : pairs) {
    const auto m = evaluate_pair(imaging::load_mask(p.pred), imaging::load_mask(p.label), config.recipe.axis);
    metrics_csv += p.subject + "," + num(p.timepoint) + "," + num(m.dice_volume) + "," + num(m.dice_slice_mean) + "," +
                   num(m.iou_volume) + "\n";
    continuity_csv += p.subject + "," + num(p.timepoint) + "," + num(m.continuity_pred) + "," +
                      num(m.continuity_label) + "\n";
    dice_sum += m.dice_volume;
  }
  io::write_text_atomic(config.paths.eval_dir / "metrics.csv", metrics_csv);
  io::write_text_atomic(config.paths.eval_dir / "continuity.csv", continuity_csv);
  log("evaluated " + std::to_string(pairs.size()) + " volumes, mean Dice " +
      num(pairs.empty() ? 0.0 : dice_sum / static_cast<double>(pairs.size())));
}

void cmd_analyze(const RunConfig& config, const AnalyzeOptions& options) {
  fs::path manifest;
  if (options.manifest) manifest = *options.manifest;
  else if (options.source == longitudinal::Source::ground_truth) manifest = config.paths.data_dir / "manifest.json";
  else manifest = config.paths.predictions_dir / "manifest.json";
  const auto entries = longitudinal::load_mask_manifest(manifest);
  const auto result = longitudinal::analyze(entries, options.source);
  longitudinal::write_outputs(result, config.paths.analysis_dir);
  log("analyzed " + std::to_string(result.timelines.size()) + " subjects into " + config.paths.analysis_dir.string());
}

}  // namespace hippo::cli
