#include "doctest.h"
#include "helpers.hpp"
#include "hippo/cli.hpp"
#include "hippo/io_util.hpp"

using namespace hippo;
using namespace hippo::cli;

namespace {

std::vector<std::string> small_run(const test::TempDir& dir) {
  const auto p = [&](const char* sub) { return "\"" + (dir / sub).string() + "\""; };
  return {"seed=5",
          "phantom.n_subjects=3",
          "phantom.n_timepoints=2",
          "dataset.slices_per_scan=4",
          "dataset.scans_per_subject=0",
          "model.variant=unet",
          "model.depth=3",
          "model.base_channels=4",
          "model.deep_supervision=false",
          "train.max_epochs=1",
          "train.patience=1",
          "train.batch_size=4",
          "paths.data_dir=" + p("data"),
          "paths.samples_dir=" + p("samples"),
          "paths.artifacts_dir=" + p("train"),
          "paths.predictions_dir=" + p("pred"),
          "paths.eval_dir=" + p("eval"),
          "paths.analysis_dir=" + p("analysis")};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = text.find('\n', start);
    out.push_back(text.substr(start, end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

}  // namespace

TEST_CASE("config defaults round trip through json") {
  auto doc = default_config_json();
  auto cfg = run_config_from_json(doc);
  CHECK(cfg.model.variant == models::Variant::nested_unet);
  CHECK(cfg.recipe.size_mode == datasets::SizeMode::crop96);
  CHECK(to_json(cfg) == doc);
  CHECK(keys_help().find("train.learning_rate") != std::string::npos);
  CHECK(list_keys().size() > 40);
}

TEST_CASE("overrides") {
  auto doc = default_config_json();
  apply_override(doc, "train.learning_rate=0.01");
  apply_override(doc, "model.variant=attention_unet");
  apply_override(doc, "model.deep_supervision=false");
  apply_override(doc, "phantom.spacing=[1.0,1.0,1.5]");
  auto cfg = run_config_from_json(doc);
  CHECK(cfg.train.learning_rate == 0.01);
  CHECK(cfg.model.variant == models::Variant::attention_unet);
  CHECK(cfg.cohort.base.spacing[2] == 1.5);

  CHECK_THROWS(apply_override(doc, "train.nope=1"));
  CHECK_THROWS(apply_override(doc, "train.max_epochs=\"many\""));
  CHECK_THROWS(apply_override(doc, "train.max_epochs"));
  CHECK_THROWS(apply_override(doc, "model.depth=2.5"));
  auto bad = default_config_json();
  apply_override(bad, "model.variant=resnet");
  CHECK_THROWS(run_config_from_json(bad));
  bad = default_config_json();
  bad["extra"] = 1;
  CHECK_THROWS(run_config_from_json(bad));
  bad = default_config_json();
  apply_override(bad, "dataset.variant=center_crop");
  apply_override(bad, "dataset.size_mode=pad256");
  CHECK_THROWS(run_config_from_json(bad));
}

TEST_CASE("config file then overrides") {
  test::TempDir dir("cfg");
  io::write_text_atomic(dir / "c.json", R"({"train": {"max_epochs": 7, "patience": 3, "batch_size": 2}})");
  auto cfg = load_run_config(dir / "c.json", {"train.batch_size=3"});
  CHECK(cfg.train.max_epochs == 7);
  CHECK(cfg.train.batch_size == 3);
  io::write_text_atomic(dir / "bad.json", "{not json");
  CHECK_THROWS(load_run_config(dir / "bad.json", {}));
  CHECK_THROWS(load_run_config(dir / "missing.json", {}));
}

TEST_CASE("evaluate a mask against itself") {
  test::TempDir dir("eval");
  auto mask = test::random_mask({8, 9, 10}, 3, 0.3);
  imaging::save_volume(mask, dir / "m.nii.gz");
  RunConfig cfg;
  cfg.paths.eval_dir = dir / "out";
  EvaluateOptions opt;
  opt.pred = dir / "m.nii.gz";
  opt.label = dir / "m.nii.gz";
  cmd_evaluate(cfg, opt);
  const auto rows = lines(io::read_text(dir / "out" / "metrics.csv"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[1] == "m,0,1,1,1");
  CHECK(std::filesystem::exists(dir / "out" / "continuity.csv"));
  opt.label.reset();
  CHECK_THROWS(cmd_evaluate(cfg, opt));

  auto empty = mask;
  std::fill(empty.data.values().begin(), empty.data.values().end(), 0);
  auto m = evaluate_pair(empty, mask, imaging::Axis::sagittal);
  CHECK(m.dice_volume == 0.0);
  CHECK(m.iou_volume == 0.0);
}

TEST_CASE("analyze a collinear pair") {
  test::TempDir dir("an");
  nlohmann::json manifest{{"masks", nlohmann::json::array()}};
  for (int t = 0; t < 2; ++t) {
    imaging::BinaryMask3D m;
    m.data = imaging::Volume<std::uint8_t>({6, 6, 6});
    for (int i = 0; i < 50 - 20 * t; ++i) m.data.values()[i] = 1;
    imaging::save_volume(m, dir / ("t" + std::to_string(t) + ".nii.gz"));
    manifest["masks"].push_back(
        {{"subject_id", "x"}, {"timepoint_years", t}, {"status", "MCI"}, {"mask", "t" + std::to_string(t) + ".nii.gz"}});
  }
  io::write_text_atomic(dir / "manifest.json", manifest.dump());
  RunConfig cfg;
  cfg.paths.analysis_dir = dir / "out";
  cmd_analyze(cfg, {dir / "manifest.json", longitudinal::Source::ground_truth});
  const auto rows = lines(io::read_text(dir / "out" / "timelines.csv"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].rfind("x,MCI,2,-20,", 0) == 0);
  CHECK(rows[1].find(",0,-40") != std::string::npos);
}

TEST_CASE("small pipeline through the command functions") {
  test::TempDir dir("pipe");
  auto cfg = load_run_config(std::nullopt, small_run(dir));
  cmd_phantom(cfg);
  CHECK(std::filesystem::exists(dir / "data" / "manifest.json"));
  cmd_build_data(cfg);
  cmd_train(cfg);
  for (const char* f : {"best.ckpt", "roi.json", "history.csv", "config.json", "summary.json"}) {
    CHECK_MESSAGE(std::filesystem::exists(dir / "train" / f), f);
  }
  cmd_predict(cfg, {});
  const auto pred = nlohmann::json::parse(io::read_text(dir / "pred" / "manifest.json"));
  CHECK(pred["masks"].size() == 2);  // one test subject, both timepoints
  cmd_evaluate(cfg, {});
  CHECK(lines(io::read_text(dir / "eval" / "metrics.csv")).size() == 3);
  cmd_analyze(cfg, {});
  CHECK(std::filesystem::exists(dir / "analysis" / "timelines.csv"));
  cmd_analyze(cfg, {std::nullopt, longitudinal::Source::ground_truth});
  CHECK(lines(io::read_text(dir / "analysis" / "timelines.csv")).size() == 4);

  PredictOptions single;
  single.scan = pred["masks"][0]["image"].get<std::string>();
  single.out = dir / "one.nii.gz";
  cmd_predict(cfg, single);
  CHECK(imaging::load_mask(dir / "one.nii.gz").data ==
        imaging::load_mask(dir / "pred" / pred["masks"][0]["mask"].get<std::string>()).data);
  PredictOptions missing;
  missing.checkpoint = dir / "nope.ckpt";
  CHECK_THROWS_AS(cmd_predict(cfg, missing), io::InputError);
}
