#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "hippo/io_util.hpp"
#include "hippo/synthetic.hpp"
#include "hippo/training.hpp"

using namespace hippo;
using namespace hippo::training;
using datasets::SampleSet;
using datasets::SliceSample;

namespace {

// Bright disc on noise; the label is the disc.
SampleSet disc_set(std::size_t n, std::size_t side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SampleSet set;
  for (std::size_t s = 0; s < n; ++s) {
    SliceSample smp;
    smp.image = imaging::Image2D<float>(3, side, side);
    smp.label = imaging::Image2D<std::uint8_t>(1, side, side);
    const double cr = side * (0.3 + 0.4 * u(rng)), cc = side * (0.3 + 0.4 * u(rng));
    const double rad = side * (0.12 + 0.1 * u(rng));
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t c = 0; c < side; ++c) {
        const bool in = (r - cr) * (r - cr) + (c - cc) * (c - cc) <= rad * rad;
        smp.label.at(0, r, c) = in;
        for (std::size_t ch = 0; ch < 3; ++ch)
          smp.image.at(ch, r, c) = static_cast<float>((in ? 0.7 : 0.2) + 0.1 * u(rng));
      }
    smp.subject_id = "s" + std::to_string(s);
    smp.slice_index = static_cast<int>(s);
    set.samples.push_back(std::move(smp));
  }
  return set;
}

models::Model small_model(bool batchnorm = true, std::uint64_t seed = 1) {
  models::ModelConfig c;
  c.variant = models::Variant::unet;
  c.depth = 3;
  c.base_channels = 4;
  c.use_batchnorm = batchnorm;
  return models::build_model(c, seed);
}

TrainConfig quick(int epochs) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.patience = epochs;
  t.batch_size = 4;
  t.learning_rate = 1e-2;
  t.seed = 3;
  return t;
}

}  // namespace

TEST_CASE("early stopping on a flat validation loss") {
  auto model = small_model(false);
  auto tr = disc_set(4, 16, 1), va = disc_set(2, 16, 2);
  auto cfg = quick(10);
  cfg.patience = 1;
  cfg.learning_rate = 1e-30;
  auto res = train(model, tr, va, cfg, {});
  CHECK(res.history.size() == 2);
  CHECK(res.stopped_early);
  CHECK(res.best_epoch == 1);
  CHECK(res.history[0].val_loss == res.history[1].val_loss);
}

TEST_CASE("seeded training is reproducible") {
  auto tr = disc_set(8, 16, 1), va = disc_set(2, 16, 2);
  auto cfg = quick(3);
  auto m1 = small_model();
  auto m2 = small_model();
  auto a = train(m1, tr, va, cfg, {});
  auto b = train(m2, tr, va, cfg, {});
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
  }
  CHECK(m1.state() == m2.state());
  CHECK(a.best.state() == b.best.state());
}

TEST_CASE("training loss decreases") {
  auto tr = disc_set(8, 16, 4), va = disc_set(2, 16, 5);
  auto model = small_model();
  auto res = train(model, tr, va, quick(5), {});
  REQUIRE(res.history.size() == 5);
  CHECK(res.history.back().train_loss < res.history.front().train_loss);
  for (const auto& h : res.history) CHECK(std::isfinite(h.val_dice));
}

TEST_CASE("validate is pure and matches a per-sample loop") {
  auto model = small_model(true, 7);
  auto set = disc_set(5, 16, 9);
  const auto before = model.state();
  metrics::LossConfig loss;
  auto v = validate(model, set, loss, 2);
  CHECK(model.state() == before);
  double l = 0.0, d = 0.0;
  for (const auto& s : set.samples) {
    nn::Tensor<float> x({1, 3, 16, 16});
    std::copy(s.image.data.begin(), s.image.data.end(), x.values().begin());
    const auto p = model.predict(x).back();
    std::vector<float> prob(p.values().begin(), p.values().end()), tgt(s.label.data.begin(), s.label.data.end());
    l += metrics::combined_loss<float>(prob, tgt, loss);
    std::vector<std::uint8_t> pred(prob.size());
    for (std::size_t i = 0; i < prob.size(); ++i) pred[i] = prob[i] > 0.5f;
    d += metrics::dice_score(pred, s.label.data);
  }
  CHECK(v.loss == doctest::Approx(l / 5).epsilon(1e-9));
  CHECK(v.dice == doctest::Approx(d / 5).epsilon(1e-12));
  CHECK(validate(model, set, loss, 5).loss == doctest::Approx(v.loss).epsilon(1e-12));
  CHECK_THROWS(validate(model, SampleSet{}, loss));
}

TEST_CASE("all-0.5 heads give a finite loss") {
  nn::Tensor<float> h({2, 1, 4, 4}, 0.5f), t({2, 1, 4, 4}, 0.0f);
  t(0, 0, 1, 1) = 1.0f;
  metrics::LossConfig loss;
  std::vector<nn::Tensor<float>> grads;
  const double v = heads_loss({h}, t, loss, &grads);
  CHECK(std::isfinite(v));
  REQUIRE(grads.size() == 1);
  for (float g : grads[0].values()) CHECK(std::isfinite(g));
  const double two = heads_loss({h, h}, t, loss);
  CHECK(two == doctest::Approx(v));
}

TEST_CASE("gradient flow") {
  auto model = small_model(true, 2);
  auto set = disc_set(2, 16, 3);
  const auto before = model.state();
  auto flow = gradient_flow(model, make_batch(set), {});
  CHECK(model.state() == before);
  CHECK(flow.size() == model.registry().layers().size());
  CHECK(flow.size() == model.parameter_breakdown().size());
  double total = 0.0;
  for (const auto& f : flow) {
    CHECK(f.mean_abs_grad >= 0.0);
    total += f.mean_abs_grad;
  }
  CHECK(total > 0.0);
}

TEST_CASE("optimizers move parameters against the gradient") {
  for (auto kind : {OptimizerKind::adam, OptimizerKind::sgd_momentum}) {
    auto p = nn::parameter(nn::Tensor<float>({1, 1, 1, 2}, 1.0f));
    p->grad = nn::Tensor<float>({1, 1, 1, 2}, 0.0f);
    p->grad[0] = 2.0f;
    p->grad[1] = -2.0f;
    Optimizer opt({p}, kind, 0.1);
    opt.step();
    CHECK(p->value[0] < 1.0f);
    CHECK(p->value[1] > 1.0f);
    CHECK(opt.steps() == 1);
  }
  // First Adam step has magnitude lr regardless of the gradient scale.
  auto p = nn::parameter(nn::Tensor<float>({1, 1, 1, 1}, 0.0f));
  p->grad = nn::Tensor<float>({1, 1, 1, 1}, 1e3f);
  Optimizer adam({p}, OptimizerKind::adam, 0.01);
  adam.step();
  CHECK(p->value[0] == doctest::Approx(-0.01).epsilon(1e-4));
  // SGD with momentum: v = g, then v = m v + g.
  auto q = nn::parameter(nn::Tensor<float>({1, 1, 1, 1}, 0.0f));
  q->grad = nn::Tensor<float>({1, 1, 1, 1}, 1.0f);
  Optimizer sgd({q}, OptimizerKind::sgd_momentum, 0.1, 0.5);
  sgd.step();
  sgd.step();
  CHECK(q->value[0] == doctest::Approx(-0.1 - 0.15));
}

TEST_CASE("artifact layout") {
  test::TempDir dir("train");
  auto tr = disc_set(4, 16, 1), va = disc_set(2, 16, 2);
  auto model = small_model();
  std::vector<int> seen;
  auto res = train(model, tr, va, quick(2), dir.path(), nullptr,
                   [&](const EpochReport& r) { seen.push_back(r.epoch); }, {{"tag", "x"}});
  CHECK(seen == std::vector<int>{1, 2});
  for (const char* f : {"history.csv", "best.ckpt", "checkpoints/epoch_1.ckpt", "checkpoints/epoch_2.ckpt",
                        "snapshots/epoch_1.png", "filters/epoch_2.png", "gradflow/epoch_2.csv"}) {
    CHECK_MESSAGE(std::filesystem::exists(dir / f), f);
  }
  const auto hist = io::read_text(dir / "history.csv");
  CHECK(hist.rfind("epoch,train_loss,val_loss,val_dice\n", 0) == 0);
  CHECK(std::count(hist.begin(), hist.end(), '\n') == 3);
  nlohmann::json meta;
  auto best = models::load_checkpoint(dir / "best.ckpt", &meta);
  CHECK(meta["tag"] == "x");
  CHECK(meta["epoch"] == res.best_epoch);
  CHECK(best.state() == res.best.state());

  auto bad = quick(2);
  bad.snapshot_sample_index = 5;
  CHECK_THROWS(train(model, tr, va, bad, {}));
  CHECK_THROWS(train(model, SampleSet{}, va, quick(2), {}));
}

TEST_CASE("filter grid and snapshot image") {
  auto model = small_model();
  auto g = filter_grid(model, 2);
  CHECK(g.width == 3 * (3 * 2) + 4);  // one-pixel separators around every cell
  CHECK(g.height == 4 * (3 * 2) + 5);
  CHECK(g.pixels.size() == g.width * g.height);
  auto set = disc_set(1, 16, 1);
  auto probs = model.predict(make_batch(set).images).back();
  auto s = snapshot_image(set.samples[0], probs);
  CHECK(s.height == 16);
  CHECK(s.width == 3 * 16 + 2);
}

TEST_CASE("predict_volume keeps the scan geometry") {
  synthetic::PhantomSpec spec;
  spec.n_timepoints = 2;
  auto scan = synthetic::generate_phantom_subject(spec)[0];
  datasets::DatasetRecipe recipe;
  recipe.slices_per_scan = 4;
  auto model = small_model();
  auto probs = predict_volume(model, scan.image, recipe, 8);
  CHECK(probs.shape() == scan.image.data.shape());
  for (float p : probs.values()) {
    CHECK(p >= 0.0f);
    CHECK(p <= 1.0f);
  }
  postprocess::PostprocessConfig pp;
  auto mask = segment_volume(model, scan.image, recipe, pp, std::nullopt);
  CHECK(mask.data.shape() == scan.image.data.shape());
  CHECK(mask.spacing == scan.image.spacing);
}

TEST_CASE("train config validation and json") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.patience = 0;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.learning_rate = -1;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.optimizer = OptimizerKind::sgd_momentum;
  c.batch_size = 3;
  auto back = train_config_from_json(to_json(c));
  CHECK(back.optimizer == OptimizerKind::sgd_momentum);
  CHECK(back.batch_size == 3);
  CHECK(parse_optimizer("adam") == OptimizerKind::adam);
  CHECK_THROWS(parse_optimizer("rmsprop"));
}
