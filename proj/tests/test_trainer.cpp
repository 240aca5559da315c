#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "mbr/core/parallel.hpp"
#include "mbr/data/synth.hpp"
#include "mbr/train/trainer.hpp"

using namespace mbr;
using namespace mbr::train;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

data::DatasetTriplet tiny_data(const std::string& root, Index ids = 4, Index per_id = 2,
                               Index size = 32) {
  data::SynthConfig cfg;
  cfg.n_ids = ids;
  cfg.n_cams = 2;
  cfg.n_views = 1;
  cfg.imgs_per_id = per_id;
  cfg.size = size;
  cfg.seed = 21;
  return data::synth_dataset(root, cfg);
}

model::ArchitectureSpec tiny_model_spec(const std::string& preset, Index classes) {
  model::ArchitectureSpec spec = model::make_preset(preset);
  spec.input_size = 32;
  spec.n_classes = classes;
  return spec;
}

TrainPlan tiny_plan(Index epochs, bool freeze = false) {
  TrainPlan plan;
  plan.epochs = epochs;
  plan.base_lr = 1e-4;
  plan.warmup_epochs = 0;
  plan.decay_epochs = {};
  plan.freeze.enabled = freeze;
  plan.freeze.epochs = 1;
  plan.checkpoint_every = 0;
  return plan;
}

std::vector<VecX<float>> copy_params(nn::ParamRefs<float> refs, const std::string& prefix) {
  std::vector<VecX<float>> out;
  for (auto& r : refs)
    if (r.name.rfind(prefix, 0) == 0) out.push_back(r.param->value);
  return out;
}

}  // namespace

TEST_CASE("learning-rate schedule reproduces the recipe values") {
  TrainPlan plan;  // defaults: 120 epochs, 1e-4, warmup 10, steps 40/70/100
  CHECK(lr_at(0, plan) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lr_at(9, plan) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(10, plan) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(39, plan) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(40, plan) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lr_at(69, plan) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lr_at(70, plan) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(lr_at(100, plan) == doctest::Approx(1e-7).epsilon(1e-12));
  CHECK(lr_at(119, plan) == doctest::Approx(1e-7).epsilon(1e-12));

  TrainPlan flat = plan;
  flat.decay_epochs = {};
  for (Index e = 10; e < 120; ++e) CHECK(lr_at(e, flat) == plan.base_lr);

  // piecewise monotone: non-decreasing through warm-up, non-increasing after
  for (Index e = 1; e < plan.warmup_epochs; ++e) CHECK(lr_at(e, plan) >= lr_at(e - 1, plan));
  for (Index e = plan.warmup_epochs + 1; e < plan.epochs; ++e)
    CHECK(lr_at(e, plan) <= lr_at(e - 1, plan));
}

TEST_CASE("plan validation") {
  TrainPlan plan;
  plan.decay_epochs = {40, 40};
  CHECK_THROWS_AS(plan.validate(false), ValidationError);
  plan.decay_epochs = {40, 30};
  CHECK_THROWS_AS(plan.validate(false), ValidationError);
  plan.decay_epochs = {40, 200};
  CHECK_THROWS_AS(plan.validate(false), ValidationError);

  // the freeze phase is tied to randomly initialized attention blocks
  TrainPlan ok;
  CHECK_THROWS_AS(ok.validate(true), ValidationError);  // attention without freeze
  ok.freeze.enabled = true;
  CHECK_NOTHROW(ok.validate(true));
  CHECK_THROWS_AS(ok.validate(false), ValidationError);  // freeze without attention
}

TEST_CASE("adam skips frozen and non-trainable parameters") {
  nn::Param<float> a, b, c;
  a.init(3);
  b.init(3);
  c.init(3);
  b.trainable = false;
  nn::ParamRefs<float> refs = {{"a", &a}, {"b", &b}, {"c", &c}};
  Adam<float> adam(refs);
  a.grad.setConstant(1.0f);
  b.grad.setConstant(1.0f);
  c.grad.setConstant(1.0f);
  c.frozen = true;
  adam.step(0.1);
  CHECK(a.value[0] != 0.0f);
  CHECK(b.value[0] == 0.0f);
  CHECK(c.value[0] == 0.0f);
  c.frozen = false;
  adam.step(0.1);
  CHECK(c.value[0] != 0.0f);
}

TEST_CASE("frozen trunk stays byte-identical through the freeze phase") {
  set_num_threads(2);
  TempDir data_dir("mbr_trainer_freeze_data"), run_dir("mbr_trainer_freeze_run");
  auto t = tiny_data(data_dir.path.string());

  // attention preset so the two-phase schedule applies
  model::ArchitectureSpec spec = tiny_model_spec("MBR-4B", int(t.train.n_classes()));
  spec.branches.resize(0);
  // shrink to a single attention pair to keep the test quick
  auto full = model::make_preset("MBR-4B");
  spec.branches = {full.branches[2], full.branches[3]};  // one BoT cls + one BoT metric
  model::MbrModel<float> m(spec, Rng(31));

  data::PKBatchSpec pk;
  pk.p = 2;
  pk.k = 2;
  TrainPlan plan = tiny_plan(1, /*freeze=*/true);
  Trainer<float> trainer(m, t.train, pk, plan, loss::Weights<float>(), run_dir.path.string(), 5);
  trainer.augment_config() = data::AugmentConfig::disabled(32);

  auto trunk_before = copy_params(m.params(), "backbone");
  bool trunk_checked = false;
  auto result = trainer.run([&](const IterationLog& log) {
    if (log.epoch == -1 && !trunk_checked) {
      // after the last freeze-phase step the trunk must be untouched
      auto now = copy_params(m.params(), "backbone");
      REQUIRE(now.size() == trunk_before.size());
      for (size_t i = 0; i < now.size(); ++i)
        CHECK(std::memcmp(now[i].data(), trunk_before[i].data(),
                          sizeof(float) * size_t(now[i].size())) == 0);
      trunk_checked = true;
    }
  });
  CHECK(trunk_checked);

  // and the main phase does update it
  auto trunk_after = copy_params(m.params(), "backbone");
  bool changed = false;
  for (size_t i = 0; i < trunk_after.size(); ++i)
    if (trunk_after[i] != trunk_before[i]) changed = true;
  CHECK(changed);
  CHECK(result.epochs_run == 1);
  CHECK(fs::exists(result.final_checkpoint));

  // freeze-phase epochs are negative in the log and do not consume the plan
  bool saw_freeze = false, saw_main = false;
  for (const auto& l : result.log) {
    if (l.epoch < 0) saw_freeze = true;
    if (l.epoch == 0) saw_main = true;
  }
  CHECK(saw_freeze);
  CHECK(saw_main);
}

TEST_CASE("training is deterministic under a fixed seed") {
  TempDir data_dir("mbr_trainer_det_data");
  auto t = tiny_data(data_dir.path.string(), 3, 2);
  data::PKBatchSpec pk;
  pk.p = 2;
  pk.k = 2;

  auto run_once = [&](const std::string& run_name) {
    TempDir run(run_name);
    model::MbrModel<float> m(tiny_model_spec("R50", int(t.train.n_classes())), Rng(7));
    Trainer<float> trainer(m, t.train, pk, tiny_plan(1), loss::Weights<float>(),
                           run.path.string(), 42);
    return trainer.run();
  };
  auto r1 = run_once("mbr_trainer_det_run1");
  auto r2 = run_once("mbr_trainer_det_run2");
  REQUIRE(r1.log.size() == r2.log.size());
  REQUIRE(!r1.log.empty());
  for (size_t i = 0; i < r1.log.size(); ++i)
    CHECK(r1.log[i].loss_total == r2.log[i].loss_total);
}

TEST_CASE("checkpoint resume reproduces the uninterrupted run") {
  TempDir data_dir("mbr_trainer_resume_data");
  auto t = tiny_data(data_dir.path.string(), 3, 2);
  data::PKBatchSpec pk;
  pk.p = 2;
  pk.k = 2;

  // straight 2-epoch run
  TempDir run_a("mbr_trainer_resume_a");
  model::MbrModel<float> ma(tiny_model_spec("R50", int(t.train.n_classes())), Rng(7));
  TrainPlan plan2 = tiny_plan(2);
  Trainer<float> ta(ma, t.train, pk, plan2, loss::Weights<float>(), run_a.path.string(), 11);
  auto res_a = ta.run();

  // interrupted: 2-epoch plan checkpointed after epoch 0, then resumed
  TempDir run_b("mbr_trainer_resume_b");
  model::MbrModel<float> mb(tiny_model_spec("R50", int(t.train.n_classes())), Rng(7));
  TrainPlan plan_ckpt = plan2;
  plan_ckpt.checkpoint_every = 1;
  Trainer<float> tb(mb, t.train, pk, plan_ckpt, loss::Weights<float>(), run_b.path.string(), 11);
  auto res_b = tb.run();
  const std::string mid = (run_b.path / "checkpoint_epoch0.ckpt").string();
  REQUIRE(fs::exists(mid));

  TempDir run_c("mbr_trainer_resume_c");
  model::MbrModel<float> mc(tiny_model_spec("R50", int(t.train.n_classes())), Rng(99));
  Trainer<float> tc(mc, t.train, pk, plan2, loss::Weights<float>(), run_c.path.string(), 11);
  tc.resume(mid);
  auto res_c = tc.run();

  // epoch-1 losses equal between the straight run and the resumed run
  std::vector<double> straight, resumed;
  for (const auto& l : res_a.log)
    if (l.epoch == 1) straight.push_back(l.loss_total);
  for (const auto& l : res_c.log)
    if (l.epoch == 1) resumed.push_back(l.loss_total);
  REQUIRE(straight.size() == resumed.size());
  REQUIRE(!straight.empty());
  for (size_t i = 0; i < straight.size(); ++i) CHECK(straight[i] == resumed[i]);
}

TEST_CASE("non-finite loss aborts with a diagnostic snapshot") {
  TempDir data_dir("mbr_trainer_nan_data"), run_dir("mbr_trainer_nan_run");
  auto t = tiny_data(data_dir.path.string(), 3, 2);
  model::MbrModel<float> m(tiny_model_spec("R50", int(t.train.n_classes())), Rng(7));
  for (auto& p : m.params())
    if (p.name == "head0.fc.w") p.param->value.setConstant(1e38f);
  data::PKBatchSpec pk;
  pk.p = 2;
  pk.k = 2;
  Trainer<float> trainer(m, t.train, pk, tiny_plan(1), loss::Weights<float>(),
                         run_dir.path.string(), 3);
  try {
    trainer.run();
    CHECK(false);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    CHECK(std::string(e.what()).find("snapshot") != std::string::npos);
  }
}

TEST_CASE("trainer rejects a class-count mismatch") {
  TempDir data_dir("mbr_trainer_cls_data"), run_dir("mbr_trainer_cls_run");
  auto t = tiny_data(data_dir.path.string(), 4, 2);
  model::MbrModel<float> m(tiny_model_spec("R50", 3), Rng(7));  // dataset has 4 classes
  data::PKBatchSpec pk;
  pk.p = 2;
  pk.k = 2;
  CHECK_THROWS_AS(Trainer<float>(m, t.train, pk, tiny_plan(1), loss::Weights<float>(),
                                 run_dir.path.string(), 3),
                  Error);
}

TEST_CASE("metrics log is valid jsonl with the documented fields") {
  TempDir data_dir("mbr_trainer_log_data"), run_dir("mbr_trainer_log_run");
  auto t = tiny_data(data_dir.path.string(), 3, 2);
  model::MbrModel<float> m(tiny_model_spec("MBR_R50-2G", int(t.train.n_classes())), Rng(7));
  data::PKBatchSpec pk;
  pk.p = 2;
  pk.k = 2;
  Trainer<float> trainer(m, t.train, pk, tiny_plan(1), loss::Weights<float>(),
                         run_dir.path.string(), 3);
  trainer.run();
  std::ifstream is(run_dir.path / "metrics.jsonl");
  REQUIRE(is.good());
  std::string line;
  Index lines = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("epoch"));
    CHECK(j.contains("iter"));
    CHECK(j.contains("lr"));
    CHECK(j.contains("loss_total"));
    CHECK(j.at("loss_by_branch").size() == 2);
    CHECK(j.at("loss_by_branch")[0].at("role") == "cls");
    CHECK(j.at("loss_by_branch")[1].at("role") == "metric");
    ++lines;
  }
  CHECK(lines > 0);
}
