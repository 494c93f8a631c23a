#include <doctest.h>

#include <cmath>
#include <limits>
#include <filesystem>
#include <fstream>

#include "retinn/common.hpp"
#include "retinn/trainer.hpp"
#include "testutil.hpp"

using namespace retinn;
using retinn::testing::small_synth_set;
using retinn::testing::tiny_subnet;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
  ModelConfig mc;
  mc.kind = ModelKind::retinervenet;
  mc.subnet = tiny_subnet();
  return mc;
}

TrainConfig quick_config(int epochs = 12) {
  TrainConfig cfg;
  cfg.max_epochs = epochs;
  cfg.patience = epochs;
  cfg.batch_size = 16;
  cfg.learning_rate = 3e-3;
  return cfg;
}

}  // namespace

TEST_CASE("training reduces the loss and restores the best epoch") {
  LocationTable table = LocationTable::builtin();
  auto data = small_synth_set(48, 7, table);
  std::vector<PairedExam> train_set(data.begin(), data.begin() + 32);
  std::vector<PairedExam> val_set(data.begin() + 32, data.end());

  ModelVariant model(tiny_model(), table, 1);
  TrainConfig cfg = quick_config(25);
  TrainHistory hist = train(model, train_set, val_set, cfg, 1);

  REQUIRE(!hist.epochs.empty());
  CHECK(hist.epochs.back().train_loss < hist.epochs.front().train_loss);

  // best epoch is the recorded minimum
  REQUIRE(hist.best_epoch >= 0);
  double best = hist.epochs[static_cast<std::size_t>(hist.best_epoch)].val_loss;
  CHECK(best == hist.best_val_loss);
  for (const EpochRecord& r : hist.epochs) CHECK(best <= r.val_loss);

  // restored parameters reproduce the recorded best validation loss
  double recomputed = validation_loss(model, val_set);
  CHECK(std::abs(recomputed - hist.best_val_loss) <= 1e-9);

  // hyperparameters and normalization land in the model
  CHECK(model.hyper().gamma == cfg.gamma);
  CHECK(model.normalization().mean.size() == static_cast<std::size_t>(kRnflPoints));
  CHECK(model.validation_metrics().mae[Group::early].has_value());
}

TEST_CASE("patience zero stops at the first non-improving epoch") {
  LocationTable table = LocationTable::builtin();
  // validation drawn from a different generator seed, so the overfitting
  // model stops improving on it quickly
  auto train_set = small_synth_set(12, 3, table);
  auto val_set = small_synth_set(8, 900, table);

  ModelVariant model(tiny_model(), table, 2);
  TrainConfig cfg = quick_config(400);
  cfg.patience = 0;
  cfg.learning_rate = 1e-2;
  TrainHistory hist = train(model, train_set, val_set, cfg, 1);
  REQUIRE(hist.stop_reason == "early_stopping");
  // every epoch but the last strictly improved the running best
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e + 1 < hist.epochs.size(); ++e) {
    CHECK(hist.epochs[e].val_loss < best);
    best = std::min(best, hist.epochs[e].val_loss);
  }
  CHECK(hist.epochs.back().val_loss >= best);
  CHECK(hist.best_epoch == static_cast<int>(hist.epochs.size()) - 2);
}

TEST_CASE("training is deterministic given the run seed") {
  LocationTable table = LocationTable::builtin();
  auto data = small_synth_set(30, 11, table);
  std::vector<PairedExam> train_set(data.begin(), data.begin() + 20);
  std::vector<PairedExam> val_set(data.begin() + 20, data.end());

  auto run = [&]() {
    ModelVariant model(tiny_model(), table, 5);
    TrainHistory h = train(model, train_set, val_set, quick_config(6), 77);
    return std::make_pair(model.params().data(), h);
  };
  auto [pa, ha] = run();
  auto [pb, hb] = run();
  CHECK(pa == pb);  // bit-identical parameters
  REQUIRE(ha.epochs.size() == hb.epochs.size());
  for (std::size_t e = 0; e < ha.epochs.size(); ++e) {
    CHECK(ha.epochs[e].train_loss == hb.epochs[e].train_loss);
    CHECK(ha.epochs[e].val_loss == hb.epochs[e].val_loss);
  }

  ModelVariant model(tiny_model(), table, 5);
  TrainHistory hc = train(model, train_set, val_set, quick_config(6), 78);
  CHECK(hc.epochs[0].train_loss != ha.epochs[0].train_loss);
}

TEST_CASE("training rejects bad configurations and empty sets") {
  LocationTable table = LocationTable::builtin();
  auto data = small_synth_set(10, 1, table);
  ModelVariant model(tiny_model(), table, 1);
  TrainConfig cfg = quick_config();
  cfg.max_epochs = 0;
  CHECK_THROWS_AS(train(model, data, data, cfg, 1), ConfigError);
  cfg = quick_config();
  CHECK_THROWS_AS(train(model, {}, data, cfg, 1), ConfigError);
  CHECK_THROWS_AS(train(model, data, {}, cfg, 1), ConfigError);
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(train(model, data, data, cfg, 1), ConfigError);
}

TEST_CASE("select_best_run picks the minimum and breaks ties by seed") {
  LocationTable table = LocationTable::builtin();
  auto mk = [&](double loss, std::uint64_t seed) {
    TrainRun run{ModelVariant(tiny_model(), table, seed), {}};
    run.history.best_val_loss = loss;
    run.history.seed = seed;
    return run;
  };
  SUBCASE("distinct losses") {
    std::vector<TrainRun> runs;
    runs.push_back(mk(2.0, 1));
    runs.push_back(mk(1.0, 2));
    runs.push_back(mk(3.0, 3));
    CHECK(select_best_run(runs) == 1);
  }
  SUBCASE("ties go to the lowest seed") {
    std::vector<TrainRun> runs;
    runs.push_back(mk(1.0, 4));
    runs.push_back(mk(1.0, 2));
    runs.push_back(mk(1.0, 9));
    CHECK(select_best_run(runs) == 1);
  }
  SUBCASE("permuting the input order keeps the winner") {
    std::vector<TrainRun> runs;
    runs.push_back(mk(5.0, 3));
    runs.push_back(mk(4.0, 1));
    runs.push_back(mk(4.0, 2));
    std::size_t winner_seed = runs[select_best_run(runs)].history.seed;
    std::vector<TrainRun> permuted;
    permuted.push_back(mk(4.0, 2));
    permuted.push_back(mk(5.0, 3));
    permuted.push_back(mk(4.0, 1));
    CHECK(permuted[select_best_run(permuted)].history.seed == winner_seed);
  }
  SUBCASE("empty run list is a usage error") {
    std::vector<TrainRun> none;
    CHECK_THROWS_AS(select_best_run(none), ConfigError);
  }
}

TEST_CASE("run_grid builds a registry with populated metrics") {
  LocationTable table = LocationTable::builtin();
  auto data = small_synth_set(40, 13, table);
  std::vector<PairedExam> train_set(data.begin(), data.begin() + 28);
  std::vector<PairedExam> val_set(data.begin() + 28, data.end());

  TrainConfig cfg = quick_config(4);
  cfg.seeds = {1, 2};
  Registry reg =
      run_grid({{0.0, 0.0}}, cfg, tiny_model(), table, train_set, val_set, 1);
  REQUIRE(reg.entries.size() == 1);
  const RegistryEntry& e = reg.entries[0];
  CHECK(e.id == "a0_b0");
  CHECK(e.is_basic());
  CHECK(e.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(e.model != nullptr);
  CHECK(e.val_mae[Group::early].has_value());
  CHECK(e.val_md_mae[Group::early].has_value());

  SUBCASE("rerunning the grid reproduces the metrics exactly") {
    Registry again =
        run_grid({{0.0, 0.0}}, cfg, tiny_model(), table, train_set, val_set, 1);
    CHECK(again.entries[0].best_seed == e.best_seed);
    CHECK(again.entries[0].best_val_loss == e.best_val_loss);
    CHECK(*again.entries[0].val_mae[Group::early] == *e.val_mae[Group::early]);
  }
  SUBCASE("parallel workers produce the same registry") {
    TrainConfig c2 = cfg;
    std::vector<GridPoint> grid{{0.01, 0.25}, {0.99, 0.25}};
    auto balanced = retinn::testing::balanced_synth_set(10, 21, table);
    std::vector<PairedExam> btrain(balanced.begin(), balanced.begin() + 28);
    std::vector<PairedExam> bval(balanced.begin() + 28, balanced.end());
    Registry seq = run_grid(grid, c2, tiny_model(), table, btrain, bval, 1);
    Registry par = run_grid(grid, c2, tiny_model(), table, btrain, bval, 2);
    REQUIRE(seq.entries.size() == par.entries.size());
    for (std::size_t i = 0; i < seq.entries.size(); ++i) {
      CHECK(seq.entries[i].id == par.entries[i].id);
      CHECK(seq.entries[i].best_val_loss == par.entries[i].best_val_loss);
      CHECK(seq.entries[i].model->params().data() == par.entries[i].model->params().data());
    }
  }
}

TEST_CASE("run_grid validates seeds") {
  LocationTable table = LocationTable::builtin();
  auto data = small_synth_set(12, 2, table);
  TrainConfig cfg = quick_config(2);
  cfg.seeds = {1, 1};
  CHECK_THROWS_WITH_AS(
      run_grid({{0.0, 0.0}}, cfg, tiny_model(), table, data, data, 1),
      doctest::Contains("distinct"), ConfigError);
  cfg.seeds = {};
  CHECK_THROWS_AS(run_grid({{0.0, 0.0}}, cfg, tiny_model(), table, data, data, 1),
                  ConfigError);
  cfg.seeds = {1};
  CHECK_THROWS_AS(run_grid({}, cfg, tiny_model(), table, data, data, 1), ConfigError);
}

TEST_CASE("registry persists and reloads with hash verification") {
  LocationTable table = LocationTable::builtin();
  auto data = retinn::testing::balanced_synth_set(6, 17, table);
  std::vector<PairedExam> train_set(data.begin(), data.begin() + 16);
  std::vector<PairedExam> val_set(data.begin() + 16, data.end());
  TrainConfig cfg = quick_config(3);
  cfg.seeds = {1};
  Registry reg = run_grid({{0.01, 0.25}, {0.5, 0.5}}, cfg, tiny_model(), table,
                          train_set, val_set, 1);

  fs::path dir = fs::temp_directory_path() / "retinn_registry_test";
  fs::remove_all(dir);
  reg.save(dir);
  CHECK(fs::exists(dir / "index.json"));
  CHECK(fs::exists(dir / "tradeoff.csv"));

  Registry loaded = Registry::load(dir);
  REQUIRE(loaded.entries.size() == 2);
  CHECK(loaded.entries[0].id == "a0.01_b0.25");
  CHECK(loaded.entries[1].id == "a0.5_b0.5");
  CHECK(loaded.entries[0].model->params().data() ==
        reg.entries[0].model->params().data());
  CHECK(loaded.find("a0.5_b0.5") != nullptr);
  CHECK(loaded.find("missing") == nullptr);

  SUBCASE("tampered checkpoint fails the hash check") {
    fs::path ckpt = dir / loaded.entries[0].checkpoint_file;
    std::fstream f(ckpt, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    f.put('\x7f');
    f.close();
    CHECK_THROWS_WITH_AS(Registry::load(dir), doctest::Contains("hash"), DataError);
  }
}

TEST_CASE("history serializes to JSON") {
  TrainHistory h;
  h.seed = 42;
  h.best_epoch = 1;
  h.best_val_loss = 0.5;
  h.stop_reason = "max_epochs";
  h.epochs.push_back({1.0, 0.9, {}});
  h.epochs.push_back({0.6, 0.5, {}});
  std::string text = h.to_json_text();
  CHECK(text.find("\"best_epoch\": 1") != std::string::npos);
  CHECK(text.find("max_epochs") != std::string::npos);
}
