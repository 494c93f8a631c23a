#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "retinn/data.hpp"
#include "retinn/loss.hpp"
#include "retinn/model.hpp"

namespace retinn {

struct TrainConfig {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 5.0;
  int max_epochs = 2000;
  int patience = 50;
  double learning_rate = 1e-3;
  int batch_size = 256;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  AdamConfig adam;  // lr is taken from learning_rate

  void validate() const;  // throws ConfigError
};

struct EpochRecord {
  double train_loss = 0.0;
  double val_loss = 0.0;
  GroupStats val_mae;
};

struct TrainHistory {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;  // 0-based; its val_loss is the recorded minimum
  double best_val_loss = 0.0;
  std::string stop_reason;  // early_stopping | max_epochs

  std::string to_json_text() const;
};

// Optimizes the composite loss over the training set, stops early after
// `patience` epochs without validation improvement, and restores the
// parameters of the best epoch. Normalization statistics are computed from
// the training set and stored in the model. Throws TrainingError with an
// (epoch, batch) diagnostic on a non-finite loss.
TrainHistory train(ModelVariant& model, const std::vector<PairedExam>& train_set,
                   const std::vector<PairedExam>& val_set, const TrainConfig& cfg,
                   std::uint64_t run_seed);

// Composite validation loss of a trained model, using the model's own
// (alpha, beta, gamma) with weights derived from the given set.
double validation_loss(const ModelVariant& model,
                       const std::vector<PairedExam>& val_set);

// Per-group pointwise MAE and MD MAE on the given set.
ValidationMetrics compute_validation_metrics(const ModelVariant& model,
                                             const std::vector<PairedExam>& val_set);

struct TrainRun {
  ModelVariant model;
  TrainHistory history;
};

// Index of the run with the lowest restored validation loss; ties go to the
// lowest seed. Throws ConfigError on an empty run list.
std::size_t select_best_run(const std::vector<TrainRun>& runs);

struct GridPoint {
  double alpha = 0.0;
  double beta = 0.0;
};

inline constexpr std::array<double, 5> kPaperGrid = {0.01, 0.25, 0.5, 0.75, 0.99};

struct RegistryEntry {
  std::string id;
  double alpha = 0.0, beta = 0.0, gamma = 5.0;
  std::vector<std::uint64_t> seeds;
  std::uint64_t best_seed = 0;
  double best_val_loss = 0.0;
  GroupStats val_mae;
  GroupStats val_md_mae;
  std::shared_ptr<ModelVariant> model;
  std::string checkpoint_file;  // relative to the registry directory
  std::string checkpoint_hash;

  bool is_basic() const { return alpha == 0.0 && beta == 0.0; }
};

struct Registry {
  double gamma = 5.0;
  std::vector<RegistryEntry> entries;  // sorted by (alpha, beta)

  const RegistryEntry* find(const std::string& id) const;
  void save(const std::filesystem::path& dir) const;
  static Registry load(const std::filesystem::path& dir);
  std::string tradeoff_csv() const;  // alpha,beta,group,val_mae,val_md_mae rows
};

std::string grid_point_id(double alpha, double beta);

// Trains every grid point (5 runs each, best kept) and records its validation
// metrics. Grid points may run on parallel workers; results are deterministic
// per point because every run draws from its own seeded generator.
Registry run_grid(const std::vector<GridPoint>& grid, const TrainConfig& base_cfg,
                  const ModelConfig& model_cfg, const LocationTable& table,
                  const std::vector<PairedExam>& train_set,
                  const std::vector<PairedExam>& val_set, int workers = 1);

}  // namespace retinn
