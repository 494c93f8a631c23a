#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "retinn/trainer.hpp"

namespace retinn {

// The four-step routed ensemble: a router variant assigns each test to a
// disease group by its predicted MD, then the group's expert produces the
// field. The basic (alpha = 0, beta = 0) variant never participates.
struct EnsembleSpec {
  std::string router_id;
  std::array<std::string, 3> expert_ids;  // by Group
  // provenance: the validation numbers every choice was made from
  double router_mean_md_mae = 0.0;
  std::array<double, 3> expert_val_mae{};

  std::string to_json_text(const Registry& reg) const;
  static EnsembleSpec from_json_text(const std::string& text);
  void save(const std::filesystem::path& path, const Registry& reg) const;
  static EnsembleSpec load(const std::filesystem::path& path);
};

// Variant minimizing the unweighted mean of MD MAE across the three
// evaluation groups on validation data; ties go to the lexicographically
// smallest (alpha, beta). Throws ConfigError when no eligible variant exists.
std::string pick_router(const Registry& reg);

// Group of an exam according to the router's *predicted* MD.
Group route(const ModelVariant& router, const PairedExam& exam);

// Per group, the variant with minimum pointwise validation MAE; same tie rule.
std::array<std::string, 3> pick_group_experts(const Registry& reg);

EnsembleSpec build_ensemble(const Registry& reg);

// route -> expert forward; md comes from the expert's own MD head. Throws
// InferenceError when the router's MD prediction is non-finite.
Prediction ensemble_predict(const EnsembleSpec& spec, const Registry& reg,
                            const PairedExam& exam);

}  // namespace retinn
