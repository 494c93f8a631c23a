#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "retinn/data.hpp"
#include "retinn/locations.hpp"
#include "retinn/tensor.hpp"

namespace retinn {

enum class ModelKind { retinervenet, linear, fully_connected, vanilla_conv };

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

struct LayerSpec {
  enum class Kind { conv, pool };
  Kind kind = Kind::conv;
  ConvSpec conv;
  int window = 2;

  static LayerSpec make_conv(ConvSpec c) {
    LayerSpec l;
    l.kind = Kind::conv;
    l.conv = c;
    return l;
  }
  static LayerSpec make_pool(int w) {
    LayerSpec l;
    l.kind = Kind::pool;
    l.window = w;
    return l;
  }
};

// One sub-network: feature block with skip, the shape-preserving recursive
// conv, projection block with skip, and the collapse to a 5-wide scalar row.
struct SubnetConfig {
  int input_length = 384;
  std::vector<LayerSpec> block1;
  ConvSpec block1_skip;
  ConvSpec rpl;
  std::vector<LayerSpec> block3;
  ConvSpec block3_skip;
  ConvSpec block4_conv;
  std::vector<int> block4_pools;
};

// Reference sub-network: totals 18864 learnable parameters for the whole
// model (two sub-networks plus the 52 mask logits).
SubnetConfig reference_retinn_subnet();
// Same block structure with unshared progression convs, no skips and no mask,
// sized to exactly 27840 parameters.
SubnetConfig reference_vanilla_subnet();

struct ModelConfig {
  ModelKind kind = ModelKind::retinervenet;
  SubnetConfig subnet;  // retinervenet and vanilla_conv
  int fc_hidden = 32;   // fully_connected
};

// Throws ConfigError naming the violated constraint. with_skips selects the
// recursive (true) or vanilla (false) wiring.
void validate_subnet(const SubnetConfig& cfg, bool with_skips);

// Parameter total computed from the layer shapes alone, sum of
// out*in*width (+ out for biased convs) plus mask logits where present.
std::size_t analytic_param_count(const ModelConfig& cfg);

struct Hyper {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 5.0;
};

struct Normalization {
  std::vector<double> mean;   // 768
  std::vector<double> stdev;  // 768
  static Normalization identity();
};

struct GroupStats {
  std::array<std::optional<double>, 3> value{};
  std::optional<double>& operator[](Group g) { return value[static_cast<std::size_t>(g)]; }
  const std::optional<double>& operator[](Group g) const {
    return value[static_cast<std::size_t>(g)];
  }
};

struct ValidationMetrics {
  GroupStats mae;     // pointwise MAE per disease group
  GroupStats md_mae;  // MD MAE per disease group
};

struct Prediction {
  std::array<double, kVfLocations> vf{};
  double md = 0.0;
};

// Handles into a built forward graph.
struct ForwardPlan {
  Graph graph;
  int x_sup = -1;  // superior-hemiretina half, drives the inferior field
  int x_inf = -1;
  int vf = -1;  // 1 x 52 in canonical location order
  int md = -1;
  std::array<std::array<int, kRecursivePasses>, 2> pass_nodes{};  // per subnet, 1x5 rows
};

class ModelVariant {
 public:
  ModelVariant(ModelConfig cfg, LocationTable table, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  const LocationTable& locations() const { return table_; }
  ModelKind kind() const { return config_.kind; }

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  std::size_t param_count() const { return params_.total_count(); }

  Hyper& hyper() { return hyper_; }
  const Hyper& hyper() const { return hyper_; }
  Normalization& normalization() { return norm_; }
  const Normalization& normalization() const { return norm_; }
  ValidationMetrics& validation_metrics() { return val_metrics_; }
  const ValidationMetrics& validation_metrics() const { return val_metrics_; }

  const ForwardPlan& plan() const { return plan_; }

  // First half of the (normalized) input drives one sub-network producing the
  // 26 opposite-hemifield values, second half likewise; outputs ordered by
  // canonical location index; md from the mask head.
  Prediction predict(const RnflVector& x) const;
  Prediction predict_normalized(std::span<const double> x768) const;
  Prediction predict_with(Workspace& ws, std::span<const double> x768) const;

  void normalize(const RnflVector& x, std::vector<double>& out) const;

 private:
  ModelConfig config_;
  LocationTable table_;
  ParameterStore params_;
  Hyper hyper_;
  Normalization norm_;
  ValidationMetrics val_metrics_;
  ForwardPlan plan_;
};

// Builders. Parameter counts are asserted against the published totals for
// the linear (19968) and fully connected (28468) baselines; a mismatch is a
// build error.
ModelVariant build_retinervenet(const SubnetConfig& cfg, const LocationTable& table,
                                std::uint64_t init_seed = 1);
ModelVariant build_baseline(ModelKind kind, const LocationTable& table,
                            std::uint64_t init_seed = 1);
ModelVariant build_vanilla_conv(const SubnetConfig& cfg, const LocationTable& table,
                                std::uint64_t init_seed = 1);

inline constexpr std::size_t kLinearParamCount = 19968;
inline constexpr std::size_t kFullyConnectedParamCount = 28468;
inline constexpr std::size_t kVanillaConvParamCount = 27840;
inline constexpr std::size_t kRetinnReferenceParamCount = 18864;

// md = sum_j softmax(mask_logits)_j * vf_j; empty logits = uniform mask
inline double estimate_md(std::span<const double> vf, std::span<const double> logits) {
  return softmax_mask_md(vf, logits);
}

// Selects the kept slots of each pass and orders them by the schedule's
// location mapping (within-hemifield canonical order).
std::array<double, kHemifieldLocations> collect_outputs(
    const std::array<std::array<double, 5>, kRecursivePasses>& per_pass,
    const LocationTable& table, Hemifield h);

// Training-plan construction: forward plan plus target inputs and the
// composite loss node with the given location weights and beta. The per-pair
// weight enters as the backward seed.
struct TrainingPlan {
  Graph graph;
  int x_sup = -1, x_inf = -1;
  int y = -1;  // 1 x 52 target
  int z = -1;  // 1 x 1 target MD
  int vf = -1, md = -1;
  int vf_sse = -1, md_sse = -1;
  int loss = -1;  // (1-beta) * vf_sse + beta * md_sse
};

TrainingPlan make_training_plan(const ModelVariant& model,
                                std::span<const double> rho, double beta);

// Checkpoint: one-line JSON header (config, names/shapes, hyperparameters,
// normalization, checksum) followed by the flat little-endian 64-bit values.
void save_checkpoint(const ModelVariant& model, const std::filesystem::path& path);
ModelVariant load_checkpoint(const std::filesystem::path& path);

}  // namespace retinn
