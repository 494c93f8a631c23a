#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "retinn/common.hpp"

namespace retinn {

enum class Activation { linear, relu };

// A 1D multi-channel feature map, 64-bit values, row-major channels x length.
struct FeatureMap {
  int channels = 0;
  int length = 0;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(int c, int l) : channels(c), length(l), values(static_cast<std::size_t>(c) * l, 0.0) {}

  double& at(int c, int i) { return values[static_cast<std::size_t>(c) * length + i]; }
  double at(int c, int i) const { return values[static_cast<std::size_t>(c) * length + i]; }
  std::size_t size() const { return values.size(); }
};

// Named flat arrays of 64-bit reals backing a model's kernels, biases and
// mask logits. Entry order is the serialization order.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  int add(const std::string& name, std::vector<int> shape);
  int find(const std::string& name) const;  // -1 when absent
  int id_covering(std::size_t flat_index) const;

  const Entry& entry(int id) const { return entries_[static_cast<std::size_t>(id)]; }
  int count() const { return static_cast<int>(entries_.size()); }
  std::size_t total_count() const { return data_.size(); }

  std::span<double> values(int id) {
    const Entry& e = entries_[static_cast<std::size_t>(id)];
    return {data_.data() + e.offset, e.size};
  }
  std::span<const double> values(int id) const {
    const Entry& e = entries_[static_cast<std::size_t>(id)];
    return {data_.data() + e.offset, e.size};
  }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const;

 private:
  std::vector<Entry> entries_;
  std::vector<double> data_;
};

// One convolution layer: cross-correlation with optional bias per
// out-channel. `bias=false` exists for the bias-free linear baseline.
struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int width = 1;
  int stride = 1;
  int padding = 0;
  Activation act = Activation::linear;
  bool bias = true;

  std::size_t kernel_size() const {
    return static_cast<std::size_t>(out_channels) * in_channels * width;
  }
  std::size_t param_count() const { return kernel_size() + (bias ? out_channels : 0); }
  // Throws ConfigError (naming the offending dimensions) unless
  // (in_length + 2*padding - width) / stride + 1 is a positive integer.
  int out_length(int in_length) const;
};

// Plain (untaped) ops. These also serve as the independent re-application
// path for the unroll and oracle tests.
FeatureMap conv1d(const FeatureMap& in, std::span<const double> kernel,
                  std::span<const double> bias, const ConvSpec& spec);
FeatureMap maxpool1d(const FeatureMap& in, int window);

// md = sum_j softmax(logits)_j * vf_j. Empty logits means a fixed uniform mask.
double softmax_mask_md(std::span<const double> vf, std::span<const double> logits);

// r^(1..passes), each produced by applying the same kernel to the previous
// output. The spec requires a shape-preserving linear conv.
std::vector<FeatureMap> rpl_unroll(const FeatureMap& r0, const ConvSpec& spec,
                                   std::span<const double> kernel,
                                   std::span<const double> bias, int passes = 7);

// ---------------------------------------------------------------------------
// Recorded computation. A Graph is a fixed operation sequence over feature
// maps; replaying adjoints walks the recorded ops in exact reverse order.
// Values and adjoints live in a caller-owned Workspace so one const Graph and
// one const ParameterStore can serve any number of threads.
// ---------------------------------------------------------------------------

class Graph;

struct Workspace {
  std::vector<double> val;
  std::vector<double> grad;
  std::vector<double> scratch;  // relu-gate row reused by conv adjoints
};

class Graph {
 public:
  // builders; all return the new node id
  int input(int channels, int length);
  int conv(int in, const ConvSpec& spec, int kernel_param, int bias_param);
  int pool(int in, int window);
  int add(int a, int b);
  // 1 x refs.size() map assembled from (node, flat offset) references
  int gather(std::vector<std::pair<int, int>> refs);
  // 1x1: sum_j softmax(logits)_j * v_j; logits_param = -1 for a fixed uniform mask
  int softmax_dot(int vec, int logits_param);
  // 1x1: sum_j w_j * (target_j - pred_j)^2
  int weighted_sse(int pred, int target, std::vector<double> w);
  // 1x1 linear combination of scalar nodes
  int combine(std::vector<int> terms, std::vector<double> coeffs);

  int channels(int node) const { return nodes_[static_cast<std::size_t>(node)].channels; }
  int length(int node) const { return nodes_[static_cast<std::size_t>(node)].length; }
  int node_count() const { return static_cast<int>(nodes_.size()); }

  void prepare(Workspace& ws) const;
  std::span<double> input_values(Workspace& ws, int node) const;
  std::span<const double> values(const Workspace& ws, int node) const;

  // Evaluates nodes [0, upto]; upto = -1 runs the whole sequence.
  void forward(Workspace& ws, const ParameterStore& params, int upto = -1) const;

  // Seeds d(loss_node) = seed and accumulates parameter adjoints into
  // param_grads (layout identical to the store's flat data). The node must be
  // scalar. When `accumulate` is false the adjoint buffers are zeroed first;
  // parameters the tape never touches then report exactly zero.
  void backward(Workspace& ws, const ParameterStore& params,
                std::vector<double>& param_grads, int loss_node, double seed,
                bool accumulate = false) const;

 private:
  enum class Op { input, conv, pool, add, gather, softmax_dot, weighted_sse, combine };

  struct Node {
    Op op;
    int in0 = -1, in1 = -1;
    int channels = 0, length = 0;
    std::size_t buf = 0;
    ConvSpec spec;
    int kernel_param = -1, bias_param = -1;
    int window = 0;
    std::vector<std::pair<int, int>> refs;
    int logits_param = -1;
    std::vector<double> weights;
    std::vector<int> terms;
  };

  int push(Node n);
  const Node& at(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  std::vector<Node> nodes_;
  std::size_t total_size_ = 0;
  int max_row_ = 1;
};

// Standard bias-corrected adaptive moment optimizer.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(AdamConfig cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  // Throws TrainingError naming the parameter on a non-finite gradient or a
  // non-finite updated value.
  void step(ParameterStore& params, std::span<const double> grads);

  long steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace retinn
