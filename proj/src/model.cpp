#include "retinn/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace retinn {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint parameter section is little-endian");

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::retinervenet: return "retinervenet";
    case ModelKind::linear: return "linear";
    case ModelKind::fully_connected: return "fully_connected";
    case ModelKind::vanilla_conv: return "vanilla_conv";
  }
  return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
  for (ModelKind k : {ModelKind::retinervenet, ModelKind::linear,
                      ModelKind::fully_connected, ModelKind::vanilla_conv})
    if (name == model_kind_name(k)) return k;
  throw ConfigError("unknown model kind: '" + name + "'");
}

Normalization Normalization::identity() {
  Normalization n;
  n.mean.assign(kRnflPoints, 0.0);
  n.stdev.assign(kRnflPoints, 1.0);
  return n;
}

SubnetConfig reference_retinn_subnet() {
  // channels 11 -> 17 through block1, head expands 17 -> 25 -> 30 -> 1;
  // totals 18864 parameters over both sub-networks plus the 52 mask logits
  const int c1 = 11, c2 = 17, c3 = 25, c4 = 30;
  SubnetConfig cfg;
  cfg.input_length = 384;
  cfg.block1 = {
      LayerSpec::make_conv({1, c1, 8, 2, 3, Activation::relu}),
      LayerSpec::make_pool(2),
      LayerSpec::make_conv({c1, c2, 6, 2, 2, Activation::relu}),
  };
  cfg.block1_skip = {1, c2, 8, 8, 0, Activation::linear};
  cfg.rpl = {c2, c2, 3, 1, 1, Activation::linear};
  cfg.block3 = {
      LayerSpec::make_conv({c2, c3, 5, 1, 2, Activation::relu}),
      LayerSpec::make_pool(2),
      LayerSpec::make_conv({c3, c4, 5, 1, 2, Activation::relu}),
  };
  cfg.block3_skip = {c2, c4, 2, 2, 0, Activation::linear};
  cfg.block4_conv = {c4, 1, 5, 1, 0, Activation::linear};
  cfg.block4_pools = {2, 2};
  return cfg;
}

SubnetConfig reference_vanilla_subnet() {
  // same block structure without skips; channels sized so the two
  // sub-networks with 7 unshared progression convs total 27840 parameters
  const int c1 = 8, c2 = 19, c3 = 24, c4 = 23;
  SubnetConfig cfg;
  cfg.input_length = 384;
  cfg.block1 = {
      LayerSpec::make_conv({1, c1, 8, 2, 3, Activation::relu}),
      LayerSpec::make_pool(2),
      LayerSpec::make_conv({c1, c2, 6, 2, 2, Activation::relu}),
  };
  cfg.rpl = {c2, c2, 3, 1, 1, Activation::linear};
  cfg.block3 = {
      LayerSpec::make_conv({c2, c3, 5, 1, 2, Activation::relu}),
      LayerSpec::make_pool(2),
      LayerSpec::make_conv({c3, c4, 5, 1, 2, Activation::relu}),
  };
  cfg.block4_conv = {c4, 1, 5, 1, 0, Activation::linear};
  cfg.block4_pools = {2, 2};
  return cfg;
}

namespace {

struct Shape {
  int channels, length;
};

Shape walk_layers(const std::vector<LayerSpec>& layers, Shape s,
                  const char* block_name, bool require_relu) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.kind == LayerSpec::Kind::conv) {
      if (l.conv.in_channels != s.channels)
        throw ConfigError(std::string(block_name) + " conv " + std::to_string(i) +
                          ": expects " + std::to_string(l.conv.in_channels) +
                          " input channels, gets " + std::to_string(s.channels));
      if (require_relu && l.conv.act != Activation::relu)
        throw ConfigError(std::string(block_name) + " conv " + std::to_string(i) +
                          " must use ReLU activation");
      s = {l.conv.out_channels, l.conv.out_length(s.length)};
    } else {
      if (l.window <= 0 || s.length % l.window != 0)
        throw ConfigError(std::string(block_name) + " pool " + std::to_string(i) +
                          ": window " + std::to_string(l.window) +
                          " does not divide length " + std::to_string(s.length));
      s.length /= l.window;
    }
  }
  return s;
}

}  // namespace

void validate_subnet(const SubnetConfig& cfg, bool with_skips) {
  if (cfg.input_length <= 0) throw ConfigError("input length must be positive");
  Shape in{1, cfg.input_length};
  Shape b1 = walk_layers(cfg.block1, in, "block1", true);

  if (with_skips) {
    if (cfg.block1_skip.act != Activation::linear)
      throw ConfigError("block1 skip connection must use linear activation");
    if (cfg.block1_skip.in_channels != 1)
      throw ConfigError("block1 skip reads the sub-network input");
    Shape sk{cfg.block1_skip.out_channels, cfg.block1_skip.out_length(cfg.input_length)};
    if (sk.channels != b1.channels || sk.length != b1.length)
      throw ConfigError("block1 skip shape (" + std::to_string(sk.channels) + "x" +
                        std::to_string(sk.length) + ") does not match block1 output (" +
                        std::to_string(b1.channels) + "x" + std::to_string(b1.length) + ")");
  }

  if (cfg.rpl.in_channels != b1.channels)
    throw ConfigError("recursive conv expects " + std::to_string(cfg.rpl.in_channels) +
                      " channels, block1 provides " + std::to_string(b1.channels));
  if (cfg.rpl.in_channels != cfg.rpl.out_channels)
    throw ConfigError("recursive conv must preserve channel count (got " +
                      std::to_string(cfg.rpl.in_channels) + " -> " +
                      std::to_string(cfg.rpl.out_channels) + ")");
  if (cfg.rpl.act != Activation::linear)
    throw ConfigError("recursive conv must use linear activation");
  if (cfg.rpl.out_length(b1.length) != b1.length)
    throw ConfigError("recursive conv must preserve length " + std::to_string(b1.length));

  Shape b3 = walk_layers(cfg.block3, b1, "block3", true);
  if (with_skips) {
    if (cfg.block3_skip.act != Activation::linear)
      throw ConfigError("block3 skip connection must use linear activation");
    if (cfg.block3_skip.in_channels != b1.channels)
      throw ConfigError("block3 skip reads the recursive output");
    Shape sk{cfg.block3_skip.out_channels, cfg.block3_skip.out_length(b1.length)};
    if (sk.channels != b3.channels || sk.length != b3.length)
      throw ConfigError("block3 skip shape does not match block3 output");
  }

  if (cfg.block4_conv.in_channels != b3.channels)
    throw ConfigError("block4 conv channel mismatch");
  if (cfg.block4_conv.out_channels != 1)
    throw ConfigError("block4 conv must collapse to a single channel");
  if (cfg.block4_conv.act != Activation::linear)
    throw ConfigError("block4 conv must use linear activation");
  Shape b4{1, cfg.block4_conv.out_length(b3.length)};
  for (int w : cfg.block4_pools) {
    if (w <= 0 || b4.length % w != 0)
      throw ConfigError("block4 pool window " + std::to_string(w) +
                        " does not divide length " + std::to_string(b4.length));
    b4.length /= w;
  }
  if (b4.length != 5)
    throw ConfigError("block3+block4 must yield exactly 5 outputs per pass, got " +
                      std::to_string(b4.length));
}

namespace {

std::size_t conv_count(const ConvSpec& s) { return s.param_count(); }

std::size_t subnet_count(const SubnetConfig& cfg, bool with_skips, bool shared_rpl) {
  std::size_t n = 0;
  for (const LayerSpec& l : cfg.block1)
    if (l.kind == LayerSpec::Kind::conv) n += conv_count(l.conv);
  if (with_skips) n += conv_count(cfg.block1_skip);
  n += conv_count(cfg.rpl) * (shared_rpl ? 1 : kRecursivePasses);
  for (const LayerSpec& l : cfg.block3)
    if (l.kind == LayerSpec::Kind::conv) n += conv_count(l.conv);
  if (with_skips) n += conv_count(cfg.block3_skip);
  n += conv_count(cfg.block4_conv);
  return n;
}

}  // namespace

std::size_t analytic_param_count(const ModelConfig& cfg) {
  switch (cfg.kind) {
    case ModelKind::retinervenet:
      return 2 * subnet_count(cfg.subnet, true, true) + kVfLocations;
    case ModelKind::vanilla_conv:
      return 2 * subnet_count(cfg.subnet, false, false);
    case ModelKind::linear:
      return 2ull * kHemifieldLocations * 384;
    case ModelKind::fully_connected: {
      std::size_t h = static_cast<std::size_t>(cfg.fc_hidden);
      std::size_t per = (h * 384 + h) + (h * h + h) + (kHemifieldLocations * h +
                                                       kHemifieldLocations);
      return 2 * per;
    }
  }
  throw ConfigError("unknown model kind");
}

namespace {

// find-or-create convolution parameters; fresh kernels get fan-in scaled
// normal values, biases start at zero
struct PlanBuilder {
  Graph& g;
  ParameterStore& store;
  Rng& rng;

  int param(const std::string& name, std::vector<int> shape, double init_scale) {
    int id = store.find(name);
    if (id >= 0) {
      if (store.entry(id).shape != shape)
        throw ConfigError("parameter shape clash for '" + name + "'");
      return id;
    }
    id = store.add(name, std::move(shape));
    auto vals = store.values(id);
    for (double& v : vals) v = init_scale == 0.0 ? 0.0 : rng.normal() * init_scale;
    return id;
  }

  int conv(int in, const ConvSpec& spec, const std::string& prefix) {
    double fan_in = static_cast<double>(spec.in_channels) * spec.width;
    double scale = std::sqrt((spec.act == Activation::relu ? 2.0 : 1.0) / fan_in);
    int k = param(prefix + ".kernel", {spec.out_channels, spec.in_channels, spec.width},
                  scale);
    int b = -1;
    if (spec.bias) b = param(prefix + ".bias", {spec.out_channels}, 0.0);
    return g.conv(in, spec, k, b);
  }
};

struct SubnetOut {
  std::array<int, kRecursivePasses> pass_nodes{};
  int out26 = -1;  // baselines: 26x1 node, channel = within-hemifield rank
};

SubnetOut build_conv_subnet(PlanBuilder& pb, int x, const SubnetConfig& cfg,
                            const std::string& prefix, bool with_skips,
                            bool shared_rpl) {
  SubnetOut out;
  int cur = x;
  int ci = 0;
  for (const LayerSpec& l : cfg.block1) {
    if (l.kind == LayerSpec::Kind::conv)
      cur = pb.conv(cur, l.conv, prefix + ".b1.c" + std::to_string(ci++));
    else
      cur = pb.g.pool(cur, l.window);
  }
  if (with_skips)
    cur = pb.g.add(cur, pb.conv(x, cfg.block1_skip, prefix + ".b1.skip"));
  int r = cur;
  for (int t = 1; t <= kRecursivePasses; ++t) {
    std::string rpl_name =
        shared_rpl ? prefix + ".rpl" : prefix + ".prog" + std::to_string(t);
    r = pb.conv(r, cfg.rpl, rpl_name);
    int h = r;
    ci = 0;
    for (const LayerSpec& l : cfg.block3) {
      if (l.kind == LayerSpec::Kind::conv)
        h = pb.conv(h, l.conv, prefix + ".b3.c" + std::to_string(ci++));
      else
        h = pb.g.pool(h, l.window);
    }
    if (with_skips)
      h = pb.g.add(h, pb.conv(r, cfg.block3_skip, prefix + ".b3.skip"));
    h = pb.conv(h, cfg.block4_conv, prefix + ".b4.conv");
    for (int w : cfg.block4_pools) h = pb.g.pool(h, w);
    out.pass_nodes[static_cast<std::size_t>(t - 1)] = h;
  }
  return out;
}

SubnetOut build_dense_subnet(PlanBuilder& pb, int x, const ModelConfig& cfg,
                             const std::string& prefix) {
  SubnetOut out;
  if (cfg.kind == ModelKind::linear) {
    ConvSpec dense{1, kHemifieldLocations, 384, 1, 0, Activation::linear, false};
    out.out26 = pb.conv(x, dense, prefix + ".linear");
  } else {
    int h = cfg.fc_hidden;
    if (h <= 0) throw ConfigError("fully connected hidden width must be positive");
    int n0 = pb.conv(x, {1, h, 384, 1, 0, Activation::relu}, prefix + ".fc0");
    int n1 = pb.conv(n0, {h, h, 1, 1, 0, Activation::relu}, prefix + ".fc1");
    out.out26 = pb.conv(n1, {h, kHemifieldLocations, 1, 1, 0, Activation::linear},
                        prefix + ".fc2");
  }
  return out;
}

ForwardPlan build_forward_plan(const ModelConfig& cfg, const LocationTable& table,
                               ParameterStore& store, Rng& rng) {
  ForwardPlan plan;
  PlanBuilder pb{plan.graph, store, rng};
  plan.x_sup = plan.graph.input(1, 384);
  plan.x_inf = plan.graph.input(1, 384);

  bool conv_kind =
      cfg.kind == ModelKind::retinervenet || cfg.kind == ModelKind::vanilla_conv;
  SubnetOut sup, inf;
  if (conv_kind) {
    if (cfg.subnet.input_length != 384)
      throw ConfigError("sub-network input length must be 384, half of the RNFL vector");
    bool skips = cfg.kind == ModelKind::retinervenet;
    validate_subnet(cfg.subnet, skips);
    sup = build_conv_subnet(pb, plan.x_sup, cfg.subnet, "sup", skips, skips);
    inf = build_conv_subnet(pb, plan.x_inf, cfg.subnet, "inf", skips, skips);
    plan.pass_nodes[0] = sup.pass_nodes;
    plan.pass_nodes[1] = inf.pass_nodes;
  } else {
    sup = build_dense_subnet(pb, plan.x_sup, cfg, "sup");
    inf = build_dense_subnet(pb, plan.x_inf, cfg, "inf");
  }

  // within-hemifield rank for baseline output indexing
  std::array<int, kVfLocations> rank{};
  for (Hemifield h : {Hemifield::superior, Hemifield::inferior}) {
    auto idx = table.hemifield_indices(h);
    for (std::size_t r = 0; r < idx.size(); ++r)
      rank[static_cast<std::size_t>(idx[r])] = static_cast<int>(r);
  }

  std::vector<std::pair<int, int>> refs;
  refs.reserve(kVfLocations);
  for (int j = 0; j < kVfLocations; ++j) {
    const VfLocation& loc = table.at(j);
    // the superior hemiretina half (x_sup) serves the inferior field
    const SubnetOut& sn = loc.hemifield == Hemifield::inferior ? sup : inf;
    if (conv_kind)
      refs.emplace_back(sn.pass_nodes[static_cast<std::size_t>(loc.pass - 1)], loc.slot);
    else
      refs.emplace_back(sn.out26, rank[static_cast<std::size_t>(j)]);
  }
  plan.vf = plan.graph.gather(std::move(refs));

  int logits = -1;
  if (cfg.kind == ModelKind::retinervenet)
    logits = pb.param("md.mask_logits", {kVfLocations}, 0.0);
  plan.md = plan.graph.softmax_dot(plan.vf, logits);
  return plan;
}

}  // namespace

ModelVariant::ModelVariant(ModelConfig cfg, LocationTable table, std::uint64_t init_seed)
    : config_(std::move(cfg)), table_(std::move(table)), norm_(Normalization::identity()) {
  table_.validate();
  Rng rng(init_seed);
  plan_ = build_forward_plan(config_, table_, params_, rng);
  std::size_t expect = analytic_param_count(config_);
  if (params_.total_count() != expect)
    throw ConfigError("parameter count " + std::to_string(params_.total_count()) +
                      " does not match analytic count " + std::to_string(expect));
}

void ModelVariant::normalize(const RnflVector& x, std::vector<double>& out) const {
  if (x.values.size() != kRnflPoints)
    throw DataError("RNFL vector must have 768 values");
  out.resize(kRnflPoints);
  for (int i = 0; i < kRnflPoints; ++i) {
    double s = norm_.stdev[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] =
        (x.values[static_cast<std::size_t>(i)] - norm_.mean[static_cast<std::size_t>(i)]) /
        (s > 0 ? s : 1.0);
  }
}

Prediction ModelVariant::predict(const RnflVector& x) const {
  std::vector<double> z;
  normalize(x, z);
  return predict_normalized(z);
}

Prediction ModelVariant::predict_normalized(std::span<const double> x768) const {
  Workspace ws;
  return predict_with(ws, x768);
}

Prediction ModelVariant::predict_with(Workspace& ws, std::span<const double> x768) const {
  if (x768.size() != kRnflPoints)
    throw DataError("RNFL vector must have 768 values");
  const Graph& g = plan_.graph;
  g.prepare(ws);
  auto xs = g.input_values(ws, plan_.x_sup);
  auto xi = g.input_values(ws, plan_.x_inf);
  std::copy(x768.begin(), x768.begin() + 384, xs.begin());
  std::copy(x768.begin() + 384, x768.end(), xi.begin());
  g.forward(ws, params_, plan_.md);
  Prediction p;
  auto vf = g.values(ws, plan_.vf);
  std::copy(vf.begin(), vf.end(), p.vf.begin());
  p.md = g.values(ws, plan_.md)[0];
  return p;
}

ModelVariant build_retinervenet(const SubnetConfig& cfg, const LocationTable& table,
                                std::uint64_t init_seed) {
  ModelConfig mc;
  mc.kind = ModelKind::retinervenet;
  mc.subnet = cfg;
  return ModelVariant(std::move(mc), table, init_seed);
}

ModelVariant build_vanilla_conv(const SubnetConfig& cfg, const LocationTable& table,
                                std::uint64_t init_seed) {
  ModelConfig mc;
  mc.kind = ModelKind::vanilla_conv;
  mc.subnet = cfg;
  return ModelVariant(std::move(mc), table, init_seed);
}

ModelVariant build_baseline(ModelKind kind, const LocationTable& table,
                            std::uint64_t init_seed) {
  ModelConfig mc;
  mc.kind = kind;
  switch (kind) {
    case ModelKind::linear: {
      ModelVariant m(std::move(mc), table, init_seed);
      if (m.param_count() != kLinearParamCount)
        throw ConfigError("linear baseline must have exactly " +
                          std::to_string(kLinearParamCount) + " parameters, built " +
                          std::to_string(m.param_count()));
      return m;
    }
    case ModelKind::fully_connected: {
      mc.fc_hidden = 32;
      ModelVariant m(std::move(mc), table, init_seed);
      if (m.param_count() != kFullyConnectedParamCount)
        throw ConfigError("fully connected baseline must have exactly " +
                          std::to_string(kFullyConnectedParamCount) +
                          " parameters, built " + std::to_string(m.param_count()));
      return m;
    }
    case ModelKind::vanilla_conv:
      return build_vanilla_conv(reference_vanilla_subnet(), table, init_seed);
    case ModelKind::retinervenet:
      return build_retinervenet(reference_retinn_subnet(), table, init_seed);
  }
  throw ConfigError("unknown model kind");
}

std::array<double, kHemifieldLocations> collect_outputs(
    const std::array<std::array<double, 5>, kRecursivePasses>& per_pass,
    const LocationTable& table, Hemifield h) {
  std::array<double, kHemifieldLocations> out{};
  auto idx = table.hemifield_indices(h);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const VfLocation& loc = table.at(idx[r]);
    out[r] = per_pass[static_cast<std::size_t>(loc.pass - 1)]
                     [static_cast<std::size_t>(loc.slot)];
  }
  return out;
}

TrainingPlan make_training_plan(const ModelVariant& model,
                                std::span<const double> rho, double beta) {
  if (rho.size() != kVfLocations)
    throw ConfigError("training plan needs 52 location weights");
  if (beta < 0.0 || beta > 1.0)
    throw ConfigError("beta must lie in [0, 1], got " + std::to_string(beta));
  TrainingPlan tp;
  // rebuild the forward graph against the existing parameter store
  ParameterStore& store = const_cast<ParameterStore&>(model.params());
  std::size_t before = store.total_count();
  Rng rng(0);
  ForwardPlan fwd = build_forward_plan(model.config(), model.locations(), store, rng);
  if (store.total_count() != before)
    throw ConfigError("training plan unexpectedly created parameters");
  tp.graph = std::move(fwd.graph);
  tp.x_sup = fwd.x_sup;
  tp.x_inf = fwd.x_inf;
  tp.vf = fwd.vf;
  tp.md = fwd.md;
  tp.y = tp.graph.input(1, kVfLocations);
  tp.z = tp.graph.input(1, 1);
  tp.vf_sse = tp.graph.weighted_sse(tp.vf, tp.y, std::vector<double>(rho.begin(), rho.end()));
  tp.md_sse = tp.graph.weighted_sse(tp.md, tp.z, {1.0});
  tp.loss = tp.graph.combine({tp.vf_sse, tp.md_sse}, {1.0 - beta, beta});
  return tp;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

json conv_to_json(const ConvSpec& s) {
  return {{"in", s.in_channels},   {"out", s.out_channels}, {"width", s.width},
          {"stride", s.stride},    {"padding", s.padding},
          {"act", s.act == Activation::relu ? "relu" : "linear"},
          {"bias", s.bias}};
}

ConvSpec conv_from_json(const json& j) {
  ConvSpec s;
  s.in_channels = j.at("in").get<int>();
  s.out_channels = j.at("out").get<int>();
  s.width = j.at("width").get<int>();
  s.stride = j.at("stride").get<int>();
  s.padding = j.at("padding").get<int>();
  std::string act = j.at("act").get<std::string>();
  if (act != "relu" && act != "linear") throw ConfigError("bad activation: " + act);
  s.act = act == "relu" ? Activation::relu : Activation::linear;
  s.bias = j.at("bias").get<bool>();
  return s;
}

json layers_to_json(const std::vector<LayerSpec>& layers) {
  json arr = json::array();
  for (const LayerSpec& l : layers) {
    if (l.kind == LayerSpec::Kind::conv)
      arr.push_back({{"kind", "conv"}, {"conv", conv_to_json(l.conv)}});
    else
      arr.push_back({{"kind", "pool"}, {"window", l.window}});
  }
  return arr;
}

std::vector<LayerSpec> layers_from_json(const json& arr) {
  std::vector<LayerSpec> out;
  for (const json& j : arr) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "conv") out.push_back(LayerSpec::make_conv(conv_from_json(j.at("conv"))));
    else if (kind == "pool") out.push_back(LayerSpec::make_pool(j.at("window").get<int>()));
    else throw ConfigError("bad layer kind: " + kind);
  }
  return out;
}

json subnet_to_json(const SubnetConfig& s) {
  return {{"input_length", s.input_length},
          {"block1", layers_to_json(s.block1)},
          {"block1_skip", conv_to_json(s.block1_skip)},
          {"rpl", conv_to_json(s.rpl)},
          {"block3", layers_to_json(s.block3)},
          {"block3_skip", conv_to_json(s.block3_skip)},
          {"block4_conv", conv_to_json(s.block4_conv)},
          {"block4_pools", s.block4_pools}};
}

SubnetConfig subnet_from_json(const json& j) {
  SubnetConfig s;
  s.input_length = j.at("input_length").get<int>();
  s.block1 = layers_from_json(j.at("block1"));
  s.block1_skip = conv_from_json(j.at("block1_skip"));
  s.rpl = conv_from_json(j.at("rpl"));
  s.block3 = layers_from_json(j.at("block3"));
  s.block3_skip = conv_from_json(j.at("block3_skip"));
  s.block4_conv = conv_from_json(j.at("block4_conv"));
  s.block4_pools = j.at("block4_pools").get<std::vector<int>>();
  return s;
}

json group_stats_to_json(const GroupStats& g) {
  json out;
  for (int k = 0; k < 3; ++k) {
    Group gr = static_cast<Group>(k);
    if (g[gr]) out[group_name(gr)] = *g[gr];
    else out[group_name(gr)] = nullptr;
  }
  return out;
}

GroupStats group_stats_from_json(const json& j) {
  GroupStats g;
  for (int k = 0; k < 3; ++k) {
    Group gr = static_cast<Group>(k);
    if (j.contains(group_name(gr)) && !j[group_name(gr)].is_null())
      g[gr] = j[group_name(gr)].get<double>();
  }
  return g;
}

}  // namespace

void save_checkpoint(const ModelVariant& model, const std::filesystem::path& path) {
  const ParameterStore& store = model.params();
  const std::vector<double>& data = store.data();
  std::uint64_t checksum = fnv1a64(data.data(), data.size() * sizeof(double));

  json params = json::array();
  for (int i = 0; i < store.count(); ++i) {
    const auto& e = store.entry(i);
    params.push_back({{"name", e.name}, {"shape", e.shape}});
  }
  json config = {{"kind", model_kind_name(model.kind())}};
  if (model.kind() == ModelKind::retinervenet || model.kind() == ModelKind::vanilla_conv)
    config["subnet"] = subnet_to_json(model.config().subnet);
  if (model.kind() == ModelKind::fully_connected)
    config["fc_hidden"] = model.config().fc_hidden;

  json header = {
      {"format", "retinn-checkpoint"},
      {"schema_version", 1},
      {"config", config},
      {"hyper",
       {{"alpha", model.hyper().alpha},
        {"beta", model.hyper().beta},
        {"gamma", model.hyper().gamma}}},
      {"normalization",
       {{"mean", model.normalization().mean}, {"stdev", model.normalization().stdev}}},
      {"locations", json::parse(model.locations().to_json_text())},
      {"params", params},
      {"param_count", store.total_count()},
      {"val_metrics",
       {{"mae", group_stats_to_json(model.validation_metrics().mae)},
        {"md_mae", group_stats_to_json(model.validation_metrics().md_mae)}}},
      {"checksum", hex64(checksum)},
  };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out << header.dump() << "\n";
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!out) throw DataError("failed writing checkpoint: " + path.string());
}

ModelVariant load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::string header_line;
  if (!std::getline(in, header_line))
    throw DataError("checkpoint missing header: " + path.string());
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (header.value("format", "") != "retinn-checkpoint" ||
      header.value("schema_version", 0) != 1)
    throw DataError("unsupported checkpoint format");

  ModelConfig cfg;
  const json& jc = header.at("config");
  cfg.kind = model_kind_from_name(jc.at("kind").get<std::string>());
  if (jc.contains("subnet")) cfg.subnet = subnet_from_json(jc["subnet"]);
  if (jc.contains("fc_hidden")) cfg.fc_hidden = jc["fc_hidden"].get<int>();
  LocationTable table = LocationTable::from_json_text(header.at("locations").dump());

  ModelVariant model(std::move(cfg), std::move(table), 0);

  const ParameterStore& store = model.params();
  const json& jp = header.at("params");
  if (jp.size() != static_cast<std::size_t>(store.count()))
    throw DataError("checkpoint parameter listing does not match architecture");
  for (int i = 0; i < store.count(); ++i) {
    const auto& e = store.entry(i);
    if (jp[static_cast<std::size_t>(i)].at("name").get<std::string>() != e.name ||
        jp[static_cast<std::size_t>(i)].at("shape").get<std::vector<int>>() != e.shape)
      throw DataError("checkpoint parameter '" + e.name + "' does not match architecture");
  }
  std::size_t count = header.at("param_count").get<std::size_t>();
  if (count != store.total_count())
    throw DataError("checkpoint parameter count mismatch");

  std::vector<double>& data = model.params().data();
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(data.size() * sizeof(double)))
    throw DataError("checkpoint parameter section truncated");
  std::uint64_t checksum = fnv1a64(data.data(), data.size() * sizeof(double));
  if (hex64(checksum) != header.at("checksum").get<std::string>())
    throw DataError("checkpoint checksum mismatch");

  const json& jh = header.at("hyper");
  model.hyper().alpha = jh.at("alpha").get<double>();
  model.hyper().beta = jh.at("beta").get<double>();
  model.hyper().gamma = jh.at("gamma").get<double>();
  const json& jn = header.at("normalization");
  model.normalization().mean = jn.at("mean").get<std::vector<double>>();
  model.normalization().stdev = jn.at("stdev").get<std::vector<double>>();
  if (model.normalization().mean.size() != kRnflPoints ||
      model.normalization().stdev.size() != kRnflPoints)
    throw DataError("checkpoint normalization arity mismatch");
  if (header.contains("val_metrics")) {
    model.validation_metrics().mae = group_stats_from_json(header["val_metrics"]["mae"]);
    model.validation_metrics().md_mae =
        group_stats_from_json(header["val_metrics"]["md_mae"]);
  }
  return model;
}

}  // namespace retinn
