#pragma once

// Shared fixtures for the test suites.

#include <algorithm>
#include <span>

#include "retinn/data.hpp"
#include "retinn/model.hpp"

namespace retinn::testing {

// reference block structure with tiny channel counts; cheap enough for
// finite differences and manual unrolling
inline SubnetConfig tiny_subnet(int c1 = 2, int c2 = 2, int c3 = 2, int c4 = 2) {
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

inline std::vector<PairedExam> small_synth_set(int n, std::uint64_t seed,
                                               const LocationTable& table) {
  SynthConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  return synth_generate(cfg, table);
}

// Every severity interval populated (needed whenever alpha > 0), interleaved
// so any contiguous slice of length >= 4 still covers all four.
inline std::vector<PairedExam> balanced_synth_set(int n_per_interval,
                                                  std::uint64_t seed,
                                                  const LocationTable& table) {
  std::array<std::vector<PairedExam>, 4> per;
  for (int k = 0; k < 4; ++k) {
    SynthConfig cfg;
    cfg.n = n_per_interval;
    cfg.seed = seed + static_cast<std::uint64_t>(k) * 1000003;
    cfg.defect_mix = {0, 0, 0, 0};
    cfg.defect_mix[static_cast<std::size_t>(k)] = 1.0;
    per[static_cast<std::size_t>(k)] = synth_generate(cfg, table);
    for (PairedExam& ex : per[static_cast<std::size_t>(k)])
      ex.patient_id += "-iv" + std::to_string(k + 1);
  }
  std::vector<PairedExam> out;
  for (int i = 0; i < n_per_interval; ++i)
    for (int k = 0; k < 4; ++k)
      out.push_back(std::move(per[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]));
  return out;
}

// runs one sub-network by hand with the plain ops, reading parameters by name
inline FeatureMap manual_block1(const ModelVariant& m, const std::string& prefix,
                         std::span<const double> half) {
  const SubnetConfig& cfg = m.config().subnet;
  const ParameterStore& ps = m.params();
  FeatureMap x(1, 384);
  std::copy(half.begin(), half.end(), x.values.begin());
  FeatureMap cur = x;
  int ci = 0;
  for (const LayerSpec& l : cfg.block1) {
    if (l.kind == LayerSpec::Kind::conv) {
      std::string name = prefix + ".b1.c" + std::to_string(ci++);
      cur = conv1d(cur, ps.values(ps.find(name + ".kernel")),
                   ps.values(ps.find(name + ".bias")), l.conv);
    } else {
      cur = maxpool1d(cur, l.window);
    }
  }
  FeatureMap skip = conv1d(x, ps.values(ps.find(prefix + ".b1.skip.kernel")),
                           ps.values(ps.find(prefix + ".b1.skip.bias")), cfg.block1_skip);
  for (std::size_t i = 0; i < cur.values.size(); ++i) cur.values[i] += skip.values[i];
  return cur;
}

inline std::array<double, 5> manual_head(const ModelVariant& m, const std::string& prefix,
                                  const FeatureMap& r) {
  const SubnetConfig& cfg = m.config().subnet;
  const ParameterStore& ps = m.params();
  FeatureMap cur = r;
  int ci = 0;
  for (const LayerSpec& l : cfg.block3) {
    if (l.kind == LayerSpec::Kind::conv) {
      std::string name = prefix + ".b3.c" + std::to_string(ci++);
      cur = conv1d(cur, ps.values(ps.find(name + ".kernel")),
                   ps.values(ps.find(name + ".bias")), l.conv);
    } else {
      cur = maxpool1d(cur, l.window);
    }
  }
  FeatureMap skip = conv1d(r, ps.values(ps.find(prefix + ".b3.skip.kernel")),
                           ps.values(ps.find(prefix + ".b3.skip.bias")), cfg.block3_skip);
  for (std::size_t i = 0; i < cur.values.size(); ++i) cur.values[i] += skip.values[i];
  cur = conv1d(cur, ps.values(ps.find(prefix + ".b4.conv.kernel")),
               ps.values(ps.find(prefix + ".b4.conv.bias")), cfg.block4_conv);
  for (int w : cfg.block4_pools) cur = maxpool1d(cur, w);
  std::array<double, 5> out{};
  std::copy(cur.values.begin(), cur.values.end(), out.begin());
  return out;
}


}  // namespace retinn::testing
