#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "oracles.hpp"
#include "retinn/common.hpp"
#include "retinn/model.hpp"
#include "testutil.hpp"

using namespace retinn;
using retinn::testing::tiny_subnet;
using retinn::testing::manual_block1;
using retinn::testing::manual_head;
namespace fs = std::filesystem;

namespace {

RnflVector random_rnfl(Rng& rng) {
  RnflVector x;
  x.values.resize(kRnflPoints);
  for (double& v : x.values) v = rng.uniform(40.0, 130.0);
  x.quality_score = 25.0;
  return x;
}

}  // namespace

TEST_CASE("reference configurations hit the published parameter totals") {
  LocationTable table = LocationTable::builtin();
  ModelVariant retinn = build_retinervenet(reference_retinn_subnet(), table);
  CHECK(retinn.param_count() == kRetinnReferenceParamCount);
  CHECK(retinn.param_count() == analytic_param_count(retinn.config()));

  ModelVariant lin = build_baseline(ModelKind::linear, table);
  CHECK(lin.param_count() == kLinearParamCount);
  ModelVariant fc = build_baseline(ModelKind::fully_connected, table);
  CHECK(fc.param_count() == kFullyConnectedParamCount);
  ModelVariant vc = build_baseline(ModelKind::vanilla_conv, table);
  CHECK(vc.param_count() == kVanillaConvParamCount);
  CHECK(vc.param_count() == analytic_param_count(vc.config()));
}

TEST_CASE("analytic count matches the store for random tiny configs") {
  LocationTable table = LocationTable::builtin();
  Rng rng(21);
  for (int rep = 0; rep < 5; ++rep) {
    int c1 = 1 + static_cast<int>(rng.uniform_int(0, 3));
    int c2 = 1 + static_cast<int>(rng.uniform_int(0, 3));
    int c3 = 1 + static_cast<int>(rng.uniform_int(0, 3));
    int c4 = 1 + static_cast<int>(rng.uniform_int(0, 3));
    ModelVariant m = build_retinervenet(tiny_subnet(c1, c2, c3, c4), table);
    CHECK(m.param_count() == analytic_param_count(m.config()));
  }
}

TEST_CASE("invalid sub-network configurations are rejected by name") {
  LocationTable table = LocationTable::builtin();
  SUBCASE("recursive conv must keep the channel count") {
    SubnetConfig cfg = tiny_subnet();
    cfg.rpl.out_channels = 3;
    CHECK_THROWS_WITH_AS(build_retinervenet(cfg, table),
                         doctest::Contains("preserve channel count"), ConfigError);
  }
  SUBCASE("recursive conv must preserve length") {
    SubnetConfig cfg = tiny_subnet();
    cfg.rpl.padding = 0;
    CHECK_THROWS_AS(build_retinervenet(cfg, table), ConfigError);
  }
  SUBCASE("head must end at exactly 5 outputs") {
    SubnetConfig cfg = tiny_subnet();
    cfg.block4_pools = {2};
    CHECK_THROWS_WITH_AS(build_retinervenet(cfg, table),
                         doctest::Contains("got 10"), ConfigError);
  }
  SUBCASE("feature convs must use ReLU") {
    SubnetConfig cfg = tiny_subnet();
    cfg.block1[0].conv.act = Activation::linear;
    CHECK_THROWS_WITH_AS(build_retinervenet(cfg, table),
                         doctest::Contains("ReLU"), ConfigError);
  }
  SUBCASE("skips must be linear") {
    SubnetConfig cfg = tiny_subnet();
    cfg.block3_skip.act = Activation::relu;
    CHECK_THROWS_WITH_AS(build_retinervenet(cfg, table),
                         doctest::Contains("linear"), ConfigError);
  }
  SUBCASE("skip shape must match the block output") {
    SubnetConfig cfg = tiny_subnet();
    cfg.block1_skip.stride = 4;  // yields 95, not 48
    CHECK_THROWS_WITH_AS(build_retinervenet(cfg, table),
                         doctest::Contains("skip shape"), ConfigError);
  }
}

TEST_CASE("hemifield separation is architecturally exact") {
  LocationTable table = LocationTable::builtin();
  ModelVariant m = build_retinervenet(tiny_subnet(), table, 3);
  Rng rng(17);
  std::vector<double> x(kRnflPoints);
  for (double& v : x) v = rng.normal();
  Prediction base = m.predict_normalized(x);

  // perturbing the first half (superior hemiretina) may only move the
  // inferior field, canonical indices 26..51
  std::vector<double> xp = x;
  for (int i = 0; i < 384; ++i) xp[static_cast<std::size_t>(i)] += rng.normal();
  Prediction p = m.predict_normalized(xp);
  for (int j = 0; j < 26; ++j)
    CHECK(p.vf[static_cast<std::size_t>(j)] == base.vf[static_cast<std::size_t>(j)]);

  std::vector<double> xq = x;
  for (int i = 384; i < 768; ++i) xq[static_cast<std::size_t>(i)] += rng.normal();
  Prediction q = m.predict_normalized(xq);
  for (int j = 26; j < 52; ++j)
    CHECK(q.vf[static_cast<std::size_t>(j)] == base.vf[static_cast<std::size_t>(j)]);
}

TEST_CASE("forward is deterministic on repeated calls") {
  LocationTable table = LocationTable::builtin();
  ModelVariant m = build_retinervenet(tiny_subnet(), table, 4);
  std::vector<double> zero(kRnflPoints, 0.0);
  Prediction a = m.predict_normalized(zero);
  Prediction b = m.predict_normalized(zero);
  CHECK(a.vf == b.vf);
  CHECK(a.md == b.md);
}

TEST_CASE("forward equals the manual unroll oracle") {
  LocationTable table = LocationTable::builtin();
  ModelVariant m = build_retinervenet(tiny_subnet(3, 2, 3, 2), table, 11);
  Rng rng(29);
  std::vector<double> x(kRnflPoints);
  for (double& v : x) v = rng.normal();
  Prediction got = m.predict_normalized(x);

  const ParameterStore& ps = m.params();
  std::array<double, 52> manual_vf{};
  struct Half {
    const char* prefix;
    int offset;
    Hemifield field;
  };
  // the superior hemiretina half feeds the inferior field and vice versa
  for (const Half& h : {Half{"sup", 0, Hemifield::inferior},
                        Half{"inf", 384, Hemifield::superior}}) {
    FeatureMap r0 = manual_block1(
        m, h.prefix, std::span<const double>(x.data() + h.offset, 384));
    auto rs = rpl_unroll(r0, m.config().subnet.rpl,
                         ps.values(ps.find(std::string(h.prefix) + ".rpl.kernel")),
                         ps.values(ps.find(std::string(h.prefix) + ".rpl.bias")),
                         kRecursivePasses);
    std::array<std::array<double, 5>, kRecursivePasses> per_pass{};
    for (int t = 0; t < kRecursivePasses; ++t)
      per_pass[static_cast<std::size_t>(t)] =
          manual_head(m, h.prefix, rs[static_cast<std::size_t>(t)]);
    auto collected = collect_outputs(per_pass, table, h.field);
    auto idx = table.hemifield_indices(h.field);
    for (std::size_t r = 0; r < idx.size(); ++r)
      manual_vf[static_cast<std::size_t>(idx[r])] = collected[r];
  }
  for (int j = 0; j < 52; ++j)
    CHECK(got.vf[static_cast<std::size_t>(j)] ==
          doctest::Approx(manual_vf[static_cast<std::size_t>(j)]).epsilon(1e-12));
  double manual_md =
      estimate_md(manual_vf, ps.values(ps.find("md.mask_logits")));
  CHECK(got.md == doctest::Approx(manual_md).epsilon(1e-12));
}

TEST_CASE("collect_outputs selects kept slots by the schedule") {
  LocationTable table = LocationTable::builtin();
  SUBCASE("broadcasting the pass index yields the kept multiset") {
    std::array<std::array<double, 5>, 7> per_pass{};
    for (int t = 0; t < 7; ++t) per_pass[static_cast<std::size_t>(t)].fill(t + 1);
    auto out = collect_outputs(per_pass, table, Hemifield::superior);
    std::array<int, 8> hist{};
    for (double v : out) ++hist[static_cast<std::size_t>(v)];
    CHECK(hist == std::array<int, 8>{0, 5, 4, 4, 4, 4, 4, 1});
  }
  SUBCASE("an identity-ordered schedule concatenates kept prefixes") {
    // rewrite the schedule so hemifield-canonical order walks pass-major
    nlohmann::json root = nlohmann::json::parse(table.to_json_text());
    for (Hemifield h : {Hemifield::superior, Hemifield::inferior}) {
      auto idx = table.hemifield_indices(h);
      int pass = 1, slot = 0;
      for (int canonical : idx) {
        for (auto& e : root["locations"])
          if (e["index"] == canonical) {
            e["pass"] = pass;
            e["slot"] = slot;
          }
        if (++slot == kKeptSlots[static_cast<std::size_t>(pass - 1)]) {
          slot = 0;
          ++pass;
        }
      }
    }
    LocationTable identity = LocationTable::from_json_text(root.dump());
    std::array<std::array<double, 5>, 7> per_pass{};
    double v = 0;
    for (auto& row : per_pass)
      for (double& x : row) x = v++;
    auto out = collect_outputs(per_pass, identity, Hemifield::superior);
    std::vector<double> expect;
    for (int t = 0; t < 7; ++t)
      for (int s = 0; s < kKeptSlots[static_cast<std::size_t>(t)]; ++s)
        expect.push_back(per_pass[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)]);
    CHECK(std::vector<double>(out.begin(), out.end()) == expect);
  }
  SUBCASE("the inverse mapping recovers per-pass prefixes") {
    Rng rng(13);
    std::array<std::array<double, 5>, 7> per_pass{};
    for (auto& row : per_pass)
      for (double& x : row) x = rng.normal();
    auto out = collect_outputs(per_pass, table, Hemifield::inferior);
    auto idx = table.hemifield_indices(Hemifield::inferior);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const VfLocation& loc = table.at(idx[r]);
      CHECK(out[r] == per_pass[static_cast<std::size_t>(loc.pass - 1)]
                              [static_cast<std::size_t>(loc.slot)]);
    }
  }
}

TEST_CASE("estimate_md examples") {
  std::array<double, 52> vf{};
  SUBCASE("uniform logits on a constant field give that constant") {
    vf.fill(-7.25);
    std::vector<double> logits(52, 0.4);
    CHECK(estimate_md(vf, logits) == doctest::Approx(-7.25).epsilon(1e-12));
  }
  SUBCASE("a dominating logit selects its location") {
    for (int j = 0; j < 52; ++j) vf[static_cast<std::size_t>(j)] = j;
    std::vector<double> logits(52, 0.0);
    logits[37] = 500.0;  // effectively a hard max
    CHECK(estimate_md(vf, logits) == doctest::Approx(37.0).epsilon(1e-9));
  }
  SUBCASE("zero logits average the field") {
    double mean = 0;
    for (int j = 0; j < 52; ++j) {
      vf[static_cast<std::size_t>(j)] = (j + 1) / 52.0;
      mean += vf[static_cast<std::size_t>(j)];
    }
    mean /= 52;
    std::vector<double> logits(52, 0.0);
    CHECK(estimate_md(vf, logits) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("baselines use a fixed uniform mask") {
  LocationTable table = LocationTable::builtin();
  ModelVariant lin = build_baseline(ModelKind::linear, table, 2);
  Rng rng(41);
  RnflVector x = random_rnfl(rng);
  Prediction p = lin.predict(x);
  double mean = 0;
  for (double v : p.vf) mean += v;
  CHECK(p.md == doctest::Approx(mean / 52).epsilon(1e-12));
}

TEST_CASE("full-model gradients match finite differences") {
  LocationTable table = LocationTable::builtin();
  ModelVariant m = build_retinervenet(tiny_subnet(), table, 6);
  std::vector<double> rho = std::vector<double>(52, 1.0 / 52);
  TrainingPlan plan = make_training_plan(m, rho, 0.3);
  Workspace ws;
  plan.graph.prepare(ws);
  Rng rng(51);
  std::vector<double> x(kRnflPoints), y(52);
  for (double& v : x) v = rng.normal();
  for (double& v : y) v = rng.normal() * 3;
  double z = rng.normal();
  auto run = [&]() {
    auto xs = plan.graph.input_values(ws, plan.x_sup);
    auto xi = plan.graph.input_values(ws, plan.x_inf);
    std::copy(x.begin(), x.begin() + 384, xs.begin());
    std::copy(x.begin() + 384, x.end(), xi.begin());
    std::copy(y.begin(), y.end(), plan.graph.input_values(ws, plan.y).begin());
    plan.graph.input_values(ws, plan.z)[0] = z;
    plan.graph.forward(ws, m.params(), plan.loss);
    return plan.graph.values(ws, plan.loss)[0];
  };
  run();
  std::vector<double> analytic;
  plan.graph.backward(ws, m.params(), analytic, plan.loss, 1.0);
  std::vector<double> fd = retinn::testing::fd_param_gradient(m.params(), run);
  CHECK(retinn::testing::count_grad_mismatches(analytic, fd) == 0);
}

TEST_CASE("checkpoint round trip preserves everything") {
  LocationTable table = LocationTable::builtin();
  ModelVariant m = build_retinervenet(tiny_subnet(), table, 8);
  m.hyper() = {0.25, 0.75, 5.0};
  m.validation_metrics().mae[Group::early] = 3.31;
  m.validation_metrics().md_mae[Group::advanced] = 11.26;
  Rng rng(19);
  for (double& v : m.params().data()) v = rng.normal();
  std::vector<double> norm_mean(kRnflPoints), norm_std(kRnflPoints, 1.0);
  for (double& v : norm_mean) v = rng.uniform(60, 100);
  m.normalization().mean = norm_mean;
  m.normalization().stdev = norm_std;

  fs::path p = fs::temp_directory_path() / "model_rt.ckpt";
  save_checkpoint(m, p);
  ModelVariant back = load_checkpoint(p);
  CHECK(back.kind() == ModelKind::retinervenet);
  CHECK(back.params().data() == m.params().data());
  CHECK(back.hyper().alpha == 0.25);
  CHECK(back.hyper().beta == 0.75);
  CHECK(back.normalization().mean == norm_mean);
  CHECK(*back.validation_metrics().mae[Group::early] == 3.31);
  CHECK(*back.validation_metrics().md_mae[Group::advanced] == 11.26);
  CHECK(!back.validation_metrics().mae[Group::moderate].has_value());

  RnflVector x = random_rnfl(rng);
  Prediction a = m.predict(x);
  Prediction b = back.predict(x);
  CHECK(a.vf == b.vf);
  CHECK(a.md == b.md);
}

TEST_CASE("checkpoint corruption is detected") {
  LocationTable table = LocationTable::builtin();
  ModelVariant m = build_baseline(ModelKind::linear, table, 9);
  fs::path p = fs::temp_directory_path() / "model_bad.ckpt";
  save_checkpoint(m, p);

  SUBCASE("flipped payload byte fails the checksum") {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-9, std::ios::end);
    char c;
    f.seekg(-9, std::ios::end);
    f.get(c);
    f.seekp(-9, std::ios::end);
    c = static_cast<char>(c ^ 0x40);
    f.put(c);
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(p), doctest::Contains("checksum"), DataError);
  }
  SUBCASE("truncated payload is rejected") {
    auto size = fs::file_size(p);
    fs::resize_file(p, size - 16);
    CHECK_THROWS_WITH_AS(load_checkpoint(p), doctest::Contains("truncated"), DataError);
  }
}

TEST_CASE("model kind names round trip") {
  for (ModelKind k : {ModelKind::retinervenet, ModelKind::linear,
                      ModelKind::fully_connected, ModelKind::vanilla_conv})
    CHECK(model_kind_from_name(model_kind_name(k)) == k);
  CHECK_THROWS_AS(model_kind_from_name("mlp"), ConfigError);
}
