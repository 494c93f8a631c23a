#include "retinn/ensemble.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace retinn {

using nlohmann::json;

namespace {

bool eligible(const RegistryEntry& e) { return !e.is_basic(); }

bool lex_smaller(const RegistryEntry& a, const RegistryEntry& b) {
  if (a.alpha != b.alpha) return a.alpha < b.alpha;
  return a.beta < b.beta;
}

}  // namespace

std::string pick_router(const Registry& reg) {
  const RegistryEntry* best = nullptr;
  double best_mean = 0.0;
  for (const RegistryEntry& e : reg.entries) {
    if (!eligible(e)) continue;
    double sum = 0.0;
    int groups = 0;
    for (int g = 0; g < 3; ++g) {
      Group gr = static_cast<Group>(g);
      if (e.val_md_mae[gr]) {
        sum += *e.val_md_mae[gr];
        ++groups;
      }
    }
    if (groups == 0) continue;
    double mean = sum / groups;
    if (!best || mean < best_mean ||
        (mean == best_mean && lex_smaller(e, *best))) {
      best = &e;
      best_mean = mean;
    }
  }
  if (!best)
    throw ConfigError("registry has no eligible variant with validation MD metrics");
  return best->id;
}

Group route(const ModelVariant& router, const PairedExam& exam) {
  Prediction p = router.predict(exam.rnfl);
  if (!std::isfinite(p.md))
    throw InferenceError("router produced a non-finite MD estimate");
  return assign_group(p.md);
}

std::array<std::string, 3> pick_group_experts(const Registry& reg) {
  std::array<std::string, 3> out;
  for (int g = 0; g < 3; ++g) {
    Group gr = static_cast<Group>(g);
    const RegistryEntry* best = nullptr;
    for (const RegistryEntry& e : reg.entries) {
      if (!eligible(e) || !e.val_mae[gr]) continue;
      if (!best || *e.val_mae[gr] < *best->val_mae[gr] ||
          (*e.val_mae[gr] == *best->val_mae[gr] && lex_smaller(e, *best)))
        best = &e;
    }
    if (!best)
      throw ConfigError(std::string("no eligible variant has validation MAE for the ") +
                        group_name(gr) + " group");
    out[static_cast<std::size_t>(g)] = best->id;
  }
  return out;
}

EnsembleSpec build_ensemble(const Registry& reg) {
  EnsembleSpec spec;
  spec.router_id = pick_router(reg);
  spec.expert_ids = pick_group_experts(reg);
  const RegistryEntry* r = reg.find(spec.router_id);
  double sum = 0.0;
  int n = 0;
  for (int g = 0; g < 3; ++g)
    if (r->val_md_mae[static_cast<Group>(g)]) {
      sum += *r->val_md_mae[static_cast<Group>(g)];
      ++n;
    }
  spec.router_mean_md_mae = n ? sum / n : 0.0;
  for (int g = 0; g < 3; ++g) {
    const RegistryEntry* e = reg.find(spec.expert_ids[static_cast<std::size_t>(g)]);
    spec.expert_val_mae[static_cast<std::size_t>(g)] =
        e->val_mae[static_cast<Group>(g)] ? *e->val_mae[static_cast<Group>(g)] : 0.0;
  }
  return spec;
}

Prediction ensemble_predict(const EnsembleSpec& spec, const Registry& reg,
                            const PairedExam& exam) {
  const RegistryEntry* router = reg.find(spec.router_id);
  if (!router || !router->model)
    throw ConfigError("ensemble router '" + spec.router_id + "' is not in the registry");
  Group g = route(*router->model, exam);
  const RegistryEntry* expert = reg.find(spec.expert_ids[static_cast<std::size_t>(g)]);
  if (!expert || !expert->model)
    throw ConfigError("ensemble expert '" +
                      spec.expert_ids[static_cast<std::size_t>(g)] +
                      "' is not in the registry");
  return expert->model->predict(exam.rnfl);
}

std::string EnsembleSpec::to_json_text(const Registry& reg) const {
  auto hash_of = [&](const std::string& id) -> std::string {
    const RegistryEntry* e = reg.find(id);
    return e ? e->checkpoint_hash : "";
  };
  json experts, provenance_mae;
  for (int g = 0; g < 3; ++g) {
    experts[group_name(static_cast<Group>(g))] = {
        {"id", expert_ids[static_cast<std::size_t>(g)]},
        {"checkpoint_hash", hash_of(expert_ids[static_cast<std::size_t>(g)])}};
    provenance_mae[group_name(static_cast<Group>(g))] =
        expert_val_mae[static_cast<std::size_t>(g)];
  }
  json root = {{"schema_version", 1},
               {"router", {{"id", router_id}, {"checkpoint_hash", hash_of(router_id)}}},
               {"experts", experts},
               {"provenance",
                {{"router_mean_md_mae", router_mean_md_mae},
                 {"expert_val_mae", provenance_mae}}}};
  return root.dump(2) + "\n";
}

EnsembleSpec EnsembleSpec::from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("ensemble spec is not valid JSON: ") + e.what());
  }
  if (root.value("schema_version", 0) != 1)
    throw DataError("unsupported ensemble spec schema version");
  EnsembleSpec spec;
  spec.router_id = root.at("router").at("id").get<std::string>();
  for (int g = 0; g < 3; ++g)
    spec.expert_ids[static_cast<std::size_t>(g)] =
        root.at("experts").at(group_name(static_cast<Group>(g))).at("id").get<std::string>();
  if (root.contains("provenance")) {
    spec.router_mean_md_mae =
        root["provenance"].value("router_mean_md_mae", 0.0);
    if (root["provenance"].contains("expert_val_mae"))
      for (int g = 0; g < 3; ++g)
        spec.expert_val_mae[static_cast<std::size_t>(g)] =
            root["provenance"]["expert_val_mae"].value(group_name(static_cast<Group>(g)),
                                                       0.0);
  }
  return spec;
}

void EnsembleSpec::save(const std::filesystem::path& path, const Registry& reg) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write ensemble spec: " + path.string());
  out << to_json_text(reg);
}

EnsembleSpec EnsembleSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ensemble spec: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

}  // namespace retinn
