#include "retinn/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

namespace retinn {

using nlohmann::json;

void TrainConfig::validate() const {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  if (beta < 0.0 || beta > 1.0) throw ConfigError("beta must lie in [0, 1]");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (patience < 0) throw ConfigError("patience must be non-negative");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

namespace {

struct PreparedSet {
  std::size_t n = 0;
  std::vector<double> x;        // n x 768, normalized
  std::vector<double> y;        // n x 52
  std::vector<double> z;        // n
  std::vector<int> interval;    // 1..4
  std::vector<Group> group;
  std::array<int, 4> interval_counts{};
};

PreparedSet prepare(const std::vector<PairedExam>& exams, const ModelVariant& model) {
  PreparedSet s;
  s.n = exams.size();
  s.x.resize(s.n * kRnflPoints);
  s.y.resize(s.n * kVfLocations);
  s.z.resize(s.n);
  s.interval.resize(s.n);
  s.group.resize(s.n);
  std::vector<double> norm;
  for (std::size_t i = 0; i < s.n; ++i) {
    model.normalize(exams[i].rnfl, norm);
    std::copy(norm.begin(), norm.end(), s.x.begin() + i * kRnflPoints);
    for (int j = 0; j < kVfLocations; ++j)
      s.y[i * kVfLocations + j] = exams[i].vf.td[static_cast<std::size_t>(j)];
    s.z[i] = exams[i].vf.md;
    s.interval[i] = assign_interval(exams[i].vf.md);
    s.group[i] = assign_group(exams[i].vf.md);
    ++s.interval_counts[static_cast<std::size_t>(s.interval[i] - 1)];
  }
  return s;
}

void set_exam_inputs(const TrainingPlan& plan, Workspace& ws, const PreparedSet& s,
                     std::size_t i) {
  auto xs = plan.graph.input_values(ws, plan.x_sup);
  auto xi = plan.graph.input_values(ws, plan.x_inf);
  const double* x = s.x.data() + i * kRnflPoints;
  std::copy(x, x + 384, xs.begin());
  std::copy(x + 384, x + kRnflPoints, xi.begin());
  auto y = plan.graph.input_values(ws, plan.y);
  std::copy(s.y.begin() + i * kVfLocations, s.y.begin() + (i + 1) * kVfLocations,
            y.begin());
  plan.graph.input_values(ws, plan.z)[0] = s.z[i];
}

// weighted composite loss over a whole prepared set (forward only)
double composite_loss(const TrainingPlan& plan, Workspace& ws,
                      const ParameterStore& params, const PreparedSet& s,
                      const std::vector<double>& lambda) {
  double total = 0.0;
  for (std::size_t i = 0; i < s.n; ++i) {
    set_exam_inputs(plan, ws, s, i);
    plan.graph.forward(ws, params, plan.loss);
    total += lambda[i] * plan.graph.values(ws, plan.loss)[0];
  }
  return total;
}

GroupStats group_mae_of(const TrainingPlan& plan, Workspace& ws,
                        const ParameterStore& params, const PreparedSet& s) {
  std::array<double, 3> sum{};
  std::array<std::size_t, 3> count{};
  for (std::size_t i = 0; i < s.n; ++i) {
    set_exam_inputs(plan, ws, s, i);
    plan.graph.forward(ws, params, plan.vf);
    auto vf = plan.graph.values(ws, plan.vf);
    double acc = 0.0;
    for (int j = 0; j < kVfLocations; ++j)
      acc += std::abs(s.y[i * kVfLocations + j] - vf[static_cast<std::size_t>(j)]);
    std::size_t g = static_cast<std::size_t>(s.group[i]);
    sum[g] += acc / kVfLocations;
    ++count[g];
  }
  GroupStats out;
  for (std::size_t g = 0; g < 3; ++g)
    if (count[g] > 0) out[static_cast<Group>(g)] = sum[g] / static_cast<double>(count[g]);
  return out;
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

TrainHistory train(ModelVariant& model, const std::vector<PairedExam>& train_set,
                   const std::vector<PairedExam>& val_set, const TrainConfig& cfg,
                   std::uint64_t run_seed) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  if (val_set.empty()) throw ConfigError("validation set is empty");

  // per-location z-score statistics from the training set
  Normalization norm;
  norm.mean.assign(kRnflPoints, 0.0);
  norm.stdev.assign(kRnflPoints, 0.0);
  for (const PairedExam& ex : train_set)
    for (int p = 0; p < kRnflPoints; ++p)
      norm.mean[static_cast<std::size_t>(p)] += ex.rnfl.values[static_cast<std::size_t>(p)];
  for (double& m : norm.mean) m /= static_cast<double>(train_set.size());
  for (const PairedExam& ex : train_set)
    for (int p = 0; p < kRnflPoints; ++p) {
      double d = ex.rnfl.values[static_cast<std::size_t>(p)] -
                 norm.mean[static_cast<std::size_t>(p)];
      norm.stdev[static_cast<std::size_t>(p)] += d * d;
    }
  for (double& s : norm.stdev) {
    s = std::sqrt(s / static_cast<double>(train_set.size()));
    if (s < 1e-12) s = 1.0;
  }
  model.normalization() = norm;
  model.hyper() = {cfg.alpha, cfg.beta, cfg.gamma};

  PreparedSet tr = prepare(train_set, model);
  PreparedSet va = prepare(val_set, model);

  std::vector<double> rho = location_weights(model.locations(), cfg.gamma);
  std::vector<double> lambda =
      sample_weights(tr.interval, tr.interval_counts, cfg.alpha);
  std::vector<double> lambda_val =
      sample_weights(va.interval, va.interval_counts, cfg.alpha);

  TrainingPlan plan = make_training_plan(model, rho, cfg.beta);
  Workspace ws;
  plan.graph.prepare(ws);

  Adam adam({cfg.learning_rate, cfg.adam.beta1, cfg.adam.beta2, cfg.adam.eps},
            model.params().total_count());
  std::vector<double> grads(model.params().total_count(), 0.0);

  TrainHistory hist;
  hist.seed = run_seed;
  Rng shuffle_rng(run_seed);
  std::vector<std::size_t> order(tr.n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> best_params;
  double best_val = std::numeric_limits<double>::infinity();
  int since_improve = 0;
  double n_total = static_cast<double>(tr.n);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < tr.n; start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(tr.n, start + static_cast<std::size_t>(cfg.batch_size));
      double batch_scale = n_total / static_cast<double>(end - start);
      std::fill(grads.begin(), grads.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        std::size_t i = order[k];
        set_exam_inputs(plan, ws, tr, i);
        plan.graph.forward(ws, model.params(), plan.loss);
        double w = lambda[i] * batch_scale;
        batch_loss += w * plan.graph.values(ws, plan.loss)[0];
        plan.graph.backward(ws, model.params(), grads, plan.loss, w, true);
      }
      if (!std::isfinite(batch_loss))
        throw TrainingError("non-finite loss (epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batches) + ")");
      adam.step(model.params(), grads);
      epoch_loss += batch_loss;
      ++batches;
    }

    EpochRecord rec;
    rec.train_loss = epoch_loss / std::max(1, batches);
    rec.val_loss = composite_loss(plan, ws, model.params(), va, lambda_val);
    rec.val_mae = group_mae_of(plan, ws, model.params(), va);
    hist.epochs.push_back(rec);

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      hist.best_epoch = epoch;
      best_params = model.params().data();
      since_improve = 0;
    } else {
      ++since_improve;
      if (since_improve > cfg.patience) {
        hist.stop_reason = "early_stopping";
        break;
      }
    }
  }
  if (hist.stop_reason.empty()) hist.stop_reason = "max_epochs";
  if (!best_params.empty()) model.params().data() = best_params;
  hist.best_val_loss = best_val;

  model.validation_metrics() = compute_validation_metrics(model, val_set);
  return hist;
}

double validation_loss(const ModelVariant& model,
                       const std::vector<PairedExam>& val_set) {
  if (val_set.empty()) throw ConfigError("validation set is empty");
  PreparedSet va = prepare(val_set, model);
  std::vector<double> rho = location_weights(model.locations(), model.hyper().gamma);
  std::vector<double> lambda =
      sample_weights(va.interval, va.interval_counts, model.hyper().alpha);
  TrainingPlan plan = make_training_plan(model, rho, model.hyper().beta);
  Workspace ws;
  plan.graph.prepare(ws);
  return composite_loss(plan, ws, model.params(), va, lambda);
}

ValidationMetrics compute_validation_metrics(const ModelVariant& model,
                                             const std::vector<PairedExam>& val_set) {
  std::array<double, 3> mae_sum{}, md_sum{};
  std::array<std::size_t, 3> count{};
  Workspace ws;
  std::vector<double> norm;
  for (const PairedExam& ex : val_set) {
    model.normalize(ex.rnfl, norm);
    Prediction p = model.predict_with(ws, norm);
    std::size_t g = static_cast<std::size_t>(assign_group(ex.vf.md));
    double acc = 0.0;
    for (int j = 0; j < kVfLocations; ++j)
      acc += std::abs(ex.vf.td[static_cast<std::size_t>(j)] - p.vf[static_cast<std::size_t>(j)]);
    mae_sum[g] += acc / kVfLocations;
    md_sum[g] += std::abs(ex.vf.md - p.md);
    ++count[g];
  }
  ValidationMetrics vm;
  for (std::size_t g = 0; g < 3; ++g)
    if (count[g] > 0) {
      vm.mae[static_cast<Group>(g)] = mae_sum[g] / static_cast<double>(count[g]);
      vm.md_mae[static_cast<Group>(g)] = md_sum[g] / static_cast<double>(count[g]);
    }
  return vm;
}

std::size_t select_best_run(const std::vector<TrainRun>& runs) {
  if (runs.empty()) throw ConfigError("select_best_run needs at least one run");
  std::size_t best = 0;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    double a = runs[i].history.best_val_loss;
    double b = runs[best].history.best_val_loss;
    if (a < b || (a == b && runs[i].history.seed < runs[best].history.seed)) best = i;
  }
  return best;
}

std::string TrainHistory::to_json_text() const {
  json epochs_j = json::array();
  for (const EpochRecord& r : epochs)
    epochs_j.push_back({{"train_loss", r.train_loss},
                        {"val_loss", r.val_loss},
                        {"val_mae", group_stats_to_json(r.val_mae)}});
  json root = {{"schema_version", 1},
               {"seed", seed},
               {"best_epoch", best_epoch},
               {"best_val_loss", best_val_loss},
               {"stop_reason", stop_reason},
               {"epochs", epochs_j}};
  return root.dump(2) + "\n";
}

std::string grid_point_id(double alpha, double beta) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "a%g_b%g", alpha, beta);
  return std::string(buf);
}

const RegistryEntry* Registry::find(const std::string& id) const {
  for (const RegistryEntry& e : entries)
    if (e.id == id) return &e;
  return nullptr;
}

Registry run_grid(const std::vector<GridPoint>& grid, const TrainConfig& base_cfg,
                  const ModelConfig& model_cfg, const LocationTable& table,
                  const std::vector<PairedExam>& train_set,
                  const std::vector<PairedExam>& val_set, int workers) {
  if (grid.empty()) throw ConfigError("grid is empty");
  base_cfg.validate();
  if (base_cfg.seeds.empty()) throw ConfigError("grid training needs run seeds");
  {
    std::vector<std::uint64_t> s = base_cfg.seeds;
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end())
      throw ConfigError("run seeds must be distinct");
  }

  std::vector<GridPoint> points = grid;
  std::sort(points.begin(), points.end(), [](const GridPoint& a, const GridPoint& b) {
    if (a.alpha != b.alpha) return a.alpha < b.alpha;
    return a.beta < b.beta;
  });

  Registry reg;
  reg.gamma = base_cfg.gamma;
  reg.entries.resize(points.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mx;

  auto work = [&]() {
    for (;;) {
      std::size_t idx = next.fetch_add(1);
      if (idx >= points.size()) return;
      try {
        TrainConfig cfg = base_cfg;
        cfg.alpha = points[idx].alpha;
        cfg.beta = points[idx].beta;
        std::vector<TrainRun> runs;
        runs.reserve(cfg.seeds.size());
        for (std::uint64_t seed : cfg.seeds) {
          ModelVariant model(model_cfg, table, seed);
          TrainHistory h = train(model, train_set, val_set, cfg, seed);
          runs.push_back({std::move(model), std::move(h)});
        }
        std::size_t best = select_best_run(runs);
        RegistryEntry e;
        e.id = grid_point_id(cfg.alpha, cfg.beta);
        e.alpha = cfg.alpha;
        e.beta = cfg.beta;
        e.gamma = cfg.gamma;
        e.seeds = cfg.seeds;
        e.best_seed = runs[best].history.seed;
        e.best_val_loss = runs[best].history.best_val_loss;
        e.val_mae = runs[best].model.validation_metrics().mae;
        e.val_md_mae = runs[best].model.validation_metrics().md_mae;
        e.model = std::make_shared<ModelVariant>(std::move(runs[best].model));
        reg.entries[idx] = std::move(e);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mx);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  int w = std::max(1, std::min<int>(workers, static_cast<int>(points.size())));
  if (w == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < w; ++i) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return reg;
}

std::string Registry::tradeoff_csv() const {
  std::string out = "alpha,beta,group,val_mae,val_md_mae\n";
  char buf[160];
  for (const RegistryEntry& e : entries)
    for (int g = 0; g < 3; ++g) {
      Group gr = static_cast<Group>(g);
      if (!e.val_mae[gr] && !e.val_md_mae[gr]) continue;
      std::snprintf(buf, sizeof(buf), "%g,%g,%s,%.17g,%.17g\n", e.alpha, e.beta,
                    group_name(gr), e.val_mae[gr] ? *e.val_mae[gr] : NAN,
                    e.val_md_mae[gr] ? *e.val_md_mae[gr] : NAN);
      out += buf;
    }
  return out;
}

void Registry::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json variants = json::array();
  for (const RegistryEntry& e : entries) {
    if (!e.model) throw ConfigError("cannot persist a registry entry without a model");
    std::string file = e.id + ".ckpt";
    save_checkpoint(*e.model, dir / file);
    std::string hash = hex64(fnv1a64_file(dir / file));
    variants.push_back({{"id", e.id},
                        {"alpha", e.alpha},
                        {"beta", e.beta},
                        {"gamma", e.gamma},
                        {"seeds", e.seeds},
                        {"best_seed", e.best_seed},
                        {"best_val_loss", e.best_val_loss},
                        {"val_mae", group_stats_to_json(e.val_mae)},
                        {"val_md_mae", group_stats_to_json(e.val_md_mae)},
                        {"checkpoint", file},
                        {"checkpoint_hash", hash}});
  }
  json root = {{"schema_version", 1}, {"gamma", gamma}, {"variants", variants}};
  std::ofstream out(dir / "index.json");
  if (!out) throw DataError("cannot write registry index");
  out << root.dump(2) << "\n";
  std::ofstream csv(dir / "tradeoff.csv");
  csv << tradeoff_csv();
}

Registry Registry::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw DataError("cannot open registry index: " + (dir / "index.json").string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(std::string("registry index is not valid JSON: ") + e.what());
  }
  if (root.value("schema_version", 0) != 1)
    throw DataError("unsupported registry schema version");
  Registry reg;
  reg.gamma = root.at("gamma").get<double>();
  for (const json& v : root.at("variants")) {
    RegistryEntry e;
    e.id = v.at("id").get<std::string>();
    e.alpha = v.at("alpha").get<double>();
    e.beta = v.at("beta").get<double>();
    e.gamma = v.at("gamma").get<double>();
    e.seeds = v.at("seeds").get<std::vector<std::uint64_t>>();
    e.best_seed = v.at("best_seed").get<std::uint64_t>();
    e.best_val_loss = v.at("best_val_loss").get<double>();
    e.val_mae = group_stats_from_json(v.at("val_mae"));
    e.val_md_mae = group_stats_from_json(v.at("val_md_mae"));
    e.checkpoint_file = v.at("checkpoint").get<std::string>();
    e.checkpoint_hash = v.at("checkpoint_hash").get<std::string>();
    std::filesystem::path ckpt = dir / e.checkpoint_file;
    if (hex64(fnv1a64_file(ckpt)) != e.checkpoint_hash)
      throw DataError("registry checkpoint hash mismatch for variant " + e.id);
    e.model = std::make_shared<ModelVariant>(load_checkpoint(ckpt));
    reg.entries.push_back(std::move(e));
  }
  return reg;
}

}  // namespace retinn
