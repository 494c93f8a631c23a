#include "retinn/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "retinn/common.hpp"
#include "retinn/data.hpp"
#include "retinn/ensemble.hpp"
#include "retinn/eval.hpp"
#include "retinn/model.hpp"
#include "retinn/trainer.hpp"

namespace retinn {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<double> parse_number_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (...) {
      throw ConfigError(std::string("cannot parse ") + what + " entry '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError(std::string(what) + " list is empty");
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (double v : parse_number_list(text, "seed")) {
    if (v < 0 || v != std::floor(v))
      throw ConfigError("seeds must be non-negative integers");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

// Collects resolved options, input files and produced artifacts, then writes
// the manifest next to the outputs.
struct ManifestWriter {
  std::string command;
  json config = json::object();
  json inputs = json::object();
  json artifacts = json::array();
  std::uint64_t seed = 0;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  void input(const fs::path& p) { inputs[p.string()] = hex64(fnv1a64_file(p)); }
  void artifact(const fs::path& p) {
    artifacts.push_back({{"path", p.string()}, {"hash", hex64(fnv1a64_file(p))}});
  }
  void write(const fs::path& path) {
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string cfg_text = config.dump();
    json root = {{"schema_version", 1},
                 {"version", kVersion},
                 {"command", command},
                 {"config", config},
                 {"config_hash", hex64(fnv1a64(cfg_text.data(), cfg_text.size()))},
                 {"inputs", inputs},
                 {"seed", seed},
                 {"artifacts", artifacts},
                 {"wall_clock_seconds", secs}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path.string());
    out << root.dump(2) << "\n";
  }
};

// JSON config file support: file values fill in options the command line left
// at their defaults.
json load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
  }
  if (!j.contains("schema_version") || j["schema_version"] != 1)
    throw ConfigError("config file missing or unsupported schema_version");
  return j;
}

template <class T>
void config_fill(const CLI::App* cmd, const json& cfg, const std::string& key, T& var) {
  if (!cfg.contains(key)) return;
  if (cmd->count("--" + key) > 0) return;  // explicit flag wins
  try {
    var = cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

int default_workers() {
  if (const char* env = std::getenv("RETINN_WORKERS")) {
    int w = std::atoi(env);
    if (w >= 1) return w;
  }
  return 1;
}

LocationTable locations_from_flag(const std::string& path) {
  return path.empty() ? LocationTable::builtin() : LocationTable::load(path);
}

struct LoadedData {
  std::vector<PairedExam> exams;
  std::size_t parsed = 0;
  std::size_t rejected = 0;
};

LoadedData load_filtered(const fs::path& path) {
  LoadedData d;
  std::vector<PairedExam> raw = parse_exams(path);
  d.parsed = raw.size();
  FilterResult fr = reliability_filter(raw);
  d.rejected = fr.rejected.size();
  d.exams = std::move(fr.kept);
  return d;
}

// --------------------------------------------------------------------------

int cmd_synth(const std::vector<std::string>& args);
int cmd_train(const std::vector<std::string>& args);
int cmd_grid(const std::vector<std::string>& args);
int cmd_ensemble(const std::vector<std::string>& args);
int cmd_eval(const std::vector<std::string>& args);
int cmd_predict(const std::vector<std::string>& args);

int dispatch(const std::vector<std::string>& args) {
  if (args.empty()) {
    std::cout << "retinn " << kVersion
              << " — visual-field estimation from RNFL thickness\n"
                 "commands: synth train grid ensemble eval predict\n"
                 "run 'retinn <command> --help' for flags\n";
    return 0;
  }
  const std::string& cmd = args[0];
  std::vector<std::string> rest(args.begin() + 1, args.end());
  if (cmd == "synth") return cmd_synth(rest);
  if (cmd == "train") return cmd_train(rest);
  if (cmd == "grid") return cmd_grid(rest);
  if (cmd == "ensemble") return cmd_ensemble(rest);
  if (cmd == "eval") return cmd_eval(rest);
  if (cmd == "predict") return cmd_predict(rest);
  if (cmd == "--help" || cmd == "-h") return dispatch({});
  throw ConfigError("unknown command: '" + cmd + "'");
}

int parse_or_exit(CLI::App& app, const std::vector<std::string>& args) {
  // CLI11 wants reversed argv-style input
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }
  return -1;  // continue
}

int cmd_synth(const std::vector<std::string>& args) {
  CLI::App app{"generate a synthetic exam file"};
  int n = 1000;
  std::uint64_t seed = 1;
  std::string mix = "0.70,0.15,0.10,0.05";
  std::string out_path;
  std::string config_path;
  app.add_option("--n", n, "number of exams");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--mix", mix, "per-interval target proportions (4 values)");
  app.add_option("--out", out_path, "output exam file (JSON lines)")->required();
  app.add_option("--config", config_path, "JSON config file");
  if (int rc = parse_or_exit(app, args); rc >= 0) return rc;
  if (!config_path.empty()) {
    json cfg = load_config_file(config_path);
    config_fill(&app, cfg, "n", n);
    config_fill(&app, cfg, "seed", seed);
    config_fill(&app, cfg, "mix", mix);
  }

  ManifestWriter mw;
  mw.command = "synth";
  mw.seed = seed;
  std::vector<double> mixes = parse_number_list(mix, "mix");
  if (mixes.size() != 4) throw ConfigError("mix needs exactly 4 proportions");
  SynthConfig sc;
  sc.n = n;
  sc.seed = seed;
  std::copy(mixes.begin(), mixes.end(), sc.defect_mix.begin());
  mw.config = {{"n", n}, {"seed", seed}, {"mix", mix}, {"out", out_path}};

  LocationTable table = LocationTable::builtin();
  std::vector<PairedExam> exams = synth_generate(sc, table);
  write_exams(out_path, exams);
  mw.artifact(out_path);
  mw.write(fs::path(out_path).string() + ".manifest.json");
  std::cout << "wrote " << exams.size() << " exams to " << out_path << "\n";
  return 0;
}

TrainConfig train_config_from_flags(double alpha, double beta, double gamma,
                                    int epochs, int patience, int batch, double lr,
                                    const std::string& seeds) {
  TrainConfig cfg;
  cfg.alpha = alpha;
  cfg.beta = beta;
  cfg.gamma = gamma;
  cfg.max_epochs = epochs;
  cfg.patience = patience;
  cfg.batch_size = batch;
  cfg.learning_rate = lr;
  cfg.seeds = parse_seed_list(seeds);
  cfg.validate();
  return cfg;
}

ModelConfig model_config_from_kind(const std::string& kind_name) {
  ModelConfig mc;
  mc.kind = model_kind_from_name(kind_name);
  switch (mc.kind) {
    case ModelKind::retinervenet: mc.subnet = reference_retinn_subnet(); break;
    case ModelKind::vanilla_conv: mc.subnet = reference_vanilla_subnet(); break;
    default: break;
  }
  return mc;
}

int cmd_train(const std::vector<std::string>& args) {
  CLI::App app{"train one variant and write its checkpoint"};
  std::string data_path, out_dir, config_path;
  std::string kind = "retinervenet";
  double alpha = 0.0, beta = 0.0, gamma = 5.0, lr = 1e-3;
  int epochs = 2000, patience = 50, batch = 256;
  std::uint64_t split_seed = 1;
  std::string fractions = "0.6,0.2,0.2";
  std::string run_seeds = "1";
  app.add_option("--data", data_path, "exam file")->required();
  app.add_option("--split-seed", split_seed, "patient split seed");
  app.add_option("--fractions", fractions, "train,val,test fractions");
  app.add_option("--kind", kind, "retinervenet|linear|fully_connected|vanilla_conv");
  app.add_option("--alpha", alpha, "interval reweighting strength");
  app.add_option("--beta", beta, "MD-loss tradeoff");
  app.add_option("--gamma", gamma, "location weight spread");
  app.add_option("--epochs", epochs, "maximum epochs");
  app.add_option("--patience", patience, "early stopping patience");
  app.add_option("--batch", batch, "batch size");
  app.add_option("--lr", lr, "learning rate");
  app.add_option("--run-seeds", run_seeds, "run seeds; best run is kept");
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--out", out_dir, "output directory")->required();
  if (int rc = parse_or_exit(app, args); rc >= 0) return rc;
  if (!config_path.empty()) {
    json cfg = load_config_file(config_path);
    config_fill(&app, cfg, "split-seed", split_seed);
    config_fill(&app, cfg, "fractions", fractions);
    config_fill(&app, cfg, "kind", kind);
    config_fill(&app, cfg, "alpha", alpha);
    config_fill(&app, cfg, "beta", beta);
    config_fill(&app, cfg, "gamma", gamma);
    config_fill(&app, cfg, "epochs", epochs);
    config_fill(&app, cfg, "patience", patience);
    config_fill(&app, cfg, "batch", batch);
    config_fill(&app, cfg, "lr", lr);
    config_fill(&app, cfg, "run-seeds", run_seeds);
  }

  ManifestWriter mw;
  mw.command = "train";
  mw.seed = split_seed;
  mw.input(data_path);
  if (!config_path.empty()) mw.input(config_path);
  mw.config = {{"data", data_path}, {"split-seed", split_seed},
               {"fractions", fractions}, {"kind", kind},
               {"alpha", alpha},     {"beta", beta},
               {"gamma", gamma},     {"epochs", epochs},
               {"patience", patience}, {"batch", batch},
               {"lr", lr},           {"run-seeds", run_seeds},
               {"out", out_dir}};

  std::vector<double> fr = parse_number_list(fractions, "fractions");
  if (fr.size() != 3) throw ConfigError("fractions needs 3 values");

  LoadedData data = load_filtered(data_path);
  Splits splits = split_by_patient(data.exams, {fr[0], fr[1], fr[2]}, split_seed);

  TrainConfig cfg =
      train_config_from_flags(alpha, beta, gamma, epochs, patience, batch, lr, run_seeds);
  ModelConfig mc = model_config_from_kind(kind);
  LocationTable table = LocationTable::builtin();

  std::vector<TrainRun> runs;
  for (std::uint64_t seed : cfg.seeds) {
    ModelVariant model(mc, table, seed);
    TrainHistory hist = train(model, splits.train, splits.val, cfg, seed);
    runs.push_back({std::move(model), std::move(hist)});
  }
  std::size_t best = select_best_run(runs);

  fs::create_directories(out_dir);
  fs::path ckpt = fs::path(out_dir) / "checkpoint.ckpt";
  fs::path hist_path = fs::path(out_dir) / "history.json";
  save_checkpoint(runs[best].model, ckpt);
  std::ofstream hist_out(hist_path);
  hist_out << runs[best].history.to_json_text();
  hist_out.close();
  mw.artifact(ckpt);
  mw.artifact(hist_path);
  mw.write(fs::path(out_dir) / "manifest.json");
  std::cout << "trained " << kind << " (" << runs[best].model.param_count()
            << " parameters), best run seed " << runs[best].history.seed
            << ", best val loss " << runs[best].history.best_val_loss << ", "
            << data.rejected << " exams filtered\n";
  return 0;
}

int cmd_grid(const std::vector<std::string>& args) {
  CLI::App app{"train the (alpha, beta) grid and write the variant registry"};
  std::string data_path, out_dir, config_path;
  std::string grid = "0.01,0.25,0.5,0.75,0.99";
  double gamma = 5.0, lr = 1e-3;
  int epochs = 2000, patience = 50, batch = 256;
  std::uint64_t split_seed = 1;
  std::string seeds = "1,2,3,4,5";
  int workers = default_workers();
  app.add_option("--data", data_path, "exam file")->required();
  app.add_option("--split-seed", split_seed, "patient split seed");
  app.add_option("--grid", grid, "comma list G; the grid is G x G");
  app.add_option("--gamma", gamma, "location weight spread");
  app.add_option("--epochs", epochs, "maximum epochs");
  app.add_option("--patience", patience, "early stopping patience");
  app.add_option("--batch", batch, "batch size");
  app.add_option("--lr", lr, "learning rate");
  app.add_option("--seeds", seeds, "run seeds per grid point");
  app.add_option("--workers", workers, "parallel grid workers");
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--out", out_dir, "registry directory")->required();
  if (int rc = parse_or_exit(app, args); rc >= 0) return rc;
  if (!config_path.empty()) {
    json cfg = load_config_file(config_path);
    config_fill(&app, cfg, "split-seed", split_seed);
    config_fill(&app, cfg, "grid", grid);
    config_fill(&app, cfg, "gamma", gamma);
    config_fill(&app, cfg, "epochs", epochs);
    config_fill(&app, cfg, "patience", patience);
    config_fill(&app, cfg, "batch", batch);
    config_fill(&app, cfg, "lr", lr);
    config_fill(&app, cfg, "seeds", seeds);
    config_fill(&app, cfg, "workers", workers);
  }

  ManifestWriter mw;
  mw.command = "grid";
  mw.seed = split_seed;
  mw.input(data_path);
  if (!config_path.empty()) mw.input(config_path);
  mw.config = {{"data", data_path}, {"split-seed", split_seed}, {"grid", grid},
               {"gamma", gamma},    {"epochs", epochs},         {"patience", patience},
               {"batch", batch},    {"lr", lr},                 {"seeds", seeds},
               {"workers", workers}, {"out", out_dir}};

  std::vector<double> g = parse_number_list(grid, "grid");
  std::vector<GridPoint> points;
  for (double a : g)
    for (double b : g) points.push_back({a, b});

  LoadedData data = load_filtered(data_path);
  Splits splits = split_by_patient(data.exams, {0.6, 0.2, 0.2}, split_seed);

  TrainConfig cfg =
      train_config_from_flags(0.0, 0.0, gamma, epochs, patience, batch, lr, seeds);
  LocationTable table = LocationTable::builtin();
  ModelConfig mc = model_config_from_kind("retinervenet");

  Registry reg = run_grid(points, cfg, mc, table, splits.train, splits.val, workers);
  reg.save(out_dir);
  mw.artifact(fs::path(out_dir) / "index.json");
  mw.artifact(fs::path(out_dir) / "tradeoff.csv");
  for (const RegistryEntry& e : reg.entries)
    mw.artifact(fs::path(out_dir) / e.checkpoint_file);
  mw.write(fs::path(out_dir) / "manifest.json");
  std::cout << "registry with " << reg.entries.size() << " variants written to "
            << out_dir << "\n";
  return 0;
}

int cmd_ensemble(const std::vector<std::string>& args) {
  CLI::App app{"build the routed ensemble from a registry"};
  std::string registry_dir, val_data, out_path;
  app.add_option("--registry", registry_dir, "registry directory")->required();
  app.add_option("--val-data", val_data,
                 "recompute validation metrics on this exam file");
  app.add_option("--out", out_path, "ensemble spec output")->required();
  if (int rc = parse_or_exit(app, args); rc >= 0) return rc;

  ManifestWriter mw;
  mw.command = "ensemble";
  mw.input(fs::path(registry_dir) / "index.json");
  mw.config = {{"registry", registry_dir}, {"val-data", val_data}, {"out", out_path}};

  Registry reg = Registry::load(registry_dir);
  if (!val_data.empty()) {
    mw.input(val_data);
    std::vector<PairedExam> val = parse_exams(val_data);
    for (RegistryEntry& e : reg.entries) {
      ValidationMetrics vm = compute_validation_metrics(*e.model, val);
      e.val_mae = vm.mae;
      e.val_md_mae = vm.md_mae;
    }
  }
  EnsembleSpec spec = build_ensemble(reg);
  spec.save(out_path, reg);
  mw.artifact(out_path);
  mw.write(fs::path(out_path).string() + ".manifest.json");
  std::cout << "ensemble: router " << spec.router_id << ", experts "
            << spec.expert_ids[0] << "/" << spec.expert_ids[1] << "/"
            << spec.expert_ids[2] << "\n";
  return 0;
}

struct PredictorBundle {
  std::optional<ModelVariant> model;
  std::optional<Registry> registry;
  std::optional<EnsembleSpec> spec;

  PredictFn fn() const {
    if (model)
      return [this](const PairedExam& ex) { return model->predict(ex.rnfl); };
    return [this](const PairedExam& ex) {
      return ensemble_predict(*spec, *registry, ex);
    };
  }
};

PredictorBundle load_predictor(const std::string& model_path,
                               const std::string& ensemble_path,
                               const std::string& registry_dir, ManifestWriter& mw) {
  if (model_path.empty() == ensemble_path.empty())
    throw ConfigError("exactly one of --model and --ensemble is required");
  PredictorBundle b;
  if (!model_path.empty()) {
    mw.input(model_path);
    b.model = load_checkpoint(model_path);
  } else {
    if (registry_dir.empty())
      throw ConfigError("--ensemble requires --registry");
    mw.input(ensemble_path);
    mw.input(fs::path(registry_dir) / "index.json");
    b.spec = EnsembleSpec::load(ensemble_path);
    b.registry = Registry::load(registry_dir);
    for (const std::string& id :
         {b.spec->router_id, b.spec->expert_ids[0], b.spec->expert_ids[1],
          b.spec->expert_ids[2]})
      if (!b.registry->find(id))
        throw ConfigError("ensemble references variant '" + id +
                          "' missing from the registry");
  }
  return b;
}

int cmd_eval(const std::vector<std::string>& args) {
  CLI::App app{"evaluate a model or ensemble and write report files"};
  std::string model_path, ensemble_path, registry_dir, data_path, sector_map, report;
  std::string split;
  std::uint64_t split_seed = 1;
  app.add_option("--model", model_path, "model checkpoint");
  app.add_option("--ensemble", ensemble_path, "ensemble spec");
  app.add_option("--registry", registry_dir, "registry directory (for --ensemble)");
  app.add_option("--data", data_path, "exam file")->required();
  app.add_option("--sector-map", sector_map, "location table with sector assignments");
  app.add_option("--split", split, "evaluate only this part: train|val|test");
  app.add_option("--split-seed", split_seed, "patient split seed for --split");
  app.add_option("--report", report, "output prefix")->required();
  if (int rc = parse_or_exit(app, args); rc >= 0) return rc;

  ManifestWriter mw;
  mw.command = "eval";
  mw.seed = split_seed;
  mw.config = {{"model", model_path},   {"ensemble", ensemble_path},
               {"registry", registry_dir}, {"data", data_path},
               {"sector-map", sector_map}, {"split", split},
               {"split-seed", split_seed}, {"report", report}};

  PredictorBundle pred = load_predictor(model_path, ensemble_path, registry_dir, mw);
  mw.input(data_path);
  if (!sector_map.empty()) mw.input(sector_map);
  LocationTable table = locations_from_flag(sector_map);
  SectorMap sectors = SectorMap::from_table(table);

  std::vector<PairedExam> exams = parse_exams(data_path);
  if (!split.empty()) {
    FilterResult fr = reliability_filter(exams);
    Splits sp = split_by_patient(fr.kept, {0.6, 0.2, 0.2}, split_seed);
    if (split == "train") exams = std::move(sp.train);
    else if (split == "val") exams = std::move(sp.val);
    else if (split == "test") exams = std::move(sp.test);
    else throw ConfigError("--split must be train, val or test");
  }

  EvalReport rep = evaluate(pred.fn(), exams, sectors);
  fs::path json_path = report + ".json";
  fs::path csv_path = report + ".csv";
  fs::path hist_path = report + "_md_histogram.csv";
  if (fs::path(report).has_parent_path())
    fs::create_directories(fs::path(report).parent_path());
  std::ofstream(json_path) << rep.to_json_text();
  std::ofstream(csv_path) << rep.to_csv_text();
  std::ofstream(hist_path) << md_histogram_csv(exams);
  mw.artifact(json_path);
  mw.artifact(csv_path);
  mw.artifact(hist_path);
  mw.write(report + ".manifest.json");
  std::cout << "evaluated " << exams.size() << " exams: overall MAE "
            << rep.overall_mae.mae << " dB, MD MAE " << rep.md_mae.mae << " dB\n";
  return 0;
}

int cmd_predict(const std::vector<std::string>& args) {
  CLI::App app{"predict visual fields for RNFL vectors"};
  std::string model_path, ensemble_path, registry_dir, rnfl_file, out_path;
  app.add_option("--model", model_path, "model checkpoint");
  app.add_option("--ensemble", ensemble_path, "ensemble spec");
  app.add_option("--registry", registry_dir, "registry directory (for --ensemble)");
  app.add_option("--rnfl-file", rnfl_file,
                 "JSON lines, one {\"id\", \"rnfl\": [768]} object per line")
      ->required();
  app.add_option("--out", out_path, "predictions file")->required();
  if (int rc = parse_or_exit(app, args); rc >= 0) return rc;

  ManifestWriter mw;
  mw.command = "predict";
  mw.config = {{"model", model_path}, {"ensemble", ensemble_path},
               {"registry", registry_dir}, {"rnfl-file", rnfl_file}, {"out", out_path}};
  PredictorBundle pred = load_predictor(model_path, ensemble_path, registry_dir, mw);
  mw.input(rnfl_file);

  std::ifstream in(rnfl_file);
  if (!in) throw DataError("cannot open RNFL file: " + rnfl_file);
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot write predictions: " + out_path);
  PredictFn fn = pred.fn();
  std::string line;
  std::size_t line_no = 0, count = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!obj.contains("rnfl") || !obj["rnfl"].is_array() ||
        obj["rnfl"].size() != kRnflPoints)
      throw DataError("line " + std::to_string(line_no) +
                      ": field 'rnfl': expected 768 values");
    PairedExam ex;
    ex.rnfl.values = obj["rnfl"].get<std::vector<double>>();
    for (double v : ex.rnfl.values)
      if (!std::isfinite(v) || v < 0)
        throw DataError("line " + std::to_string(line_no) +
                        ": field 'rnfl': values must be finite and non-negative");
    std::string id = obj.contains("id") && obj["id"].is_string()
                         ? obj["id"].get<std::string>()
                         : std::to_string(line_no);
    Prediction p = fn(ex);
    json rec = {{"id", id}, {"vf", p.vf}, {"md", p.md}};
    out << rec.dump() << "\n";
    ++count;
  }
  out.close();
  mw.artifact(out_path);
  mw.write(out_path + ".manifest.json");
  std::cout << "predicted " << count << " fields to " << out_path << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  auto fail = [](const char* category, const std::string& message, int code) {
    json err = {{"error", {{"category", category}, {"message", message}}}};
    std::cerr << err.dump() << "\n";
    return code;
  };
  try {
    return dispatch(args);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const DataError& e) {
    return fail("data", e.what(), 3);
  } catch (const TrainingError& e) {
    return fail("training", e.what(), 4);
  } catch (const InferenceError& e) {
    return fail("inference", e.what(), 5);
  } catch (const std::exception& e) {
    return fail("config", e.what(), 2);
  }
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace retinn
