// Command-line front end: dataset generation, two-stage training, checkpoint
// evaluation, and grid sweeps, all reproducible from the recorded manifest.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adt/datasets.hpp"
#include "adt/errors.hpp"
#include "adt/evaluation.hpp"
#include "adt/model.hpp"
#include "adt/trainer.hpp"

#ifndef ADT_BUILD_ID
#define ADT_BUILD_ID "unknown"
#endif

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

// ---- config file -----------------------------------------------------------

// The documented key set. A config file may set any of these; command-line
// flags override the file; anything unset falls back to the built-in default
// and is reported as such at startup.
const std::set<std::string> kConfigKeys = {
    "lambda",          "eta",         "beta",           "auto_calibrate",
    "w_adloss",        "lr",          "batch_size",     "pretrain_epochs",
    "adversarial_epochs", "seed",     "arch",           "leaky_slope",
    "dropout",         "normalize_weights", "recalibrate_every",
    "checkpoint_every", "histogram_every"};

struct ConfigState {
  adt::TrainConfig tc;
  // weight-function fields are collected separately because WeightConfig
  // validates on construction
  double eta = -1.0;
  double beta = 1.0;
  bool auto_calibrate = true;
  bool normalize_weights = true;
  std::set<std::string> from_file;

  adt::TrainConfig finalize() const {
    adt::TrainConfig out = tc;
    out.weight_cfg = adt::WeightConfig(eta, beta, auto_calibrate, normalize_weights);
    return out;
  }
};

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw adt::ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

void apply_config_line(ConfigState& st, const std::string& key, const std::string& value) {
  if (!kConfigKeys.count(key))
    throw adt::ConfigError("unknown config key '" + key + "'");
  try {
    if (key == "lambda") st.tc.lambda = std::stod(value);
    else if (key == "eta") st.eta = std::stod(value);
    else if (key == "beta") st.beta = std::stod(value);
    else if (key == "auto_calibrate") st.auto_calibrate = parse_bool(value, key);
    else if (key == "w_adloss") st.tc.w_adloss = std::stod(value);
    else if (key == "lr") st.tc.lr = std::stod(value);
    else if (key == "batch_size") st.tc.batch_size = std::stoll(value);
    else if (key == "pretrain_epochs") st.tc.pretrain_epochs = std::stoll(value);
    else if (key == "adversarial_epochs") st.tc.adversarial_epochs = std::stoll(value);
    else if (key == "seed") st.tc.seed = std::stoull(value);
    else if (key == "arch") st.tc.arch = adt::arch_from_string(value);
    else if (key == "leaky_slope") st.tc.leaky_slope = std::stod(value);
    else if (key == "dropout") st.tc.dropout_p = std::stod(value);
    else if (key == "normalize_weights") st.normalize_weights = parse_bool(value, key);
    else if (key == "recalibrate_every") st.tc.recalibrate_every = std::stoll(value);
    else if (key == "checkpoint_every") st.tc.checkpoint_every = std::stoll(value);
    else if (key == "histogram_every") st.tc.histogram_every = std::stoll(value);
  } catch (const std::invalid_argument&) {
    throw adt::ConfigError("config key '" + key + "': cannot parse value '" + value + "'");
  } catch (const std::out_of_range&) {
    throw adt::ConfigError("config key '" + key + "': value '" + value + "' out of range");
  }
  st.from_file.insert(key);
}

void load_config_file(ConfigState& st, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw adt::IoError("cannot open config file '" + path + "'");
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw adt::ConfigError("config file '" + path + "' line " + std::to_string(lineno) +
                             ": expected key=value");
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    apply_config_line(st, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

// One line per documented key with its effective value and provenance, so a
// run's hyperparameters are never hidden state.
void echo_config(const ConfigState& st, const std::set<std::string>& from_flags) {
  auto prov = [&](const std::string& key) {
    if (from_flags.count(key)) return "flag";
    if (st.from_file.count(key)) return "file";
    return "default";
  };
  auto line = [&](const std::string& key, const std::string& value) {
    std::fprintf(stderr, "config: %-19s = %-12s (%s)\n", key.c_str(), value.c_str(),
                 prov(key));
  };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return std::string(buf);
  };
  line("lambda", num(st.tc.lambda));
  line("eta", num(st.eta));
  line("beta", num(st.beta));
  line("auto_calibrate", st.auto_calibrate ? "true" : "false");
  line("w_adloss", num(st.tc.w_adloss));
  line("lr", num(st.tc.lr));
  line("batch_size", std::to_string(st.tc.batch_size));
  line("pretrain_epochs", std::to_string(st.tc.pretrain_epochs));
  line("adversarial_epochs", std::to_string(st.tc.adversarial_epochs));
  line("seed", std::to_string(st.tc.seed));
  line("arch", adt::arch_to_string(st.tc.arch));
  line("leaky_slope", num(st.tc.leaky_slope));
  line("dropout", num(st.tc.dropout_p));
  line("normalize_weights", st.normalize_weights ? "true" : "false");
  line("recalibrate_every", std::to_string(st.tc.recalibrate_every));
  line("checkpoint_every", std::to_string(st.tc.checkpoint_every));
  line("histogram_every", std::to_string(st.tc.histogram_every));
}

json config_json(const ConfigState& st) {
  return json{{"lambda", st.tc.lambda},
              {"eta", st.eta},
              {"beta", st.beta},
              {"auto_calibrate", st.auto_calibrate},
              {"w_adloss", st.tc.w_adloss},
              {"lr", st.tc.lr},
              {"batch_size", st.tc.batch_size},
              {"pretrain_epochs", st.tc.pretrain_epochs},
              {"adversarial_epochs", st.tc.adversarial_epochs},
              {"seed", std::to_string(st.tc.seed)},
              {"arch", adt::arch_to_string(st.tc.arch)},
              {"leaky_slope", st.tc.leaky_slope},
              {"dropout", st.tc.dropout_p},
              {"normalize_weights", st.normalize_weights},
              {"recalibrate_every", st.tc.recalibrate_every},
              {"checkpoint_every", st.tc.checkpoint_every},
              {"histogram_every", st.tc.histogram_every}};
}

// Registers the config-override flags shared by train/eval/sweep and
// records which of them the user actually passed.
void add_config_flags(CLI::App* cmd, ConfigState& st, std::set<std::string>& from_flags) {
  auto track = [&from_flags](const std::string& key) {
    return [&from_flags, key](auto) { from_flags.insert(key); };
  };
  cmd->add_option_function<double>(
         "--lambda", [&st, track](double v) { st.tc.lambda = v; track("lambda")(v); },
         "target-domain reconstruction weight in [0,1]");
  cmd->add_option_function<double>(
         "--eta", [&st, track](double v) { st.eta = v; track("eta")(v); },
         "weight-function slope (must be < 0)");
  cmd->add_option_function<double>(
         "--beta", [&st, track](double v) { st.beta = v; track("beta")(v); },
         "weight-function offset (must be > 0)");
  cmd->add_option_function<bool>(
         "--auto-calibrate",
         [&st, track](bool v) { st.auto_calibrate = v; track("auto_calibrate")(v); },
         "fit eta/beta to boundary target losses");
  cmd->add_option_function<double>(
         "--w-adloss", [&st, track](double v) { st.tc.w_adloss = v; track("w_adloss")(v); },
         "adversarial gradient scale");
  cmd->add_option_function<double>(
         "--lr", [&st, track](double v) { st.tc.lr = v; track("lr")(v); }, "Adam learning rate");
  cmd->add_option_function<std::int64_t>(
         "--batch-size",
         [&st, track](std::int64_t v) { st.tc.batch_size = v; track("batch_size")(v); },
         "paired minibatch size");
  cmd->add_option_function<std::int64_t>(
         "--pretrain-epochs",
         [&st, track](std::int64_t v) { st.tc.pretrain_epochs = v; track("pretrain_epochs")(v); },
         "stage-1 epochs");
  cmd->add_option_function<std::int64_t>(
         "--adversarial-epochs",
         [&st, track](std::int64_t v) {
           st.tc.adversarial_epochs = v;
           track("adversarial_epochs")(v);
         },
         "stage-2 epochs (0 = pretrain only)");
  cmd->add_option_function<std::uint64_t>(
         "--seed", [&st, track](std::uint64_t v) { st.tc.seed = v; track("seed")(v); },
         "run seed");
  cmd->add_option_function<std::string>(
         "--arch",
         [&st, track](const std::string& v) {
           st.tc.arch = adt::arch_from_string(v);
           track("arch")(v);
         },
         "model architecture: mlp | conv");
  cmd->add_option_function<double>(
         "--leaky-slope",
         [&st, track](double v) { st.tc.leaky_slope = v; track("leaky_slope")(v); },
         "LeakyReLU negative slope");
  cmd->add_option_function<double>(
         "--dropout", [&st, track](double v) { st.tc.dropout_p = v; track("dropout")(v); },
         "dropout probability");
  cmd->add_option_function<bool>(
         "--normalize-weights",
         [&st, track](bool v) { st.normalize_weights = v; track("normalize_weights")(v); },
         "normalize importance weights to batch mean 1");
  cmd->add_option_function<std::int64_t>(
         "--recalibrate-every",
         [&st, track](std::int64_t v) {
           st.tc.recalibrate_every = v;
           track("recalibrate_every")(v);
         },
         "re-fit eta/beta every k adversarial epochs (0 = boundary only)");
  cmd->add_option_function<std::int64_t>(
         "--checkpoint-every",
         [&st, track](std::int64_t v) {
           st.tc.checkpoint_every = v;
           track("checkpoint_every")(v);
         },
         "periodic checkpoint cadence (0 = off)");
  cmd->add_option_function<std::int64_t>(
         "--histogram-every",
         [&st, track](std::int64_t v) {
           st.tc.histogram_every = v;
           track("histogram_every")(v);
         },
         "per-epoch histogram cadence (0 = off)");
}

// ---- manifest --------------------------------------------------------------

struct Manifest {
  std::string command;
  json config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs, outputs;
  // gen-data omits timing so identical flags rewrite identical bytes;
  // training/evaluation manifests record it (metrics files never do)
  double wall_ms = -1.0;

  void write(const std::string& path) const {
    json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = std::to_string(seed);
    j["build"] = {{"id", ADT_BUILD_ID}, {"version", kVersion}};
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    if (wall_ms >= 0.0) j["wall_ms"] = wall_ms;
    std::ofstream os(path);
    if (!os) throw adt::IoError("cannot open '" + path + "' for writing");
    os << j.dump(2) << "\n";
    if (!os) throw adt::IoError("write failed for '" + path + "'");
  }
};

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw adt::IoError("cannot create directory '" + dir + "': " + ec.message());
}

// ---- dataset directory I/O -------------------------------------------------

void save_dataset_dir(const std::string& dir, const adt::DomainDataset& ds) {
  ensure_dir(dir);
  std::vector<int> source_labels(static_cast<std::size_t>(ds.source.rows), 0);
  adt::write_csv_dataset(dir + "/source.csv", ds.source, source_labels);
  std::vector<int> target_labels = ds.target_labels;
  if (target_labels.empty())
    target_labels.assign(static_cast<std::size_t>(ds.target.rows), 0);
  adt::write_csv_dataset(dir + "/target.csv", ds.target, target_labels);
  adt::write_dataset_manifest(dir + "/dataset.json", ds);
}

adt::DomainDataset load_dataset_dir(const std::string& dir) {
  std::ifstream is(dir + "/dataset.json");
  if (!is) throw adt::IoError("cannot open '" + dir + "/dataset.json'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw adt::FormatError("malformed dataset manifest '" + dir + "/dataset.json': " + e.what());
  }

  adt::DomainDataset ds;
  auto [src, src_labels] = adt::read_csv_dataset(dir + "/source.csv");
  auto [tgt, tgt_labels] = adt::read_csv_dataset(dir + "/target.csv");
  ds.source = std::move(src);
  ds.target = std::move(tgt);
  if (j.value("target_labeled", true)) ds.target_labels = std::move(tgt_labels);

  if (j.contains("sample_shape")) {
    adt::Shape shape = j["sample_shape"].get<std::vector<std::int64_t>>();
    if (adt::shape_numel(shape) != ds.source.features())
      throw adt::FormatError("dataset manifest sample_shape disagrees with source.csv width");
    ds.source.sample_shape = shape;
    ds.target.sample_shape = shape;
  }
  ds.meta.generator = j.value("generator", "csv");
  ds.meta.seed = std::stoull(j.value("seed", std::string("0")));
  ds.meta.anomaly_rate = j.value("anomaly_rate", 0.0);
  ds.meta.realized_rate = j.value("realized_rate", 0.0);
  ds.meta.normal_class = j.value("normal_class", -1);
  ds.meta.source_files = {dir + "/source.csv", dir + "/target.csv"};
  adt::assign_splits(ds, ds.meta.seed);
  return ds;
}

// ---- eval artifact writing -------------------------------------------------

void write_scores_csv(const std::string& path, const adt::EvalReport& eval) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw adt::IoError("cannot open " + path + " for writing");
  bool labeled = !eval.labels.empty();
  std::fprintf(f, labeled ? "index,score,label\n" : "index,score\n");
  for (std::size_t i = 0; i < eval.scores.size(); ++i) {
    if (labeled)
      std::fprintf(f, "%zu,%.17g,%d\n", i, eval.scores[i], eval.labels[i]);
    else
      std::fprintf(f, "%zu,%.17g\n", i, eval.scores[i]);
  }
  std::fclose(f);
}

std::vector<std::string> write_eval_artifacts(const std::string& out, adt::ModelBundle& bundle,
                                              const adt::EvalReport& eval,
                                              const adt::LossReport& losses,
                                              const adt::DomainDataset& data,
                                              const adt::TrainConfig& cfg) {
  std::vector<std::string> written;
  adt::write_metrics_json(out + "/metrics.json", eval, losses, cfg);
  written.push_back(out + "/metrics.json");
  write_scores_csv(out + "/scores.csv", eval);
  written.push_back(out + "/scores.csv");
  if (!eval.roc_points.empty()) {
    adt::write_roc_csv(out + "/roc.csv", eval.roc_points);
    written.push_back(out + "/roc.csv");
  }
  adt::write_histogram_csv(out + "/hist.csv", adt::loss_histogram(bundle, data, 32));
  written.push_back(out + "/hist.csv");
  return written;
}

// ---- commands --------------------------------------------------------------

struct GenArgs {
  std::string out;
  std::uint64_t seed = 0;
  bool unlabeled = false;
  // synthetic
  std::int64_t dim = 2, n_source = 400, n_target = 400;
  double cluster_sigma = 0.5, shift = 1.5, rotation_deg = 15.0;
  double anomaly_rate = 0.25, anomaly_distance = 6.0;
  std::vector<double> dim_sigmas;
  // idx
  std::string source_images, source_labels_path, target_images, target_labels_path;
  std::int64_t normal_class = 0, channels = 1, image_size = 28;
};

int cmd_gen_data(const GenArgs& a) {
  adt::DomainDataset ds;
  if (!a.source_images.empty()) {
    auto [simg, slab] = adt::load_idx_pair(a.source_images, a.source_labels_path);
    auto [timg, tlab] = adt::load_idx_pair(a.target_images, a.target_labels_path);
    adt::Matrix src = adt::images_to_matrix(simg, a.channels, a.image_size);
    adt::Matrix tgt = adt::images_to_matrix(timg, a.channels, a.image_size);
    adt::AnomalyTaskSpec spec;
    spec.normal_class = a.normal_class;
    spec.anomaly_rate = a.anomaly_rate;
    spec.n_source = a.n_source;
    spec.n_target = a.n_target;
    spec.seed = a.seed;
    ds = adt::build_anomaly_task(src, slab, tgt, tlab, spec);
  } else {
    adt::SynthConfig sc;
    sc.dim = a.dim;
    sc.n_source = a.n_source;
    sc.n_target = a.n_target;
    sc.cluster_sigma = a.cluster_sigma;
    sc.shift = a.shift;
    sc.rotation_deg = a.rotation_deg;
    sc.anomaly_rate = a.anomaly_rate;
    sc.anomaly_distance_sigmas = a.anomaly_distance;
    sc.dim_sigmas = a.dim_sigmas;
    ds = adt::synth_domain_pair(sc, a.seed);
  }
  if (a.unlabeled) ds.target_labels.clear();
  save_dataset_dir(a.out, ds);

  Manifest m;
  m.command = "gen-data";
  m.seed = a.seed;
  m.config = {{"generator", ds.meta.generator},
              {"seed", std::to_string(a.seed)},
              {"anomaly_rate", a.anomaly_rate},
              {"realized_rate", ds.meta.realized_rate},
              {"n_source", ds.source.rows},
              {"n_target", ds.target.rows},
              {"unlabeled", a.unlabeled}};
  if (ds.meta.generator == "synthetic") {
    m.config["dim"] = a.dim;
    m.config["cluster_sigma"] = a.cluster_sigma;
    m.config["shift"] = a.shift;
    m.config["rotation_deg"] = a.rotation_deg;
    m.config["anomaly_distance_sigmas"] = a.anomaly_distance;
    if (!a.dim_sigmas.empty()) m.config["dim_sigmas"] = a.dim_sigmas;
  } else {
    m.config["normal_class"] = a.normal_class;
    m.config["channels"] = a.channels;
    m.config["image_size"] = a.image_size;
    m.inputs = {a.source_images, a.source_labels_path, a.target_images, a.target_labels_path};
  }
  m.outputs = {a.out + "/source.csv", a.out + "/target.csv", a.out + "/dataset.json"};
  m.write(a.out + "/manifest.json");
  std::fprintf(stderr, "gen-data: wrote %s (%lld source, %lld target, realized rate %.4f)\n",
               a.out.c_str(), static_cast<long long>(ds.source.rows),
               static_cast<long long>(ds.target.rows), ds.meta.realized_rate);
  return 0;
}

int cmd_train(ConfigState& st, const std::set<std::string>& from_flags, const std::string& data,
              const std::string& out) {
  auto t0 = std::chrono::steady_clock::now();
  echo_config(st, from_flags);
  adt::TrainConfig cfg = st.finalize();
  ensure_dir(out);
  cfg.out_dir = out;
  adt::DomainDataset ds = load_dataset_dir(data);
  adt::PipelineResult res = adt::run_pipeline(cfg, ds);

  adt::Rng rng(cfg.seed);
  adt::save_checkpoint(out + "/checkpoint.bin", res.bundle, rng);
  adt::write_loss_report_csv(out + "/losses.csv", res.losses);
  std::vector<std::string> outputs =
      write_eval_artifacts(out, res.bundle, res.eval, res.losses, ds, cfg);
  outputs.insert(outputs.begin(), {out + "/checkpoint.bin", out + "/losses.csv"});

  Manifest m;
  m.command = "train";
  m.config = config_json(st);
  m.seed = cfg.seed;
  m.inputs = {data};
  m.outputs = outputs;
  m.wall_ms = ms_since(t0);
  m.write(out + "/manifest.json");
  if (std::isnan(res.eval.auc))
    std::fprintf(stderr, "train: done, separation gap %.6f (no labels, AUC unavailable)\n",
                 res.eval.separation_gap);
  else
    std::fprintf(stderr, "train: done, AUC %.4f, separation gap %.6f\n", res.eval.auc,
                 res.eval.separation_gap);
  return 0;
}

int cmd_eval(ConfigState& st, const std::set<std::string>& from_flags,
             const std::string& checkpoint, const std::string& data, const std::string& out) {
  auto t0 = std::chrono::steady_clock::now();
  echo_config(st, from_flags);
  adt::TrainConfig cfg = st.finalize();
  ensure_dir(out);
  adt::DomainDataset ds = load_dataset_dir(data);
  adt::Rng rng(cfg.seed);
  adt::ModelBundle bundle = adt::load_checkpoint(checkpoint, rng);
  if (adt::shape_numel(bundle.config.input_shape) != ds.source.features())
    throw adt::DimensionError(
        "checkpoint expects " + std::to_string(adt::shape_numel(bundle.config.input_shape)) +
        " features per sample but dataset '" + data + "' has " +
        std::to_string(ds.source.features()));

  adt::EvalReport eval = adt::evaluate(bundle, ds);
  if (!ds.has_labels())
    std::fprintf(stderr,
                 "eval: warning: target labels absent; emitting scores only, AUC omitted\n");
  adt::LossReport empty_losses;
  std::vector<std::string> outputs = write_eval_artifacts(out, bundle, eval, empty_losses, ds, cfg);

  Manifest m;
  m.command = "eval";
  m.config = config_json(st);
  m.seed = cfg.seed;
  m.inputs = {checkpoint, data};
  m.outputs = outputs;
  m.wall_ms = ms_since(t0);
  m.write(out + "/manifest.json");
  if (std::isnan(eval.auc))
    std::fprintf(stderr, "eval: %zu scores written\n", eval.scores.size());
  else
    std::fprintf(stderr, "eval: AUC %.4f over %zu held-out samples\n", eval.auc,
                 eval.scores.size());
  return 0;
}

struct SweepArgs {
  std::string axis, out;
  std::vector<double> grid;
  int repeats = 5;
  bool with_baseline = false;
  GenArgs data;  // synthetic dataset template
};

int cmd_sweep(ConfigState& st, const std::set<std::string>& from_flags, const SweepArgs& a) {
  auto t0 = std::chrono::steady_clock::now();
  echo_config(st, from_flags);
  adt::TrainConfig cfg = st.finalize();
  ensure_dir(a.out);

  adt::SweepAxis axis;
  if (a.axis == "anomaly-rate") axis = adt::SweepAxis::AnomalyRate;
  else if (a.axis == "w-adloss") axis = adt::SweepAxis::WAdloss;
  else throw adt::ConfigError("unknown sweep axis '" + a.axis + "' (anomaly-rate | w-adloss)");

  adt::SynthConfig sc;
  sc.dim = a.data.dim;
  sc.n_source = a.data.n_source;
  sc.n_target = a.data.n_target;
  sc.cluster_sigma = a.data.cluster_sigma;
  sc.shift = a.data.shift;
  sc.rotation_deg = a.data.rotation_deg;
  sc.anomaly_rate = a.data.anomaly_rate;
  sc.anomaly_distance_sigmas = a.data.anomaly_distance;
  sc.dim_sigmas = a.data.dim_sigmas;
  auto factory = [&](double value, std::uint64_t seed) {
    adt::SynthConfig point = sc;
    if (axis == adt::SweepAxis::AnomalyRate) point.anomaly_rate = value;
    return adt::synth_domain_pair(point, seed);
  };

  std::vector<adt::SweepPoint> points =
      adt::sweep(cfg, axis, a.grid, a.repeats, factory, a.with_baseline);
  adt::write_sweep_csv(a.out + "/sweep.csv", a.axis, points, a.repeats, a.with_baseline);

  Manifest m;
  m.command = "sweep";
  m.config = config_json(st);
  m.config["axis"] = a.axis;
  m.config["grid"] = a.grid;
  m.config["repeats"] = a.repeats;
  m.config["with_baseline"] = a.with_baseline;
  m.config["dataset"] = {{"dim", sc.dim},
                         {"n_source", sc.n_source},
                         {"n_target", sc.n_target},
                         {"cluster_sigma", sc.cluster_sigma},
                         {"shift", sc.shift},
                         {"rotation_deg", sc.rotation_deg},
                         {"anomaly_rate", sc.anomaly_rate},
                         {"anomaly_distance_sigmas", sc.anomaly_distance_sigmas}};
  if (!sc.dim_sigmas.empty()) m.config["dataset"]["dim_sigmas"] = sc.dim_sigmas;
  m.seed = cfg.seed;
  m.outputs = {a.out + "/sweep.csv"};
  m.wall_ms = ms_since(t0);
  m.write(a.out + "/manifest.json");
  for (const adt::SweepPoint& p : points)
    std::fprintf(stderr, "sweep: %s=%g median AUC %.4f (spread %.4f)%s\n", a.axis.c_str(),
                 p.value, p.median_auc, p.spread,
                 a.with_baseline
                     ? ("  baseline " + std::to_string(p.baseline_median)).c_str()
                     : "");
  return 0;
}

void add_synth_flags(CLI::App* cmd, GenArgs& a) {
  cmd->add_option("--dim", a.dim, "sample dimensionality")->capture_default_str();
  cmd->add_option("--n-source", a.n_source, "source sample count")->capture_default_str();
  cmd->add_option("--n-target", a.n_target, "target sample count")->capture_default_str();
  cmd->add_option("--cluster-sigma", a.cluster_sigma, "cluster standard deviation")
      ->capture_default_str();
  cmd->add_option("--shift", a.shift, "domain translation magnitude")->capture_default_str();
  cmd->add_option("--rotation-deg", a.rotation_deg, "domain rotation (first two coordinates)")
      ->capture_default_str();
  cmd->add_option("--anomaly-rate", a.anomaly_rate, "anomalous fraction of the target")
      ->capture_default_str();
  cmd->add_option("--anomaly-distance", a.anomaly_distance,
                  "anomaly offset in units of cluster sigma")
      ->capture_default_str();
  cmd->add_option("--dim-sigmas", a.dim_sigmas,
                  "per-dimension sigmas (comma separated, overrides --cluster-sigma)")
      ->delimiter(',');
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"importance-weighted adversarial transfer for anomaly detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion) + " (" ADT_BUILD_ID ")");

  // gen-data ------------------------------------------------------------
  GenArgs gen;
  CLI::App* cg = app.add_subcommand("gen-data", "generate a transfer task dataset directory");
  cg->add_option("--out", gen.out, "output directory")->required();
  cg->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
  cg->add_flag("--unlabeled", gen.unlabeled, "drop target labels from the dataset");
  add_synth_flags(cg, gen);
  cg->add_option("--source-images", gen.source_images, "IDX image file (source corpus)");
  cg->add_option("--source-labels", gen.source_labels_path, "IDX label file (source corpus)");
  cg->add_option("--target-images", gen.target_images, "IDX image file (target corpus)");
  cg->add_option("--target-labels", gen.target_labels_path, "IDX label file (target corpus)");
  cg->add_option("--normal-class", gen.normal_class, "digit treated as normal")
      ->capture_default_str();
  cg->add_option("--channels", gen.channels, "output channels for image data")
      ->capture_default_str();
  cg->add_option("--image-size", gen.image_size, "square output size for image data")
      ->capture_default_str();

  // shared config machinery ---------------------------------------------
  ConfigState st;
  std::set<std::string> from_flags;
  std::string config_path, data_dir, out_dir, checkpoint_path;

  // train ---------------------------------------------------------------
  CLI::App* ct = app.add_subcommand("train", "run the two-stage training pipeline");
  ct->add_option("--config", config_path, "key=value config file");
  ct->add_option("--data", data_dir, "dataset directory from gen-data")->required();
  ct->add_option("--out", out_dir, "artifact output directory")->required();
  add_config_flags(ct, st, from_flags);

  // eval ----------------------------------------------------------------
  CLI::App* ce = app.add_subcommand("eval", "score a dataset with a trained checkpoint");
  ce->add_option("--config", config_path, "key=value config file");
  ce->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  ce->add_option("--data", data_dir, "dataset directory from gen-data")->required();
  ce->add_option("--out", out_dir, "artifact output directory")->required();
  add_config_flags(ce, st, from_flags);

  // sweep ---------------------------------------------------------------
  SweepArgs sw;
  CLI::App* cs = app.add_subcommand("sweep", "grid sweep over anomaly rate or w_adloss");
  cs->add_option("--config", config_path, "key=value config file");
  cs->add_option("--axis", sw.axis, "anomaly-rate | w-adloss")->required();
  cs->add_option("--grid", sw.grid, "comma-separated grid values")
      ->required()
      ->delimiter(',');
  cs->add_option("--repeats", sw.repeats, "seeds per grid point")->capture_default_str();
  cs->add_flag("--with-baseline", sw.with_baseline, "also run the fine-tune baseline");
  cs->add_option("--out", sw.out, "artifact output directory")->required();
  add_synth_flags(cs, sw.data);
  add_config_flags(cs, st, from_flags);

  try {
    // load the config file (if any) before flag callbacks run, so flags
    // override the file
    for (int i = 1; i < argc; ++i) {
      std::string arg(argv[i]);
      if (arg == "--config" && i + 1 < argc) load_config_file(st, argv[i + 1]);
      else if (arg.rfind("--config=", 0) == 0) load_config_file(st, arg.substr(9));
    }
    app.parse(argc, argv);
    if (cg->parsed()) return cmd_gen_data(gen);
    if (ct->parsed()) return cmd_train(st, from_flags, data_dir, out_dir);
    if (ce->parsed()) return cmd_eval(st, from_flags, checkpoint_path, data_dir, out_dir);
    if (cs->parsed()) return cmd_sweep(st, from_flags, sw);
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const adt::NumericError& e) {
    std::fprintf(stderr, "error (numeric): %s\n", e.what());
    return 3;
  } catch (const adt::FormatError& e) {
    std::fprintf(stderr, "error (format): %s\n", e.what());
    return 4;
  } catch (const adt::IoError& e) {
    std::fprintf(stderr, "error (io): %s\n", e.what());
    return 4;
  } catch (const adt::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
