#include "dcfae/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dcfae/checkpoint.hpp"
#include "dcfae/errors.hpp"
#include "dcfae/image_io.hpp"
#include "dcfae/metrics.hpp"
#include "dcfae/monitor.hpp"
#include "dcfae/trainer.hpp"

namespace dcfae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  if (!config.is_object()) config = json::object();
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("--set has an empty key segment in '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    json& child = (*node)[key];
    if (!child.is_object()) child = json::object();
    node = &child;
    start = dot + 1;
  }
}

fs::path fresh_output_dir(const fs::path& base) {
  auto usable = [](const fs::path& p) { return !fs::exists(p) || (fs::is_directory(p) && fs::is_empty(p)); };
  fs::path chosen = base;
  for (int i = 1; !usable(chosen); ++i) chosen = fs::path(base.string() + "-" + std::to_string(i));
  fs::create_directories(chosen);
  return chosen;
}

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  bool json_output = false;
  bool reference_mode = false;
};

struct ResolvedConfig {
  json raw;
  TrainConfig train;
  std::optional<fs::path> dataset;
  bool clusters_given = false;
};

/// Config file (or `base` when no file is given) + overrides.
ResolvedConfig resolve_config(const Globals& g, bool require_file, const json& base = json::object()) {
  ResolvedConfig rc;
  fs::path base_dir = fs::current_path();
  if (g.config.empty()) {
    if (require_file) throw ConfigError("--config is required");
    rc.raw = base;
  } else {
    if (!fs::exists(g.config)) throw ConfigError("config file not found: " + g.config);
    std::ifstream in(g.config);
    try {
      in >> rc.raw;
    } catch (const json::exception& e) {
      throw ConfigError("cannot parse config " + g.config + ": " + e.what());
    }
    base_dir = fs::absolute(g.config).parent_path();
  }
  for (const auto& s : g.sets) apply_override(rc.raw, s);
  if (g.seed) rc.raw["seed"] = *g.seed;
  if (g.reference_mode) rc.raw["reference_mode"] = true;
  rc.clusters_given = rc.raw.contains("clusters") || rc.raw.contains("k");
  rc.train = TrainConfig::from_json(rc.raw);
  if (rc.raw.contains("dataset")) {
    if (!rc.raw.at("dataset").is_string()) throw ConfigError("\"dataset\" must be a manifest path");
    fs::path p = rc.raw.at("dataset").get<std::string>();
    if (p.is_relative() && fs::exists(base_dir / p)) p = base_dir / p;
    rc.dataset = fs::absolute(resolve_data_path(p));
  }
  return rc;
}

ImageDataset load_configured_dataset(const ResolvedConfig& rc) {
  if (!rc.dataset) throw ConfigError("config has no \"dataset\" manifest path");
  return load_dataset(read_manifest(*rc.dataset));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_config_echo(const fs::path& dir, const ResolvedConfig& rc) {
  json echo = rc.train.to_json();
  if (rc.dataset) echo["dataset"] = rc.dataset->string();
  write_text(dir / "config.json", echo.dump(2) + "\n");
}

void write_assignments(const fs::path& path, const std::vector<int>& assignments,
                       const std::optional<std::vector<int>>& labels) {
  std::ostringstream s;
  s << "index,cluster" << (labels ? ",label" : "") << '\n';
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    s << i << ',' << assignments[i];
    if (labels) s << ',' << (*labels)[i];
    s << '\n';
  }
  write_text(path, s.str());
}

void write_matrix_csv(const fs::path& path, const Tensor<double>& m, const std::string& prefix) {
  std::ostringstream s;
  s << "index";
  for (std::size_t j = 0; j < m.cols(); ++j) s << ',' << prefix << j;
  s << '\n';
  char buf[32];
  for (std::size_t i = 0; i < m.rows(); ++i) {
    s << i;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", m[i * m.cols() + j]);
      s << ',' << buf;
    }
    s << '\n';
  }
  write_text(path, s.str());
}

std::string method_name(const TrainConfig& c) {
  std::string name = "DCFAE";
  if (c.no_discriminator) name += "-Dis";
  if (c.no_residual) name += "-Resnet";
  if (c.no_dense_head) name += "-DenNet";
  return name;
}

void write_table_row(const fs::path& path, const std::string& dataset, const std::string& method, const MetricReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.2f,%.2f,%.2f", 100.0 * r.acc, 100.0 * r.nmi, 100.0 * r.ari);
  write_text(path, "dataset,method,acc_percent,nmi_percent,ari_percent\n" + dataset + "," + method + "," + buf + "\n");
}

void emit(std::ostream& out, const Globals& g, const json& result, const std::string& human) {
  if (g.json_output) {
    out << format_fixed6(result, -1) << '\n';
  } else {
    out << human;
  }
}

fs::path output_dir(const Globals& g, const std::string& command) {
  return fresh_output_dir(g.out.empty() ? fs::path("runs") / command : fs::path(g.out));
}

// ---- commands -------------------------------------------------------------------

int cmd_train(const Globals& g, const std::string& resume, std::ostream& out, std::ostream& err) {
  ResolvedConfig rc = resolve_config(g, true);
  const ImageDataset data = load_configured_dataset(rc);
  if (!rc.clusters_given && data.num_classes > 0) rc.train.clusters = static_cast<std::size_t>(data.num_classes);
  rc.train.validate();
  std::optional<Checkpoint> resumed;
  if (!resume.empty()) resumed = load_checkpoint(resume);

  const fs::path dir = output_dir(g, "train");
  write_config_echo(dir, rc);
  const fs::path checkpoint_path = dir / "checkpoint.bin";
  std::ofstream log(dir / "train_log.csv");
  if (!log) throw IoError("cannot write " + (dir / "train_log.csv").string());
  write_train_log_header(log);

  Trainer trainer = resumed ? Trainer(rc.train, data, std::move(resumed->state)) : Trainer(rc.train, data);
  bool saved = false;
  TrainerHooks hooks;
  hooks.on_epoch = [&](const TrainLogRecord& r) {
    write_train_log_row(log, r);
    log.flush();
    char buf[256];
    std::snprintf(buf, sizeof buf, "epoch %zu/%zu %s neg_elbo %.4f L_alpha_gamma %.4f (%.1fs)", r.epoch,
                  rc.train.total_epochs(), to_string(r.phase).c_str(), r.neg_elbo, r.alpha_gamma, r.wall_time_s);
    err << buf;
    if (r.discriminator_score) {
      std::snprintf(buf, sizeof buf, " scores %.3f/%.3f", *r.discriminator_score, *r.generator_score);
      err << buf;
    }
    err << '\n';
  };
  hooks.on_checkpoint = [&](const TrainerState& s) {
    save_checkpoint(checkpoint_path, rc.train, s);
    saved = true;
  };
  trainer.set_hooks(hooks);

  try {
    trainer.run();
  } catch (const NumericError& e) {
    err << "training aborted: " << e.what() << '\n';
    if (saved) err << "last good checkpoint: " << checkpoint_path.string() << '\n';
    return kNumericAbort;
  }
  save_checkpoint(checkpoint_path, rc.train, trainer.state());

  const ClusteringOutput co = trainer.cluster();
  write_assignments(dir / "assignments.csv", co.clusters.assignments, data.labels);
  json result = {{"run_dir", dir.string()}, {"epochs", rc.train.total_epochs()}, {"inertia", co.clusters.inertia}};
  std::string human = "run directory: " + dir.string() + "\n";
  if (data.labels) {
    const MetricReport report = evaluate_clustering({*data.labels, co.clusters.assignments});
    write_text(dir / "metrics.json", format_fixed6(report.to_json()) + "\n");
    write_table_row(dir / "table_row.csv", data.name, method_name(rc.train), report);
    result["metrics"] = report.to_json();
    char buf[160];
    std::snprintf(buf, sizeof buf, "ACC %.4f  NMI %.4f  ARI %.4f\n", report.acc, report.nmi, report.ari);
    human += buf;
  }
  emit(out, g, result, human);
  return kOk;
}

Checkpoint load_compatible(const std::string& checkpoint_path, const ResolvedConfig& rc, const ImageDataset* data) {
  if (checkpoint_path.empty()) throw ConfigError("--checkpoint is required");
  Checkpoint ck = load_checkpoint(checkpoint_path);
  const ArchitectureConfig& arch = ck.state.network.fae.arch;
  const std::size_t canvas = data ? data->images.dim(1) : arch.canvas;
  const std::size_t channels = data ? data->images.dim(3) : arch.channels;
  require_compatible(arch, rc.train.effective_architecture(canvas, channels));
  return ck;
}

json checkpoint_base(const std::string& path) {
  if (path.empty()) return json::object();
  return load_checkpoint(path).config.to_json();
}

int cmd_eval(const Globals& g, const std::string& checkpoint, std::size_t repeats, std::ostream& out) {
  if (repeats == 0) throw ConfigError("--repeats must be positive");
  const ResolvedConfig rc = resolve_config(g, false, checkpoint_base(checkpoint));
  const ImageDataset data = load_configured_dataset(rc);
  const Checkpoint ck = load_compatible(checkpoint, rc, &data);
  const auto& net = ck.state.network;
  const bool use_head = net.head.has_value() && !rc.train.no_dense_head;
  const std::size_t k = rc.clusters_given || data.num_classes <= 0 ? rc.train.clusters
                                                                   : static_cast<std::size_t>(data.num_classes);
  const Tensor<double> points = clustering_points(net, data.images, use_head);

  const fs::path dir = output_dir(g, "eval");
  write_config_echo(dir, rc);
  json runs = json::array();
  std::ostringstream table, human;
  table << "repeat,seed,acc,nmi,ari\n";
  double acc = 0, nmi_sum = 0, ari_sum = 0;
  char buf[200];
  for (std::size_t r = 0; r < repeats; ++r) {
    KMeansOptions opt;
    opt.restarts = rc.train.kmeans_restarts;
    opt.seed = rc.train.seed + r;
    opt.parallel = !rc.train.reference_mode;
    const ClusterResult result = kmeans(points, k, opt);
    if (r == 0) write_assignments(dir / "assignments.csv", result.assignments, data.labels);
    json row = {{"repeat", r}, {"seed", opt.seed}, {"inertia", round6(result.inertia)}};
    if (data.labels) {
      const MetricReport m = evaluate_clustering({*data.labels, result.assignments});
      row.update(m.to_json());
      acc += m.acc;
      nmi_sum += m.nmi;
      ari_sum += m.ari;
      std::snprintf(buf, sizeof buf, "%zu,%llu,%.6f,%.6f,%.6f\n", r, static_cast<unsigned long long>(opt.seed), m.acc,
                    m.nmi, m.ari);
      table << buf;
      std::snprintf(buf, sizeof buf, "repeat %zu: ACC %.4f NMI %.4f ARI %.4f\n", r, m.acc, m.nmi, m.ari);
      human << buf;
    }
    runs.push_back(row);
  }
  json metrics = {{"repeats", repeats}, {"n", data.count()}, {"k", k}, {"runs", runs}};
  if (data.labels) {
    const double n = static_cast<double>(repeats);
    metrics["mean"] = {{"acc", round6(acc / n)}, {"nmi", round6(nmi_sum / n)}, {"ari", round6(ari_sum / n)}};
    std::snprintf(buf, sizeof buf, "mean,,%.6f,%.6f,%.6f\n", acc / n, nmi_sum / n, ari_sum / n);
    table << buf;
    write_text(dir / "eval_runs.csv", table.str());
    std::snprintf(buf, sizeof buf, "mean over %zu: ACC %.4f NMI %.4f ARI %.4f\n", repeats, acc / n, nmi_sum / n,
                  ari_sum / n);
    human << buf;
  } else {
    human << "dataset has no labels; wrote assignments only\n";
  }
  write_text(dir / "metrics.json", format_fixed6(metrics) + "\n");
  metrics["run_dir"] = dir.string();
  emit(out, g, metrics, "run directory: " + dir.string() + "\n" + human.str());
  return kOk;
}

int cmd_embed(const Globals& g, const std::string& checkpoint, std::ostream& out) {
  const ResolvedConfig rc = resolve_config(g, false, checkpoint_base(checkpoint));
  const ImageDataset data = load_configured_dataset(rc);
  const Checkpoint ck = load_compatible(checkpoint, rc, &data);
  const fs::path dir = output_dir(g, "embed");
  write_config_echo(dir, rc);
  const auto& net = ck.state.network;
  write_matrix_csv(dir / "mu.csv", clustering_points(net, data.images, false), "mu");
  json result = {{"run_dir", dir.string()}, {"n", data.count()}, {"files", json::array({"mu.csv"})}};
  if (net.head) {
    write_matrix_csv(dir / "embedding.csv", clustering_points(net, data.images, true), "c");
    result["files"].push_back("embedding.csv");
  }
  emit(out, g, result, "run directory: " + dir.string() + "\n");
  return kOk;
}

int cmd_sample(const Globals& g, const std::string& checkpoint, std::size_t grid, std::ostream& out) {
  if (grid == 0) throw ConfigError("--grid must be positive");
  const ResolvedConfig rc = resolve_config(g, false, checkpoint_base(checkpoint));
  const Checkpoint ck = load_compatible(checkpoint, rc, nullptr);
  const auto& fae = ck.state.network.fae;
  const std::size_t n = grid * grid;
  Tensor<float> z({n, fae.arch.latent_dim});
  Rng rng = make_rng({rc.train.seed, to_key(Stream::kSample), 0x5A});
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (auto& v : z.data) v = normal(rng);
  const Tensor<float> eta = fae.decode(z).reshaped({n, fae.arch.canvas, fae.arch.canvas, fae.arch.channels});

  const fs::path dir = output_dir(g, "sample");
  write_config_echo(dir, rc);
  write_png(dir / "samples.png", make_grid(eta, grid, 4));
  emit(out, g, {{"run_dir", dir.string()}, {"samples", n}, {"seed", rc.train.seed}},
       "wrote " + (dir / "samples.png").string() + "\n");
  return kOk;
}

int cmd_reconstruct(const Globals& g, const std::string& checkpoint, std::size_t count, std::ostream& out) {
  if (count == 0) throw ConfigError("--count must be positive");
  const ResolvedConfig rc = resolve_config(g, false, checkpoint_base(checkpoint));
  const ImageDataset data = load_configured_dataset(rc);
  const Checkpoint ck = load_compatible(checkpoint, rc, &data);
  const auto& fae = ck.state.network.fae;
  count = std::min(count, data.count());
  const Tensor<float> originals = slice_rows(data.images, 0, count);
  const Tensor<float> eta = fae.decode(fae.encode(originals).mu).reshaped(originals.shape);

  double err_sum = 0.0;
  for (std::size_t i = 0; i < eta.size(); ++i) err_sum += std::abs(static_cast<double>(eta[i]) - originals[i]);
  const double mae = err_sum / static_cast<double>(eta.size());

  // Rows of originals, each followed by the row of their reconstructions.
  const std::size_t columns = std::min<std::size_t>(8, count);
  const std::size_t per_image = originals.cols();
  Tensor<float> tiles({0});
  std::vector<float> data_out;
  std::size_t tile_count = 0;
  for (std::size_t begin = 0; begin < count; begin += columns) {
    const std::size_t end = std::min(count, begin + columns);
    for (const Tensor<float>* src : {&originals, &eta}) {
      for (std::size_t i = begin; i < begin + columns; ++i) {
        if (i < end) {
          data_out.insert(data_out.end(), src->data.begin() + static_cast<std::ptrdiff_t>(i * per_image),
                          src->data.begin() + static_cast<std::ptrdiff_t>((i + 1) * per_image));
        } else {
          data_out.insert(data_out.end(), per_image, 0.0f);
        }
        ++tile_count;
      }
    }
  }
  tiles.shape = {tile_count, originals.dim(1), originals.dim(2), originals.dim(3)};
  tiles.data = std::move(data_out);

  const fs::path dir = output_dir(g, "reconstruct");
  write_config_echo(dir, rc);
  write_png(dir / "reconstruct.png", make_grid(tiles, columns, 4));
  char buf[96];
  std::snprintf(buf, sizeof buf, "mean_abs_pixel_error %.6f\n", mae);
  emit(out, g, {{"run_dir", dir.string()}, {"images", count}, {"mean_abs_pixel_error", mae}}, buf);
  return kOk;
}

int cmd_monitor(const Globals& g, const std::string& log_path, const MonitorOptions& opt, std::ostream& out) {
  if (log_path.empty()) throw IoError("--log is required");
  if (!fs::exists(log_path)) throw IoError("training log not found: " + log_path);
  const auto log = read_train_log(log_path);
  const MonitorSummary summary = summarize_scores(log, opt);
  const fs::path dir = output_dir(g, "monitor");
  write_png(dir / "scores.png", plot_scores(log));
  json result = summary.to_json();
  write_text(dir / "monitor_summary.json", format_fixed6(result) + "\n");
  result["run_dir"] = dir.string();
  std::string human = "run directory: " + dir.string() + "\n";
  if (summary.max_abs_deviation) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "mean disc %.4f, mean gen %.4f over %zu epochs, deviation %.4f -> %s\n",
                  *summary.mean_discriminator, *summary.mean_generator, summary.epochs_in_window,
                  *summary.max_abs_deviation, summary.converged ? "converged" : "not converged");
    human += buf;
  } else {
    human += "log has no score records\n";
  }
  emit(out, g, result, human);
  return kOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const CheckpointMismatch*>(&e)) return kMismatch;
  if (dynamic_cast<const NumericError*>(&e)) return kNumericAbort;
  if (dynamic_cast<const IoError*>(&e)) return kDataMissing;
  if (dynamic_cast<const ConfigError*>(&e)) return kUsage;
  return kFailure;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep clustering with a fusion autoencoder and a dense embedding head.", "dcfae"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_option("--out", g.out, "output directory (suffixed -1, -2, ... if it already exists)");
  app.add_option("--seed", g.seed, "override the configured seed");
  app.add_option("--set", g.sets, "dotted-path override key=value (repeatable)")->allow_extra_args(false);
  app.add_flag("--json", g.json_output, "print a machine-readable JSON summary on stdout");
  app.add_flag("--reference-mode", g.reference_mode, "serial, bit-reproducible execution");

  std::string resume, checkpoint, log_path;
  std::size_t repeats = 1, grid = 8, count = 16;
  MonitorOptions monitor;

  auto* train = app.add_subcommand("train", "pretrain, fine-tune and cluster");
  train->add_option("--resume", resume, "continue from a checkpoint");
  auto* eval = app.add_subcommand("eval", "cluster a dataset with a trained checkpoint");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--repeats", repeats, "k-means repeats with consecutive seeds");
  auto* embed = app.add_subcommand("embed", "export latent means and embeddings as CSV");
  embed->add_option("--checkpoint", checkpoint)->required();
  auto* sample = app.add_subcommand("sample", "decode z ~ N(0, I) into an image grid");
  sample->add_option("--checkpoint", checkpoint)->required();
  sample->add_option("--grid", grid, "grid side (grid x grid images)");
  auto* reconstruct = app.add_subcommand("reconstruct", "original / reconstruction grid");
  reconstruct->add_option("--checkpoint", checkpoint)->required();
  reconstruct->add_option("--count", count, "number of images");
  auto* mon = app.add_subcommand("monitor", "summarize and plot discriminator/generator scores");
  mon->add_option("--log", log_path, "train_log.csv of a run");
  mon->add_option("--window", monitor.window, "number of final epochs to average");
  mon->add_option("--tolerance", monitor.tolerance, "allowed deviation of the means from 0.5");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (train->parsed()) return cmd_train(g, resume, out, err);
    if (eval->parsed()) return cmd_eval(g, checkpoint, repeats, out);
    if (embed->parsed()) return cmd_embed(g, checkpoint, out);
    if (sample->parsed()) return cmd_sample(g, checkpoint, grid, out);
    if (reconstruct->parsed()) return cmd_reconstruct(g, checkpoint, count, out);
    if (mon->parsed()) return cmd_monitor(g, log_path, monitor, out);
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    err << "dcfae: " << e.what() << '\n';
    if (code == kUsage) err << app.help();
    return code;
  }
  return kUsage;
}

}  // namespace dcfae::cli
