#include "dcfae/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "dcfae/errors.hpp"

namespace dcfae {

// ---- config -----------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(lambda_prime >= 0.0)) throw ConfigError("lambda_prime must be >= 0");
  if (!(rho > 0.0)) throw ConfigError("rho must be > 0");
  if (latent_dim == 0) throw ConfigError("latent_dim must be positive");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (clusters == 0) throw ConfigError("clusters must be positive");
  if (kmeans_restarts == 0) throw ConfigError("kmeans_restarts must be positive");
  augment.validate();
  head.validate();
  effective_architecture(architecture.canvas, architecture.channels).validate();
}

ArchitectureConfig TrainConfig::effective_architecture(std::size_t canvas, std::size_t channels) const {
  ArchitectureConfig a = architecture;
  a.canvas = canvas;
  a.channels = channels;
  a.latent_dim = latent_dim;
  a.residual = architecture.residual && !no_residual;
  return a;
}

nlohmann::json TrainConfig::to_json() const {
  return {
      {"lambda", lambda},
      {"lambda_prime", lambda_prime},
      {"rho", rho},
      {"latent_dim", latent_dim},
      {"batch_size", batch_size},
      {"learning_rate", learning_rate},
      {"pretrain_epochs", pretrain_epochs},
      {"finetune_epochs", finetune_epochs},
      {"clusters", clusters},
      {"seed", seed},
      {"no_discriminator", no_discriminator},
      {"no_residual", no_residual},
      {"no_dense_head", no_dense_head},
      {"stop_grad_p", stop_grad_p},
      {"regenerate_fakes", regenerate_fakes},
      {"reference_mode", reference_mode},
      {"checkpoint_every", checkpoint_every},
      {"kmeans_restarts", kmeans_restarts},
      {"augment",
       {{"rotation_degrees", augment.rotation_degrees},
        {"shift_fraction", augment.shift_fraction},
        {"enabled", augment.enabled}}},
      {"architecture", {{"filters", architecture.filters}, {"residual", architecture.residual}}},
      {"head", head.to_json()},
  };
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + (where.empty() ? "" : where + ".") + key + "'");
  }
}

template <typename V>
void read_alias(const nlohmann::json& j, std::initializer_list<const char*> names, V& out) {
  const char* seen = nullptr;
  for (const char* n : names) {
    if (!j.contains(n)) continue;
    if (seen) throw ConfigError(std::string("config sets both '") + seen + "' and '" + n + "'");
    seen = n;
    out = j.at(n).get<V>();
  }
}

}  // namespace

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    reject_unknown(j,
                   {"lambda", "lambda_prime", "gamma", "rho", "latent_dim", "L", "batch_size", "M", "learning_rate",
                    "pretrain_epochs", "finetune_epochs", "clusters", "k", "seed", "no_discriminator", "no_residual",
                    "no_dense_head", "stop_grad_p", "regenerate_fakes", "reference_mode", "checkpoint_every",
                    "kmeans_restarts", "augment", "architecture", "head", "dataset"},
                   "");
    read_alias(j, {"lambda"}, c.lambda);
    read_alias(j, {"lambda_prime", "gamma"}, c.lambda_prime);
    read_alias(j, {"rho"}, c.rho);
    read_alias(j, {"latent_dim", "L"}, c.latent_dim);
    read_alias(j, {"batch_size", "M"}, c.batch_size);
    read_alias(j, {"learning_rate"}, c.learning_rate);
    read_alias(j, {"pretrain_epochs"}, c.pretrain_epochs);
    read_alias(j, {"finetune_epochs"}, c.finetune_epochs);
    read_alias(j, {"clusters", "k"}, c.clusters);
    read_alias(j, {"seed"}, c.seed);
    read_alias(j, {"no_discriminator"}, c.no_discriminator);
    read_alias(j, {"no_residual"}, c.no_residual);
    read_alias(j, {"no_dense_head"}, c.no_dense_head);
    read_alias(j, {"stop_grad_p"}, c.stop_grad_p);
    read_alias(j, {"regenerate_fakes"}, c.regenerate_fakes);
    read_alias(j, {"reference_mode"}, c.reference_mode);
    read_alias(j, {"checkpoint_every"}, c.checkpoint_every);
    read_alias(j, {"kmeans_restarts"}, c.kmeans_restarts);
    if (j.contains("augment")) {
      const auto& a = j.at("augment");
      reject_unknown(a, {"rotation_degrees", "shift_fraction", "enabled"}, "augment");
      read_alias(a, {"rotation_degrees"}, c.augment.rotation_degrees);
      read_alias(a, {"shift_fraction"}, c.augment.shift_fraction);
      read_alias(a, {"enabled"}, c.augment.enabled);
    }
    if (j.contains("architecture")) {
      const auto& a = j.at("architecture");
      reject_unknown(a, {"filters", "residual"}, "architecture");
      read_alias(a, {"filters"}, c.architecture.filters);
      read_alias(a, {"residual"}, c.architecture.residual);
    }
    if (j.contains("head")) {
      reject_unknown(j.at("head"), {"hidden", "embed_dim", "dropout_rate", "l2_coefficient"}, "head");
      c.head = HeadConfig::from_json(j.at("head"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- log ----------------------------------------------------------------------

std::string to_string(Phase p) { return p == Phase::kPretrain ? "pretrain" : "finetune"; }

std::vector<std::string> train_log_columns() {
  return {"epoch",    "phase",         "neg_elbo", "L_G", "L_D", "L_gamma", "L_alpha", "L_alpha_gamma",
          "l2",       "discriminator_score", "generator_score", "wall_time_s", "status"};
}

void write_train_log_header(std::ostream& out) {
  const auto cols = train_log_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::optional<double> parse_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

void write_train_log_row(std::ostream& out, const TrainLogRecord& r) {
  std::string status = r.status;
  for (auto& ch : status) {
    if (ch == ',' || ch == '\n') ch = ';';
  }
  out << r.epoch << ',' << to_string(r.phase) << ',' << fmt(r.neg_elbo) << ',' << fmt(r.generator) << ','
      << fmt(r.discriminator) << ',' << fmt(r.clustering) << ',' << fmt(r.alpha) << ',' << fmt(r.alpha_gamma) << ','
      << fmt(r.l2) << ',' << fmt(r.discriminator_score) << ',' << fmt(r.generator_score) << ','
      << fmt(r.wall_time_s) << ',' << status << '\n';
}

std::vector<TrainLogRecord> read_train_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open training log " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty training log");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const auto expected = train_log_columns();
  if (header != expected) throw FormatError(path + ": unexpected training log header");

  std::vector<TrainLogRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != expected.size()) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(expected.size()) +
                        " fields");
    }
    try {
      TrainLogRecord r;
      r.epoch = std::stoul(cells[0]);
      if (cells[1] == "pretrain") {
        r.phase = Phase::kPretrain;
      } else if (cells[1] == "finetune") {
        r.phase = Phase::kFinetune;
      } else {
        throw FormatError("unknown phase '" + cells[1] + "'");
      }
      r.neg_elbo = std::stod(cells[2]);
      r.generator = parse_optional(cells[3]);
      r.discriminator = parse_optional(cells[4]);
      r.clustering = parse_optional(cells[5]);
      r.alpha = std::stod(cells[6]);
      r.alpha_gamma = std::stod(cells[7]);
      r.l2 = parse_optional(cells[8]);
      r.discriminator_score = parse_optional(cells[9]);
      r.generator_score = parse_optional(cells[10]);
      r.wall_time_s = std::stod(cells[11]);
      r.status = cells[12];
      out.push_back(r);
    } catch (const std::logic_error& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// ---- trainer --------------------------------------------------------------------

namespace {

DcfaeNetwork<float> build_network(const TrainConfig& cfg, const ImageDataset& data) {
  data.validate();
  if (data.images.dim(1) != data.images.dim(2)) {
    throw ShapeError("training images must be square, got " + shape_string(data.images.shape));
  }
  const ArchitectureConfig arch = cfg.effective_architecture(data.images.dim(1), data.images.dim(3));
  DcfaeNetwork<float> net{FaeModel<float>(arch, cfg.seed), std::nullopt};
  if (!cfg.no_dense_head) net.head.emplace(arch.latent_dim, cfg.head, cfg.seed);
  return net;
}

Tensor<float> noise(std::size_t rows, std::size_t cols, Rng rng) {
  Tensor<float> eps({rows, cols});
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& v : eps.data) v = n(rng);
  return eps;
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, const ImageDataset& data)
    : cfg_(std::move(cfg)), data_(data) {
  cfg_.validate();
  state_.network = build_network(cfg_, data_);
  state_.generator_optimizer = Adam(AdamConfig{cfg_.learning_rate});
  state_.discriminator_optimizer = Adam(AdamConfig{cfg_.learning_rate});
}

Trainer::Trainer(TrainConfig cfg, const ImageDataset& data, TrainerState state)
    : cfg_(std::move(cfg)), data_(data), state_(std::move(state)) {
  cfg_.validate();
  const ArchitectureConfig arch = cfg_.effective_architecture(data_.images.dim(1), data_.images.dim(3));
  if (!(arch == state_.network.fae.arch)) {
    throw CheckpointMismatch("checkpoint architecture " + state_.network.fae.arch.to_json().dump() +
                             " does not match configured " + arch.to_json().dump());
  }
  if (cfg_.no_dense_head == state_.network.head.has_value()) {
    throw CheckpointMismatch("checkpoint and config disagree on whether the dense head exists");
  }
  state_.generator_optimizer.set_learning_rate(cfg_.learning_rate);
  state_.discriminator_optimizer.set_learning_rate(cfg_.learning_rate);
}

void Trainer::notify(const UpdateEvent& e) {
  if (hooks_.on_update) hooks_.on_update(e, *this);
}

void Trainer::set_frozen(ParameterList<float> params, bool frozen) {
  for (auto* p : params) p->requires_grad = !frozen;
}

Trainer::BatchLosses Trainer::train_batch(Phase phase, std::size_t epoch, std::size_t batch, const Tensor<float>& x) {
  auto& net = state_.network;
  const std::size_t m = x.dim(0);
  const Tensor<float> eps = noise(m, net.fae.arch.latent_dim, make_rng({cfg_.seed, to_key(Stream::kNoise), epoch, batch}));

  BatchOptions opt;
  opt.use_discriminator = !cfg_.no_discriminator;
  opt.use_head = phase == Phase::kFinetune && net.head.has_value();
  opt.rho = cfg_.rho;
  opt.training = true;
  opt.dropout_seed = stream_key({cfg_.seed, to_key(Stream::kDropout), epoch, batch});

  // Generator side: phi, theta and (when fine-tuning) xi; psi is frozen.
  ParameterList<float> generator_side = net.fae.encoder_parameters();
  for (auto* p : net.fae.decoder_parameters()) generator_side.push_back(p);
  if (opt.use_head) {
    for (auto* p : net.head_parameters()) generator_side.push_back(p);
  } else {
    set_frozen(net.head_parameters(), true);
  }
  const ParameterList<float> psi = net.fae.discriminator_parameters();
  set_frozen(generator_side, false);
  set_frozen(psi, true);

  for (auto* p : generator_side) p->zero_grad();
  const BatchPass<float> pass = forward_batch(net, x, eps, opt);

  ObjectiveWeights w;
  w.generator = opt.use_discriminator ? cfg_.lambda : 0.0;
  if (opt.use_head) {
    w.clustering = cfg_.lambda_prime;
    w.l2 = 1.0;
    w.grad_through_p = !cfg_.stop_grad_p;
  }
  notify({phase, epoch, batch, Update::kGeneratorSide, Timing::kBefore});
  backward_batch(net, pass, w);
  state_.generator_optimizer.step(generator_side);
  notify({phase, epoch, batch, Update::kGeneratorSide, Timing::kAfter});

  if (opt.use_discriminator) {
    notify({phase, epoch, batch, Update::kDiscriminator, Timing::kBefore});
    set_frozen(generator_side, true);
    set_frozen(psi, false);
    for (auto* p : psi) p->zero_grad();
    ObjectiveWeights d;
    d.reconstruction = 0.0;
    d.kl = 0.0;
    d.discriminator = 1.0;
    if (cfg_.regenerate_fakes) {
      BatchOptions fresh = opt;
      fresh.use_head = false;
      backward_batch(net, forward_batch(net, x, eps, fresh), d);
    } else {
      backward_batch(net, pass, d);
    }
    state_.discriminator_optimizer.step(psi);
    set_frozen(generator_side, false);
    notify({phase, epoch, batch, Update::kDiscriminator, Timing::kAfter});
  }
  set_frozen(net.all_parameters(), false);
  return {pass.losses, opt.use_head};
}

void Trainer::score_epoch(std::size_t epoch, const Tensor<float>& x, TrainLogRecord& record) const {
  if (cfg_.no_discriminator) return;
  const auto& net = state_.network;
  BatchOptions opt;
  opt.use_discriminator = true;
  opt.training = false;
  const Tensor<float> eps = noise(x.dim(0), net.fae.arch.latent_dim, make_rng({cfg_.seed, to_key(Stream::kSample), epoch}));
  const auto pass = forward_batch(net, x, eps, opt);
  record.discriminator_score = pass.losses.discriminator_score;
  record.generator_score = pass.losses.generator_score;
}

TrainLogRecord Trainer::run_epoch(std::size_t epoch) {
  const auto start = std::chrono::steady_clock::now();
  const Phase phase = phase_of(epoch);
  TrainLogRecord record;
  record.epoch = epoch + 1;
  record.phase = phase;

  BatchPlan plan;
  plan.batch_size = cfg_.batch_size;
  plan.seed = cfg_.seed;
  const auto plan_batches = batch_indices(data_.images.dim(0), plan, epoch);

  double neg_elbo = 0, gen = 0, disc = 0, gamma = 0, l2 = 0;
  std::size_t done = 0;
  bool used_head = false;
  try {
    for (std::size_t b = 0; b < plan_batches.size(); ++b) {
      Tensor<float> x = gather_rows(data_.images, plan_batches[b]);
      if (cfg_.augment.enabled) {
        Rng rng = make_rng({cfg_.seed, to_key(Stream::kAugment), epoch, b});
        x = augment(x, cfg_.augment, rng);
      }
      const BatchLosses r = train_batch(phase, epoch, b, x);
      neg_elbo += r.losses.neg_elbo();
      gen += r.losses.generator;
      disc += r.losses.discriminator;
      gamma += r.losses.clustering;
      l2 += r.losses.l2;
      used_head = r.used_head;
      ++done;
    }
    score_epoch(epoch, gather_rows(data_.images, plan_batches.back()), record);
  } catch (const NumericError& e) {
    record.status = std::string("numeric_error: ") + e.what() + " (batch " + std::to_string(done) + ")";
  }

  const double n = done ? static_cast<double>(done) : 1.0;
  record.neg_elbo = neg_elbo / n;
  if (!cfg_.no_discriminator) {
    record.generator = gen / n;
    record.discriminator = disc / n;
  }
  record.alpha = record.neg_elbo + (cfg_.no_discriminator ? 0.0 : cfg_.lambda * gen / n);
  record.alpha_gamma = record.alpha;
  if (used_head) {
    record.clustering = gamma / n;
    record.l2 = l2 / n;
    record.alpha_gamma += cfg_.lambda_prime * gamma / n;
  }
  record.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

std::vector<TrainLogRecord> Trainer::run() {
  std::vector<TrainLogRecord> log;
  if (state_.epochs_completed == 0 && cfg_.pretrain_epochs == 0 && hooks_.on_phase_end) {
    hooks_.on_phase_end(Phase::kPretrain, *this);
  }
  for (std::size_t e = state_.epochs_completed; e < cfg_.total_epochs(); ++e) {
    TrainLogRecord record = run_epoch(e);
    log.push_back(record);
    if (hooks_.on_epoch) hooks_.on_epoch(record);
    if (record.status != "ok") throw NumericError("epoch " + std::to_string(e + 1) + ": " + record.status);

    state_.epochs_completed = e + 1;
    const bool phase_end = e + 1 == cfg_.pretrain_epochs || e + 1 == cfg_.total_epochs();
    if (phase_end && hooks_.on_phase_end) hooks_.on_phase_end(phase_of(e), *this);
    const bool periodic = cfg_.checkpoint_every > 0 && (e + 1) % cfg_.checkpoint_every == 0;
    if ((phase_end || periodic) && hooks_.on_checkpoint) hooks_.on_checkpoint(state_);
  }
  return log;
}

Tensor<float> encode_means(const FaeModel<float>& fae, const Tensor<float>& images, std::size_t chunk) {
  const std::size_t n = images.dim(0);
  Tensor<float> mu({n, fae.arch.latent_dim});
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    const auto post = fae.encode(slice_rows(images, begin, end));
    std::copy(post.mu.data.begin(), post.mu.data.end(), mu.data.begin() + static_cast<std::ptrdiff_t>(begin * fae.arch.latent_dim));
  }
  return mu;
}

Tensor<double> clustering_points(const DcfaeNetwork<float>& net, const Tensor<float>& images, bool use_head) {
  const Tensor<float> mu = encode_means(net.fae, images);
  if (!use_head || !net.head) return mu.cast<double>();
  const std::size_t n = mu.dim(0);
  const std::size_t d = net.head->config().embed_dim;
  Tensor<double> out({n, d});
  constexpr std::size_t kChunk = 512;
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t end = std::min(n, begin + kChunk);
    const Tensor<float> c = net.head->embed(slice_rows(mu, begin, end), false, 0);
    std::copy(c.data.begin(), c.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(begin * d));
  }
  return out;
}

ClusteringOutput Trainer::cluster(bool use_head) const {
  ClusteringOutput out;
  out.points = clustering_points(state_.network, data_.images, use_head);
  KMeansOptions opt;
  opt.restarts = cfg_.kmeans_restarts;
  opt.seed = cfg_.seed;
  opt.parallel = !cfg_.reference_mode;
  out.clusters = kmeans(out.points, cfg_.clusters, opt);
  return out;
}

}  // namespace dcfae
