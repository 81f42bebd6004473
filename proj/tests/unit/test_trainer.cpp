#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dcfae/checkpoint.hpp"
#include "dcfae/errors.hpp"
#include "dcfae/trainer.hpp"
#include "support/toy.hpp"

using namespace dcfae;
using namespace dcfae::testing;

namespace {

std::string log_text(const std::vector<TrainLogRecord>& log) {
  std::ostringstream os;
  write_train_log_header(os);
  for (auto r : log) {
    r.wall_time_s = 0.0;
    write_train_log_row(os, r);
  }
  return os.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dcfae_trainer_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("freeze contracts and update order") {
  const auto data = blob_dataset(80);
  const auto r = check_freeze_contracts(data, tiny_train_config(2, 2));
  CHECK(r.xi_frozen_in_pretrain);
  CHECK(r.psi_frozen_in_generator_steps);
  CHECK(r.generator_side_frozen_in_discriminator_steps);
  CHECK(r.order_ok);
  // the hashes have to be able to see movement at all
  CHECK(r.generator_side_moves);
  CHECK(r.psi_moves);
  CHECK(r.xi_moves_in_finetune);
  CHECK(r.generator_steps == 4 * 4);
  CHECK(r.discriminator_steps == r.generator_steps);
  REQUIRE(r.sequence.size() >= 2);
  CHECK(r.sequence[0] == "gen@0:0");
  CHECK(r.sequence[1] == "disc@0:0");
}

TEST_CASE("no_discriminator skips the discriminator step and leaves its columns empty") {
  const auto data = blob_dataset(40);
  auto cfg = tiny_train_config(1, 1);
  cfg.no_discriminator = true;
  const auto r = check_freeze_contracts(data, cfg);
  CHECK(r.discriminator_steps == 0);
  CHECK(r.order_ok);
  Trainer t(cfg, data);
  const auto log = t.run();
  REQUIRE(log.size() == 2);
  for (const auto& rec : log) {
    CHECK_FALSE(rec.generator.has_value());
    CHECK_FALSE(rec.discriminator.has_value());
    CHECK_FALSE(rec.discriminator_score.has_value());
    CHECK(rec.alpha == doctest::Approx(rec.neg_elbo));
  }
}

TEST_CASE("no_dense_head clusters mu and never trains a head") {
  const auto data = blob_dataset(40);
  auto cfg = tiny_train_config(1, 1);
  cfg.no_dense_head = true;
  Trainer t(cfg, data);
  const auto log = t.run();
  CHECK_FALSE(t.network().head.has_value());
  CHECK_FALSE(log.back().clustering.has_value());
  CHECK(log.back().alpha_gamma == doctest::Approx(log.back().alpha));
  const auto out = t.cluster();
  CHECK(out.points.cols() == cfg.latent_dim);
  CHECK(out.clusters.assignments.size() == data.count());
}

TEST_CASE("lambda_prime = 0 makes L_alpha_gamma equal L_alpha") {
  const auto data = blob_dataset(40);
  auto cfg = tiny_train_config(0, 2);
  cfg.lambda_prime = 0.0;
  Trainer t(cfg, data);
  for (const auto& rec : t.run()) {
    REQUIRE(rec.clustering.has_value());
    CHECK(rec.alpha_gamma == doctest::Approx(rec.alpha));
  }
}

TEST_CASE("pretrain_epochs = 0 goes straight to finetuning") {
  const auto data = blob_dataset(40);
  auto cfg = tiny_train_config(0, 1);
  Trainer t(cfg, data);
  bool boundary_seen = false;
  std::uint64_t head_at_boundary = 0;
  const std::uint64_t head_start = parameter_hash(t.network().head_parameters());
  TrainerHooks hooks;
  hooks.on_phase_end = [&](Phase p, Trainer& tr) {
    if (p != Phase::kPretrain) return;
    boundary_seen = true;
    head_at_boundary = parameter_hash(tr.network().head_parameters());
  };
  t.set_hooks(hooks);
  const auto log = t.run();
  CHECK(boundary_seen);
  CHECK(head_at_boundary == head_start);
  REQUIRE(log.size() == 1);
  CHECK(log[0].phase == Phase::kFinetune);
  CHECK(log[0].epoch == 1);
}

TEST_CASE("monotone smoke on two blob classes") {
  const auto data = blob_dataset(200);
  auto cfg = tiny_train_config(5, 5);
  Trainer t(cfg, data);
  const auto log = t.run();
  REQUIRE(log.size() == 10);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    first += log[i].alpha_gamma;
    last += log[5 + i].alpha_gamma;
  }
  CHECK(last / 5 < first / 5);
}

TEST_CASE("reference mode is bit-for-bit reproducible") {
  const auto data = blob_dataset(60);
  const auto cfg = tiny_train_config(1, 2, 11);
  Trainer a(cfg, data), b(cfg, data);
  const auto la = a.run();
  const auto lb = b.run();
  CHECK(log_text(la) == log_text(lb));
  CHECK(parameter_hash(a.network().all_parameters()) == parameter_hash(b.network().all_parameters()));
  CHECK(a.cluster().clusters.assignments == b.cluster().clusters.assignments);

  auto other = cfg;
  other.seed = 12;
  Trainer c(other, data);
  c.run();
  CHECK(parameter_hash(a.network().all_parameters()) != parameter_hash(c.network().all_parameters()));
}

TEST_CASE("resuming from a checkpoint matches an uninterrupted run") {
  const auto data = blob_dataset(60);
  auto cfg = tiny_train_config(2, 2, 5);
  cfg.checkpoint_every = 1;
  const auto dir = scratch("resume");

  Trainer full(cfg, data);
  std::size_t saved = 0;
  TrainerHooks hooks;
  hooks.on_checkpoint = [&](const TrainerState& s) {
    if (s.epochs_completed == 3) {
      save_checkpoint(dir / "e3.bin", cfg, s);
      ++saved;
    }
  };
  full.set_hooks(hooks);
  const auto full_log = full.run();
  REQUIRE(saved == 1);

  auto ck = load_checkpoint(dir / "e3.bin");
  CHECK(ck.state.epochs_completed == 3);
  CHECK(ck.config.to_json() == cfg.to_json());
  Trainer resumed(ck.config, data, std::move(ck.state));
  const auto tail = resumed.run();
  REQUIRE(tail.size() == 1);
  CHECK(log_text({full_log.back()}) == log_text(tail));
  CHECK(parameter_hash(full.network().all_parameters()) == parameter_hash(resumed.network().all_parameters()));
  CHECK(full.cluster().clusters.assignments == resumed.cluster().clusters.assignments);
  std::filesystem::remove_all(dir);
}

TEST_CASE("resuming with a different architecture is rejected") {
  const auto data = blob_dataset(40);
  auto cfg = tiny_train_config(1, 0);
  Trainer t(cfg, data);
  t.run();
  auto other = cfg;
  other.latent_dim = 5;
  CHECK_THROWS_AS(Trainer(other, data, t.state()), CheckpointMismatch);
  auto headless = cfg;
  headless.no_dense_head = true;
  CHECK_THROWS_AS(Trainer(headless, data, t.state()), CheckpointMismatch);
}

TEST_CASE("the ablation taken at the phase boundary equals a separate pretrain-only run") {
  const auto data = blob_dataset(60);
  const auto cfg = tiny_train_config(2, 1, 9);
  std::vector<int> at_boundary;
  Trainer full(cfg, data);
  TrainerHooks hooks;
  hooks.on_phase_end = [&](Phase p, Trainer& t) {
    if (p == Phase::kPretrain) at_boundary = t.cluster(false).clusters.assignments;
  };
  full.set_hooks(hooks);
  full.run();

  auto pre = cfg;
  pre.finetune_epochs = 0;
  Trainer alone(pre, data);
  alone.run();
  CHECK(at_boundary == alone.cluster(false).clusters.assignments);
}

TEST_CASE("config JSON round trip, aliases and unknown keys") {
  TrainConfig c = tiny_train_config();
  c.stop_grad_p = true;
  const auto back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());

  const auto aliased = TrainConfig::from_json(nlohmann::json{{"gamma", 3.0}, {"L", 7}, {"M", 16}, {"k", 4}});
  CHECK(aliased.lambda_prime == 3.0);
  CHECK(aliased.latent_dim == 7);
  CHECK(aliased.batch_size == 16);
  CHECK(aliased.clusters == 4);

  const TrainConfig defaults;
  CHECK(defaults.lambda == 100.0);
  CHECK(defaults.lambda_prime == 10.0);
  CHECK(defaults.rho == 100.0);
  CHECK(defaults.latent_dim == 50);
  CHECK(defaults.batch_size == 256);
  CHECK(defaults.learning_rate == 1e-4);

  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"lamda", 1.0}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"batch_size", 0}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"rho", "big"}}), ConfigError);
}

TEST_CASE("training log CSV round trip") {
  TrainLogRecord a;
  a.epoch = 1;
  a.neg_elbo = 123.456789;
  a.generator = 0.7;
  a.discriminator = 1.3;
  a.alpha = 193.5;
  a.alpha_gamma = 193.5;
  a.discriminator_score = 0.52;
  a.generator_score = 0.48;
  a.wall_time_s = 1.5;
  TrainLogRecord b = a;
  b.epoch = 2;
  b.phase = Phase::kFinetune;
  b.clustering = 2.25;
  b.l2 = 0.01;
  b.status = "numeric_error: L_gamma";

  const auto dir = scratch("log");
  {
    std::ofstream f(dir / "log.csv");
    write_train_log_header(f);
    write_train_log_row(f, a);
    write_train_log_row(f, b);
  }
  const auto back = read_train_log((dir / "log.csv").string());
  REQUIRE(back.size() == 2);
  CHECK(log_text(back) == log_text({a, b}));
  CHECK_FALSE(back[0].clustering.has_value());
  CHECK(back[1].status == b.status);
  CHECK(train_log_columns().front() == "epoch");
  CHECK_THROWS_AS(read_train_log((dir / "missing.csv").string()), IoError);
  std::filesystem::remove_all(dir);
}
