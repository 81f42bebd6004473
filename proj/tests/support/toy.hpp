#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dcfae/trainer.hpp"
#include "tiny.hpp"

namespace dcfae::testing {

/// Two classes of 8x8 images: a Gaussian blob centred in the upper-left or
/// the lower-right quadrant, jittered by up to one pixel, plus pixel noise.
inline ImageDataset blob_dataset(std::size_t n = 200, std::uint64_t seed = 1, std::size_t side = 8) {
  ImageDataset ds;
  ds.name = "blobs";
  ds.num_classes = 2;
  ds.images = Tensor<float>({n, side, side, 1});
  std::vector<int> labels(n);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> jitter(-1, 1);
  std::normal_distribution<double> noise(0.0, 0.05);
  const double s = static_cast<double>(side);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    labels[i] = label;
    const double cx = (label == 0 ? 0.3 : 0.7) * s + jitter(rng);
    const double cy = (label == 0 ? 0.3 : 0.7) * s + jitter(rng);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double d2 = (static_cast<double>(x) - cx) * (static_cast<double>(x) - cx) +
                          (static_cast<double>(y) - cy) * (static_cast<double>(y) - cy);
        const double v = std::exp(-d2 / (2.0 * 1.2 * 1.2)) + noise(rng);
        ds.images[(i * side + y) * side + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  ds.labels = labels;
  return ds;
}

inline TrainConfig tiny_train_config(std::size_t pretrain = 2, std::size_t finetune = 2, std::uint64_t seed = 3) {
  TrainConfig c;
  c.latent_dim = 4;
  c.batch_size = 20;
  c.learning_rate = 1e-3;
  c.pretrain_epochs = pretrain;
  c.finetune_epochs = finetune;
  c.clusters = 2;
  c.seed = seed;
  c.lambda = 1.0;
  c.lambda_prime = 1.0;
  c.rho = 10.0;
  c.reference_mode = true;
  c.kmeans_restarts = 3;
  c.checkpoint_every = 0;
  c.architecture.filters = {4, 6, 6, 8};
  c.head.hidden = {16, 16};
  c.head.embed_dim = 2;
  return c;
}

struct FreezeReport {
  bool xi_frozen_in_pretrain = true;
  bool psi_frozen_in_generator_steps = true;
  bool generator_side_frozen_in_discriminator_steps = true;
  bool generator_side_moves = false;
  bool psi_moves = false;
  bool xi_moves_in_finetune = false;
  bool order_ok = true;
  std::size_t generator_steps = 0;
  std::size_t discriminator_steps = 0;
  std::vector<std::string> sequence;
};

/// Trains the toy setup while hashing each parameter group around every
/// update and recording the order in which updates happen.
inline FreezeReport check_freeze_contracts(const ImageDataset& data, TrainConfig cfg) {
  FreezeReport r;
  Trainer trainer(cfg, data);
  auto& net = trainer.network();
  auto phi_theta = [&] {
    auto p = net.fae.encoder_parameters();
    for (auto* q : net.fae.decoder_parameters()) p.push_back(q);
    return p;
  };
  const std::uint64_t xi_start = parameter_hash(net.head_parameters());
  std::uint64_t before_phi = 0, before_psi = 0, before_xi = 0;
  std::string expected_next = "gen";
  std::size_t last_batch = 0, last_epoch = 0;

  TrainerHooks hooks;
  hooks.on_update = [&](const UpdateEvent& e, Trainer& t) {
    auto& n = t.network();
    if (e.timing == Timing::kBefore) {
      before_phi = parameter_hash(phi_theta());
      before_psi = parameter_hash(n.fae.discriminator_parameters());
      before_xi = parameter_hash(n.head_parameters());
      const std::string tag = e.update == Update::kGeneratorSide ? "gen" : "disc";
      r.sequence.push_back(tag + "@" + std::to_string(e.epoch) + ":" + std::to_string(e.batch));
      if (tag != expected_next) r.order_ok = false;
      if (tag == "disc" && (e.epoch != last_epoch || e.batch != last_batch)) r.order_ok = false;
      last_epoch = e.epoch;
      last_batch = e.batch;
      expected_next = tag == "gen" ? (t.config().no_discriminator ? "gen" : "disc") : "gen";
      return;
    }
    const bool phi_changed = parameter_hash(phi_theta()) != before_phi;
    const bool psi_changed = parameter_hash(n.fae.discriminator_parameters()) != before_psi;
    const bool xi_changed = parameter_hash(n.head_parameters()) != before_xi;
    if (e.update == Update::kGeneratorSide) {
      ++r.generator_steps;
      if (psi_changed) r.psi_frozen_in_generator_steps = false;
      if (phi_changed) r.generator_side_moves = true;
      if (e.phase == Phase::kPretrain && xi_changed) r.xi_frozen_in_pretrain = false;
      if (e.phase == Phase::kFinetune && xi_changed) r.xi_moves_in_finetune = true;
    } else {
      ++r.discriminator_steps;
      if (phi_changed || xi_changed) r.generator_side_frozen_in_discriminator_steps = false;
      if (psi_changed) r.psi_moves = true;
    }
  };
  hooks.on_phase_end = [&](Phase p, Trainer& t) {
    if (p == Phase::kPretrain && parameter_hash(t.network().head_parameters()) != xi_start) {
      r.xi_frozen_in_pretrain = false;
    }
  };
  trainer.set_hooks(hooks);
  trainer.run();
  return r;
}

}  // namespace dcfae::testing
