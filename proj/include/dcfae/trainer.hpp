#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcfae/datasets.hpp"
#include "dcfae/objective.hpp"
#include "dcfae/optim.hpp"

namespace dcfae {

struct TrainConfig {
  double lambda = 100.0;
  double lambda_prime = 10.0;  // also accepted as "gamma" in config files
  double rho = 100.0;
  std::size_t latent_dim = 50;
  std::size_t batch_size = 256;
  double learning_rate = 1e-4;
  std::size_t pretrain_epochs = 100;
  std::size_t finetune_epochs = 100;
  std::size_t clusters = 10;
  std::uint64_t seed = 0;
  bool no_discriminator = false;
  bool no_residual = false;
  bool no_dense_head = false;

  bool stop_grad_p = false;
  // Score the discriminator step on fakes regenerated after the generator
  // step instead of the fakes of the same forward pass.
  bool regenerate_fakes = false;
  bool reference_mode = false;
  std::size_t checkpoint_every = 10;
  std::size_t kmeans_restarts = 10;
  AugmentConfig augment;
  ArchitectureConfig architecture;  // latent_dim and residual are overridden
  HeadConfig head;

  void validate() const;
  /// Architecture with latent_dim, residual and the dataset's canvas/channels applied.
  ArchitectureConfig effective_architecture(std::size_t canvas, std::size_t channels) const;
  std::size_t total_epochs() const { return pretrain_epochs + finetune_epochs; }

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

enum class Phase { kPretrain, kFinetune };
std::string to_string(Phase p);

struct TrainLogRecord {
  std::size_t epoch = 0;  // 1-based, counted across both phases
  Phase phase = Phase::kPretrain;
  double neg_elbo = 0.0;
  std::optional<double> generator;      // L_G
  std::optional<double> discriminator;  // L_D
  std::optional<double> clustering;     // L_gamma
  double alpha = 0.0;                   // L_alpha = neg_elbo + lambda L_G
  double alpha_gamma = 0.0;             // L_alpha + lambda' L_gamma
  std::optional<double> l2;
  std::optional<double> discriminator_score;
  std::optional<double> generator_score;
  double wall_time_s = 0.0;
  std::string status = "ok";
};

std::vector<std::string> train_log_columns();
void write_train_log_header(std::ostream& out);
void write_train_log_row(std::ostream& out, const TrainLogRecord& r);
std::vector<TrainLogRecord> read_train_log(const std::string& path);

enum class Update { kGeneratorSide, kDiscriminator };
enum class Timing { kBefore, kAfter };

struct UpdateEvent {
  Phase phase;
  std::size_t epoch;
  std::size_t batch;
  Update update;
  Timing timing;
};

/// Everything needed to continue training exactly where it stopped.
struct TrainerState {
  DcfaeNetwork<float> network;
  Adam generator_optimizer;
  Adam discriminator_optimizer;
  std::size_t epochs_completed = 0;
};

class Trainer;

struct TrainerHooks {
  std::function<void(const UpdateEvent&, Trainer&)> on_update;
  std::function<void(const TrainLogRecord&)> on_epoch;
  std::function<void(Phase, Trainer&)> on_phase_end;
  std::function<void(const TrainerState&)> on_checkpoint;
};

struct ClusteringOutput {
  ClusterResult clusters;
  Tensor<double> points;  // rows that were clustered: embeddings, or mu without a head
};

class Trainer {
 public:
  /// Fresh networks initialized from cfg.seed.
  Trainer(TrainConfig cfg, const ImageDataset& data);
  /// Resume from a saved state.
  Trainer(TrainConfig cfg, const ImageDataset& data, TrainerState state);

  void set_hooks(TrainerHooks hooks) { hooks_ = std::move(hooks); }

  /// Runs the remaining epochs of both phases. Non-finite losses append a
  /// diagnostic record and rethrow.
  std::vector<TrainLogRecord> run();
  /// One epoch (global index, 0-based) of whichever phase it belongs to.
  TrainLogRecord run_epoch(std::size_t epoch);

  /// Clusters the whole dataset: encode to mu, embed with the head in
  /// inference mode (if present), k-means.
  ClusteringOutput cluster(bool use_head = true) const;

  const TrainConfig& config() const { return cfg_; }
  TrainerState& state() { return state_; }
  const TrainerState& state() const { return state_; }
  DcfaeNetwork<float>& network() { return state_.network; }
  Phase phase_of(std::size_t epoch) const {
    return epoch < cfg_.pretrain_epochs ? Phase::kPretrain : Phase::kFinetune;
  }

 private:
  struct BatchLosses {
    LossBreakdown losses;
    bool used_head = false;
  };

  BatchLosses train_batch(Phase phase, std::size_t epoch, std::size_t batch, const Tensor<float>& x);
  void score_epoch(std::size_t epoch, const Tensor<float>& x, TrainLogRecord& record) const;
  void notify(const UpdateEvent& e);
  void set_frozen(ParameterList<float> params, bool frozen);

  TrainConfig cfg_;
  const ImageDataset& data_;
  TrainerState state_;
  TrainerHooks hooks_;
};

/// Encodes images to posterior means in inference-sized chunks.
Tensor<float> encode_means(const FaeModel<float>& fae, const Tensor<float>& images, std::size_t chunk = 256);

/// Rows of the points k-means sees: mu, or the head's embedding of mu.
Tensor<double> clustering_points(const DcfaeNetwork<float>& net, const Tensor<float>& images, bool use_head);

}  // namespace dcfae
