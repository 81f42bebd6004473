#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <json.hpp>

#include "dcfae/trainer.hpp"

namespace dcfae {

struct MonitorOptions {
  std::size_t window = 50;
  double tolerance = 0.15;
};

struct MonitorSummary {
  std::size_t window = 50;
  std::size_t epochs_in_window = 0;
  std::optional<double> mean_discriminator;
  std::optional<double> mean_generator;
  std::optional<double> max_abs_deviation;  // of the two window means from 0.5
  bool converged = false;
  double tolerance = 0.15;

  nlohmann::json to_json() const;
};

/// Summarizes the last `window` epochs that carry scores. Converged means
/// both window means lie within `tolerance` of 0.5.
MonitorSummary summarize_scores(const std::vector<TrainLogRecord>& log, const MonitorOptions& options = {});

/// RGB line plot [h, w, 3] of both score series over epochs with a 0.5
/// reference line.
Tensor<float> plot_scores(const std::vector<TrainLogRecord>& log, std::size_t width = 640, std::size_t height = 360);

}  // namespace dcfae
