#include "dcfae/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dcfae/errors.hpp"

namespace dcfae {

nlohmann::json MonitorSummary::to_json() const {
  const std::string w = std::to_string(window);
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"window", window},
          {"epochs_in_window", epochs_in_window},
          {"last_" + w + "_epoch_mean_disc", opt(mean_discriminator)},
          {"last_" + w + "_epoch_mean_gen", opt(mean_generator)},
          {"max_abs_deviation_from_0.5", opt(max_abs_deviation)},
          {"tolerance", tolerance},
          {"converged", converged}};
}

MonitorSummary summarize_scores(const std::vector<TrainLogRecord>& log, const MonitorOptions& options) {
  if (options.window == 0) throw ConfigError("monitor window must be positive");
  MonitorSummary s;
  s.window = options.window;
  s.tolerance = options.tolerance;

  std::vector<const TrainLogRecord*> scored;
  for (const auto& r : log) {
    if (r.discriminator_score && r.generator_score) scored.push_back(&r);
  }
  const std::size_t begin = scored.size() > options.window ? scored.size() - options.window : 0;
  s.epochs_in_window = scored.size() - begin;
  if (s.epochs_in_window == 0) return s;

  double disc = 0.0, gen = 0.0;
  for (std::size_t i = begin; i < scored.size(); ++i) {
    disc += *scored[i]->discriminator_score;
    gen += *scored[i]->generator_score;
  }
  s.mean_discriminator = disc / static_cast<double>(s.epochs_in_window);
  s.mean_generator = gen / static_cast<double>(s.epochs_in_window);
  s.max_abs_deviation = std::max(std::abs(*s.mean_discriminator - 0.5), std::abs(*s.mean_generator - 0.5));
  s.converged = *s.max_abs_deviation <= options.tolerance;
  return s;
}

namespace {

struct Canvas {
  Tensor<float> image;
  std::size_t w, h;

  Canvas(std::size_t width, std::size_t height) : image({height, width, 3}, 1.0f), w(width), h(height) {}

  void set(long x, long y, const float (&rgb)[3]) {
    if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) return;
    float* px = image.ptr() + (static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * 3;
    std::copy(rgb, rgb + 3, px);
  }

  // Bresenham, two pixels thick.
  void line(long x0, long y0, long x1, long y1, const float (&rgb)[3], bool dashed = false) {
    const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    long step = 0;
    while (true) {
      if (!dashed || (step / 6) % 2 == 0) {
        set(x0, y0, rgb);
        set(x0, y0 + 1, rgb);
      }
      ++step;
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
};

}  // namespace

Tensor<float> plot_scores(const std::vector<TrainLogRecord>& log, std::size_t width, std::size_t height) {
  if (width < 64 || height < 64) throw ConfigError("plot is too small");
  Canvas c(width, height);
  const long left = 40, right = static_cast<long>(width) - 16, top = 16, bottom = static_cast<long>(height) - 32;
  const float axis[3] = {0.1f, 0.1f, 0.1f};
  const float grid[3] = {0.6f, 0.6f, 0.6f};
  const float disc_color[3] = {0.12f, 0.47f, 0.71f};
  const float gen_color[3] = {0.84f, 0.15f, 0.16f};

  c.line(left, top, left, bottom, axis);
  c.line(left, bottom, right, bottom, axis);
  auto y_of = [&](double v) { return bottom - static_cast<long>(std::lround(std::clamp(v, 0.0, 1.0) * static_cast<double>(bottom - top))); };
  for (double tick : {0.0, 0.25, 0.5, 0.75, 1.0}) c.line(left - 5, y_of(tick), left, y_of(tick), axis);
  c.line(left, y_of(0.5), right, y_of(0.5), grid, true);

  std::vector<std::pair<std::size_t, const TrainLogRecord*>> pts;
  for (const auto& r : log) {
    if (r.discriminator_score && r.generator_score) pts.emplace_back(r.epoch, &r);
  }
  if (pts.empty()) return c.image;
  const double first = static_cast<double>(pts.front().first);
  const double span = std::max(1.0, static_cast<double>(pts.back().first) - first);
  auto x_of = [&](std::size_t epoch) {
    return left + static_cast<long>(std::lround((static_cast<double>(epoch) - first) / span * static_cast<double>(right - left)));
  };
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const long x = x_of(pts[i].first);
    c.line(x, bottom, x, bottom + 3, axis);
    if (i == 0) continue;
    const long px = x_of(pts[i - 1].first);
    c.line(px, y_of(*pts[i - 1].second->discriminator_score), x, y_of(*pts[i].second->discriminator_score), disc_color);
    c.line(px, y_of(*pts[i - 1].second->generator_score), x, y_of(*pts[i].second->generator_score), gen_color);
  }
  // Legend swatches in the top-right corner: discriminator above generator.
  c.line(right - 40, top + 6, right - 10, top + 6, disc_color);
  c.line(right - 40, top + 18, right - 10, top + 18, gen_color);
  return c.image;
}

}  // namespace dcfae
