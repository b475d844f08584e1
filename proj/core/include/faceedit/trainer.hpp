#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <ATen/core/Generator.h>
#include <torch/optim/adam.h>

#include "faceedit/dataset.hpp"
#include "faceedit/discriminator.hpp"
#include "faceedit/generator.hpp"
#include "faceedit/train_config.hpp"

namespace faceedit {

inline constexpr std::int64_t kCheckpointFormatVersion = 1;

// Ordered (term, value) pairs produced by one optimisation step.
using StepMetrics = std::vector<std::pair<std::string, double>>;

struct MetricRecord {
  std::int64_t step;
  std::int64_t epoch;
  std::string term;
  double value;

  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

using MetricLog = std::vector<MetricRecord>;

// Rows of "step,epoch,term,value" with round-trip precision.
void write_metric_row(std::ostream& out, const MetricRecord& r);
void write_metric_log(const std::filesystem::path& path, const MetricLog& log);
MetricLog read_metric_log(const std::filesystem::path& path);

double metric(const StepMetrics& m, const std::string& term);

struct TrainOptions {
  // Stop once this many iterations have run in total (global step), so a run
  // can be interrupted mid-epoch. Negative means no limit.
  std::int64_t max_steps = -1;
  // Called after every completed epoch with the 1-based epoch number.
  std::function<void(std::int64_t)> on_epoch_end;
  // Receives each record as it is appended.
  std::function<void(const MetricRecord&)> on_record;
};

// Owns the generator, discriminator, their optimisers and the sampling RNG.
// One training loop uses a Trainer exclusively.
class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  // One discriminator update on the full discriminator objective. The
  // generator is run without gradients and its parameters are untouched.
  StepMetrics train_step_d(const Batch& batch);
  // One generator update; discriminator parameters are untouched.
  StepMetrics train_step_g(const Batch& batch);

  // Runs from the current position until config().epochs are complete (or
  // options.max_steps is hit).
  void train(const Dataset& data, const TrainOptions& options = {});

  // Atomic: writes to a temporary file then renames.
  void save_checkpoint(const std::filesystem::path& path) const;
  // `expected` guards against resuming with a different attribute list or
  // resolution.
  static std::unique_ptr<Trainer> load_checkpoint(const std::filesystem::path& path,
                                                  const std::optional<TrainConfig>& expected = std::nullopt);

  const TrainConfig& config() const noexcept { return config_; }
  Generator& generator() noexcept { return generator_; }
  Discriminator& discriminator() noexcept { return discriminator_; }
  const MetricLog& log() const noexcept { return log_; }

  std::int64_t epoch() const noexcept { return epoch_; }  // completed epochs
  std::int64_t step_in_epoch() const noexcept { return step_in_epoch_; }
  std::int64_t global_step() const noexcept { return global_step_; }
  double current_learning_rate() const;

 private:
  void set_learning_rate(double lr);
  void record(const StepMetrics& m);
  torch::Tensor targets_for(const torch::Tensor& source);
  static void check_finite(const StepMetrics& m, const char* phase);

  TrainConfig config_;
  LossWeights weights_;
  Generator generator_{nullptr};
  Discriminator discriminator_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
  at::Generator rng_;
  std::int64_t epoch_ = 0;
  std::int64_t step_in_epoch_ = 0;
  std::int64_t global_step_ = 0;
  MetricLog log_;
};

// Models restored for inference, without optimiser state.
struct LoadedModels {
  TrainConfig config;
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
};

LoadedModels load_models(const std::filesystem::path& checkpoint);

// Raises ConfigError when the dataset does not fit the configuration.
void check_dataset_matches(const TrainConfig& config, const Dataset& data);

}  // namespace faceedit
