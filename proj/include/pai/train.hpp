#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pai/dataset.hpp"
#include "pai/models.hpp"

namespace pai::train {

enum class OptimizerKind { adam, sgd };

std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view s);

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 128;  // windows per step
  int epochs = 200;
  int window = 32;
  int stride = 0;  // 0: equal to window
  std::uint64_t seed = 1;
  OptimizerKind optimizer = OptimizerKind::adam;
  double divergence_factor = 100.0;
  /// Windows per gradient shard. Shards are reduced in a fixed order, so the
  /// result does not depend on the thread count.
  int shard_size = 16;

  void validate() const;
};

struct RunRecord {
  TrainConfig config;
  std::vector<double> train_loss;  // per completed epoch
  std::vector<double> test_mse;    // per completed epoch (NaN without a test set)
  double final_train = 0;
  double final_test = 0;
  double seconds = 0;
  bool converged = true;
  std::string stop_reason;

  std::size_t epochs_completed() const { return train_loss.size(); }
};

struct TrainResult {
  models::Model model;
  RunRecord record;
};

/// Minibatch BPTT on windows of a normalized training set. Stops early with
/// converged=false on a non-finite loss or one above divergence_factor times
/// the first batch loss; parameters never take a non-finite value.
TrainResult train(const models::ModelSpec& spec, const dataset::SampleSet& train_set,
                  const dataset::SampleSet& test_set, const TrainConfig& cfg);

struct BatchGradient {
  double loss = 0;   // mean squared error over the batch's labelled steps
  double count = 0;  // labelled steps
  nn::Parameters grad;
};

/// Whole batch in one forward/backward pass.
BatchGradient batch_gradient_serial(const models::Model& model, const dataset::SampleSet& set,
                                    std::span<const dataset::Window> windows);

/// Fixed-size shards computed in parallel and reduced in shard order.
BatchGradient batch_gradient_parallel(const models::Model& model, const dataset::SampleSet& set,
                                      std::span<const dataset::Window> windows, int shard_size);

// ---- sweeps ----------------------------------------------------------------

struct SweepGrid {
  std::vector<double> lrs;
  std::vector<int> batch_sizes;

  static SweepGrid defaults();  // {1e-2, 1e-3, 1e-4} x {128, 512, 2048}
  std::size_t cells() const { return lrs.size() * batch_sizes.size(); }
};

/// Parses "lrs=1e-3,1e-4;batches=128,2048" or "default".
SweepGrid parse_grid(const std::string& text);

struct TuneResult {
  std::vector<RunRecord> ranked;
  std::optional<std::size_t> best;  // index into ranked; first converged record
  std::optional<models::Model> best_model;
};

std::uint64_t cell_seed(std::uint64_t seed, double lr, int batch_size);

/// One run per (lr, batch) cell, ranked by final test MSE, then final train
/// loss, then grid order. Non-finite finals rank last.
TuneResult tune(const models::ModelSpec& spec, const SweepGrid& grid, const dataset::SampleSet& train_set,
                const dataset::SampleSet& test_set, const TrainConfig& base, bool keep_best_model = true);

void emit_curves(const RunRecord& record, const std::filesystem::path& path);
std::string format_curves(const RunRecord& record);

struct Curves {
  std::vector<double> train_loss, test_mse;
};
Curves parse_curves(const std::string& text);

std::string format_sweep_report(const TuneResult& result);
void write_sweep_report(const TuneResult& result, const std::filesystem::path& path);

}  // namespace pai::train
