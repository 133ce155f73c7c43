#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pai/dataset.hpp"
#include "pai/nn.hpp"
#include "pai/trace.hpp"

namespace pai::models {

enum class ModelKind { linreg, mlp, simple_lstm, hier_lstm };

std::string_view to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view s);

struct ModelSpec {
  ModelKind kind = ModelKind::hier_lstm;
  int uaim_dim = static_cast<int>(trace::kFeatureCount);
  int cfg_dim = static_cast<int>(trace::kConfigWidth);
  // simple_lstm
  int lstm_hidden = 64;
  int lstm_layers = 2;
  // hier_lstm
  int hier_uaim_hidden = 64;
  int hier_cfg_hidden = 16;
  int hier_top_hidden = 64;
  // head of both LSTM models
  int fc_hidden = 32;
  // mlp
  std::vector<int> mlp_hidden{128, 64};
  std::uint64_t seed = 1;

  static ModelSpec defaults(ModelKind kind);

  /// Throws InvalidSpec.
  void validate() const;

  /// Closed-form count of trainable scalars.
  std::size_t parameter_count() const;

  bool operator==(const ModelSpec&) const = default;
};

/// `steps` x `batch` sequences of normalized inputs. uaim is U x (steps*batch)
/// in step-major column order; cfg is C x batch and constant along a sequence.
struct SequenceBatch {
  int steps = 0;
  int batch = 0;
  nn::Matrix uaim;
  nn::Matrix cfg;
};

struct TrainingMeta {
  int epochs = 0;
  double final_train_mse = 0;
  double final_test_mse = 0;
  std::uint64_t seed = 0;
  double lr = 0;
  int batch_size = 0;
  bool converged = true;

  bool operator==(const TrainingMeta&) const = default;
};

class Model {
 public:
  /// Builds the topology for `spec` and initialises it from spec.seed.
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  nn::Parameters& params() { return params_; }
  const nn::Parameters& params() const { return params_; }

  /// Names of params().tensors() in order, e.g. "lstm_uaim.wx", "fc1.b".
  std::vector<std::string> tensor_names() const;

  struct Cache {
    int steps = 0;
    int batch = 0;
    nn::Matrix input;                  // concatenated (uaim, cfg) for non-hier models
    std::vector<nn::LstmSeqCache> lstm;
    std::vector<nn::Matrix> fc_in;     // input of each linear layer

    bool empty() const { return steps == 0; }
  };

  /// Raw (unclamped) outputs, 1 x (steps*batch). Recurrent state starts at
  /// zero and is carried across all steps of the call.
  nn::Matrix forward(const SequenceBatch& in, Cache* cache = nullptr) const;

  /// Accumulates parameter gradients for upstream gradient `dout` (1 x TB).
  void backward(const Cache& cache, const nn::Matrix& dout, nn::Parameters& grad) const;

  std::optional<dataset::NormStats> norm;
  std::uint64_t schema_hash = trace::FeatureSchema::canonical().hash();
  TrainingMeta meta;

 private:
  nn::Matrix head_forward(const nn::Matrix& x, Cache* cache) const;
  nn::Matrix head_backward(const Cache& cache, const nn::Matrix& dout, nn::Parameters& grad) const;
  nn::Matrix concat_input(const SequenceBatch& in) const;

  ModelSpec spec_;
  nn::Parameters params_;
};

Model build(const ModelSpec& spec);

inline constexpr double kMinPredictedIpc = 0.01;

/// Batch of windows over a normalized sample set, padded to the longest
/// window. `mask` is 1 on real steps and 0 on padding.
SequenceBatch make_batch(const dataset::SampleSet& set, std::span<const dataset::Window> windows,
                         std::vector<double>* targets = nullptr, std::vector<double>* mask = nullptr);

/// Normalized single-sequence input for a raw trace; needs model.norm.
SequenceBatch encode_trace(const Model& model, const trace::BenchmarkTrace& trace);

/// One clamped prediction per interval, state carried across the trace.
std::vector<double> predict_intervals(const Model& model, const trace::BenchmarkTrace& trace);

/// Predictions for already-normalized sequences, result[b][t]; floored at
/// kMinPredictedIpc unless `clamp` is false.
std::vector<std::vector<double>> predict_batch(const Model& model, const SequenceBatch& batch, bool clamp = true);

/// Total instructions over summed per-interval cycles (instructions / ipc,
/// with ipc floored at kMinPredictedIpc).
double aggregate_ipc(std::span<const double> ipc, std::span<const std::int64_t> instructions);

double predict_full_benchmark(const Model& model, const trace::BenchmarkTrace& trace);

/// Throws SchemaMismatch unless the model was trained on `schema`.
void check_schema(const Model& model, const trace::FeatureSchema& schema);

/// Gradient of mean squared error over a small batch, checked against central
/// differences on every parameter.
nn::GradCheckReport grad_check(Model& model, const SequenceBatch& batch, std::span<const double> targets,
                               double eps = 1e-5);

/// Loss and parameter gradient of masked MSE for one batch.
double loss_and_gradient(const Model& model, const SequenceBatch& batch, std::span<const double> targets,
                         std::span<const double> mask, nn::Parameters& grad);

// ---- checkpoints -----------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

std::string checkpoint_to_string(const Model& model);
Model checkpoint_from_string(const std::string& text);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace pai::models
