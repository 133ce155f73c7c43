#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pai/trace.hpp"

namespace pai::dataset {

struct NormStats {
  std::vector<double> uaim_mean, uaim_std;
  std::vector<double> cfg_mean, cfg_std;
  std::size_t computed_on = 0;

  bool operator==(const NormStats&) const = default;
};

enum class Provenance { seen, unseen };

std::string_view to_string(Provenance p);

/// One interval of one (benchmark, sku) trace. `uaim` holds per-instruction
/// counter rates (delta / instructions) before normalization.
struct Sample {
  std::string benchmark;
  std::string sku_id;
  std::size_t interval_index = 0;
  std::int64_t instructions = 0;
  std::vector<double> uaim;
  std::vector<double> cfg;
  double ipc = 0;
};

struct SampleSet {
  std::vector<Sample> samples;
  std::map<std::string, Provenance> tags;  // keyed by benchmark
  std::optional<NormStats> norm;           // set once samples are normalized

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
  std::vector<std::string> benchmarks() const;
};

/// Raw samples from labelled traces. Throws MissingLabels on an unlabelled
/// interval and InvalidSpec on a duplicate (benchmark, sku, interval).
SampleSet samples_from_traces(std::span<const trace::BenchmarkTrace> traces);

/// Per-column population mean and std of row vectors, std floored to 1 for
/// constant columns.
struct ColumnStats {
  std::vector<double> mean, std;
};
ColumnStats column_stats(std::span<const std::vector<double>> rows);

/// uAIM stats over training samples; config stats over the distinct SKUs
/// present in the training set.
NormStats compute_norm_stats(const SampleSet& train);

std::vector<double> normalize(std::span<const double> v, std::span<const double> mean, std::span<const double> std);
std::vector<double> denormalize(std::span<const double> v, std::span<const double> mean,
                                std::span<const double> std);

/// Copy of `raw` with uaim/cfg z-scored by `stats`.
SampleSet normalize(const SampleSet& raw, const NormStats& stats);

// ---- splits ----------------------------------------------------------------

enum class SplitMode { random_sample, random_trace, leave_out };

std::string_view to_string(SplitMode m);
SplitMode split_mode_from_string(std::string_view s);

struct TraceAssignment {
  std::string benchmark;
  std::string sku_id;
  std::string partition;  // train | test | mixed
};

struct SplitManifest {
  SplitMode mode = SplitMode::random_sample;
  std::uint64_t seed = 0;
  double ratio = 0.8;
  std::vector<std::string> holdout;
  std::map<std::string, Provenance> tags;
  std::vector<TraceAssignment> traces;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
};

struct Split {
  SampleSet train, test;
  SplitManifest manifest;
};

/// Per-sample shuffle; |train| = round(ratio * n).
Split split_random(const SampleSet& samples, double ratio, std::uint64_t seed);
/// Whole (benchmark, sku) traces are assigned; |train traces| = round(ratio * traces).
Split split_random_traces(const SampleSet& samples, double ratio, std::uint64_t seed);
/// Every sample of a held-out benchmark (any SKU) goes to test; names match
/// case-insensitively.
Split split_leave_benchmarks_out(const SampleSet& samples, std::span<const std::string> holdout);

std::string canonical_benchmark_name(std::string_view name);

void write_split_manifest(const std::filesystem::path& path, const SplitManifest& m);
SplitManifest read_split_manifest(const std::filesystem::path& path);

// ---- sequences -------------------------------------------------------------

/// Sample indices of one contiguous run of a (benchmark, sku) trace, in
/// interval order.
struct Window {
  std::vector<std::size_t> indices;
};

/// Contiguous runs per (benchmark, sku); a gap in interval_index starts a new run.
std::vector<Window> group_traces(const SampleSet& set);

/// Windows of `width` consecutive intervals every `stride`; a short tail is
/// kept when it holds at least width/2 intervals.
std::vector<Window> make_windows(const SampleSet& set, std::size_t width, std::size_t stride);

// ---- dataset directories ---------------------------------------------------

struct DatasetEntry {
  std::string file;  // relative to the dataset directory
  std::string benchmark;
  std::string sku_id;
};

struct DatasetManifest {
  std::vector<DatasetEntry> traces;
  std::string schema_file = "schema.json";
  std::string generator;  // provenance as JSON text (e.g. the synth spec)
};

inline constexpr const char* kDatasetManifestName = "dataset.json";

void write_dataset_manifest(const std::filesystem::path& dir, const DatasetManifest& m);
DatasetManifest read_dataset_manifest(const std::filesystem::path& dir);

struct LoadedDataset {
  trace::FeatureSchema schema = trace::FeatureSchema::canonical();
  std::vector<trace::BenchmarkTrace> traces;
};

LoadedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace pai::dataset
