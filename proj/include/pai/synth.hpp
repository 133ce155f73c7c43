#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pai/trace.hpp"

namespace pai::synth {

struct SynthSpec {
  int n_benchmarks = 20;
  int n_skus = 15;
  int intervals_per_trace = 300;
  std::int64_t interval_width = trace::kDefaultIntervalWidth;
  double noise_sigma = 0.02;
  std::uint64_t seed = 1;

  /// Throws InvalidSpec.
  void validate() const;
};

enum class BehaviorClass { core_bound, memory_bound, uncore_bound, mixed };

std::string_view to_string(BehaviorClass c);

/// Latent process of one synthetic benchmark. Counter deltas are produced from
/// a periodic phase signal, bursty miss activity and per-feature base rates.
struct BenchmarkProfile {
  std::string name;
  BehaviorClass behavior = BehaviorClass::mixed;
  double miss_base = 0.1;
  double miss_amplitude = 0.1;
  double burst_probability = 0.1;
  double burst_scale = 0.3;
  double branch_rate = 0.15;
  double mispredict_base = 0.05;
  double mispredict_amplitude = 0.02;
  double period = 40;
  double phase = 0;
  double drift = 0;
  std::vector<double> base_rates;  // per feature, counts per instruction
  std::vector<double> loadings;    // per feature, response to the phase signal
  std::vector<double> miss_coupling;  // per feature, response to miss activity
};

// Counters the oracle reads. Their meaning is fixed by construction.
inline constexpr const char* kMissFeature = "mem_00";        // long-reuse-distance accesses
inline constexpr const char* kBranchFeature = "br_00";       // retired branches
inline constexpr const char* kHardBranchFeature = "br_01";   // high-entropy branches
inline constexpr double kMissScale = 0.01;  // kMissFeature count per instruction at intensity 1

struct OracleConstants {
  double alpha = 2.0;
  double beta = 0.5;
  double ema = 0.9;
};

/// Per-interval drivers of the oracle, read back from counter deltas.
struct OracleInputs {
  double miss_intensity = 0;
  double branch_mispredict_rate = 0;
};

OracleInputs oracle_inputs(const trace::IntervalRecord& rec,
                           const trace::FeatureSchema& schema = trace::FeatureSchema::canonical());

/// IPC of the last interval in `history`. `noise` is added before clamping.
double oracle_ipc(std::span<const trace::IntervalRecord> history, const trace::HardwareConfig& config,
                  double noise = 0.0, const trace::FeatureSchema& schema = trace::FeatureSchema::canonical());

/// Labels for every interval in one pass; `noise` is empty or one value per interval.
std::vector<double> oracle_ipc_sequence(std::span<const trace::IntervalRecord> intervals,
                                        const trace::HardwareConfig& config, std::span<const double> noise = {},
                                        const trace::FeatureSchema& schema = trace::FeatureSchema::canonical());

std::vector<trace::HardwareConfig> gen_skus(int n, std::uint64_t seed);

std::string benchmark_name(int index);
std::vector<BenchmarkProfile> gen_profiles(const SynthSpec& spec);

struct GeneratedTrace {
  std::vector<trace::CounterSnapshot> snapshots;
  std::vector<double> labels;  // one per interval
};

/// uAIM deltas depend only on (spec.seed, profile); label noise additionally
/// on the SKU.
GeneratedTrace gen_trace(const BenchmarkProfile& profile, const trace::HardwareConfig& sku, const SynthSpec& spec);

/// Uncumulated deltas of a benchmark (shared by every SKU).
std::vector<trace::IntervalRecord> gen_intervals(const BenchmarkProfile& profile, const SynthSpec& spec);

/// Labelled in-memory traces for every (benchmark, sku) pair, benchmark-major.
std::vector<trace::BenchmarkTrace> generate(const SynthSpec& spec);

/// Writes cumulative trace files, schema.json and dataset.json under `dir`.
/// Returns the number of trace files written.
std::size_t write_dataset(const std::filesystem::path& dir, const SynthSpec& spec);

std::string spec_to_json(const SynthSpec& spec);

}  // namespace pai::synth
