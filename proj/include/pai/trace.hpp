#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pai::trace {

inline constexpr std::size_t kFeatureCount = 128;
inline constexpr std::size_t kConfigWidth = 8;
inline constexpr std::int64_t kDefaultIntervalWidth = 10'000'000;

enum class Category { instruction, memory, branch, misc };

struct CategoryCounts {
  std::size_t instruction = 0;
  std::size_t memory = 0;
  std::size_t branch = 0;
  std::size_t misc = 0;
};

/// Ordered uAIM feature names. Categories follow the name prefix
/// (inst_, mem_, br_, misc_) unless given explicitly.
class FeatureSchema {
 public:
  FeatureSchema(std::vector<std::string> names, std::vector<Category> categories, int version = 1);

  /// Categories resolved from name prefixes; throws SchemaMismatch on an
  /// unrecognised prefix.
  static FeatureSchema from_names(std::vector<std::string> names, int version = 1);

  /// Canonical synthetic schema: inst_00..inst_60, mem_00..mem_47,
  /// br_00..br_06, misc_00..misc_11.
  static const FeatureSchema& canonical();

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Category>& categories() const { return categories_; }
  int version() const { return version_; }
  std::size_t size() const { return names_.size(); }
  CategoryCounts counts() const;

  std::optional<std::size_t> index_of(std::string_view name) const;

  /// Stable identity used to pair checkpoints with traces.
  std::uint64_t hash() const;

  bool operator==(const FeatureSchema&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Category> categories_;
  int version_;
};

std::string_view to_string(Category c);
Category category_from_string(std::string_view s);

FeatureSchema read_schema_file(const std::filesystem::path& path);
void write_schema_file(const std::filesystem::path& path, const FeatureSchema& schema, const std::string& notes = {});

struct CounterSnapshot {
  std::int64_t instruction_index = 0;
  std::vector<double> counters;

  bool operator==(const CounterSnapshot&) const = default;
};

struct IntervalRecord {
  std::vector<double> uaim_delta;
  std::int64_t instructions = kDefaultIntervalWidth;
  std::optional<double> ipc_label;
  std::optional<double> cycles_label;

  /// Sets the IPC label and the matching cycle count.
  void set_ipc(double ipc);

  bool operator==(const IntervalRecord&) const = default;
};

struct HardwareConfig {
  std::string sku_id;
  int core_count = 1;
  int thread_count = 1;
  double clock_ghz = 1.0;
  double l1_kb = 32;
  double l2_kb = 1024;
  double llc_mb = 16;
  int issue_width = 4;
  int rob_size = 256;

  /// Throws InvalidSpec when a field is out of its legal range.
  void validate() const;

  /// (core_count, thread_count, clock_ghz, l1_kb, l2_kb, llc_mb, issue_width, rob_size)
  std::vector<double> feature_vector() const;

  bool operator==(const HardwareConfig&) const = default;
};

struct BenchmarkTrace {
  std::string benchmark;
  HardwareConfig sku;
  std::vector<IntervalRecord> intervals;

  bool labeled() const;
  std::int64_t total_instructions() const;
  /// Non-empty; uniform width except a shorter tail; deltas non-negative.
  void validate(std::size_t feature_count = kFeatureCount) const;
};

struct DiffOptions {
  /// Clamp negative deltas to zero instead of failing.
  bool wrap_tolerant = false;
};

struct DiffResult {
  std::vector<IntervalRecord> intervals;
  std::size_t clamped = 0;  // negative deltas zeroed in wrap-tolerant mode
};

DiffResult diff_snapshots(std::span<const CounterSnapshot> snapshots, DiffOptions options = {});

std::vector<CounterSnapshot> accumulate_intervals(std::span<const IntervalRecord> intervals,
                                                  const CounterSnapshot& base);

// ---- trace files -----------------------------------------------------------

enum class TraceMode { cumulative, differential };

struct TraceRow {
  std::int64_t i = 0;  // instruction index (cumulative) or interval width (differential)
  std::vector<double> c;
  std::optional<double> ipc;

  bool operator==(const TraceRow&) const = default;
};

/// In-memory image of one trace file.
struct TraceFile {
  FeatureSchema schema = FeatureSchema::canonical();
  HardwareConfig sku;
  std::string benchmark;
  TraceMode mode = TraceMode::differential;
  std::vector<TraceRow> rows;

  bool operator==(const TraceFile&) const = default;
};

inline constexpr int kTraceFormatVersion = 1;

std::string format_trace(const TraceFile& file);
TraceFile parse_trace(std::istream& in);
TraceFile read_trace_file(const std::filesystem::path& path);
void write_trace_file(const std::filesystem::path& path, const TraceFile& file);

/// Differential file for a trace (labels included when present).
TraceFile to_trace_file(const FeatureSchema& schema, const BenchmarkTrace& trace);

/// Cumulative file from snapshots; labels[k] belongs to the interval ending at
/// snapshot k+1.
TraceFile to_cumulative_file(const FeatureSchema& schema, const HardwareConfig& sku, const std::string& benchmark,
                             std::span<const CounterSnapshot> snapshots, std::span<const double> labels = {});

struct LoadedTrace {
  FeatureSchema schema;
  BenchmarkTrace trace;
};

/// File rows as intervals, differencing cumulative files.
LoadedTrace to_benchmark_trace(const TraceFile& file, DiffOptions options = {});
LoadedTrace load_trace(const std::filesystem::path& path, DiffOptions options = {});

}  // namespace pai::trace
