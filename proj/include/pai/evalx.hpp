#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pai/dataset.hpp"
#include "pai/models.hpp"
#include "pai/trace.hpp"

namespace pai::evalx {

/// Stateful predictions for every contiguous trace run of a normalized set.
struct RunPrediction {
  std::vector<std::size_t> indices;  // samples, interval order
  std::vector<double> predicted;
};

std::vector<RunPrediction> predict_runs(const models::Model& model, const dataset::SampleSet& set, bool clamp = true);

/// MSE between raw per-interval model outputs and labels, the quantity the
/// training loss minimizes. Throws EmptyDataset.
double interval_mse(const models::Model& model, const dataset::SampleSet& set);

double abs_pct_error(double predicted, double truth);

struct ReportRow {
  std::string benchmark;
  std::string sku_id;
  dataset::Provenance tag = dataset::Provenance::seen;
  std::size_t intervals = 0;
  double true_ipc = 0;
  double pred_ipc = 0;
  double abs_pct_error = 0;

  bool operator==(const ReportRow&) const = default;
};

/// Mean over SKUs of one benchmark.
struct BenchmarkRollup {
  std::string benchmark;
  dataset::Provenance tag = dataset::Provenance::seen;
  std::size_t skus = 0;
  double true_ipc = 0;
  double pred_ipc = 0;
  double abs_pct_error = 0;

  bool operator==(const BenchmarkRollup&) const = default;
};

struct Throughput {
  int repetitions = 0;
  std::size_t intervals = 0;
  double median_seconds = 0;
  double intervals_per_second = 0;
  std::int64_t interval_width = trace::kDefaultIntervalWidth;
  double instructions_per_second = 0;
  double seconds_per_10b_instructions = 0;
  /// Projection for a suite of `suite_instructions` at the measured rate.
  double suite_instructions = 0;
  double suite_seconds = 0;

  bool operator==(const Throughput&) const = default;
};

struct EvalReport {
  std::vector<ReportRow> rows;  // one per (benchmark, sku)
  std::vector<BenchmarkRollup> rollups;
  double mean_overall = 0;
  double mean_seen = 0;
  double mean_unseen = 0;
  std::size_t seen_rows = 0;
  std::size_t unseen_rows = 0;
  double interval_mse = 0;
  std::optional<Throughput> timing;

  bool operator==(const EvalReport&) const = default;
};

/// True and predicted full-benchmark IPC per labelled trace, both via summed
/// cycles. Benchmarks absent from `tags` count as unseen. Throws MissingLabels.
EvalReport benchmark_errors(const models::Model& model, std::span<const trace::BenchmarkTrace> traces,
                            const std::map<std::string, dataset::Provenance>& tags);

/// Recomputes means and rollups from rows.
void summarize(EvalReport& report);

inline constexpr double kSuiteInstructions = 65e12;

/// Serial stateful inference over all traces: one warmup pass, then the
/// median of `repetitions` timed passes.
Throughput timing_report(const models::Model& model, std::span<const trace::BenchmarkTrace> traces,
                         int repetitions = 5, double suite_instructions = kSuiteInstructions);

/// Pure arithmetic behind timing_report.
Throughput throughput_from_median(double median_seconds, std::size_t intervals, std::int64_t interval_width,
                                  int repetitions, double suite_instructions = kSuiteInstructions);

double median(std::vector<double> values);

enum class ReportFormat { table, plotdata };

std::string format_report(const EvalReport& report, ReportFormat format);
void emit_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format);

/// Parses the table format back into a report.
EvalReport parse_report(const std::string& text);

/// Parses plotdata rows back into rollups.
std::vector<BenchmarkRollup> parse_plotdata(const std::string& text);

}  // namespace pai::evalx
