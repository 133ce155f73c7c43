#include "pai/evalx.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <sstream>

#include "pai/error.hpp"
#include "pai/io.hpp"

namespace pai::evalx {

using dataset::Provenance;

std::vector<RunPrediction> predict_runs(const models::Model& model, const dataset::SampleSet& set, bool clamp) {
  auto runs = dataset::group_traces(set);
  // Equal-length runs share a batch so the recurrent GEMMs stay wide.
  std::stable_sort(runs.begin(), runs.end(),
                   [](const auto& a, const auto& b) { return a.indices.size() < b.indices.size(); });
  constexpr std::size_t kChunk = 64;
  std::vector<std::pair<std::size_t, std::size_t>> chunks;
  for (std::size_t i = 0; i < runs.size();) {
    std::size_t j = i;
    while (j < runs.size() && j - i < kChunk && runs[j].indices.size() == runs[i].indices.size()) ++j;
    chunks.emplace_back(i, j);
    i = j;
  }
  std::vector<RunPrediction> out(runs.size());
  const auto n_chunks = static_cast<std::ptrdiff_t>(chunks.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < n_chunks; ++c) {
    const auto [lo, hi] = chunks[static_cast<std::size_t>(c)];
    std::span<const dataset::Window> windows(runs.data() + lo, hi - lo);
    const auto batch = models::make_batch(set, windows);
    auto pred = models::predict_batch(model, batch, clamp);
    for (std::size_t k = lo; k < hi; ++k) out[k] = {runs[k].indices, std::move(pred[k - lo])};
  }
  return out;
}

double interval_mse(const models::Model& model, const dataset::SampleSet& set) {
  if (set.empty()) throw Error(ErrorKind::EmptyDataset, "interval_mse over an empty set");
  double sum = 0;
  std::size_t n = 0;
  for (const auto& run : predict_runs(model, set, false)) {
    for (std::size_t t = 0; t < run.indices.size(); ++t) {
      const double d = run.predicted[t] - set.samples[run.indices[t]].ipc;
      sum += d * d;
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

double abs_pct_error(double predicted, double truth) { return std::abs(predicted - truth) / truth * 100.0; }

void summarize(EvalReport& report) {
  report.mean_overall = report.mean_seen = report.mean_unseen = 0;
  report.seen_rows = report.unseen_rows = 0;
  std::map<std::string, BenchmarkRollup> roll;
  for (const auto& r : report.rows) {
    report.mean_overall += r.abs_pct_error;
    if (r.tag == Provenance::seen) {
      report.mean_seen += r.abs_pct_error;
      ++report.seen_rows;
    } else {
      report.mean_unseen += r.abs_pct_error;
      ++report.unseen_rows;
    }
    auto& b = roll[r.benchmark];
    b.benchmark = r.benchmark;
    b.tag = r.tag;
    ++b.skus;
    b.true_ipc += r.true_ipc;
    b.pred_ipc += r.pred_ipc;
    b.abs_pct_error += r.abs_pct_error;
  }
  if (!report.rows.empty()) report.mean_overall /= static_cast<double>(report.rows.size());
  if (report.seen_rows) report.mean_seen /= static_cast<double>(report.seen_rows);
  if (report.unseen_rows) report.mean_unseen /= static_cast<double>(report.unseen_rows);
  report.rollups.clear();
  for (auto& [name, b] : roll) {
    const double n = static_cast<double>(b.skus);
    b.true_ipc /= n;
    b.pred_ipc /= n;
    b.abs_pct_error /= n;
    report.rollups.push_back(b);
  }
}

EvalReport benchmark_errors(const models::Model& model, std::span<const trace::BenchmarkTrace> traces,
                            const std::map<std::string, Provenance>& tags) {
  if (traces.empty()) throw Error(ErrorKind::EmptyDataset, "no traces to evaluate");
  for (const auto& t : traces)
    if (!t.labeled()) throw Error(ErrorKind::MissingLabels, "trace " + t.benchmark + "/" + t.sku.sku_id);

  EvalReport report;
  report.rows.resize(traces.size());
  std::vector<double> sq(traces.size());
  const auto n = static_cast<std::ptrdiff_t>(traces.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& t = traces[static_cast<std::size_t>(i)];
    // Raw outputs for the interval MSE; aggregate_ipc applies the floor.
    const auto pred = models::predict_batch(model, models::encode_trace(model, t), false).front();
    std::vector<double> truth;
    std::vector<std::int64_t> insts;
    double s = 0;
    for (std::size_t k = 0; k < t.intervals.size(); ++k) {
      truth.push_back(*t.intervals[k].ipc_label);
      insts.push_back(t.intervals[k].instructions);
      const double d = pred[k] - truth.back();
      s += d * d;
    }
    sq[static_cast<std::size_t>(i)] = s;
    auto& row = report.rows[static_cast<std::size_t>(i)];
    row.benchmark = t.benchmark;
    row.sku_id = t.sku.sku_id;
    auto it = tags.find(t.benchmark);
    row.tag = it == tags.end() ? Provenance::unseen : it->second;
    row.intervals = t.intervals.size();
    row.true_ipc = models::aggregate_ipc(truth, insts);
    row.pred_ipc = models::aggregate_ipc(pred, insts);
    row.abs_pct_error = abs_pct_error(row.pred_ipc, row.true_ipc);
  }
  double total = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    total += sq[i];
    count += traces[i].intervals.size();
  }
  report.interval_mse = total / static_cast<double>(count);
  std::sort(report.rows.begin(), report.rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.benchmark, a.sku_id) < std::tie(b.benchmark, b.sku_id);
  });
  summarize(report);
  return report;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorKind::EmptyDataset, "median of nothing");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

Throughput throughput_from_median(double median_seconds, std::size_t intervals, std::int64_t interval_width,
                                  int repetitions, double suite_instructions) {
  Throughput t;
  t.repetitions = repetitions;
  t.intervals = intervals;
  t.median_seconds = median_seconds;
  t.interval_width = interval_width;
  t.intervals_per_second = static_cast<double>(intervals) / median_seconds;
  t.instructions_per_second = t.intervals_per_second * static_cast<double>(interval_width);
  t.seconds_per_10b_instructions = 1e10 / t.instructions_per_second;
  t.suite_instructions = suite_instructions;
  t.suite_seconds = suite_instructions / static_cast<double>(interval_width) / t.intervals_per_second;
  return t;
}

Throughput timing_report(const models::Model& model, std::span<const trace::BenchmarkTrace> traces, int repetitions,
                         double suite_instructions) {
  if (traces.empty()) throw Error(ErrorKind::EmptyDataset, "timing needs at least one trace");
  if (repetitions < 1) throw Error(ErrorKind::InvalidSpec, "repetitions must be >= 1");
  std::vector<models::SequenceBatch> inputs;
  std::size_t intervals = 0;
  for (const auto& t : traces) {
    inputs.push_back(models::encode_trace(model, t));
    intervals += t.intervals.size();
  }
  double sink = 0;
  auto pass = [&] {
    for (const auto& in : inputs) sink += models::predict_batch(model, in).front().back();
  };
  pass();  // warmup
  std::vector<double> seconds;
  for (int r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    pass();
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  if (!std::isfinite(sink)) throw Error(ErrorKind::InvalidSpec, "non-finite prediction during timing");
  return throughput_from_median(median(seconds), intervals, traces.front().intervals.front().instructions, repetitions,
                                suite_instructions);
}

// ---- report files ----------------------------------------------------------

namespace {

constexpr const char* kRowHeader = "benchmark\tsku\ttag\tintervals\ttrue_ipc\tpred_ipc\tabs_pct_error";
constexpr const char* kRollupHeader = "benchmark\ttag\tskus\ttrue_ipc\tpred_ipc\tabs_pct_error";
constexpr const char* kPlotHeader = "# benchmark tag skus true_ipc pred_ipc abs_pct_error";

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError(line, "bad number '" + s + "'");
  return v;
}

std::size_t to_size(const std::string& s, std::size_t line) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError(line, "bad count '" + s + "'");
  return v;
}

Provenance to_tag(const std::string& s, std::size_t line) {
  if (s == "seen") return Provenance::seen;
  if (s == "unseen") return Provenance::unseen;
  throw ParseError(line, "bad tag '" + s + "'");
}

}  // namespace

std::string format_report(const EvalReport& r, ReportFormat format) {
  std::ostringstream out;
  const auto d = [](double v) { return format_double(v); };
  if (format == ReportFormat::plotdata) {
    out << kPlotHeader << '\n';
    for (const auto& b : r.rollups)
      out << b.benchmark << ' ' << dataset::to_string(b.tag) << ' ' << b.skus << ' ' << d(b.true_ipc) << ' '
          << d(b.pred_ipc) << ' ' << d(b.abs_pct_error) << '\n';
    return out.str();
  }
  out << "# pai-eval-report 1\n" << kRowHeader << '\n';
  for (const auto& row : r.rows)
    out << row.benchmark << '\t' << row.sku_id << '\t' << dataset::to_string(row.tag) << '\t' << row.intervals << '\t'
        << d(row.true_ipc) << '\t' << d(row.pred_ipc) << '\t' << d(row.abs_pct_error) << '\n';
  out << "# rollup\n" << kRollupHeader << '\n';
  for (const auto& b : r.rollups)
    out << b.benchmark << '\t' << dataset::to_string(b.tag) << '\t' << b.skus << '\t' << d(b.true_ipc) << '\t'
        << d(b.pred_ipc) << '\t' << d(b.abs_pct_error) << '\n';
  out << "# summary\n";
  out << "mean_overall\t" << d(r.mean_overall) << '\n';
  out << "mean_seen\t" << d(r.mean_seen) << '\n';
  out << "mean_unseen\t" << d(r.mean_unseen) << '\n';
  out << "seen_rows\t" << r.seen_rows << '\n';
  out << "unseen_rows\t" << r.unseen_rows << '\n';
  out << "interval_mse\t" << d(r.interval_mse) << '\n';
  if (r.timing) {
    const auto& t = *r.timing;
    out << "# timing\n";
    out << "repetitions\t" << t.repetitions << '\n';
    out << "intervals\t" << t.intervals << '\n';
    out << "median_seconds\t" << d(t.median_seconds) << '\n';
    out << "intervals_per_second\t" << d(t.intervals_per_second) << '\n';
    out << "interval_width\t" << t.interval_width << '\n';
    out << "instructions_per_second\t" << d(t.instructions_per_second) << '\n';
    out << "seconds_per_10b_instructions\t" << d(t.seconds_per_10b_instructions) << '\n';
    out << "suite_instructions\t" << d(t.suite_instructions) << '\n';
    out << "suite_seconds\t" << d(t.suite_seconds) << '\n';
  }
  return out.str();
}

void emit_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format) {
  write_file_atomic(path, format_report(report, format));
}

EvalReport parse_report(const std::string& text) {
  EvalReport r;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  enum class Section { none, rows, rollup, summary, timing } section = Section::none;
  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.starts_with("# pai-eval-report")) {
      if (line != "# pai-eval-report 1") throw Error(ErrorKind::UnsupportedVersion, line);
      section = Section::rows;
      continue;
    }
    if (line == "# rollup") { section = Section::rollup; continue; }
    if (line == "# summary") { section = Section::summary; continue; }
    if (line == "# timing") { section = Section::timing; r.timing.emplace(); continue; }
    if (line == kRowHeader || line == kRollupHeader) continue;
    const auto f = split(line, '\t');
    switch (section) {
      case Section::none: throw ParseError(lineno, "missing report header");
      case Section::rows:
        if (f.size() != 7) throw ParseError(lineno, "row needs 7 columns");
        r.rows.push_back({f[0], f[1], to_tag(f[2], lineno), to_size(f[3], lineno), to_double(f[4], lineno),
                          to_double(f[5], lineno), to_double(f[6], lineno)});
        break;
      case Section::rollup:
        if (f.size() != 6) throw ParseError(lineno, "rollup needs 6 columns");
        r.rollups.push_back({f[0], to_tag(f[1], lineno), to_size(f[2], lineno), to_double(f[3], lineno),
                             to_double(f[4], lineno), to_double(f[5], lineno)});
        break;
      case Section::summary:
      case Section::timing:
        if (f.size() != 2) throw ParseError(lineno, "key/value line needs 2 columns");
        kv[(section == Section::timing ? "t." : "") + f[0]] = f[1];
        break;
    }
  }
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw ParseError(lineno, "missing summary key " + k);
    return it->second;
  };
  r.mean_overall = to_double(get("mean_overall"), lineno);
  r.mean_seen = to_double(get("mean_seen"), lineno);
  r.mean_unseen = to_double(get("mean_unseen"), lineno);
  r.seen_rows = to_size(get("seen_rows"), lineno);
  r.unseen_rows = to_size(get("unseen_rows"), lineno);
  r.interval_mse = to_double(get("interval_mse"), lineno);
  if (r.timing) {
    auto& t = *r.timing;
    t.repetitions = static_cast<int>(to_size(get("t.repetitions"), lineno));
    t.intervals = to_size(get("t.intervals"), lineno);
    t.median_seconds = to_double(get("t.median_seconds"), lineno);
    t.intervals_per_second = to_double(get("t.intervals_per_second"), lineno);
    t.interval_width = static_cast<std::int64_t>(to_size(get("t.interval_width"), lineno));
    t.instructions_per_second = to_double(get("t.instructions_per_second"), lineno);
    t.seconds_per_10b_instructions = to_double(get("t.seconds_per_10b_instructions"), lineno);
    t.suite_instructions = to_double(get("t.suite_instructions"), lineno);
    t.suite_seconds = to_double(get("t.suite_seconds"), lineno);
  }
  return r;
}

std::vector<BenchmarkRollup> parse_plotdata(const std::string& text) {
  std::vector<BenchmarkRollup> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.starts_with('#')) continue;
    const auto f = split(line, ' ');
    if (f.size() != 6) throw ParseError(lineno, "plotdata row needs 6 columns");
    out.push_back({f[0], to_tag(f[1], lineno), to_size(f[2], lineno), to_double(f[3], lineno),
                   to_double(f[4], lineno), to_double(f[5], lineno)});
  }
  return out;
}

}  // namespace pai::evalx
