#include "pai/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pai/error.hpp"
#include "pai/hash.hpp"
#include "pai/io.hpp"

namespace pai::trace {

using ojson = nlohmann::ordered_json;

namespace {

constexpr CategoryCounts kExpectedCounts{61, 48, 7, 12};

std::string numbered(std::string_view prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*s%02zu", static_cast<int>(prefix.size()), prefix.data(), i);
  return buf;
}

bool all_finite_nonneg(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x) && x >= 0.0; });
}

}  // namespace

std::string_view to_string(Category c) {
  switch (c) {
    case Category::instruction: return "instruction";
    case Category::memory: return "memory";
    case Category::branch: return "branch";
    case Category::misc: return "misc";
  }
  return "misc";
}

Category category_from_string(std::string_view s) {
  if (s == "instruction") return Category::instruction;
  if (s == "memory") return Category::memory;
  if (s == "branch") return Category::branch;
  if (s == "misc") return Category::misc;
  throw Error(ErrorKind::SchemaMismatch, "unknown feature category '" + std::string(s) + "'");
}

FeatureSchema::FeatureSchema(std::vector<std::string> names, std::vector<Category> categories, int version)
    : names_(std::move(names)), categories_(std::move(categories)), version_(version) {
  if (names_.size() != kFeatureCount)
    throw Error(ErrorKind::SchemaMismatch,
                "schema has " + std::to_string(names_.size()) + " features, expected " + std::to_string(kFeatureCount));
  if (categories_.size() != names_.size()) throw Error(ErrorKind::SchemaMismatch, "category list length differs");
  std::set<std::string_view> seen;
  for (const auto& n : names_)
    if (!seen.insert(n).second) throw Error(ErrorKind::SchemaMismatch, "duplicate feature name '" + n + "'");
  auto c = counts();
  if (c.instruction != kExpectedCounts.instruction || c.memory != kExpectedCounts.memory ||
      c.branch != kExpectedCounts.branch || c.misc != kExpectedCounts.misc)
    throw Error(ErrorKind::SchemaMismatch, "category counts must be instruction=61 memory=48 branch=7 misc=12");
}

FeatureSchema FeatureSchema::from_names(std::vector<std::string> names, int version) {
  std::vector<Category> cats;
  cats.reserve(names.size());
  for (const auto& n : names) {
    if (n.starts_with("inst_")) cats.push_back(Category::instruction);
    else if (n.starts_with("mem_")) cats.push_back(Category::memory);
    else if (n.starts_with("br_")) cats.push_back(Category::branch);
    else if (n.starts_with("misc_")) cats.push_back(Category::misc);
    else throw Error(ErrorKind::SchemaMismatch, "cannot infer category of feature '" + n + "'");
  }
  return FeatureSchema(std::move(names), std::move(cats), version);
}

const FeatureSchema& FeatureSchema::canonical() {
  static const FeatureSchema schema = [] {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < kExpectedCounts.instruction; ++i) names.push_back(numbered("inst_", i));
    for (std::size_t i = 0; i < kExpectedCounts.memory; ++i) names.push_back(numbered("mem_", i));
    for (std::size_t i = 0; i < kExpectedCounts.branch; ++i) names.push_back(numbered("br_", i));
    for (std::size_t i = 0; i < kExpectedCounts.misc; ++i) names.push_back(numbered("misc_", i));
    return from_names(std::move(names));
  }();
  return schema;
}

CategoryCounts FeatureSchema::counts() const {
  CategoryCounts c;
  for (auto cat : categories_) {
    switch (cat) {
      case Category::instruction: ++c.instruction; break;
      case Category::memory: ++c.memory; break;
      case Category::branch: ++c.branch; break;
      case Category::misc: ++c.misc; break;
    }
  }
  return c;
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::uint64_t FeatureSchema::hash() const {
  std::uint64_t h = fnv1a("pai-schema");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    h = fnv1a(names_[i], h);
    h = fnv1a(to_string(categories_[i]), h);
    h = fnv1a("\n", h);
  }
  return h;
}

FeatureSchema read_schema_file(const std::filesystem::path& path) {
  ojson j;
  try {
    j = ojson::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, e.what());
  }
  if (j.value("format", "") != "pai-schema") throw ParseError(1, "not a pai-schema file");
  int version = j.value("version", 0);
  if (version != 1) throw Error(ErrorKind::UnsupportedVersion, "schema version " + std::to_string(version));
  std::vector<std::string> names;
  std::vector<Category> cats;
  for (const auto& f : j.at("features")) {
    names.push_back(f.at("name").get<std::string>());
    cats.push_back(category_from_string(f.at("category").get<std::string>()));
  }
  return FeatureSchema(std::move(names), std::move(cats), version);
}

void write_schema_file(const std::filesystem::path& path, const FeatureSchema& schema, const std::string& notes) {
  ojson j;
  j["format"] = "pai-schema";
  j["version"] = schema.version();
  if (!notes.empty()) j["notes"] = notes;
  auto& feats = j["features"] = ojson::array();
  for (std::size_t i = 0; i < schema.size(); ++i)
    feats.push_back({{"name", schema.names()[i]}, {"category", to_string(schema.categories()[i])}});
  write_file_atomic(path, j.dump(1) + "\n");
}

// ---- records ---------------------------------------------------------------

void IntervalRecord::set_ipc(double ipc) {
  ipc_label = ipc;
  cycles_label = static_cast<double>(instructions) / ipc;
}

void HardwareConfig::validate() const {
  auto fail = [&](const std::string& what) { throw Error(ErrorKind::InvalidSpec, "sku '" + sku_id + "': " + what); };
  if (sku_id.empty()) fail("empty sku_id");
  if (core_count < 1) fail("core_count < 1");
  if (thread_count < 1) fail("thread_count < 1");
  if (!(clock_ghz > 0) || !std::isfinite(clock_ghz)) fail("clock_ghz must be positive");
  if (!(l1_kb > 0) || !(l2_kb > 0) || !(llc_mb > 0)) fail("cache sizes must be positive");
  if (!std::isfinite(l1_kb) || !std::isfinite(l2_kb) || !std::isfinite(llc_mb)) fail("cache sizes must be finite");
  if (issue_width < 1 || issue_width > 16) fail("issue_width outside [1, 16]");
  if (rob_size < 32 || rob_size > 2048) fail("rob_size outside [32, 2048]");
}

std::vector<double> HardwareConfig::feature_vector() const {
  return {static_cast<double>(core_count), static_cast<double>(thread_count), clock_ghz, l1_kb, l2_kb, llc_mb,
          static_cast<double>(issue_width), static_cast<double>(rob_size)};
}

bool BenchmarkTrace::labeled() const {
  return !intervals.empty() &&
         std::all_of(intervals.begin(), intervals.end(), [](const auto& r) { return r.ipc_label.has_value(); });
}

std::int64_t BenchmarkTrace::total_instructions() const {
  std::int64_t total = 0;
  for (const auto& r : intervals) total += r.instructions;
  return total;
}

void BenchmarkTrace::validate(std::size_t feature_count) const {
  if (intervals.empty()) throw Error(ErrorKind::EmptyTrace, "trace '" + benchmark + "' has no intervals");
  const auto width = intervals.front().instructions;
  for (std::size_t k = 0; k < intervals.size(); ++k) {
    const auto& r = intervals[k];
    if (r.uaim_delta.size() != feature_count)
      throw Error(ErrorKind::SchemaMismatch, "interval " + std::to_string(k) + " has " +
                                                 std::to_string(r.uaim_delta.size()) + " features");
    if (!all_finite_nonneg(r.uaim_delta))
      throw Error(ErrorKind::InvalidSpec, "interval " + std::to_string(k) + " has a negative or non-finite delta");
    if (r.instructions <= 0) throw Error(ErrorKind::InvalidSpec, "interval " + std::to_string(k) + " is empty");
    bool tail = k + 1 == intervals.size();
    if (!tail && r.instructions != width)
      throw Error(ErrorKind::InvalidSpec, "interval " + std::to_string(k) + " width differs from the trace width");
    if (tail && r.instructions > width && intervals.size() > 1)
      throw Error(ErrorKind::InvalidSpec, "tail interval is wider than the trace width");
    if (r.ipc_label && !(*r.ipc_label > 0))
      throw Error(ErrorKind::InvalidSpec, "interval " + std::to_string(k) + " has a non-positive IPC label");
  }
}

// ---- differencing ----------------------------------------------------------

DiffResult diff_snapshots(std::span<const CounterSnapshot> snapshots, DiffOptions options) {
  if (snapshots.size() < 2) throw Error(ErrorKind::EmptyTrace, "need at least 2 snapshots");
  const std::size_t width = snapshots.front().counters.size();
  DiffResult out;
  out.intervals.reserve(snapshots.size() - 1);
  for (std::size_t k = 1; k < snapshots.size(); ++k) {
    const auto& prev = snapshots[k - 1];
    const auto& cur = snapshots[k];
    if (cur.counters.size() != width)
      throw Error(ErrorKind::SchemaMismatch, "snapshot " + std::to_string(k) + " has a different counter width");
    if (cur.instruction_index <= prev.instruction_index)
      throw Error(ErrorKind::InvalidSpec, "instruction_index not strictly increasing at snapshot " + std::to_string(k));
    IntervalRecord rec;
    rec.instructions = cur.instruction_index - prev.instruction_index;
    rec.uaim_delta.resize(width);
    for (std::size_t f = 0; f < width; ++f) {
      double d = cur.counters[f] - prev.counters[f];
      if (d < 0) {
        if (!options.wrap_tolerant) throw NonMonotonicCounter(f, k);
        d = 0;
        ++out.clamped;
      }
      rec.uaim_delta[f] = d;
    }
    out.intervals.push_back(std::move(rec));
  }
  return out;
}

std::vector<CounterSnapshot> accumulate_intervals(std::span<const IntervalRecord> intervals,
                                                  const CounterSnapshot& base) {
  std::vector<CounterSnapshot> out;
  out.reserve(intervals.size() + 1);
  out.push_back(base);
  for (std::size_t k = 0; k < intervals.size(); ++k) {
    const auto& rec = intervals[k];
    const auto& prev = out.back();
    if (rec.uaim_delta.size() != prev.counters.size())
      throw Error(ErrorKind::SchemaMismatch, "interval " + std::to_string(k) + " width differs from base snapshot");
    CounterSnapshot next;
    next.instruction_index = prev.instruction_index + rec.instructions;
    next.counters.resize(prev.counters.size());
    for (std::size_t f = 0; f < prev.counters.size(); ++f) next.counters[f] = prev.counters[f] + rec.uaim_delta[f];
    out.push_back(std::move(next));
  }
  return out;
}

// ---- trace files -----------------------------------------------------------

namespace {

ojson sku_to_json(const HardwareConfig& s) {
  ojson j;
  j["sku_id"] = s.sku_id;
  j["core_count"] = s.core_count;
  j["thread_count"] = s.thread_count;
  j["clock_ghz"] = s.clock_ghz;
  j["l1_kb"] = s.l1_kb;
  j["l2_kb"] = s.l2_kb;
  j["llc_mb"] = s.llc_mb;
  j["issue_width"] = s.issue_width;
  j["rob_size"] = s.rob_size;
  return j;
}

HardwareConfig sku_from_json(const ojson& j) {
  HardwareConfig s;
  s.sku_id = j.at("sku_id").get<std::string>();
  s.core_count = j.at("core_count").get<int>();
  s.thread_count = j.at("thread_count").get<int>();
  s.clock_ghz = j.at("clock_ghz").get<double>();
  s.l1_kb = j.at("l1_kb").get<double>();
  s.l2_kb = j.at("l2_kb").get<double>();
  s.llc_mb = j.at("llc_mb").get<double>();
  s.issue_width = j.at("issue_width").get<int>();
  s.rob_size = j.at("rob_size").get<int>();
  return s;
}

}  // namespace

std::string format_trace(const TraceFile& file) {
  ojson header;
  header["format"] = "pai-trace";
  header["version"] = kTraceFormatVersion;
  header["schema"] = file.schema.names();
  header["sku"] = sku_to_json(file.sku);
  header["benchmark"] = file.benchmark;
  header["mode"] = file.mode == TraceMode::cumulative ? "cumulative" : "differential";

  std::string out = header.dump();
  out += '\n';
  for (const auto& row : file.rows) {
    ojson r;
    r["i"] = row.i;
    r["c"] = row.c;
    if (row.ipc) r["ipc"] = *row.ipc;
    out += r.dump();
    out += '\n';
  }
  return out;
}

TraceFile parse_trace(std::istream& in) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");

  ojson header;
  try {
    header = ojson::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, e.what());
  }
  if (!header.is_object() || header.value("format", "") != "pai-trace") throw ParseError(1, "not a pai-trace header");
  if (!header.contains("version") || !header["version"].is_number_integer()) throw ParseError(1, "missing version");
  int version = header["version"].get<int>();
  if (version != kTraceFormatVersion)
    throw Error(ErrorKind::UnsupportedVersion, "trace version " + std::to_string(version));

  TraceFile file;
  try {
    file.schema = FeatureSchema::from_names(header.at("schema").get<std::vector<std::string>>());
    file.sku = sku_from_json(header.at("sku"));
    file.benchmark = header.at("benchmark").get<std::string>();
    auto mode = header.at("mode").get<std::string>();
    if (mode == "cumulative") file.mode = TraceMode::cumulative;
    else if (mode == "differential") file.mode = TraceMode::differential;
    else throw ParseError(1, "unknown mode '" + mode + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, e.what());
  }
  try {
    file.sku.validate();
  } catch (const Error& e) {
    throw ParseError(1, e.what());
  }

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    TraceRow row;
    try {
      auto r = ojson::parse(line);
      row.i = r.at("i").get<std::int64_t>();
      row.c = r.at("c").get<std::vector<double>>();
      if (r.contains("ipc")) row.ipc = r["ipc"].get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    }
    if (row.c.size() != file.schema.size())
      throw Error(ErrorKind::SchemaMismatch, "line " + std::to_string(lineno) + " has " +
                                                 std::to_string(row.c.size()) + " features, header declares " +
                                                 std::to_string(file.schema.size()));
    if (!all_finite_nonneg(row.c)) throw ParseError(lineno, "negative or non-finite counter");
    if (row.ipc && !(*row.ipc > 0 && std::isfinite(*row.ipc))) throw ParseError(lineno, "IPC label must be positive");
    file.rows.push_back(std::move(row));
  }
  return file;
}

TraceFile read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return parse_trace(in);
}

void write_trace_file(const std::filesystem::path& path, const TraceFile& file) {
  write_file_atomic(path, format_trace(file));
}

TraceFile to_trace_file(const FeatureSchema& schema, const BenchmarkTrace& trace) {
  TraceFile file{schema, trace.sku, trace.benchmark, TraceMode::differential, {}};
  file.rows.reserve(trace.intervals.size());
  for (const auto& r : trace.intervals) file.rows.push_back({r.instructions, r.uaim_delta, r.ipc_label});
  return file;
}

TraceFile to_cumulative_file(const FeatureSchema& schema, const HardwareConfig& sku, const std::string& benchmark,
                             std::span<const CounterSnapshot> snapshots, std::span<const double> labels) {
  if (!labels.empty() && labels.size() + 1 != snapshots.size())
    throw Error(ErrorKind::InvalidSpec, "need one label per interval");
  TraceFile file{schema, sku, benchmark, TraceMode::cumulative, {}};
  file.rows.reserve(snapshots.size());
  for (std::size_t k = 0; k < snapshots.size(); ++k) {
    TraceRow row{snapshots[k].instruction_index, snapshots[k].counters, std::nullopt};
    if (k > 0 && !labels.empty()) row.ipc = labels[k - 1];
    file.rows.push_back(std::move(row));
  }
  return file;
}

LoadedTrace to_benchmark_trace(const TraceFile& file, DiffOptions options) {
  LoadedTrace out{file.schema, BenchmarkTrace{file.benchmark, file.sku, {}}};
  if (file.mode == TraceMode::cumulative) {
    std::vector<CounterSnapshot> snaps;
    snaps.reserve(file.rows.size());
    for (const auto& row : file.rows) snaps.push_back({row.i, row.c});
    out.trace.intervals = diff_snapshots(snaps, options).intervals;
    for (std::size_t k = 1; k < file.rows.size(); ++k)
      if (file.rows[k].ipc) out.trace.intervals[k - 1].set_ipc(*file.rows[k].ipc);
  } else {
    for (const auto& row : file.rows) {
      IntervalRecord rec;
      rec.uaim_delta = row.c;
      rec.instructions = row.i;
      if (row.ipc) rec.set_ipc(*row.ipc);
      out.trace.intervals.push_back(std::move(rec));
    }
  }
  out.trace.validate(file.schema.size());
  return out;
}

LoadedTrace load_trace(const std::filesystem::path& path, DiffOptions options) {
  return to_benchmark_trace(read_trace_file(path), options);
}

}  // namespace pai::trace
