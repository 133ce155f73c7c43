#include "pai/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

#include <json.hpp>

#include "pai/error.hpp"
#include "pai/io.hpp"

namespace pai::dataset {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Provenance p) { return p == Provenance::seen ? "seen" : "unseen"; }

std::vector<std::string> SampleSet::benchmarks() const {
  std::set<std::string> names;
  for (const auto& s : samples) names.insert(s.benchmark);
  return {names.begin(), names.end()};
}

SampleSet samples_from_traces(std::span<const trace::BenchmarkTrace> traces) {
  SampleSet set;
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& t : traces) {
    if (!keys.insert({t.benchmark, t.sku.sku_id}).second)
      throw Error(ErrorKind::InvalidSpec, "duplicate trace " + t.benchmark + "/" + t.sku.sku_id);
    if (!t.labeled()) throw Error(ErrorKind::MissingLabels, "trace " + t.benchmark + "/" + t.sku.sku_id);
    const auto cfg = t.sku.feature_vector();
    for (std::size_t k = 0; k < t.intervals.size(); ++k) {
      const auto& r = t.intervals[k];
      Sample s;
      s.benchmark = t.benchmark;
      s.sku_id = t.sku.sku_id;
      s.interval_index = k;
      s.instructions = r.instructions;
      s.uaim.resize(r.uaim_delta.size());
      const double inv = 1.0 / static_cast<double>(r.instructions);
      for (std::size_t f = 0; f < r.uaim_delta.size(); ++f) s.uaim[f] = r.uaim_delta[f] * inv;
      s.cfg = cfg;
      s.ipc = *r.ipc_label;
      set.samples.push_back(std::move(s));
    }
    set.tags.emplace(t.benchmark, Provenance::seen);
  }
  return set;
}

ColumnStats column_stats(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw Error(ErrorKind::EmptyDataset, "no rows for statistics");
  const std::size_t width = rows.front().size();
  ColumnStats st{std::vector<double>(width, 0.0), std::vector<double>(width, 0.0)};
  for (const auto& r : rows) {
    if (r.size() != width) throw Error(ErrorKind::SchemaMismatch, "ragged rows");
    for (std::size_t i = 0; i < width; ++i) st.mean[i] += r[i];
  }
  const double n = static_cast<double>(rows.size());
  for (auto& m : st.mean) m /= n;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < width; ++i) {
      const double d = r[i] - st.mean[i];
      st.std[i] += d * d;
    }
  for (std::size_t i = 0; i < width; ++i) {
    st.std[i] = std::sqrt(st.std[i] / n);
    // constant column
    if (!(st.std[i] > 1e-12 * std::max(1.0, std::abs(st.mean[i])))) st.std[i] = 1.0;
  }
  return st;
}

NormStats compute_norm_stats(const SampleSet& train) {
  if (train.empty()) throw Error(ErrorKind::EmptyDataset, "cannot compute statistics of an empty training set");
  std::vector<std::vector<double>> uaim;
  uaim.reserve(train.size());
  std::map<std::string, std::vector<double>> skus;
  for (const auto& s : train.samples) {
    uaim.push_back(s.uaim);
    skus.emplace(s.sku_id, s.cfg);
  }
  auto u = column_stats(uaim);
  std::vector<std::vector<double>> cfg_rows;
  for (auto& [id, v] : skus) cfg_rows.push_back(v);
  auto c = column_stats(cfg_rows);
  return NormStats{std::move(u.mean), std::move(u.std), std::move(c.mean), std::move(c.std), train.size()};
}

std::vector<double> normalize(std::span<const double> v, std::span<const double> mean, std::span<const double> std) {
  if (v.size() != mean.size() || v.size() != std.size())
    throw Error(ErrorKind::SchemaMismatch, "normalize: length mismatch");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean[i]) / std[i];
  return out;
}

std::vector<double> denormalize(std::span<const double> v, std::span<const double> mean,
                                std::span<const double> std) {
  if (v.size() != mean.size() || v.size() != std.size())
    throw Error(ErrorKind::SchemaMismatch, "denormalize: length mismatch");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * std[i] + mean[i];
  return out;
}

SampleSet normalize(const SampleSet& raw, const NormStats& stats) {
  if (raw.norm) throw Error(ErrorKind::InvalidSpec, "sample set is already normalized");
  SampleSet out;
  out.tags = raw.tags;
  out.norm = stats;
  out.samples.reserve(raw.size());
  for (const auto& s : raw.samples) {
    Sample n = s;
    n.uaim = normalize(s.uaim, stats.uaim_mean, stats.uaim_std);
    n.cfg = normalize(s.cfg, stats.cfg_mean, stats.cfg_std);
    out.samples.push_back(std::move(n));
  }
  return out;
}

// ---- splits ----------------------------------------------------------------

std::string_view to_string(SplitMode m) {
  switch (m) {
    case SplitMode::random_sample: return "random";
    case SplitMode::random_trace: return "random-trace";
    case SplitMode::leave_out: return "leave-out";
  }
  return "random";
}

SplitMode split_mode_from_string(std::string_view s) {
  if (s == "random") return SplitMode::random_sample;
  if (s == "random-trace") return SplitMode::random_trace;
  if (s == "leave-out") return SplitMode::leave_out;
  throw Error(ErrorKind::InvalidSpec, "unknown split mode '" + std::string(s) + "'");
}

std::string canonical_benchmark_name(std::string_view name) {
  std::string out(name);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

namespace {

using TraceKey = std::pair<std::string, std::string>;

void check_ratio(double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorKind::InvalidSpec, "split ratio must lie in (0, 1)");
}

/// Fills train/test from per-sample membership and derives tags, counts and
/// per-trace assignments.
Split assemble(const SampleSet& in, const std::vector<bool>& to_train, SplitManifest manifest) {
  Split out;
  out.train.norm = out.test.norm = in.norm;
  std::map<TraceKey, std::pair<std::size_t, std::size_t>> per_trace;  // (train, test)
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto& s = in.samples[i];
    auto& counts = per_trace[{s.benchmark, s.sku_id}];
    if (to_train[i]) {
      out.train.samples.push_back(s);
      ++counts.first;
    } else {
      out.test.samples.push_back(s);
      ++counts.second;
    }
  }
  std::set<std::string> trained;
  for (const auto& s : out.train.samples) trained.insert(s.benchmark);
  for (const auto& b : in.benchmarks()) {
    auto tag = trained.contains(b) ? Provenance::seen : Provenance::unseen;
    manifest.tags[b] = tag;
    if (trained.contains(b)) out.train.tags[b] = tag;
    out.test.tags[b] = tag;
  }
  for (const auto& [key, counts] : per_trace) {
    std::string part = counts.second == 0 ? "train" : counts.first == 0 ? "test" : "mixed";
    manifest.traces.push_back({key.first, key.second, part});
  }
  manifest.train_samples = out.train.size();
  manifest.test_samples = out.test.size();
  out.manifest = std::move(manifest);
  return out;
}

}  // namespace

Split split_random(const SampleSet& samples, double ratio, std::uint64_t seed) {
  check_ratio(ratio);
  if (samples.size() < 2) throw Error(ErrorKind::EmptyDataset, "need at least 2 samples to split");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(samples.size())));
  std::vector<bool> to_train(samples.size(), false);
  for (std::size_t i = 0; i < n_train; ++i) to_train[order[i]] = true;
  SplitManifest m;
  m.mode = SplitMode::random_sample;
  m.seed = seed;
  m.ratio = ratio;
  return assemble(samples, to_train, std::move(m));
}

Split split_random_traces(const SampleSet& samples, double ratio, std::uint64_t seed) {
  check_ratio(ratio);
  std::vector<TraceKey> keys;
  {
    std::set<TraceKey> uniq;
    for (const auto& s : samples.samples) uniq.insert({s.benchmark, s.sku_id});
    keys.assign(uniq.begin(), uniq.end());
  }
  if (keys.size() < 2) throw Error(ErrorKind::EmptyDataset, "need at least 2 traces to split");
  std::mt19937_64 rng(seed);
  std::shuffle(keys.begin(), keys.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(keys.size())));
  std::set<TraceKey> train_keys(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<bool> to_train(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    to_train[i] = train_keys.contains({samples.samples[i].benchmark, samples.samples[i].sku_id});
  SplitManifest m;
  m.mode = SplitMode::random_trace;
  m.seed = seed;
  m.ratio = ratio;
  return assemble(samples, to_train, std::move(m));
}

Split split_leave_benchmarks_out(const SampleSet& samples, std::span<const std::string> holdout) {
  std::map<std::string, std::string> by_canonical;
  for (const auto& b : samples.benchmarks()) by_canonical.emplace(canonical_benchmark_name(b), b);
  std::set<std::string> held;
  for (const auto& name : holdout) {
    auto it = by_canonical.find(canonical_benchmark_name(name));
    if (it == by_canonical.end()) throw Error(ErrorKind::UnknownBenchmark, name);
    held.insert(it->second);
  }
  std::vector<bool> to_train(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) to_train[i] = !held.contains(samples.samples[i].benchmark);
  SplitManifest m;
  m.mode = SplitMode::leave_out;
  m.holdout.assign(held.begin(), held.end());
  m.ratio = 0;
  return assemble(samples, to_train, std::move(m));
}

void write_split_manifest(const std::filesystem::path& path, const SplitManifest& m) {
  ojson j;
  j["format"] = "pai-split";
  j["version"] = 1;
  j["mode"] = to_string(m.mode);
  j["seed"] = m.seed;
  j["ratio"] = m.ratio;
  j["holdout"] = m.holdout;
  j["train_samples"] = m.train_samples;
  j["test_samples"] = m.test_samples;
  auto& tags = j["benchmarks"] = ojson::object();
  for (const auto& [b, p] : m.tags) tags[b] = to_string(p);
  auto& traces = j["traces"] = ojson::array();
  for (const auto& t : m.traces)
    traces.push_back({{"benchmark", t.benchmark}, {"sku_id", t.sku_id}, {"partition", t.partition}});
  write_file_atomic(path, j.dump(1) + "\n");
}

SplitManifest read_split_manifest(const std::filesystem::path& path) {
  ojson j;
  try {
    j = ojson::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, e.what());
  }
  if (j.value("format", "") != "pai-split") throw ParseError(1, "not a pai-split manifest");
  if (j.value("version", 0) != 1) throw Error(ErrorKind::UnsupportedVersion, "split manifest version");
  SplitManifest m;
  try {
    m.mode = split_mode_from_string(j.at("mode").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.ratio = j.at("ratio").get<double>();
    m.holdout = j.at("holdout").get<std::vector<std::string>>();
    m.train_samples = j.at("train_samples").get<std::size_t>();
    m.test_samples = j.at("test_samples").get<std::size_t>();
    for (const auto& [b, p] : j.at("benchmarks").items())
      m.tags[b] = p.get<std::string>() == "seen" ? Provenance::seen : Provenance::unseen;
    for (const auto& t : j.at("traces"))
      m.traces.push_back({t.at("benchmark").get<std::string>(), t.at("sku_id").get<std::string>(),
                          t.at("partition").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, e.what());
  }
  return m;
}

// ---- sequences -------------------------------------------------------------

std::vector<Window> group_traces(const SampleSet& set) {
  std::map<TraceKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < set.size(); ++i)
    groups[{set.samples[i].benchmark, set.samples[i].sku_id}].push_back(i);
  std::vector<Window> out;
  for (auto& [key, idx] : groups) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return set.samples[a].interval_index < set.samples[b].interval_index;
    });
    Window run;
    for (std::size_t i : idx) {
      if (!run.indices.empty() && set.samples[i].interval_index != set.samples[run.indices.back()].interval_index + 1) {
        out.push_back(std::move(run));
        run = {};
      }
      run.indices.push_back(i);
    }
    if (!run.indices.empty()) out.push_back(std::move(run));
  }
  return out;
}

std::vector<Window> make_windows(const SampleSet& set, std::size_t width, std::size_t stride) {
  if (width == 0 || stride == 0) throw Error(ErrorKind::InvalidSpec, "window width and stride must be >= 1");
  std::vector<Window> out;
  for (const auto& run : group_traces(set)) {
    const std::size_t len = run.indices.size();
    for (std::size_t start = 0; start < len; start += stride) {
      const std::size_t end = std::min(start + width, len);
      const std::size_t n = end - start;
      if (n == width || 2 * n >= width) {
        Window w;
        w.indices.assign(run.indices.begin() + static_cast<std::ptrdiff_t>(start),
                         run.indices.begin() + static_cast<std::ptrdiff_t>(end));
        out.push_back(std::move(w));
      }
      if (end == len) break;
    }
  }
  return out;
}

// ---- dataset directories ---------------------------------------------------

void write_dataset_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
  ojson j;
  j["format"] = "pai-dataset";
  j["version"] = 1;
  j["schema_file"] = m.schema_file;
  if (!m.generator.empty()) j["generator"] = ojson::parse(m.generator);
  auto& traces = j["traces"] = ojson::array();
  for (const auto& e : m.traces) traces.push_back({{"file", e.file}, {"benchmark", e.benchmark}, {"sku_id", e.sku_id}});
  write_file_atomic(dir / kDatasetManifestName, j.dump(1) + "\n");
}

DatasetManifest read_dataset_manifest(const std::filesystem::path& dir) {
  ojson j;
  try {
    j = ojson::parse(read_file(dir / kDatasetManifestName));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, e.what());
  }
  if (j.value("format", "") != "pai-dataset") throw ParseError(1, "not a pai-dataset manifest");
  if (j.value("version", 0) != 1) throw Error(ErrorKind::UnsupportedVersion, "dataset manifest version");
  DatasetManifest m;
  try {
    m.schema_file = j.value("schema_file", "schema.json");
    if (j.contains("generator")) m.generator = j["generator"].dump();
    for (const auto& t : j.at("traces"))
      m.traces.push_back(
          {t.at("file").get<std::string>(), t.at("benchmark").get<std::string>(), t.at("sku_id").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, e.what());
  }
  return m;
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
  auto m = read_dataset_manifest(dir);
  LoadedDataset out;
  bool first = true;
  for (const auto& e : m.traces) {
    auto loaded = trace::load_trace(dir / e.file);
    if (first) {
      out.schema = loaded.schema;
      first = false;
    } else if (!(loaded.schema == out.schema)) {
      throw Error(ErrorKind::SchemaMismatch, e.file + " uses a different schema");
    }
    out.traces.push_back(std::move(loaded.trace));
  }
  if (out.traces.empty()) throw Error(ErrorKind::EmptyDataset, "dataset " + dir.string() + " lists no traces");
  return out;
}

}  // namespace pai::dataset
