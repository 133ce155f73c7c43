#include "pai/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

#include "pai/dataset.hpp"
#include "pai/error.hpp"
#include "pai/hash.hpp"

namespace pai::synth {

using trace::FeatureSchema;
using trace::HardwareConfig;
using trace::IntervalRecord;

void SynthSpec::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidSpec, what); };
  if (n_benchmarks < 1) fail("n_benchmarks must be >= 1");
  if (n_skus < 1) fail("n_skus must be >= 1");
  if (intervals_per_trace < 1) fail("intervals_per_trace must be >= 1");
  if (interval_width < 1) fail("interval_width must be >= 1");
  if (!(noise_sigma >= 0.0 && noise_sigma < 0.2)) fail("noise_sigma must lie in [0, 0.2)");
}

std::string_view to_string(BehaviorClass c) {
  switch (c) {
    case BehaviorClass::core_bound: return "core_bound";
    case BehaviorClass::memory_bound: return "memory_bound";
    case BehaviorClass::uncore_bound: return "uncore_bound";
    case BehaviorClass::mixed: return "mixed";
  }
  return "mixed";
}

// ---- oracle ----------------------------------------------------------------

namespace {

struct DesignatedIndex {
  std::size_t miss, branch, hard_branch;
};

DesignatedIndex designated(const FeatureSchema& schema) {
  auto miss = schema.index_of(kMissFeature);
  auto br = schema.index_of(kBranchFeature);
  auto hard = schema.index_of(kHardBranchFeature);
  if (!miss || !br || !hard) throw Error(ErrorKind::SchemaMismatch, "schema lacks the oracle's designated counters");
  return {*miss, *br, *hard};
}

struct OracleTerms {
  double base;
  double penalty;
  double cap;
};

OracleTerms oracle_terms(const HardwareConfig& cfg, const OracleConstants& k = {}) {
  const double width = std::min(cfg.issue_width, 4);
  // LLCs under 1 MB are treated as 1 MB so the penalty stays finite.
  const double llc_term = 1.0 + std::log2(std::max(cfg.llc_mb, 1.0));
  return {width / 4.0 * (0.8 + 0.1 * cfg.clock_ghz), k.alpha / llc_term, static_cast<double>(cfg.issue_width)};
}

double oracle_step(const OracleTerms& t, double m, double mispredict, double noise, const OracleConstants& k = {}) {
  const double ipc = t.base / (1.0 + t.penalty * m) * (1.0 - k.beta * mispredict) + noise;
  return std::clamp(ipc, 0.05, t.cap);
}

}  // namespace

OracleInputs oracle_inputs(const IntervalRecord& rec, const FeatureSchema& schema) {
  const auto idx = designated(schema);
  if (rec.uaim_delta.size() != schema.size()) throw Error(ErrorKind::SchemaMismatch, "interval width differs");
  OracleInputs in;
  in.miss_intensity = rec.uaim_delta[idx.miss] / (kMissScale * static_cast<double>(rec.instructions));
  const double branches = rec.uaim_delta[idx.branch];
  in.branch_mispredict_rate = branches > 0 ? rec.uaim_delta[idx.hard_branch] / branches : 0.0;
  return in;
}

std::vector<double> oracle_ipc_sequence(std::span<const IntervalRecord> intervals, const HardwareConfig& config,
                                        std::span<const double> noise, const FeatureSchema& schema) {
  if (intervals.empty()) throw Error(ErrorKind::EmptyTrace, "oracle needs a non-empty history");
  if (!noise.empty() && noise.size() != intervals.size())
    throw Error(ErrorKind::InvalidSpec, "noise length differs from interval count");
  const OracleConstants k;
  const auto terms = oracle_terms(config, k);
  std::vector<double> out(intervals.size());
  double m = 0;
  for (std::size_t t = 0; t < intervals.size(); ++t) {
    const auto in = oracle_inputs(intervals[t], schema);
    m = t == 0 ? in.miss_intensity : k.ema * m + (1.0 - k.ema) * in.miss_intensity;
    out[t] = oracle_step(terms, m, in.branch_mispredict_rate, noise.empty() ? 0.0 : noise[t], k);
  }
  return out;
}

double oracle_ipc(std::span<const IntervalRecord> history, const HardwareConfig& config, double noise,
                  const FeatureSchema& schema) {
  if (history.empty()) throw Error(ErrorKind::EmptyTrace, "oracle needs a non-empty history");
  std::vector<double> eps(history.size(), 0.0);
  eps.back() = noise;
  return oracle_ipc_sequence(history, config, eps, schema).back();
}

// ---- SKUs ------------------------------------------------------------------

std::vector<HardwareConfig> gen_skus(int n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::InvalidSpec, "need at least one SKU");
  std::mt19937_64 rng(mix_seed(seed, std::string_view("skus")));
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto real = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  std::vector<HardwareConfig> out;
  std::set<std::vector<double>> seen;
  while (static_cast<int>(out.size()) < n) {
    HardwareConfig c;
    char id[16];
    std::snprintf(id, sizeof(id), "SKU%02d", static_cast<int>(out.size()));
    c.sku_id = id;
    c.core_count = 4 * pick(2, 32);  // 8..128
    c.thread_count = c.core_count * pick(1, 2);
    c.clock_ghz = std::round(real(2.0, 4.0) * 10.0) / 10.0;
    c.l1_kb = 16.0 * pick(2, 4);              // 32..64 KB
    c.l2_kb = 512.0 * pick(2, 8);             // 1..4 MB
    c.llc_mb = std::round(real(16.0, 320.0)); // MB
    c.issue_width = pick(2, 8);
    c.rob_size = 32 * pick(4, 32);            // 128..1024
    if (seen.insert(c.feature_vector()).second) out.push_back(std::move(c));
  }
  return out;
}

// ---- profiles --------------------------------------------------------------

namespace {

struct NamedClass {
  const char* name;
  BehaviorClass behavior;
};

// Names borrowed from a familiar CPU suite; every behaviour is synthetic.
constexpr NamedClass kNames[] = {
    {"xz", BehaviorClass::mixed},           {"wrf", BehaviorClass::uncore_bound},
    {"mcf", BehaviorClass::memory_bound},   {"nab", BehaviorClass::core_bound},
    {"cactubssn", BehaviorClass::uncore_bound}, {"xalancbmk", BehaviorClass::memory_bound},
    {"perlbench", BehaviorClass::core_bound},   {"gcc", BehaviorClass::mixed},
    {"omnetpp", BehaviorClass::memory_bound},   {"x264", BehaviorClass::core_bound},
    {"deepsjeng", BehaviorClass::core_bound},   {"leela", BehaviorClass::core_bound},
    {"exchange2", BehaviorClass::core_bound},   {"bwaves", BehaviorClass::memory_bound},
    {"namd", BehaviorClass::core_bound},        {"parest", BehaviorClass::mixed},
    {"povray", BehaviorClass::core_bound},      {"lbm", BehaviorClass::memory_bound},
    {"blender", BehaviorClass::mixed},          {"cam4", BehaviorClass::uncore_bound},
    {"imagick", BehaviorClass::core_bound},     {"fotonik3d", BehaviorClass::memory_bound},
    {"roms", BehaviorClass::memory_bound},
};
constexpr int kNamedCount = static_cast<int>(std::size(kNames));

trace::Category dominant_category(BehaviorClass b) {
  switch (b) {
    case BehaviorClass::core_bound: return trace::Category::instruction;
    case BehaviorClass::memory_bound: return trace::Category::memory;
    case BehaviorClass::uncore_bound: return trace::Category::misc;
    case BehaviorClass::mixed: return trace::Category::branch;
  }
  return trace::Category::instruction;
}

}  // namespace

std::string benchmark_name(int index) {
  if (index < kNamedCount) return kNames[index].name;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "bench%02d", index);
  return buf;
}

std::vector<BenchmarkProfile> gen_profiles(const SynthSpec& spec) {
  spec.validate();
  const auto& schema = FeatureSchema::canonical();
  std::vector<BenchmarkProfile> out;
  for (int b = 0; b < spec.n_benchmarks; ++b) {
    BenchmarkProfile p;
    p.name = benchmark_name(b);
    p.behavior = b < kNamedCount ? kNames[b].behavior : static_cast<BehaviorClass>(b % 4);
    std::mt19937_64 rng(mix_seed(mix_seed(spec.seed, std::string_view("profile")), std::string_view(p.name)));
    auto real = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

    switch (p.behavior) {
      case BehaviorClass::core_bound:
        p.miss_base = real(0.02, 0.10);
        p.miss_amplitude = real(0.02, 0.06);
        p.burst_probability = real(0.05, 0.15);
        p.burst_scale = real(0.15, 0.3);
        p.mispredict_base = real(0.05, 0.15);
        break;
      case BehaviorClass::memory_bound:
        p.miss_base = real(0.35, 0.60);
        p.miss_amplitude = real(0.1, 0.25);
        p.burst_probability = real(0.2, 0.35);
        p.burst_scale = real(0.3, 0.5);
        p.mispredict_base = real(0.02, 0.08);
        break;
      case BehaviorClass::uncore_bound:
        p.miss_base = real(0.15, 0.30);
        p.miss_amplitude = real(0.05, 0.15);
        p.burst_probability = real(0.25, 0.4);
        p.burst_scale = real(0.4, 0.7);
        p.mispredict_base = real(0.03, 0.1);
        break;
      case BehaviorClass::mixed:
        p.miss_base = real(0.10, 0.35);
        p.miss_amplitude = real(0.05, 0.2);
        p.burst_probability = real(0.1, 0.3);
        p.burst_scale = real(0.2, 0.4);
        p.mispredict_base = real(0.04, 0.14);
        break;
    }
    p.mispredict_amplitude = real(0.01, 0.05);
    p.branch_rate = real(0.08, 0.25);
    p.period = real(20.0, 80.0);
    p.phase = real(0.0, 2.0 * std::numbers::pi);
    p.drift = real(-0.2, 0.2);

    const auto dominant = dominant_category(p.behavior);
    p.base_rates.resize(schema.size());
    p.loadings.resize(schema.size());
    p.miss_coupling.resize(schema.size());
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const bool dom = schema.categories()[f] == dominant;
      p.base_rates[f] = std::exp(real(std::log(1e-4), std::log(0.3)));
      p.loadings[f] = real(-1.0, 1.0) * (dom ? 0.8 : 0.2);
      p.miss_coupling[f] = schema.categories()[f] == trace::Category::memory ? real(0.0, 1.5) : 0.0;
    }
    out.push_back(std::move(p));
  }
  return out;
}

// ---- traces ----------------------------------------------------------------

std::vector<IntervalRecord> gen_intervals(const BenchmarkProfile& profile, const SynthSpec& spec) {
  spec.validate();
  const auto& schema = FeatureSchema::canonical();
  const auto idx = designated(schema);
  std::mt19937_64 rng(mix_seed(mix_seed(spec.seed, std::string_view("uaim")), std::string_view(profile.name)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const auto width = static_cast<double>(spec.interval_width);
  const int n = spec.intervals_per_trace;
  std::vector<IntervalRecord> out(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    const double phase = std::sin(2.0 * std::numbers::pi * t / profile.period + profile.phase);
    const double phase2 = std::sin(4.0 * std::numbers::pi * t / profile.period + 1.7 * profile.phase);
    const double drift = 1.0 + profile.drift * t / std::max(1, n - 1);

    double miss = profile.miss_base + profile.miss_amplitude * phase + 0.03 * gauss(rng);
    if (unit(rng) < profile.burst_probability) miss += profile.burst_scale * unit(rng);
    miss = std::clamp(miss, 0.0, 1.0);
    const double mispredict =
        std::clamp(profile.mispredict_base + profile.mispredict_amplitude * phase2 + 0.01 * gauss(rng), 0.0, 0.5);
    const double branch_rate = std::clamp(profile.branch_rate * (1.0 + 0.1 * phase), 0.01, 0.5);

    auto& rec = out[static_cast<std::size_t>(t)];
    rec.instructions = spec.interval_width;
    rec.uaim_delta.resize(schema.size());
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const double rate = profile.base_rates[f] * drift *
                          std::exp(profile.loadings[f] * phase + profile.miss_coupling[f] * (miss - profile.miss_base) +
                                   0.05 * gauss(rng));
      rec.uaim_delta[f] = std::round(rate * width);
    }
    rec.uaim_delta[idx.miss] = std::round(kMissScale * miss * width);
    const double branches = std::round(branch_rate * width);
    rec.uaim_delta[idx.branch] = branches;
    rec.uaim_delta[idx.hard_branch] = std::round(mispredict * branches);
  }
  return out;
}

namespace {

std::vector<double> label_noise(const std::string& benchmark, const HardwareConfig& sku, const SynthSpec& spec,
                                std::size_t n) {
  std::vector<double> eps(n, 0.0);
  if (spec.noise_sigma == 0.0) return eps;
  std::mt19937_64 rng(mix_seed(mix_seed(mix_seed(spec.seed, std::string_view("label")), std::string_view(benchmark)),
                               std::string_view(sku.sku_id)));
  std::normal_distribution<double> gauss(0.0, spec.noise_sigma);
  for (auto& e : eps) e = gauss(rng);
  return eps;
}

trace::BenchmarkTrace labelled_trace(const BenchmarkProfile& profile, const std::vector<IntervalRecord>& intervals,
                                     const HardwareConfig& sku, const SynthSpec& spec) {
  trace::BenchmarkTrace t{profile.name, sku, intervals};
  const auto labels = oracle_ipc_sequence(intervals, sku, label_noise(profile.name, sku, spec, intervals.size()));
  for (std::size_t k = 0; k < labels.size(); ++k) t.intervals[k].set_ipc(labels[k]);
  return t;
}

}  // namespace

GeneratedTrace gen_trace(const BenchmarkProfile& profile, const HardwareConfig& sku, const SynthSpec& spec) {
  sku.validate();
  const auto intervals = gen_intervals(profile, spec);
  GeneratedTrace out;
  out.labels = oracle_ipc_sequence(intervals, sku, label_noise(profile.name, sku, spec, intervals.size()));
  out.snapshots = trace::accumulate_intervals(
      intervals, trace::CounterSnapshot{0, std::vector<double>(FeatureSchema::canonical().size(), 0.0)});
  return out;
}

std::vector<trace::BenchmarkTrace> generate(const SynthSpec& spec) {
  spec.validate();
  const auto profiles = gen_profiles(spec);
  const auto skus = gen_skus(spec.n_skus, spec.seed);
  const auto n_bench = static_cast<std::ptrdiff_t>(profiles.size());
  const std::size_t n_sku = skus.size();
  std::vector<trace::BenchmarkTrace> out(profiles.size() * n_sku);

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t b = 0; b < n_bench; ++b) {
    const auto& p = profiles[static_cast<std::size_t>(b)];
    const auto intervals = gen_intervals(p, spec);
    for (std::size_t s = 0; s < n_sku; ++s)
      out[static_cast<std::size_t>(b) * n_sku + s] = labelled_trace(p, intervals, skus[s], spec);
  }
  return out;
}

std::string spec_to_json(const SynthSpec& spec) {
  nlohmann::ordered_json j;
  j["tool"] = "synth";
  j["n_benchmarks"] = spec.n_benchmarks;
  j["n_skus"] = spec.n_skus;
  j["intervals_per_trace"] = spec.intervals_per_trace;
  j["interval_width"] = spec.interval_width;
  j["noise_sigma"] = spec.noise_sigma;
  j["seed"] = spec.seed;
  return j.dump();
}

std::size_t write_dataset(const std::filesystem::path& dir, const SynthSpec& spec) {
  spec.validate();
  const auto& schema = FeatureSchema::canonical();
  const auto traces = generate(spec);

  trace::write_schema_file(dir / "schema.json", schema,
                           "Synthetic feature names grouped by category; scales are invented. The IPC oracle reads " +
                               std::string(kMissFeature) + " (miss intensity = count / (0.01 * instructions)), " +
                               kBranchFeature + " (branches) and " + kHardBranchFeature +
                               " (mispredict rate = " + kHardBranchFeature + " / " + kBranchFeature + ").");

  dataset::DatasetManifest manifest;
  manifest.generator = spec_to_json(spec);
  manifest.traces.resize(traces.size());
  const auto n = static_cast<std::ptrdiff_t>(traces.size());

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& t = traces[static_cast<std::size_t>(i)];
    const auto base = trace::CounterSnapshot{0, std::vector<double>(schema.size(), 0.0)};
    const auto snaps = trace::accumulate_intervals(t.intervals, base);
    std::vector<double> labels;
    labels.reserve(t.intervals.size());
    for (const auto& r : t.intervals) labels.push_back(*r.ipc_label);
    const std::string rel = "traces/" + t.benchmark + "__" + t.sku.sku_id + ".trace";
    trace::write_trace_file(dir / rel, trace::to_cumulative_file(schema, t.sku, t.benchmark, snaps, labels));
    manifest.traces[static_cast<std::size_t>(i)] = {rel, t.benchmark, t.sku.sku_id};
  }
  dataset::write_dataset_manifest(dir, manifest);
  return traces.size();
}

}  // namespace pai::synth
