// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
// Optional arguments restrict the run to the listed criterion numbers.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "helpers.hpp"
#include "oracles.hpp"
#include "pai/dataset.hpp"
#include "pai/evalx.hpp"
#include "pai/hash.hpp"
#include "pai/io.hpp"
#include "pai/models.hpp"
#include "pai/synth.hpp"
#include "pai/trace.hpp"
#include "pai/train.hpp"

using namespace pai;
using models::ModelKind;
using models::ModelSpec;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

models::SequenceBatch random_batch(const ModelSpec& s, int steps, int batch, std::mt19937_64& rng) {
  models::SequenceBatch b;
  b.steps = steps;
  b.batch = batch;
  b.uaim = testutil::to_eigen(oracle::random_mat(static_cast<std::size_t>(s.uaim_dim),
                                                 static_cast<std::size_t>(steps * batch), rng, 1.0));
  b.cfg = testutil::to_eigen(
      oracle::random_mat(static_cast<std::size_t>(s.cfg_dim), static_cast<std::size_t>(batch), rng, 1.0));
  return b;
}

bool same_params(const nn::Parameters& a, const nn::Parameters& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t k = 0; k < ta.size(); ++k)
    if (!std::equal(ta[k].begin(), ta[k].end(), tb[k].begin(), tb[k].end())) return false;
  return true;
}

/// The 20 x 15 x 300 synthetic dataset shared by criteria 4 and 5.
const std::vector<trace::BenchmarkTrace>& paper_scale_traces() {
  static const auto traces = [] {
    synth::SynthSpec spec;
    spec.n_benchmarks = 20;
    spec.n_skus = 15;
    spec.intervals_per_trace = 300;
    spec.noise_sigma = 0.02;
    spec.seed = 1;
    return synth::generate(spec);
  }();
  return traces;
}

dataset::Split normalized(dataset::Split split) {
  const auto stats = dataset::compute_norm_stats(split.train);
  split.train = dataset::normalize(split.train, stats);
  if (!split.test.empty()) split.test = dataset::normalize(split.test, stats);
  return split;
}

// ---- 1 ---------------------------------------------------------------------

Outcome gradient_fidelity() {
  std::mt19937_64 rng(1);
  std::ostringstream detail;
  bool pass = true;
  for (auto kind : {ModelKind::linreg, ModelKind::mlp, ModelKind::simple_lstm, ModelKind::hier_lstm}) {
    ModelSpec s = ModelSpec::defaults(kind);
    s.lstm_layers = 2;
    s.lstm_hidden = 4;
    s.hier_uaim_hidden = s.hier_cfg_hidden = s.hier_top_hidden = 4;
    s.fc_hidden = 4;
    s.seed = 7;
    models::Model m(s);
    const auto batch = random_batch(s, 3, 2, rng);
    std::vector<double> targets(6);
    std::uniform_real_distribution<double> u(0.3, 2.0);
    for (auto& t : targets) t = u(rng);
    const auto rep = models::grad_check(m, batch, targets, 1e-5);
    const bool ok = rep.max_rel_error <= 1e-4 && rep.checked == m.params().count();
    pass &= ok;
    detail << (detail.tellp() > 0 ? "; " : "") << models::to_string(kind) << " " << fmt("%.2e", rep.max_rel_error)
           << " over " << rep.checked << " params";
  }
  return {pass, "max rel error " + detail.str()};
}

// ---- 2 ---------------------------------------------------------------------

Outcome oracle_round_trips() {
  constexpr int kTrials = 100;
  std::mt19937_64 rng(2);
  int diff_ok = 0, file_ok = 0, ckpt_ok = 0, norm_ok = 0;
  for (int trial = 0; trial < kTrials; ++trial) {
    const auto snaps = testutil::random_snapshots(rng, 2 + trial % 23, 1 + trial % 11, true);
    const auto d = trace::diff_snapshots(snaps);
    diff_ok += trace::accumulate_intervals(d.intervals, snaps.front()) == snaps;

    const auto full = testutil::random_snapshots(rng, 2 + trial % 7, trace::kFeatureCount, trial % 2 == 0);
    std::vector<double> labels(full.size() - 1);
    std::uniform_real_distribution<double> ipc(0.05, 4.0);
    for (auto& l : labels) l = ipc(rng);
    const auto file = trace::to_cumulative_file(trace::FeatureSchema::canonical(), testutil::sample_sku(rng), "b",
                                                full, labels);
    std::istringstream in(trace::format_trace(file));
    file_ok += trace::parse_trace(in) == file;

    ModelSpec s = ModelSpec::defaults(static_cast<ModelKind>(trial % 4));
    s.lstm_hidden = 3 + trial % 4;
    s.hier_uaim_hidden = 3 + trial % 3;
    s.hier_cfg_hidden = 2;
    s.hier_top_hidden = 3;
    s.fc_hidden = 3;
    s.mlp_hidden = {5, 4};
    s.seed = rng();
    models::Model m(s);
    const auto back = models::checkpoint_from_string(models::checkpoint_to_string(m));
    ckpt_ok += same_params(back.params(), m.params()) && back.spec() == m.spec();

    const auto v = oracle::random_vec(40, rng, 1e3);
    const auto mean = oracle::random_vec(40, rng, 1e3);
    auto sd = oracle::random_vec(40, rng, 1.0);
    for (auto& x : sd) x = std::abs(x) + 1e-3;
    const auto r = dataset::denormalize(dataset::normalize(v, mean, sd), mean, sd);
    bool close = true;
    for (std::size_t k = 0; k < v.size(); ++k) close &= std::abs(r[k] - v[k]) <= 1e-12 * std::max(1.0, std::abs(v[k]));
    norm_ok += close;
  }
  const bool pass = diff_ok == kTrials && file_ok == kTrials && ckpt_ok == kTrials && norm_ok == kTrials;
  std::ostringstream detail;
  detail << "diff/accumulate " << diff_ok << "/" << kTrials << ", trace file " << file_ok << "/" << kTrials
         << ", checkpoint " << ckpt_ok << "/" << kTrials << ", normalize " << norm_ok << "/" << kTrials;
  return {pass, detail.str()};
}

// ---- 3 ---------------------------------------------------------------------

Outcome aggregation_identities() {
  std::mt19937_64 rng(3);
  bool constant_ok = true;
  std::uniform_real_distribution<double> u(0.05, 6.0);
  std::uniform_int_distribution<std::int64_t> width(1, 50'000'000);
  for (int trial = 0; trial < 200; ++trial) {
    const double v = u(rng);
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 40);
    std::vector<double> ipc(n, v);
    std::vector<std::int64_t> instr(n, width(rng));
    instr.back() = width(rng);  // short or long tail
    constant_ok &= models::aggregate_ipc(ipc, instr) == v;
  }
  const std::vector<double> two{1.0, 2.0};
  const std::vector<std::int64_t> w{10'000'000, 10'000'000};
  const bool example_ok = models::aggregate_ipc(two, w) == 4.0 / 3.0;

  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 300);
    std::vector<double> ipc(n);
    std::vector<std::int64_t> instr(n, width(rng));
    for (auto& x : ipc) x = u(rng);
    instr.back() = 1 + instr.back() / 3;
    const double ref = oracle::harmonic_ipc(ipc, instr);
    worst = std::max(worst, std::abs(models::aggregate_ipc(ipc, instr) - ref) / ref);
  }
  std::ostringstream detail;
  detail << "constant " << (constant_ok ? "exact" : "inexact") << ", 1.0/2.0 -> "
         << (example_ok ? "4/3 exact" : "not 4/3") << ", max rel diff vs harmonic oracle " << fmt("%.2e", worst);
  return {constant_ok && example_ok && worst <= 1e-12, detail.str()};
}

// ---- 4 ---------------------------------------------------------------------

struct SweepPlan {
  ModelKind kind;
  train::SweepGrid grid;
  int epochs;
};

Outcome model_ordering() {
  const auto& traces = paper_scale_traces();
  const auto split = normalized(dataset::split_random_traces(dataset::samples_from_traces(traces), 0.8,
                                                             mix_seed(1, std::string_view("split"))));
  const std::vector<SweepPlan> plans{
      {ModelKind::hier_lstm, {{3e-3, 1e-3}, {16}}, 15},
      {ModelKind::mlp, {{3e-3, 1e-3}, {64}}, 60},
      {ModelKind::linreg, {{1e-2, 1e-3}, {64}}, 60},
  };
  std::map<ModelKind, double> best;
  std::ostringstream detail;
  for (const auto& p : plans) {
    train::TrainConfig base;
    base.epochs = p.epochs;
    base.window = 32;
    base.seed = mix_seed(1, std::string_view("train"));
    ModelSpec spec = ModelSpec::defaults(p.kind);
    spec.seed = mix_seed(1, std::string_view("init"));
    const auto r = train::tune(spec, p.grid, split.train, split.test, base, false);
    best[p.kind] = r.best ? r.ranked[*r.best].final_test : std::numeric_limits<double>::infinity();
    detail << (detail.tellp() > 0 ? "; " : "") << models::to_string(p.kind) << " " << fmt("%.4g", best[p.kind]);
    if (r.best) {
      const auto& c = r.ranked[*r.best].config;
      detail << " (lr " << fmt("%g", c.lr) << ", batch " << c.batch_size << ", " << c.epochs << " epochs)";
    }
  }
  const double h = best[ModelKind::hier_lstm];
  const bool pass = h < best[ModelKind::mlp] && h < best[ModelKind::linreg] && h < 0.05;
  return {pass, "test MSE " + detail.str()};
}

// ---- 5 ---------------------------------------------------------------------

Outcome seen_unseen() {
  const auto& traces = paper_scale_traces();
  const std::vector<std::string> holdout{"xz", "wrf", "mcf"};
  const auto split =
      normalized(dataset::split_leave_benchmarks_out(dataset::samples_from_traces(traces), holdout));
  ModelSpec spec = ModelSpec::defaults(ModelKind::hier_lstm);
  spec.seed = mix_seed(1, std::string_view("init"));
  train::TrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.batch_size = 16;
  cfg.epochs = 10;
  cfg.window = 32;
  cfg.seed = mix_seed(1, std::string_view("train"));
  const auto result = train::train(spec, split.train, split.test, cfg);
  const auto rep = evalx::benchmark_errors(result.model, traces, split.manifest.tags);
  std::ostringstream detail;
  detail << "seen " << fmt("%.2f", rep.mean_seen) << "% over " << rep.seen_rows << " traces, unseen "
         << fmt("%.2f", rep.mean_unseen) << "% over " << rep.unseen_rows << " traces";
  const bool pass = result.record.converged && rep.unseen_rows == 45 && rep.mean_unseen <= 25.0 &&
                    rep.mean_unseen >= rep.mean_seen;
  return {pass, detail.str()};
}

// ---- 6 ---------------------------------------------------------------------

Outcome throughput() {
  synth::SynthSpec spec;
  spec.n_benchmarks = 4;
  spec.n_skus = 5;
  spec.intervals_per_trace = 300;
  const auto traces = synth::generate(spec);
  models::Model m(ModelSpec::defaults(ModelKind::hier_lstm));
  m.norm = dataset::compute_norm_stats(dataset::samples_from_traces(traces));
  const int threads = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto t = evalx::timing_report(m, traces, 7);
  omp_set_num_threads(threads);
  std::ostringstream detail;
  detail << fmt("%.0f", t.intervals_per_second) << " intervals/s single-threaded (median of " << t.repetitions
         << " over " << t.intervals << " intervals), " << fmt("%.3g", t.seconds_per_10b_instructions)
         << " s per 10B instructions";
  return {t.repetitions >= 5 && t.intervals_per_second >= 1000.0, detail.str()};
}

// ---- 7 ---------------------------------------------------------------------

Outcome sweep_harness() {
  synth::SynthSpec sspec;
  sspec.n_benchmarks = 12;
  sspec.n_skus = 15;
  sspec.intervals_per_trace = 64;
  const auto traces = synth::generate(sspec);
  const auto split = normalized(dataset::split_random_traces(dataset::samples_from_traces(traces), 0.8, 7));
  ModelSpec spec = ModelSpec::defaults(ModelKind::hier_lstm);
  spec.hier_uaim_hidden = 8;
  spec.hier_cfg_hidden = 4;
  spec.hier_top_hidden = 8;
  spec.fc_hidden = 8;
  train::TrainConfig base;
  base.epochs = 3;
  base.window = 4;
  base.seed = 11;

  const auto a = train::tune(spec, train::SweepGrid::defaults(), split.train, split.test, base);
  const auto b = train::tune(spec, train::SweepGrid::defaults(), split.train, split.test, base);
  bool identical = a.ranked.size() == b.ranked.size() && a.best == b.best;
  for (std::size_t k = 0; identical && k < a.ranked.size(); ++k) {
    const auto& x = a.ranked[k];
    const auto& y = b.ranked[k];
    identical = x.config.lr == y.config.lr && x.config.batch_size == y.config.batch_size &&
                x.config.seed == y.config.seed && x.train_loss == y.train_loss && x.test_mse == y.test_mse &&
                x.converged == y.converged;
  }
  identical = identical && a.best_model && b.best_model && same_params(a.best_model->params(), b.best_model->params());

  auto with_bad = train::SweepGrid::defaults();
  with_bad.lrs.push_back(10.0);
  const auto c = train::tune(spec, with_bad, split.train, split.test, base);
  bool flagged = true;
  std::size_t bad_cells = 0;
  for (const auto& r : c.ranked)
    if (r.config.lr == 10.0) {
      ++bad_cells;
      flagged &= !r.converged;
    }
  const bool excluded = c.best && c.ranked[*c.best].converged && c.ranked[*c.best].config.lr != 10.0;

  std::ostringstream detail;
  detail << a.ranked.size() << " ranked records, rerun " << (identical ? "bit-identical" : "differs") << ", lr=10 cells "
         << (flagged ? "all" : "not all") << " converged=false (" << bad_cells << "), best "
         << (excluded ? "excludes them" : "includes one");
  return {a.ranked.size() == 9 && identical && flagged && bad_cells == 3 && excluded, detail.str()};
}

// ---- 8 ---------------------------------------------------------------------

Outcome split_audits() {
  const auto dir = testutil::scratch_dir("acceptance_split");
  synth::SynthSpec spec;
  spec.n_benchmarks = 10;
  spec.n_skus = 6;
  spec.intervals_per_trace = 37;
  synth::write_dataset(dir, spec);
  const auto loaded = dataset::load_dataset(dir);
  const auto manifest = dataset::read_dataset_manifest(dir);
  const auto raw = dataset::samples_from_traces(loaded.traces);

  const std::vector<std::string> holdout{"XZ", "wrf", "Mcf", "nab", "CACTUBSSN", "xalancbmk"};
  std::set<std::string> held;
  for (const auto& h : holdout) held.insert(dataset::canonical_benchmark_name(h));
  const auto lo = dataset::split_leave_benchmarks_out(raw, holdout);
  dataset::write_split_manifest(dir / "leave_out.json", lo.manifest);
  const auto lo_back = dataset::read_split_manifest(dir / "leave_out.json");
  std::size_t leaked = 0, held_test = 0;
  for (const auto& s : lo.train.samples) leaked += held.count(dataset::canonical_benchmark_name(s.benchmark));
  for (const auto& s : lo.test.samples) held_test += held.count(dataset::canonical_benchmark_name(s.benchmark));
  std::size_t manifest_leaks = 0;
  for (const auto& t : lo_back.traces)
    if (held.count(dataset::canonical_benchmark_name(t.benchmark)) && t.partition != "test") ++manifest_leaks;
  std::size_t held_in_manifest = 0;
  for (const auto& e : manifest.traces) held_in_manifest += held.count(dataset::canonical_benchmark_name(e.benchmark));
  const bool lo_ok = leaked == 0 && manifest_leaks == 0 && held_test == held_in_manifest * 37 &&
                     lo.train.size() + lo.test.size() == raw.size() && held_in_manifest == 6 * 6;

  const auto rs = dataset::split_random(raw, 0.8, 5);
  dataset::write_split_manifest(dir / "random.json", rs.manifest);
  const auto rs_back = dataset::read_split_manifest(dir / "random.json");
  const double target = 0.8 * static_cast<double>(raw.size());
  const bool rs_ok = std::abs(static_cast<double>(rs.train.size()) - target) <= 1.0 &&
                     rs.train.size() + rs.test.size() == raw.size() && rs_back.train_samples == rs.train.size() &&
                     rs_back.test_samples == rs.test.size();

  std::ostringstream detail;
  detail << "leave-out: " << leaked << " held-out training samples, " << held_test << " held-out test samples; 80/20: "
         << rs.train.size() << "/" << rs.test.size() << " of " << raw.size() << " (target " << fmt("%.1f", target)
         << ")";
  return {lo_ok && rs_ok, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"oracle round-trips", oracle_round_trips},
      {"aggregation identities", aggregation_identities},
      {"model ordering", model_ordering},
      {"seen/unseen ordering", seen_unseen},
      {"throughput", throughput},
      {"sweep harness", sweep_harness},
      {"dataset split audits", split_audits},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
