#include "cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <map>
#include <set>

#include "pai/dataset.hpp"
#include "pai/error.hpp"
#include "pai/evalx.hpp"
#include "pai/hash.hpp"
#include "pai/io.hpp"
#include "pai/models.hpp"
#include "pai/synth.hpp"
#include "pai/trace.hpp"
#include "pai/train.hpp"

namespace pai::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  int jobs = 0;
  std::string out;
};

struct SplitOpts {
  std::string data;
  std::string mode = "random";
  double ratio = 0.8;
  std::vector<std::string> holdout;
};

struct ModelOpts {
  std::string kind = "hier_lstm";
  int lstm_hidden = 64, lstm_layers = 2;
  int uaim_hidden = 64, cfg_hidden = 16, top_hidden = 64;
  int fc_hidden = 32;
  std::vector<int> mlp_hidden{128, 64};
};

struct TrainOpts {
  double lr = 1e-3;
  int batch = 128;
  int epochs = 200;
  int window = 32;
  int stride = 0;
  std::string optimizer = "adam";
  double divergence = 100.0;
  int shard_size = 16;
};

/// Seeds of the independent random streams, all derived from --seed.
struct Seeds {
  std::uint64_t root, split, init, train;

  explicit Seeds(std::uint64_t seed)
      : root(seed),
        split(mix_seed(seed, std::string_view("split"))),
        init(mix_seed(seed, std::string_view("init"))),
        train(mix_seed(seed, std::string_view("train"))) {}

  json to_json() const { return {{"seed", root}, {"split", split}, {"init", init}, {"train", train}}; }
};

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Collects what a run read and wrote; written last, beside the outputs.
class RunManifest {
 public:
  RunManifest(std::string subcommand, const Globals& g) : subcommand_(std::move(subcommand)), started_(utc_now()) {
    options_["seed"] = g.seed;
    options_["jobs"] = g.jobs;
    options_["out"] = g.out;
  }
  json& options() { return options_; }
  void input(const fs::path& p) { inputs_.push_back(p.string()); }
  void output(const fs::path& p) { outputs_.push_back(p.string()); }
  void seeds(json s) { seeds_ = std::move(s); }

  void write(const fs::path& dir) const {
    json j;
    j["format"] = "pai-run";
    j["subcommand"] = subcommand_;
    j["tool_version"] = kToolVersion;
    j["options"] = options_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["seeds"] = seeds_;
    j["started"] = started_;
    j["finished"] = utc_now();
    write_file_atomic(dir / kRunManifestName, j.dump(2) + "\n");
  }

 private:
  std::string subcommand_, started_;
  json options_ = json::object(), seeds_ = json::object();
  std::vector<std::string> inputs_, outputs_;
};

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw Error(ErrorKind::InvalidSpec, "--out is required");
  return g.out;
}

void add_split_options(CLI::App* sub, SplitOpts& s) {
  sub->add_option("--data", s.data, "Dataset directory")->required();
  sub->add_option("--split", s.mode, "random | random-trace | leave-out")->capture_default_str();
  sub->add_option("--ratio", s.ratio, "Training fraction for random splits")->capture_default_str();
  sub->add_option("--holdout", s.holdout, "Held-out benchmarks (comma separated, any case)")->delimiter(',');
}

void add_model_options(CLI::App* sub, ModelOpts& m) {
  sub->add_option("--model", m.kind, "linreg | mlp | simple_lstm | hier_lstm")->capture_default_str();
  sub->add_option("--lstm-hidden", m.lstm_hidden, "simple_lstm hidden size")->capture_default_str();
  sub->add_option("--lstm-layers", m.lstm_layers, "simple_lstm layers")->capture_default_str();
  sub->add_option("--uaim-hidden", m.uaim_hidden, "hier_lstm uAIM LSTM size")->capture_default_str();
  sub->add_option("--cfg-hidden", m.cfg_hidden, "hier_lstm config LSTM size")->capture_default_str();
  sub->add_option("--top-hidden", m.top_hidden, "hier_lstm top LSTM size")->capture_default_str();
  sub->add_option("--fc-hidden", m.fc_hidden, "LSTM head hidden size")->capture_default_str();
  sub->add_option("--mlp-hidden", m.mlp_hidden, "mlp hidden sizes (comma separated)")->delimiter(',');
}

void add_train_options(CLI::App* sub, TrainOpts& t, bool with_lr_batch) {
  if (with_lr_batch) {
    sub->add_option("--lr", t.lr, "Learning rate")->capture_default_str();
    sub->add_option("--batch", t.batch, "Windows per minibatch")->capture_default_str();
  }
  sub->add_option("--epochs", t.epochs, "Epochs")->capture_default_str();
  sub->add_option("--window", t.window, "BPTT window length")->capture_default_str();
  sub->add_option("--stride", t.stride, "Window stride (0: window length)")->capture_default_str();
  sub->add_option("--optimizer", t.optimizer, "adam | sgd")->capture_default_str();
  sub->add_option("--divergence", t.divergence, "Divergence factor over the first batch loss")
      ->capture_default_str();
  sub->add_option("--shard-size", t.shard_size, "Windows per gradient shard")->capture_default_str();
}

json split_json(const SplitOpts& s) {
  return {{"data", s.data}, {"split", s.mode}, {"ratio", s.ratio}, {"holdout", s.holdout}};
}

json model_json(const ModelOpts& m) {
  return {{"model", m.kind},           {"lstm_hidden", m.lstm_hidden}, {"lstm_layers", m.lstm_layers},
          {"uaim_hidden", m.uaim_hidden}, {"cfg_hidden", m.cfg_hidden},   {"top_hidden", m.top_hidden},
          {"fc_hidden", m.fc_hidden},     {"mlp_hidden", m.mlp_hidden}};
}

json train_json(const TrainOpts& t) {
  return {{"lr", t.lr},         {"batch", t.batch},         {"epochs", t.epochs},
          {"window", t.window}, {"stride", t.stride},       {"optimizer", t.optimizer},
          {"divergence", t.divergence}, {"shard_size", t.shard_size}};
}

models::ModelSpec to_spec(const ModelOpts& m, std::uint64_t seed) {
  models::ModelSpec s;
  s.kind = models::model_kind_from_string(m.kind);
  s.lstm_hidden = m.lstm_hidden;
  s.lstm_layers = m.lstm_layers;
  s.hier_uaim_hidden = m.uaim_hidden;
  s.hier_cfg_hidden = m.cfg_hidden;
  s.hier_top_hidden = m.top_hidden;
  s.fc_hidden = m.fc_hidden;
  s.mlp_hidden = m.mlp_hidden;
  s.seed = seed;
  s.validate();
  return s;
}

train::TrainConfig to_config(const TrainOpts& t, std::uint64_t seed) {
  train::TrainConfig c;
  c.lr = t.lr;
  c.batch_size = t.batch;
  c.epochs = t.epochs;
  c.window = t.window;
  c.stride = t.stride;
  c.seed = seed;
  c.optimizer = train::optimizer_from_string(t.optimizer);
  c.divergence_factor = t.divergence;
  c.shard_size = t.shard_size;
  c.validate();
  return c;
}

struct Prepared {
  trace::FeatureSchema schema;
  dataset::Split split;  // normalized with training statistics
};

dataset::Split make_split(const dataset::SampleSet& raw, const SplitOpts& s, std::uint64_t seed) {
  switch (dataset::split_mode_from_string(s.mode)) {
    case dataset::SplitMode::random_sample:
      return dataset::split_random(raw, s.ratio, seed);
    case dataset::SplitMode::random_trace:
      return dataset::split_random_traces(raw, s.ratio, seed);
    case dataset::SplitMode::leave_out:
      if (s.holdout.empty()) throw Error(ErrorKind::InvalidSpec, "--split leave-out needs --holdout");
      return dataset::split_leave_benchmarks_out(raw, s.holdout);
  }
  throw Error(ErrorKind::InvalidSpec, "unknown split mode");
}

Prepared prepare(const SplitOpts& s, const Seeds& seeds, RunManifest& manifest) {
  manifest.input(s.data);
  auto loaded = dataset::load_dataset(s.data);
  const auto raw = dataset::samples_from_traces(loaded.traces);
  auto split = make_split(raw, s, seeds.split);
  const auto stats = dataset::compute_norm_stats(split.train);
  split.train = dataset::normalize(split.train, stats);
  if (!split.test.empty()) split.test = dataset::normalize(split.test, stats);
  return {std::move(loaded.schema), std::move(split)};
}

/// Traces named on the command line plus every trace of --data.
std::vector<trace::LoadedTrace> gather_traces(const std::vector<std::string>& files, const std::string& data,
                                              RunManifest& manifest) {
  std::vector<trace::LoadedTrace> out;
  if (!data.empty()) {
    manifest.input(data);
    auto loaded = dataset::load_dataset(data);
    for (auto& t : loaded.traces) out.push_back({loaded.schema, std::move(t)});
  }
  for (const auto& f : files) {
    manifest.input(f);
    out.push_back(trace::load_trace(f));
  }
  if (out.empty()) throw Error(ErrorKind::InvalidSpec, "no traces given");
  return out;
}

// ---- subcommands -----------------------------------------------------------

struct SynthOpts {
  int benchmarks = 20, skus = 15, intervals = 300;
  std::int64_t interval_width = trace::kDefaultIntervalWidth;
  double noise = 0.02;
};

int cmd_synth(const Globals& g, const SynthOpts& o, std::ostream& out) {
  const auto dir = require_out(g);
  synth::SynthSpec spec;
  spec.n_benchmarks = o.benchmarks;
  spec.n_skus = o.skus;
  spec.intervals_per_trace = o.intervals;
  spec.interval_width = o.interval_width;
  spec.noise_sigma = o.noise;
  spec.seed = g.seed;
  spec.validate();

  RunManifest manifest("synth", g);
  manifest.options()["benchmarks"] = o.benchmarks;
  manifest.options()["skus"] = o.skus;
  manifest.options()["intervals"] = o.intervals;
  manifest.options()["interval_width"] = o.interval_width;
  manifest.options()["noise"] = o.noise;
  manifest.seeds({{"seed", g.seed}});
  const auto n = synth::write_dataset(dir, spec);
  manifest.output(dir / dataset::kDatasetManifestName);
  manifest.output(dir / "schema.json");
  manifest.output(dir / "traces");
  manifest.write(dir);
  out << "wrote " << n << " traces to " << dir.string() << "\n";
  return kOk;
}

struct IngestOpts {
  std::vector<std::string> files;
  bool wrap_tolerant = false;
};

int cmd_ingest(const Globals& g, const IngestOpts& o, std::ostream& out) {
  const auto dir = require_out(g);
  RunManifest manifest("ingest", g);
  manifest.options()["wrap_tolerant"] = o.wrap_tolerant;
  std::optional<trace::FeatureSchema> schema;
  dataset::DatasetManifest dm;
  dm.generator = json{{"tool", "ingest"}, {"wrap_tolerant", o.wrap_tolerant}}.dump();
  std::set<std::string> names;
  std::size_t clamped = 0;
  for (const auto& f : o.files) {
    manifest.input(f);
    const auto file = trace::read_trace_file(f);
    if (file.mode == trace::TraceMode::cumulative && o.wrap_tolerant) {
      std::vector<trace::CounterSnapshot> snaps;
      for (const auto& r : file.rows) snaps.push_back({r.i, r.c});
      clamped += trace::diff_snapshots(snaps, {true}).clamped;
    }
    auto loaded = trace::to_benchmark_trace(file, {o.wrap_tolerant});
    if (!schema) schema = loaded.schema;
    else if (!(loaded.schema == *schema)) throw Error(ErrorKind::SchemaMismatch, f + " uses a different schema");
    const std::string rel = "traces/" + loaded.trace.benchmark + "__" + loaded.trace.sku.sku_id + ".trace";
    if (!names.insert(rel).second) throw Error(ErrorKind::InvalidSpec, "duplicate trace " + rel);
    trace::write_trace_file(dir / rel, trace::to_trace_file(*schema, loaded.trace));
    dm.traces.push_back({rel, loaded.trace.benchmark, loaded.trace.sku.sku_id});
    manifest.output(dir / rel);
  }
  trace::write_schema_file(dir / dm.schema_file, *schema);
  dataset::write_dataset_manifest(dir, dm);
  manifest.output(dir / dm.schema_file);
  manifest.output(dir / dataset::kDatasetManifestName);
  manifest.options()["clamped_deltas"] = clamped;
  manifest.write(dir);
  out << "ingested " << dm.traces.size() << " traces into " << dir.string();
  if (clamped) out << " (" << clamped << " negative deltas clamped)";
  out << "\n";
  return kOk;
}

int cmd_split(const Globals& g, const SplitOpts& s, std::ostream& out) {
  const auto dir = require_out(g);
  const Seeds seeds(g.seed);
  RunManifest manifest("split", g);
  manifest.options().update(split_json(s));
  manifest.seeds(seeds.to_json());
  manifest.input(s.data);
  const auto loaded = dataset::load_dataset(s.data);
  const auto split = make_split(dataset::samples_from_traces(loaded.traces), s, seeds.split);
  dataset::write_split_manifest(dir / "split.json", split.manifest);
  manifest.output(dir / "split.json");
  manifest.write(dir);
  out << "train " << split.manifest.train_samples << " samples, test " << split.manifest.test_samples
      << " samples\n";
  return kOk;
}

void write_checkpoint(models::Model& model, const trace::FeatureSchema& schema, const fs::path& path) {
  model.schema_hash = schema.hash();
  models::save_checkpoint(model, path);
}

int cmd_train(const Globals& g, const SplitOpts& s, const ModelOpts& m, const TrainOpts& t, std::ostream& out) {
  const auto dir = require_out(g);
  const Seeds seeds(g.seed);
  const auto spec = to_spec(m, seeds.init);
  const auto cfg = to_config(t, seeds.train);
  RunManifest manifest("train", g);
  manifest.options().update(split_json(s));
  manifest.options().update(model_json(m));
  manifest.options().update(train_json(t));
  manifest.seeds(seeds.to_json());

  auto prep = prepare(s, seeds, manifest);
  auto result = train::train(spec, prep.split.train, prep.split.test, cfg);

  write_checkpoint(result.model, prep.schema, dir / "model.ckpt");
  train::emit_curves(result.record, dir / "curves.tsv");
  dataset::write_split_manifest(dir / "split.json", prep.split.manifest);
  for (const char* f : {"model.ckpt", "curves.tsv", "split.json"}) manifest.output(dir / f);
  manifest.options()["converged"] = result.record.converged;
  manifest.write(dir);

  out << "epochs " << result.record.epochs_completed() << " final_train " << format_double(result.record.final_train)
      << " final_test " << format_double(result.record.final_test) << "\n";
  if (!result.record.converged) {
    out << "training diverged: " << result.record.stop_reason << "\n";
    return kDiverged;
  }
  return kOk;
}

int cmd_tune(const Globals& g, const SplitOpts& s, const ModelOpts& m, const TrainOpts& t, const std::string& grid_text,
             std::ostream& out) {
  const auto dir = require_out(g);
  const Seeds seeds(g.seed);
  const auto spec = to_spec(m, seeds.init);
  const auto base = to_config(t, seeds.train);
  const auto grid = train::parse_grid(grid_text);
  RunManifest manifest("tune", g);
  manifest.options().update(split_json(s));
  manifest.options().update(model_json(m));
  manifest.options().update(train_json(t));
  manifest.options()["grid"] = grid_text;

  auto prep = prepare(s, seeds, manifest);
  auto result = train::tune(spec, grid, prep.split.train, prep.split.test, base);

  json cells = json::array();
  for (const auto& r : result.ranked)
    cells.push_back({{"lr", r.config.lr}, {"batch_size", r.config.batch_size}, {"seed", r.config.seed}});
  auto seed_json = seeds.to_json();
  seed_json["cells"] = cells;
  manifest.seeds(seed_json);

  train::write_sweep_report(result, dir / "sweep.tsv");
  dataset::write_split_manifest(dir / "split.json", prep.split.manifest);
  manifest.output(dir / "sweep.tsv");
  manifest.output(dir / "split.json");
  if (result.best_model) {
    write_checkpoint(*result.best_model, prep.schema, dir / "best.ckpt");
    train::emit_curves(result.ranked[*result.best], dir / "best_curves.tsv");
    manifest.output(dir / "best.ckpt");
    manifest.output(dir / "best_curves.tsv");
  }
  manifest.write(dir);

  out << result.ranked.size() << " cells ranked";
  if (!result.best) {
    out << "; no cell converged\n";
    return kDiverged;
  }
  const auto& b = result.ranked[*result.best];
  out << "; best lr " << format_double(b.config.lr) << " batch " << b.config.batch_size << " final_test "
      << format_double(b.final_test) << "\n";
  return kOk;
}

struct PredictOpts {
  std::string checkpoint;
  std::string data;
  std::vector<std::string> files;
};

int cmd_predict(const Globals& g, const PredictOpts& o, std::ostream& out) {
  const auto dir = require_out(g);
  RunManifest manifest("predict", g);
  manifest.options()["checkpoint"] = o.checkpoint;
  manifest.input(o.checkpoint);
  const auto model = models::load_checkpoint(o.checkpoint);
  const auto traces = gather_traces(o.files, o.data, manifest);
  for (const auto& t : traces) models::check_schema(model, t.schema);

  std::string text = "benchmark\tsku\tinterval\tinstructions\tpred_ipc\n";
  std::size_t rows = 0;
  for (const auto& lt : traces) {
    const auto& t = lt.trace;
    const auto pred = models::predict_intervals(model, t);
    std::vector<std::int64_t> instr;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      instr.push_back(t.intervals[k].instructions);
      text += t.benchmark + '\t' + t.sku.sku_id + '\t' + std::to_string(k) + '\t' + std::to_string(instr.back()) +
              '\t' + format_double(pred[k]) + '\n';
    }
    text += t.benchmark + '\t' + t.sku.sku_id + "\tall\t" + std::to_string(t.total_instructions()) + '\t' +
            format_double(models::aggregate_ipc(pred, instr)) + '\n';
    rows += pred.size() + 1;
  }
  write_file_atomic(dir / "predictions.tsv", text);
  manifest.output(dir / "predictions.tsv");
  manifest.write(dir);
  out << "wrote " << rows << " prediction rows\n";
  return kOk;
}

struct EvalOpts {
  std::string checkpoint;
  std::string data;
  std::vector<std::string> files;
  std::string split;
  std::vector<std::string> unseen;
  bool timing = false;
  int repetitions = 5;
};

int cmd_eval(const Globals& g, const EvalOpts& o, std::ostream& out) {
  const auto dir = require_out(g);
  if (o.repetitions < 5) throw Error(ErrorKind::InvalidSpec, "--repetitions must be at least 5");
  RunManifest manifest("eval", g);
  manifest.options()["checkpoint"] = o.checkpoint;
  manifest.options()["split"] = o.split;
  manifest.options()["unseen"] = o.unseen;
  manifest.options()["timing"] = o.timing;
  manifest.options()["repetitions"] = o.repetitions;
  manifest.input(o.checkpoint);
  const auto model = models::load_checkpoint(o.checkpoint);
  const auto loaded = gather_traces(o.files, o.data, manifest);
  std::vector<trace::BenchmarkTrace> traces;
  for (const auto& t : loaded) {
    models::check_schema(model, t.schema);
    traces.push_back(t.trace);
  }

  std::map<std::string, dataset::Provenance> tags;
  if (!o.split.empty()) {
    manifest.input(o.split);
    tags = dataset::read_split_manifest(o.split).tags;
  } else {
    for (const auto& t : traces) tags[t.benchmark] = dataset::Provenance::seen;
  }
  std::map<std::string, std::string> by_canonical;
  for (const auto& t : traces) by_canonical.emplace(dataset::canonical_benchmark_name(t.benchmark), t.benchmark);
  for (const auto& name : o.unseen) {
    auto it = by_canonical.find(dataset::canonical_benchmark_name(name));
    if (it == by_canonical.end()) throw Error(ErrorKind::UnknownBenchmark, "unknown benchmark '" + name + "'");
    tags[it->second] = dataset::Provenance::unseen;
  }

  auto report = evalx::benchmark_errors(model, traces, tags);
  if (o.timing) report.timing = evalx::timing_report(model, traces, o.repetitions);
  evalx::emit_report(report, dir / "report.tsv", evalx::ReportFormat::table);
  evalx::emit_report(report, dir / "report.plot", evalx::ReportFormat::plotdata);
  manifest.output(dir / "report.tsv");
  manifest.output(dir / "report.plot");
  manifest.write(dir);

  out << "mean abs error " << format_double(report.mean_overall) << "% (seen " << format_double(report.mean_seen)
      << "%, unseen " << format_double(report.mean_unseen) << "%), interval MSE " << format_double(report.interval_mse)
      << "\n";
  if (report.timing)
    out << "throughput " << format_double(report.timing->intervals_per_second) << " intervals/s\n";
  return kOk;
}

struct ReportOpts {
  std::string input;
  std::string format = "table";
};

int cmd_report(const Globals& g, const ReportOpts& o, std::ostream& out) {
  evalx::ReportFormat format;
  if (o.format == "table") format = evalx::ReportFormat::table;
  else if (o.format == "plotdata") format = evalx::ReportFormat::plotdata;
  else throw Error(ErrorKind::InvalidSpec, "--format must be table or plotdata");
  const auto report = evalx::parse_report(read_file(o.input));
  if (g.out.empty()) {
    out << evalx::format_report(report, format);
    return kOk;
  }
  const fs::path dir = g.out;
  const auto file = dir / (format == evalx::ReportFormat::table ? "report.tsv" : "report.plot");
  RunManifest manifest("report", g);
  manifest.options()["format"] = o.format;
  manifest.input(o.input);
  evalx::emit_report(report, file, format);
  manifest.output(file);
  manifest.write(dir);
  return kOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidSpec:
    case ErrorKind::UnknownBenchmark:
      return kInvalidOptions;
    case ErrorKind::Io:
    case ErrorKind::ParseError:
    case ErrorKind::UnsupportedVersion:
    case ErrorKind::CorruptCheckpoint:
      return kIoFailure;
    case ErrorKind::SchemaMismatch:
      return kSchemaMismatch;
    case ErrorKind::MissingLabels:
      return kMissingLabels;
    default:
      return kFailure;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trace-driven IPC prediction toolkit", "pai"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Root seed for every random stream")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads (0: runtime default)")->capture_default_str();
  app.add_option("--out", g.out, "Output directory");

  SynthOpts synth_o;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labelled dataset");
  synth->add_option("--benchmarks", synth_o.benchmarks, "Benchmarks")->capture_default_str();
  synth->add_option("--skus", synth_o.skus, "Hardware configurations")->capture_default_str();
  synth->add_option("--intervals", synth_o.intervals, "Intervals per trace")->capture_default_str();
  synth->add_option("--interval-width", synth_o.interval_width, "Instructions per interval")->capture_default_str();
  synth->add_option("--noise", synth_o.noise, "Relative label noise sigma")->capture_default_str();

  IngestOpts ingest_o;
  auto* ingest = app.add_subcommand("ingest", "Validate trace files and collect them into a dataset directory");
  ingest->add_option("files", ingest_o.files, "Trace files")->required();
  ingest->add_flag("--wrap-tolerant", ingest_o.wrap_tolerant, "Clamp negative counter deltas to zero");

  SplitOpts split_o;
  auto* split = app.add_subcommand("split", "Write a train/test split manifest");
  add_split_options(split, split_o);

  SplitOpts train_s;
  ModelOpts train_m;
  TrainOpts train_t;
  auto* trn = app.add_subcommand("train", "Train one model");
  add_split_options(trn, train_s);
  add_model_options(trn, train_m);
  add_train_options(trn, train_t, true);

  SplitOpts tune_s;
  ModelOpts tune_m;
  TrainOpts tune_t;
  std::string grid = "default";
  auto* tune = app.add_subcommand("tune", "Sweep learning rate x batch size");
  add_split_options(tune, tune_s);
  add_model_options(tune, tune_m);
  add_train_options(tune, tune_t, false);
  tune->add_option("--grid", grid, "'default' or 'lrs=1e-3,1e-4;batches=128,2048'")->capture_default_str();

  PredictOpts predict_o;
  auto* predict = app.add_subcommand("predict", "Per-interval and full-benchmark IPC predictions");
  predict->add_option("--checkpoint", predict_o.checkpoint, "Model checkpoint")->required();
  predict->add_option("--data", predict_o.data, "Dataset directory");
  predict->add_option("files", predict_o.files, "Trace files");

  EvalOpts eval_o;
  auto* eval = app.add_subcommand("eval", "Accuracy and timing report over labelled traces");
  eval->add_option("--checkpoint", eval_o.checkpoint, "Model checkpoint")->required();
  eval->add_option("--data", eval_o.data, "Dataset directory");
  eval->add_option("files", eval_o.files, "Trace files");
  eval->add_option("--split", eval_o.split, "Split manifest supplying seen/unseen tags");
  eval->add_option("--unseen", eval_o.unseen, "Benchmarks to tag unseen (comma separated)")->delimiter(',');
  eval->add_flag("--timing", eval_o.timing, "Add a throughput block");
  eval->add_option("--repetitions", eval_o.repetitions, "Timed repetitions (>= 5)")->capture_default_str();

  ReportOpts report_o;
  auto* report = app.add_subcommand("report", "Re-render an evaluation report");
  report->add_option("--input", report_o.input, "Report table file")->required();
  report->add_option("--format", report_o.format, "table | plotdata")->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalidOptions;
  }

  if (g.jobs < 0) {
    err << "error: --jobs must be >= 0\n";
    return kInvalidOptions;
  }
  if (g.jobs > 0) omp_set_num_threads(g.jobs);

  CLI::App* active = app.get_subcommands().front();
  try {
    if (active == synth) return cmd_synth(g, synth_o, out);
    if (active == ingest) return cmd_ingest(g, ingest_o, out);
    if (active == split) return cmd_split(g, split_o, out);
    if (active == trn) return cmd_train(g, train_s, train_m, train_t, out);
    if (active == tune) return cmd_tune(g, tune_s, tune_m, tune_t, grid, out);
    if (active == predict) return cmd_predict(g, predict_o, out);
    if (active == eval) return cmd_eval(g, eval_o, out);
    if (active == report) return cmd_report(g, report_o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    const int code = exit_code_for(e.kind());
    if (code == kInvalidOptions) err << active->help();
    return code;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace pai::cli
