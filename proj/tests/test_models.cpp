#include <doctest.h>

#include "helpers.hpp"
#include "pai/dataset.hpp"
#include "pai/io.hpp"
#include "pai/models.hpp"
#include "pai/synth.hpp"

using namespace pai;
using namespace pai::models;

namespace {

ModelSpec tiny(ModelKind kind, std::uint64_t seed = 1) {
  ModelSpec s;
  s.kind = kind;
  s.lstm_hidden = 4;
  s.lstm_layers = 2;
  s.hier_uaim_hidden = s.hier_cfg_hidden = s.hier_top_hidden = 4;
  s.fc_hidden = 4;
  s.mlp_hidden = {6, 5};
  s.seed = seed;
  return s;
}

/// Labelled synthetic traces and the statistics of all their samples.
struct Fixture {
  std::vector<trace::BenchmarkTrace> traces;
  dataset::NormStats stats;

  explicit Fixture(int intervals = 12) {
    synth::SynthSpec spec;
    spec.n_benchmarks = 2;
    spec.n_skus = 2;
    spec.intervals_per_trace = intervals;
    traces = synth::generate(spec);
    stats = dataset::compute_norm_stats(dataset::samples_from_traces(traces));
  }
};

SequenceBatch random_batch(const ModelSpec& s, int steps, int batch, std::mt19937_64& rng) {
  SequenceBatch b;
  b.steps = steps;
  b.batch = batch;
  b.uaim = testutil::to_eigen(oracle::random_mat(static_cast<std::size_t>(s.uaim_dim),
                                                 static_cast<std::size_t>(steps * batch), rng, 1.0));
  b.cfg = testutil::to_eigen(oracle::random_mat(static_cast<std::size_t>(s.cfg_dim), static_cast<std::size_t>(batch),
                                                rng, 1.0));
  return b;
}

std::vector<double> random_targets(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.3, 2.0);
  std::vector<double> t(n);
  for (auto& v : t) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("model kind names") {
  for (auto k : {ModelKind::linreg, ModelKind::mlp, ModelKind::simple_lstm, ModelKind::hier_lstm})
    CHECK(model_kind_from_string(to_string(k)) == k);
  CHECK_ERROR_KIND(model_kind_from_string("cnn"), ErrorKind::InvalidSpec);
}

TEST_CASE("parameter counts match hand counts") {
  ModelSpec s;
  s.kind = ModelKind::simple_lstm;
  // layer 0: 4*64*(136+64) + 4*64, layer 1: 4*64*(64+64) + 4*64, head 64*32+32, 32+1
  const std::size_t hand_simple = 51456 + 33024 + 2080 + 33;
  CHECK(s.parameter_count() == hand_simple);
  CHECK(Model(s).params().count() == hand_simple);

  s.kind = ModelKind::hier_lstm;
  // uaim 4*64*(128+64)+256, cfg 4*16*(8+16)+64, top 4*64*(80+64)+256, head 2080+33
  const std::size_t hand_hier = 49408 + 1600 + 37120 + 2080 + 33;
  CHECK(s.parameter_count() == hand_hier);
  CHECK(Model(s).params().count() == hand_hier);

  s.kind = ModelKind::mlp;
  CHECK(s.parameter_count() == 136 * 128 + 128 + 128 * 64 + 64 + 64 + 1);
  s.kind = ModelKind::linreg;
  CHECK(s.parameter_count() == 137);
  CHECK(Model(s).params().count() == 137);
}

TEST_CASE("spec validation rejects bad sizes") {
  auto s = tiny(ModelKind::simple_lstm);
  s.lstm_layers = 0;
  CHECK_ERROR_KIND(s.validate(), ErrorKind::InvalidSpec);
  s = tiny(ModelKind::hier_lstm);
  s.hier_cfg_hidden = 0;
  CHECK_ERROR_KIND(Model{s}, ErrorKind::InvalidSpec);
}

TEST_CASE("tiny hierarchical model runs a three-step forward") {
  std::mt19937_64 rng(1);
  const Model m(tiny(ModelKind::hier_lstm));
  const auto b = random_batch(m.spec(), 3, 2, rng);
  const auto y = m.forward(b);
  CHECK(y.rows() == 1);
  CHECK(y.cols() == 6);
  CHECK(y.allFinite());
  CHECK(m.tensor_names().front() == "lstm_uaim.wx");
  CHECK(m.tensor_names().size() == m.params().tensors().size());
}

TEST_CASE("linreg is one affine map of the concatenated input") {
  std::mt19937_64 rng(2);
  const Model m(tiny(ModelKind::linreg, 3));
  const auto b = random_batch(m.spec(), 2, 3, rng);
  const auto y = m.forward(b);
  const auto& lin = m.params().linear[0];
  for (int t = 0; t < 2; ++t)
    for (int j = 0; j < 3; ++j) {
      nn::Vector x(136);
      x.head(128) = b.uaim.col(t * 3 + j);
      x.tail(8) = b.cfg.col(j);
      CHECK(std::abs(y(0, t * 3 + j) - ((lin.w * x)(0) + lin.b(0))) < 1e-12);
    }
}

TEST_CASE("gradients of every model kind match finite differences") {
  std::mt19937_64 rng(3);
  for (auto kind : {ModelKind::linreg, ModelKind::mlp, ModelKind::simple_lstm, ModelKind::hier_lstm}) {
    Model m(tiny(kind, 5));
    const auto b = random_batch(m.spec(), 3, 2, rng);
    const auto targets = random_targets(6, rng);
    const auto rep = grad_check(m, b, targets);
    CAPTURE(to_string(kind));
    CHECK(rep.checked == m.params().count());
    CHECK(rep.max_rel_error < (kind == ModelKind::linreg ? 1e-6 : 1e-4));
  }
}

TEST_CASE("masked steps contribute no gradient") {
  std::mt19937_64 rng(4);
  const Model m(tiny(ModelKind::simple_lstm));
  const auto b = random_batch(m.spec(), 3, 2, rng);
  auto targets = random_targets(6, rng);
  std::vector<double> mask{1, 1, 1, 1, 1, 0};
  auto g1 = m.params().zeros_like();
  const double l1 = loss_and_gradient(m, b, targets, mask, g1);
  targets[5] += 100.0;
  auto g2 = m.params().zeros_like();
  const double l2 = loss_and_gradient(m, b, targets, mask, g2);
  CHECK(l1 == l2);
  CHECK(g1.lstm[0].wx == g2.lstm[0].wx);
}

TEST_CASE("config path of the hierarchical model is live") {
  Fixture fx;
  Model m(tiny(ModelKind::hier_lstm, 9));
  m.norm = fx.stats;
  m.params().linear[1].b(0) = 1.0;
  auto a = fx.traces[0];
  auto b = fx.traces[1];
  REQUIRE(a.benchmark == b.benchmark);
  REQUIRE(a.sku.sku_id != b.sku.sku_id);
  CHECK(predict_intervals(m, a) != predict_intervals(m, b));
}

TEST_CASE("predict_intervals: single step, repeatability, manual unroll") {
  Fixture fx;
  ModelSpec s = tiny(ModelKind::hier_lstm, 11);
  s.hier_uaim_hidden = 3;
  s.hier_cfg_hidden = 2;
  s.hier_top_hidden = 3;
  s.fc_hidden = 2;
  Model m(s);
  m.norm = fx.stats;
  m.params().linear[1].b(0) = 1.0;  // keep outputs above the clamp

  auto one = fx.traces[0];
  one.intervals.resize(1);
  CHECK(predict_intervals(m, one).size() == 1);

  const auto& t = fx.traces[2];
  const auto p1 = predict_intervals(m, t);
  const auto p2 = predict_intervals(m, t);
  CHECK(p1 == p2);

  // Hand unroll with the scalar oracle.
  const auto& st = fx.stats;
  oracle::Mat xu, xc;
  const auto cfg_raw = t.sku.feature_vector();
  oracle::Vec cfg(cfg_raw.size());
  for (std::size_t j = 0; j < cfg.size(); ++j) cfg[j] = (cfg_raw[j] - st.cfg_mean[j]) / st.cfg_std[j];
  for (const auto& r : t.intervals) {
    oracle::Vec x(r.uaim_delta.size());
    for (std::size_t f = 0; f < x.size(); ++f)
      x[f] = (r.uaim_delta[f] / static_cast<double>(r.instructions) - st.uaim_mean[f]) / st.uaim_std[f];
    xu.push_back(x);
    xc.push_back(cfg);
  }
  const auto& P = m.params();
  const auto hu = oracle::lstm_run(testutil::to_oracle(P.lstm[0]), xu);
  const auto hc = oracle::lstm_run(testutil::to_oracle(P.lstm[1]), xc);
  oracle::Mat joint;
  for (std::size_t k = 0; k < hu.size(); ++k) {
    auto j = hu[k];
    j.insert(j.end(), hc[k].begin(), hc[k].end());
    joint.push_back(j);
  }
  const auto h2 = oracle::lstm_run(testutil::to_oracle(P.lstm[2]), joint);
  const auto w0 = testutil::to_rows(P.linear[0].w);
  const auto w1 = testutil::to_rows(P.linear[1].w);
  const oracle::Vec b0(P.linear[0].b.data(), P.linear[0].b.data() + P.linear[0].b.size());
  const oracle::Vec b1{P.linear[1].b(0)};
  bool any_unclamped = false;
  for (std::size_t k = 0; k < h2.size(); ++k) {
    auto a = oracle::affine(w0, b0, h2[k]);
    for (auto& v : a) v = std::max(v, 0.0);
    const double y = std::max(oracle::affine(w1, b1, a)[0], kMinPredictedIpc);
    any_unclamped |= y > kMinPredictedIpc;
    CHECK(std::abs(p1[k] - y) < 1e-12);
  }
  CHECK(any_unclamped);
}

TEST_CASE("encode_trace preconditions") {
  Fixture fx;
  Model m(tiny(ModelKind::mlp));
  CHECK_ERROR_KIND(encode_trace(m, fx.traces[0]), ErrorKind::UnnormalizedInput);
  m.norm = fx.stats;
  auto bad = fx.traces[0];
  bad.intervals[0].uaim_delta.pop_back();
  CHECK_ERROR_KIND(encode_trace(m, bad), ErrorKind::SchemaMismatch);
  CHECK_NOTHROW(check_schema(m, trace::FeatureSchema::canonical()));
  auto names = trace::FeatureSchema::canonical().names();
  std::swap(names[0], names[1]);
  CHECK_ERROR_KIND(check_schema(m, trace::FeatureSchema::from_names(names)), ErrorKind::SchemaMismatch);
}

TEST_CASE("aggregation identities") {
  const std::vector<std::int64_t> instr{10'000'000, 10'000'000};
  CHECK(aggregate_ipc(std::vector<double>{1.0, 2.0}, instr) == 4.0 / 3.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ipc(0.05, 4.0);
  std::uniform_int_distribution<std::int64_t> width(1, 20'000'000);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial) % 50;
    const double v = ipc(rng);
    std::vector<double> constant(n, v), random(n);
    std::vector<std::int64_t> ins(n);
    for (std::size_t k = 0; k < n; ++k) {
      random[k] = ipc(rng);
      ins[k] = width(rng);
    }
    // Constant predictions aggregate to the constant.
    const std::vector<std::int64_t> uniform(n, 10'000'000);
    CHECK(aggregate_ipc(constant, uniform) == v);
    CHECK(std::abs(aggregate_ipc(random, ins) - oracle::harmonic_ipc(random, ins)) <= 1e-12);
  }
  CHECK_ERROR_KIND(aggregate_ipc(std::vector<double>{1.0}, instr), ErrorKind::ShapeMismatch);
}

TEST_CASE("full-benchmark prediction aggregates interval predictions") {
  Fixture fx;
  Model m(tiny(ModelKind::simple_lstm, 2));
  m.norm = fx.stats;
  const auto& t = fx.traces[1];
  const auto pred = predict_intervals(m, t);
  std::vector<std::int64_t> instr;
  for (const auto& r : t.intervals) instr.push_back(r.instructions);
  CHECK(predict_full_benchmark(m, t) == aggregate_ipc(pred, instr));
}

TEST_CASE("make_batch pads short windows and masks them") {
  dataset::SampleSet set;
  for (std::size_t i = 0; i < 3; ++i) {
    dataset::Sample s;
    s.benchmark = "b";
    s.sku_id = "s";
    s.interval_index = i;
    s.uaim.assign(128, static_cast<double>(i));
    s.cfg.assign(8, 1.0);
    s.ipc = 1.0 + static_cast<double>(i);
    set.samples.push_back(s);
  }
  const std::vector<dataset::Window> w{{{0, 1}}, {{2}}};
  std::vector<double> targets, mask;
  const auto b = make_batch(set, w, &targets, &mask);
  CHECK(b.steps == 2);
  CHECK(b.batch == 2);
  CHECK(targets == std::vector<double>{1, 3, 2, 0});
  CHECK(mask == std::vector<double>{1, 1, 1, 0});
  CHECK(b.uaim.col(3).isZero());
}

TEST_CASE("property: checkpoints round-trip bit-exactly") {
  Fixture fx(6);
  const auto dir = testutil::scratch_dir("ckpt");
  std::mt19937_64 rng(6);
  const ModelKind kinds[] = {ModelKind::linreg, ModelKind::mlp, ModelKind::simple_lstm, ModelKind::hier_lstm};
  for (int trial = 0; trial < 100; ++trial) {
    auto spec = tiny(kinds[trial % 4], rng());
    spec.fc_hidden = 2 + trial % 3;
    Model m(spec);
    m.norm = fx.stats;
    m.schema_hash = rng();
    m.meta.epochs = trial;
    m.meta.final_train_mse = 0.01 * trial;
    m.meta.final_test_mse = 0.02 * trial;
    m.meta.lr = 1e-3;
    m.meta.batch_size = 16;
    m.meta.seed = spec.seed;
    m.meta.converged = trial % 5 != 0;
    const auto text = checkpoint_to_string(m);
    const auto back = checkpoint_from_string(text);
    CHECK(back.spec() == m.spec());
    CHECK(back.norm == m.norm);
    CHECK(back.schema_hash == m.schema_hash);
    CHECK(back.meta == m.meta);
    const auto a = m.params().tensors();
    const auto b = back.params().tensors();
    REQUIRE(a.size() == b.size());
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(std::equal(a[j].begin(), a[j].end(), b[j].begin(), b[j].end()));
    CHECK(checkpoint_to_string(back) == text);
    if (trial % 10 == 0) {
      save_checkpoint(m, dir / "m.ckpt");
      const auto loaded = load_checkpoint(dir / "m.ckpt");
      CHECK(predict_intervals(loaded, fx.traces[0]) == predict_intervals(m, fx.traces[0]));
    }
  }
}

TEST_CASE("damaged checkpoints are rejected") {
  Model m(tiny(ModelKind::mlp));
  const auto text = checkpoint_to_string(m);
  CHECK_ERROR_KIND(checkpoint_from_string(text.substr(0, text.size() / 2)), ErrorKind::CorruptCheckpoint);
  auto bumped = text;
  const auto pos = bumped.find("\"version\":1");
  REQUIRE(pos != std::string::npos);
  bumped.replace(pos, 11, "\"version\":999");
  CHECK_ERROR_KIND(checkpoint_from_string(bumped), ErrorKind::UnsupportedVersion);
  CHECK_ERROR_KIND(load_checkpoint(testutil::scratch_dir("nockpt") / "missing.ckpt"), ErrorKind::Io);
}

TEST_CASE("non-finite training losses survive a checkpoint") {
  Model m(tiny(ModelKind::linreg));
  m.meta.final_test_mse = std::nan("");
  const auto back = checkpoint_from_string(checkpoint_to_string(m));
  CHECK(std::isnan(back.meta.final_test_mse));
}
