#include "pai/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pai/error.hpp"

namespace pai::models {

using nn::Matrix;
using Eigen::Index;

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::linreg: return "linreg";
    case ModelKind::mlp: return "mlp";
    case ModelKind::simple_lstm: return "simple_lstm";
    case ModelKind::hier_lstm: return "hier_lstm";
  }
  return "hier_lstm";
}

ModelKind model_kind_from_string(std::string_view s) {
  if (s == "linreg") return ModelKind::linreg;
  if (s == "mlp") return ModelKind::mlp;
  if (s == "simple_lstm") return ModelKind::simple_lstm;
  if (s == "hier_lstm") return ModelKind::hier_lstm;
  throw Error(ErrorKind::InvalidSpec, "unknown model kind '" + std::string(s) + "'");
}

ModelSpec ModelSpec::defaults(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  return s;
}

void ModelSpec::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidSpec, what); };
  if (uaim_dim < 1 || cfg_dim < 1) fail("input widths must be >= 1");
  switch (kind) {
    case ModelKind::linreg: break;
    case ModelKind::mlp:
      if (mlp_hidden.empty()) fail("mlp needs at least one hidden layer");
      for (int h : mlp_hidden)
        if (h < 1) fail("mlp hidden widths must be >= 1");
      break;
    case ModelKind::simple_lstm:
      if (lstm_hidden < 1 || lstm_layers < 1) fail("simple_lstm needs hidden >= 1 and layers >= 1");
      if (fc_hidden < 1) fail("fc_hidden must be >= 1");
      break;
    case ModelKind::hier_lstm:
      if (hier_uaim_hidden < 1 || hier_cfg_hidden < 1 || hier_top_hidden < 1) fail("hier_lstm hidden sizes must be >= 1");
      if (fc_hidden < 1) fail("fc_hidden must be >= 1");
      break;
  }
}

namespace {

std::size_t lstm_count(std::size_t d, std::size_t h) { return 4 * h * (d + h) + 4 * h; }
std::size_t linear_count(std::size_t in, std::size_t out) { return out * in + out; }

}  // namespace

std::size_t ModelSpec::parameter_count() const {
  validate();
  const std::size_t u = static_cast<std::size_t>(uaim_dim);
  const std::size_t c = static_cast<std::size_t>(cfg_dim);
  const std::size_t f = static_cast<std::size_t>(fc_hidden);
  switch (kind) {
    case ModelKind::linreg: return linear_count(u + c, 1);
    case ModelKind::mlp: {
      std::size_t n = 0, in = u + c;
      for (int h : mlp_hidden) {
        n += linear_count(in, static_cast<std::size_t>(h));
        in = static_cast<std::size_t>(h);
      }
      return n + linear_count(in, 1);
    }
    case ModelKind::simple_lstm: {
      const std::size_t h = static_cast<std::size_t>(lstm_hidden);
      return lstm_count(u + c, h) + static_cast<std::size_t>(lstm_layers - 1) * lstm_count(h, h) +
             linear_count(h, f) + linear_count(f, 1);
    }
    case ModelKind::hier_lstm: {
      const std::size_t hu = static_cast<std::size_t>(hier_uaim_hidden);
      const std::size_t hc = static_cast<std::size_t>(hier_cfg_hidden);
      const std::size_t h2 = static_cast<std::size_t>(hier_top_hidden);
      return lstm_count(u, hu) + lstm_count(c, hc) + lstm_count(hu + hc, h2) + linear_count(h2, f) +
             linear_count(f, 1);
    }
  }
  return 0;
}

// ---- topology --------------------------------------------------------------

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const int u = spec_.uaim_dim;
  const int c = spec_.cfg_dim;
  switch (spec_.kind) {
    case ModelKind::linreg: params_.linear.emplace_back(u + c, 1); break;
    case ModelKind::mlp: {
      int in = u + c;
      for (int h : spec_.mlp_hidden) {
        params_.linear.emplace_back(in, h);
        in = h;
      }
      params_.linear.emplace_back(in, 1);
      break;
    }
    case ModelKind::simple_lstm:
      params_.lstm.emplace_back(u + c, spec_.lstm_hidden);
      for (int l = 1; l < spec_.lstm_layers; ++l) params_.lstm.emplace_back(spec_.lstm_hidden, spec_.lstm_hidden);
      params_.linear.emplace_back(spec_.lstm_hidden, spec_.fc_hidden);
      params_.linear.emplace_back(spec_.fc_hidden, 1);
      break;
    case ModelKind::hier_lstm:
      params_.lstm.emplace_back(u, spec_.hier_uaim_hidden);
      params_.lstm.emplace_back(c, spec_.hier_cfg_hidden);
      params_.lstm.emplace_back(spec_.hier_uaim_hidden + spec_.hier_cfg_hidden, spec_.hier_top_hidden);
      params_.linear.emplace_back(spec_.hier_top_hidden, spec_.fc_hidden);
      params_.linear.emplace_back(spec_.fc_hidden, 1);
      break;
  }
  std::mt19937_64 rng(spec_.seed);
  for (auto& l : params_.lstm) nn::init_lstm(l, rng);
  for (auto& l : params_.linear) nn::init_linear(l, rng);
}

Model build(const ModelSpec& spec) { return Model(spec); }

std::vector<std::string> Model::tensor_names() const {
  std::vector<std::string> lstm_names;
  if (spec_.kind == ModelKind::hier_lstm) {
    lstm_names = {"lstm_uaim", "lstm_cfg", "lstm_top"};
  } else {
    for (std::size_t l = 0; l < params_.lstm.size(); ++l) lstm_names.push_back("lstm" + std::to_string(l));
  }
  std::vector<std::string> out;
  for (const auto& n : lstm_names) {
    out.push_back(n + ".wx");
    out.push_back(n + ".wh");
    out.push_back(n + ".b");
  }
  for (std::size_t l = 0; l < params_.linear.size(); ++l) {
    out.push_back("fc" + std::to_string(l) + ".w");
    out.push_back("fc" + std::to_string(l) + ".b");
  }
  return out;
}

Matrix Model::concat_input(const SequenceBatch& in) const {
  const Index u = spec_.uaim_dim, c = spec_.cfg_dim, b = in.batch;
  Matrix x(u + c, in.uaim.cols());
  x.topRows(u) = in.uaim;
  for (Index t = 0; t < in.steps; ++t) x.block(u, t * b, c, b) = in.cfg;
  return x;
}

Matrix Model::head_forward(const Matrix& x, Cache* cache) const {
  Matrix a = x;
  const std::size_t n = params_.linear.size();
  for (std::size_t l = 0; l < n; ++l) {
    if (cache) cache->fc_in.push_back(a);
    a = nn::linear_forward(a, params_.linear[l]);
    if (l + 1 < n && spec_.kind != ModelKind::linreg) a = nn::relu(a);
  }
  return a;
}

Matrix Model::head_backward(const Cache& cache, const Matrix& dout, nn::Parameters& grad) const {
  const std::size_t n = params_.linear.size();
  if (cache.fc_in.size() != n) throw Error(ErrorKind::MissingCache, "linear caches incomplete");
  Matrix d = dout;
  for (std::size_t l = n; l-- > 0;) {
    d = nn::linear_backward(cache.fc_in[l], d, params_.linear[l], grad.linear[l]);
    // the input of layer l is relu(pre-activation) for every l > 0
    if (l > 0) d = (cache.fc_in[l].array() > 0.0).select(d, 0.0);
  }
  return d;
}

Matrix Model::forward(const SequenceBatch& in, Cache* cache) const {
  nn::check_shape(in.steps >= 1 && in.batch >= 1, "model: empty batch");
  nn::check_shape(in.uaim.rows() == spec_.uaim_dim, "model: uaim rows " + std::to_string(in.uaim.rows()) +
                                                        " vs " + std::to_string(spec_.uaim_dim));
  nn::check_shape(in.uaim.cols() == static_cast<Index>(in.steps) * in.batch, "model: uaim columns");
  nn::check_shape(in.cfg.rows() == spec_.cfg_dim && in.cfg.cols() == in.batch, "model: cfg shape");
  if (cache) {
    *cache = Cache{};
    cache->steps = in.steps;
    cache->batch = in.batch;
    cache->lstm.resize(params_.lstm.size());
  }
  auto lstm_cache = [&](std::size_t l) { return cache ? &cache->lstm[l] : nullptr; };

  switch (spec_.kind) {
    case ModelKind::linreg:
    case ModelKind::mlp: return head_forward(concat_input(in), cache);
    case ModelKind::simple_lstm: {
      Matrix x = concat_input(in);
      for (std::size_t l = 0; l < params_.lstm.size(); ++l) {
        auto st = nn::LstmState::zeros(params_.lstm[l].hidden_dim(), in.batch);
        x = nn::lstm_forward_seq(x, in.steps, params_.lstm[l], st, lstm_cache(l));
      }
      return head_forward(x, cache);
    }
    case ModelKind::hier_lstm: {
      const auto& pu = params_.lstm[0];
      const auto& pc = params_.lstm[1];
      const auto& pt = params_.lstm[2];
      auto su = nn::LstmState::zeros(pu.hidden_dim(), in.batch);
      Matrix hu = nn::lstm_forward_seq(in.uaim, in.steps, pu, su, lstm_cache(0));
      Matrix cfg_seq(spec_.cfg_dim, in.uaim.cols());
      for (Index t = 0; t < in.steps; ++t) cfg_seq.middleCols(t * in.batch, in.batch) = in.cfg;
      auto sc = nn::LstmState::zeros(pc.hidden_dim(), in.batch);
      Matrix hc = nn::lstm_forward_seq(cfg_seq, in.steps, pc, sc, lstm_cache(1));
      Matrix joint(hu.rows() + hc.rows(), hu.cols());
      joint.topRows(hu.rows()) = hu;
      joint.bottomRows(hc.rows()) = hc;
      auto st = nn::LstmState::zeros(pt.hidden_dim(), in.batch);
      Matrix h2 = nn::lstm_forward_seq(joint, in.steps, pt, st, lstm_cache(2));
      return head_forward(h2, cache);
    }
  }
  return {};
}

void Model::backward(const Cache& cache, const Matrix& dout, nn::Parameters& grad) const {
  if (cache.empty()) throw Error(ErrorKind::MissingCache, "backward called without a forward cache");
  nn::check_shape(dout.rows() == 1 && dout.cols() == static_cast<Index>(cache.steps) * cache.batch,
                  "model backward: dout shape");
  nn::check_shape(grad.lstm.size() == params_.lstm.size() && grad.linear.size() == params_.linear.size(),
                  "model backward: gradient layout");
  Matrix d = head_backward(cache, dout, grad);
  switch (spec_.kind) {
    case ModelKind::linreg:
    case ModelKind::mlp: return;
    case ModelKind::simple_lstm:
      for (std::size_t l = params_.lstm.size(); l-- > 0;)
        d = nn::lstm_backward_seq(cache.lstm[l], d, params_.lstm[l], grad.lstm[l]);
      return;
    case ModelKind::hier_lstm: {
      Matrix djoint = nn::lstm_backward_seq(cache.lstm[2], d, params_.lstm[2], grad.lstm[2]);
      const Index hu = params_.lstm[0].hidden_dim();
      const Index hc = params_.lstm[1].hidden_dim();
      nn::lstm_backward_seq(cache.lstm[0], djoint.topRows(hu), params_.lstm[0], grad.lstm[0]);
      nn::lstm_backward_seq(cache.lstm[1], djoint.bottomRows(hc), params_.lstm[1], grad.lstm[1]);
      return;
    }
  }
}

// ---- batches and inference -------------------------------------------------

SequenceBatch make_batch(const dataset::SampleSet& set, std::span<const dataset::Window> windows,
                         std::vector<double>* targets, std::vector<double>* mask) {
  nn::check_shape(!windows.empty(), "make_batch: no windows");
  std::size_t steps = 0;
  for (const auto& w : windows) steps = std::max(steps, w.indices.size());
  nn::check_shape(steps > 0, "make_batch: empty window");
  const Index b = static_cast<Index>(windows.size());
  const auto& first = set.samples[windows.front().indices.front()];
  const Index u = static_cast<Index>(first.uaim.size());
  const Index c = static_cast<Index>(first.cfg.size());

  SequenceBatch out;
  out.steps = static_cast<int>(steps);
  out.batch = static_cast<int>(b);
  out.uaim = Matrix::Zero(u, static_cast<Index>(steps) * b);
  out.cfg.resize(c, b);
  if (targets) targets->assign(steps * static_cast<std::size_t>(b), 0.0);
  if (mask) mask->assign(steps * static_cast<std::size_t>(b), 0.0);
  for (Index j = 0; j < b; ++j) {
    const auto& w = windows[static_cast<std::size_t>(j)];
    const auto& head = set.samples[w.indices.front()];
    nn::check_shape(static_cast<Index>(head.cfg.size()) == c, "make_batch: cfg width");
    out.cfg.col(j) = Eigen::Map<const nn::Vector>(head.cfg.data(), c);
    for (std::size_t t = 0; t < w.indices.size(); ++t) {
      const auto& s = set.samples[w.indices[t]];
      nn::check_shape(static_cast<Index>(s.uaim.size()) == u, "make_batch: uaim width");
      const Index col = static_cast<Index>(t) * b + j;
      out.uaim.col(col) = Eigen::Map<const nn::Vector>(s.uaim.data(), u);
      if (targets) (*targets)[static_cast<std::size_t>(col)] = s.ipc;
      if (mask) (*mask)[static_cast<std::size_t>(col)] = 1.0;
    }
  }
  return out;
}

SequenceBatch encode_trace(const Model& model, const trace::BenchmarkTrace& trace) {
  if (!model.norm) throw Error(ErrorKind::UnnormalizedInput, "model carries no normalization statistics");
  const auto& st = *model.norm;
  const auto& spec = model.spec();
  if (trace.intervals.empty()) throw Error(ErrorKind::EmptyTrace, "trace '" + trace.benchmark + "' is empty");
  const auto cfg_raw = trace.sku.feature_vector();
  if (static_cast<int>(cfg_raw.size()) != spec.cfg_dim)
    throw Error(ErrorKind::SchemaMismatch, "config width differs from the model");

  SequenceBatch out;
  out.steps = static_cast<int>(trace.intervals.size());
  out.batch = 1;
  out.uaim.resize(spec.uaim_dim, out.steps);
  const auto cfg = dataset::normalize(cfg_raw, st.cfg_mean, st.cfg_std);
  out.cfg = Eigen::Map<const nn::Vector>(cfg.data(), spec.cfg_dim);
  std::vector<double> rate(static_cast<std::size_t>(spec.uaim_dim));
  for (int t = 0; t < out.steps; ++t) {
    const auto& r = trace.intervals[static_cast<std::size_t>(t)];
    if (static_cast<int>(r.uaim_delta.size()) != spec.uaim_dim)
      throw Error(ErrorKind::SchemaMismatch, "interval has " + std::to_string(r.uaim_delta.size()) +
                                                 " features, model expects " + std::to_string(spec.uaim_dim));
    const double inv = 1.0 / static_cast<double>(r.instructions);
    for (std::size_t f = 0; f < rate.size(); ++f)
      rate[f] = (r.uaim_delta[f] * inv - st.uaim_mean[f]) / st.uaim_std[f];
    out.uaim.col(t) = Eigen::Map<const nn::Vector>(rate.data(), spec.uaim_dim);
  }
  return out;
}

std::vector<std::vector<double>> predict_batch(const Model& model, const SequenceBatch& batch, bool clamp) {
  const Matrix y = model.forward(batch);
  const double floor = clamp ? kMinPredictedIpc : -std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> out(static_cast<std::size_t>(batch.batch),
                                       std::vector<double>(static_cast<std::size_t>(batch.steps)));
  for (int t = 0; t < batch.steps; ++t)
    for (int b = 0; b < batch.batch; ++b)
      out[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)] =
          std::max(y(0, static_cast<Index>(t) * batch.batch + b), floor);
  return out;
}

std::vector<double> predict_intervals(const Model& model, const trace::BenchmarkTrace& trace) {
  return predict_batch(model, encode_trace(model, trace)).front();
}

double aggregate_ipc(std::span<const double> ipc, std::span<const std::int64_t> instructions) {
  if (ipc.size() != instructions.size() || ipc.empty())
    throw Error(ErrorKind::ShapeMismatch, "aggregate_ipc: need one IPC per interval");
  // Cycles are counted in units of 1/ref cycles per instruction, so uniform
  // predictions sum integer instruction counts and return ref exactly.
  const double ref = std::max(ipc[0], kMinPredictedIpc);
  double insts = 0, scaled_cycles = 0;
  for (std::size_t k = 0; k < ipc.size(); ++k) {
    const double n = static_cast<double>(instructions[k]);
    insts += n;
    scaled_cycles += n * (ref / std::max(ipc[k], kMinPredictedIpc));
  }
  return ref * (insts / scaled_cycles);
}

void check_schema(const Model& model, const trace::FeatureSchema& schema) {
  if (model.schema_hash != schema.hash())
    throw Error(ErrorKind::SchemaMismatch, "trace schema differs from the one the model was trained on");
}

double predict_full_benchmark(const Model& model, const trace::BenchmarkTrace& trace) {
  const auto ipc = predict_intervals(model, trace);
  std::vector<std::int64_t> insts;
  insts.reserve(trace.intervals.size());
  for (const auto& r : trace.intervals) insts.push_back(r.instructions);
  return aggregate_ipc(ipc, insts);
}

double loss_and_gradient(const Model& model, const SequenceBatch& batch, std::span<const double> targets,
                         std::span<const double> mask, nn::Parameters& grad) {
  const std::size_t n = static_cast<std::size_t>(batch.steps) * static_cast<std::size_t>(batch.batch);
  nn::check_shape(targets.size() == n && mask.size() == n, "loss: target/mask length");
  Model::Cache cache;
  const Matrix y = model.forward(batch, &cache);
  double count = 0;
  for (double m : mask) count += m;
  nn::check_shape(count > 0, "loss: batch has no labelled steps");
  Matrix dout(1, static_cast<Index>(n));
  double loss = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = (y(0, static_cast<Index>(k)) - targets[k]) * mask[k];
    loss += d * d;
    dout(0, static_cast<Index>(k)) = 2.0 * d / count;
  }
  model.backward(cache, dout, grad);
  return loss / count;
}

nn::GradCheckReport grad_check(Model& model, const SequenceBatch& batch, std::span<const double> targets, double eps) {
  std::vector<double> mask(targets.size(), 1.0);
  auto grad = model.params().zeros_like();
  loss_and_gradient(model, batch, targets, mask, grad);
  auto loss = [&] {
    const Matrix y = model.forward(batch);
    double s = 0;
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const double d = y(0, static_cast<Index>(k)) - targets[k];
      s += d * d;
    }
    return s / static_cast<double>(targets.size());
  };
  return nn::grad_check(model.params(), grad, loss, eps);
}

}  // namespace pai::models
