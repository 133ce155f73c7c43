#include "pai/nn.hpp"

#include <algorithm>
#include <cmath>

#include "pai/error.hpp"

namespace pai::nn {

using Eigen::Index;

void check_shape(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::ShapeMismatch, what);
}

namespace {

void fill_uniform(Matrix& m, double k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-k, k);
  // Row-major fill order so initial weights do not depend on storage order.
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
}

template <class Z>
void sigmoid_inplace(Z&& z) {
  z = (1.0 + (-z.array()).exp()).inverse().matrix();
}

}  // namespace

void init_lstm(LstmParams& p, std::mt19937_64& rng) {
  const int h = p.hidden_dim();
  fill_uniform(p.wx, 1.0 / std::sqrt(static_cast<double>(p.input_dim())), rng);
  fill_uniform(p.wh, 1.0 / std::sqrt(static_cast<double>(h)), rng);
  p.b.setZero();
  p.b.segment(h, h).setOnes();
}

void init_linear(LinearParams& p, std::mt19937_64& rng) {
  fill_uniform(p.w, 1.0 / std::sqrt(static_cast<double>(p.in_dim())), rng);
  p.b.setZero();
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix linear_forward(const Matrix& x, const LinearParams& p) {
  check_shape(x.rows() == p.w.cols(), "linear: input rows " + std::to_string(x.rows()) + " vs weight cols " +
                                          std::to_string(p.w.cols()));
  Matrix y = p.w * x;
  y.colwise() += p.b;
  return y;
}

Matrix linear_backward(const Matrix& x, const Matrix& dy, const LinearParams& p, LinearParams& grad) {
  check_shape(dy.rows() == p.w.rows() && dy.cols() == x.cols(), "linear backward: dy shape");
  check_shape(grad.w.rows() == p.w.rows() && grad.w.cols() == p.w.cols(), "linear backward: grad shape");
  grad.w.noalias() += dy * x.transpose();
  grad.b.noalias() += dy.rowwise().sum();
  return p.w.transpose() * dy;
}

// ---- LSTM ------------------------------------------------------------------

CellOutput lstm_cell_forward(const Matrix& x, const Matrix& h, const Matrix& c, const LstmParams& p) {
  LstmState state{h, c};
  LstmSeqCache seq;
  check_shape(h.rows() == p.hidden_dim() && c.rows() == p.hidden_dim() && h.cols() == c.cols(),
              "lstm cell: state shape");
  lstm_forward_seq(x, 1, p, state, &seq);
  CellOutput out;
  out.h = state.h;
  out.c = state.c;
  out.cache = CellCache{x, h, c, seq.gates, seq.c, seq.tanh_c};
  return out;
}

Matrix lstm_forward_seq(const Matrix& xs, int steps, const LstmParams& p, LstmState& state, LstmSeqCache* cache) {
  const Index H = p.hidden_dim();
  const Index B = state.h.cols();
  check_shape(steps >= 1, "lstm: need at least one step");
  check_shape(xs.rows() == p.input_dim(), "lstm: input rows " + std::to_string(xs.rows()) + " vs input_dim " +
                                              std::to_string(p.input_dim()));
  check_shape(xs.cols() == steps * B, "lstm: input columns do not match steps * batch");
  check_shape(state.h.rows() == H && state.c.rows() == H && state.c.cols() == B, "lstm: state shape");

  Matrix zx = p.wx * xs;
  zx.colwise() += p.b;
  Matrix hs(H, steps * B);
  if (cache) {
    cache->steps = steps;
    cache->batch = static_cast<int>(B);
    cache->x = xs;
    cache->h0 = state.h;
    cache->c0 = state.c;
    cache->gates.resize(4 * H, steps * B);
    cache->c.resize(H, steps * B);
    cache->tanh_c.resize(H, steps * B);
  }

  Matrix z(4 * H, B);
  Matrix tanh_c(H, B);
  for (Index t = 0; t < steps; ++t) {
    z.noalias() = p.wh * state.h;
    z += zx.middleCols(t * B, B);
    sigmoid_inplace(z.topRows(H));
    sigmoid_inplace(z.middleRows(H, H));
    z.middleRows(2 * H, H) = z.middleRows(2 * H, H).array().tanh().matrix();
    sigmoid_inplace(z.bottomRows(H));

    const auto i = z.topRows(H).array();
    const auto f = z.middleRows(H, H).array();
    const auto g = z.middleRows(2 * H, H).array();
    const auto o = z.bottomRows(H).array();
    state.c = (f * state.c.array() + i * g).matrix();
    tanh_c = state.c.array().tanh().matrix();
    state.h = (o * tanh_c.array()).matrix();
    hs.middleCols(t * B, B) = state.h;
    if (cache) {
      cache->gates.middleCols(t * B, B) = z;
      cache->c.middleCols(t * B, B) = state.c;
      cache->tanh_c.middleCols(t * B, B) = tanh_c;
    }
  }
  if (cache) cache->h = hs;
  return hs;
}

Matrix lstm_backward_seq(const LstmSeqCache& cache, const Matrix& dhs, const LstmParams& p, LstmParams& grad) {
  if (cache.empty()) throw Error(ErrorKind::MissingCache, "lstm backward called without a forward cache");
  const Index H = p.hidden_dim();
  const Index B = cache.batch;
  const Index T = cache.steps;
  check_shape(dhs.rows() == H && dhs.cols() == T * B, "lstm backward: dhs shape");
  check_shape(cache.x.rows() == p.input_dim() && cache.gates.rows() == 4 * H, "lstm backward: cache/params mismatch");
  check_shape(grad.wx.rows() == p.wx.rows() && grad.wx.cols() == p.wx.cols(), "lstm backward: grad shape");

  Matrix dz(4 * H, T * B);
  Matrix dh_next = Matrix::Zero(H, B);
  Matrix dc_next = Matrix::Zero(H, B);
  Eigen::ArrayXXd dh(H, B), dc(H, B);
  for (Index t = T - 1; t >= 0; --t) {
    const auto gates = cache.gates.middleCols(t * B, B);
    const auto i = gates.topRows(H).array();
    const auto f = gates.middleRows(H, H).array();
    const auto g = gates.middleRows(2 * H, H).array();
    const auto o = gates.bottomRows(H).array();
    const auto tc = cache.tanh_c.middleCols(t * B, B).array();
    const Eigen::Ref<const Matrix> c_prev_m =
        t == 0 ? Eigen::Ref<const Matrix>(cache.c0) : Eigen::Ref<const Matrix>(cache.c.middleCols((t - 1) * B, B));
    const auto c_prev = c_prev_m.array();

    dh = dhs.middleCols(t * B, B).array() + dh_next.array();
    dc = dh * o * (1.0 - tc.square()) + dc_next.array();

    auto dzt = dz.middleCols(t * B, B);
    dzt.topRows(H) = (dc * g * i * (1.0 - i)).matrix();
    dzt.middleRows(H, H) = (dc * c_prev * f * (1.0 - f)).matrix();
    dzt.middleRows(2 * H, H) = (dc * i * (1.0 - g.square())).matrix();
    dzt.bottomRows(H) = (dh * tc * o * (1.0 - o)).matrix();

    dc_next = (dc * f).matrix();
    dh_next.noalias() = p.wh.transpose() * dzt;
  }

  Matrix h_prev(H, T * B);
  h_prev.leftCols(B) = cache.h0;
  if (T > 1) h_prev.rightCols((T - 1) * B) = cache.h.leftCols((T - 1) * B);
  grad.wh.noalias() += dz * h_prev.transpose();
  grad.wx.noalias() += dz * cache.x.transpose();
  grad.b.noalias() += dz.rowwise().sum();
  return p.wx.transpose() * dz;
}

// ---- loss ------------------------------------------------------------------

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  check_shape(pred.size() == target.size(), "mse: length mismatch");
  check_shape(!pred.empty(), "mse: empty input");
  double s = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double d = pred[k] - target[k];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

// ---- parameter sets --------------------------------------------------------

namespace {

template <class M>
auto span_of(M& m) {
  return std::span(m.data(), static_cast<std::size_t>(m.size()));
}

}  // namespace

std::vector<std::span<double>> Parameters::tensors() {
  std::vector<std::span<double>> out;
  for (auto& l : lstm) {
    out.push_back(span_of(l.wx));
    out.push_back(span_of(l.wh));
    out.push_back(span_of(l.b));
  }
  for (auto& l : linear) {
    out.push_back(span_of(l.w));
    out.push_back(span_of(l.b));
  }
  return out;
}

std::vector<std::span<const double>> Parameters::tensors() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : lstm) {
    out.push_back(span_of(l.wx));
    out.push_back(span_of(l.wh));
    out.push_back(span_of(l.b));
  }
  for (const auto& l : linear) {
    out.push_back(span_of(l.w));
    out.push_back(span_of(l.b));
  }
  return out;
}

Parameters Parameters::zeros_like() const {
  Parameters z = *this;
  z.set_zero();
  return z;
}

void Parameters::set_zero() {
  for (auto t : tensors()) std::fill(t.begin(), t.end(), 0.0);
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for (auto t : tensors()) n += t.size();
  return n;
}

void Parameters::add(const Parameters& other) {
  auto a = tensors();
  auto b = other.tensors();
  check_shape(a.size() == b.size(), "parameter sets differ in layout");
  for (std::size_t j = 0; j < a.size(); ++j) {
    check_shape(a[j].size() == b[j].size(), "parameter tensor sizes differ");
    for (std::size_t k = 0; k < a[j].size(); ++k) a[j][k] += b[j][k];
  }
}

void Parameters::scale(double s) {
  for (auto t : tensors())
    for (auto& v : t) v *= s;
}

bool Parameters::all_finite() const {
  for (auto t : tensors())
    for (double v : t)
      if (!std::isfinite(v)) return false;
  return true;
}

AdamState AdamState::for_params(const Parameters& p) {
  AdamState s;
  s.m = p.zeros_like();
  s.v = p.zeros_like();
  return s;
}

void adam_step(Parameters& params, const Parameters& grads, AdamState& state, double lr) {
  auto p = params.tensors();
  auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  check_shape(p.size() == g.size() && p.size() == m.size() && p.size() == v.size(), "adam: layout mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t j = 0; j < p.size(); ++j) {
    check_shape(p[j].size() == g[j].size() && p[j].size() == m[j].size() && p[j].size() == v[j].size(),
                "adam: tensor size mismatch");
    for (std::size_t k = 0; k < p[j].size(); ++k) {
      const double gk = g[j][k];
      m[j][k] = state.beta1 * m[j][k] + (1.0 - state.beta1) * gk;
      v[j][k] = state.beta2 * v[j][k] + (1.0 - state.beta2) * gk * gk;
      const double mhat = m[j][k] / c1;
      const double vhat = v[j][k] / c2;
      p[j][k] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

void sgd_step(Parameters& params, const Parameters& grads, double lr) {
  auto p = params.tensors();
  auto g = grads.tensors();
  check_shape(p.size() == g.size(), "sgd: layout mismatch");
  for (std::size_t j = 0; j < p.size(); ++j) {
    check_shape(p[j].size() == g[j].size(), "sgd: tensor size mismatch");
    for (std::size_t k = 0; k < p[j].size(); ++k) p[j][k] -= lr * g[j][k];
  }
}

GradCheckReport grad_check(Parameters& params, const Parameters& analytic, const std::function<double()>& loss,
                           double eps) {
  auto p = params.tensors();
  auto a = analytic.tensors();
  check_shape(p.size() == a.size(), "grad_check: layout mismatch");
  GradCheckReport rep;
  for (std::size_t j = 0; j < p.size(); ++j) {
    check_shape(p[j].size() == a[j].size(), "grad_check: tensor size mismatch");
    for (std::size_t k = 0; k < p[j].size(); ++k) {
      const double saved = p[j][k];
      p[j][k] = saved + eps;
      const double up = loss();
      p[j][k] = saved - eps;
      const double down = loss();
      p[j][k] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double an = a[j][k];
      const double rel = std::abs(an - numeric) / std::max({std::abs(an), std::abs(numeric), kGradCheckFloor});
      ++rep.checked;
      if (rel > rep.max_rel_error || rep.checked == 1) {
        rep.max_rel_error = rel;
        rep.worst_tensor = j;
        rep.worst_index = k;
        rep.worst_analytic = an;
        rep.worst_numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace pai::nn
