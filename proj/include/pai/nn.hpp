#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pai::nn {

/// Column-major; one column per sample. A sequence batch of T steps and B
/// sequences is a D x (T*B) matrix whose step t occupies columns [t*B, (t+1)*B).
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

void check_shape(bool ok, const std::string& what);  // throws ShapeMismatch

struct LinearParams {
  Matrix w;  // out x in
  Vector b;  // out

  LinearParams() = default;
  LinearParams(int in, int out) : w(Matrix::Zero(out, in)), b(Vector::Zero(out)) {}
  int in_dim() const { return static_cast<int>(w.cols()); }
  int out_dim() const { return static_cast<int>(w.rows()); }
};

/// Gate blocks are stacked [input, forget, candidate, output], H rows each.
struct LstmParams {
  Matrix wx;  // 4H x D
  Matrix wh;  // 4H x H
  Vector b;   // 4H

  LstmParams() = default;
  LstmParams(int input_dim, int hidden_dim)
      : wx(Matrix::Zero(4 * hidden_dim, input_dim)),
        wh(Matrix::Zero(4 * hidden_dim, hidden_dim)),
        b(Vector::Zero(4 * hidden_dim)) {}
  int input_dim() const { return static_cast<int>(wx.cols()); }
  int hidden_dim() const { return static_cast<int>(wh.cols()); }
};

/// uniform(-k, k), k = 1/sqrt(fan_in); forget-gate bias 1, other biases 0.
void init_lstm(LstmParams& p, std::mt19937_64& rng);
void init_linear(LinearParams& p, std::mt19937_64& rng);

// ---- activations -----------------------------------------------------------

double logistic(double x);
Matrix relu(const Matrix& x);

// ---- linear ----------------------------------------------------------------

Matrix linear_forward(const Matrix& x, const LinearParams& p);
/// Accumulates dW, db into `grad`; returns dL/dx.
Matrix linear_backward(const Matrix& x, const Matrix& dy, const LinearParams& p, LinearParams& grad);

// ---- LSTM ------------------------------------------------------------------

struct LstmState {
  Matrix h;  // H x B
  Matrix c;  // H x B

  static LstmState zeros(int hidden, int batch) { return {Matrix::Zero(hidden, batch), Matrix::Zero(hidden, batch)}; }
};

/// One step over a batch. `gates` holds post-activation (i, f, g, o).
struct CellCache {
  Matrix x, h_prev, c_prev, gates, c, tanh_c;
};

struct CellOutput {
  Matrix h, c;
  CellCache cache;
};

CellOutput lstm_cell_forward(const Matrix& x, const Matrix& h, const Matrix& c, const LstmParams& p);

/// Forward caches for a whole sequence, laid out like the inputs.
struct LstmSeqCache {
  int steps = 0;
  int batch = 0;
  Matrix x;       // D x TB
  Matrix h0, c0;  // H x B
  Matrix gates;   // 4H x TB, post-activation
  Matrix c;       // H x TB
  Matrix tanh_c;  // H x TB
  Matrix h;       // H x TB

  bool empty() const { return steps == 0; }
};

/// Runs `steps` steps from `state` (updated in place). Returns all hidden
/// states, H x (steps*batch). Pass a cache to enable backward.
Matrix lstm_forward_seq(const Matrix& xs, int steps, const LstmParams& p, LstmState& state,
                        LstmSeqCache* cache = nullptr);

/// BPTT. `dhs` is dL/dh_t for every step (H x TB). Accumulates into `grad` and
/// returns dL/dx (D x TB). Throws MissingCache on an empty cache.
Matrix lstm_backward_seq(const LstmSeqCache& cache, const Matrix& dhs, const LstmParams& p, LstmParams& grad);

// ---- loss ------------------------------------------------------------------

double mse_loss(std::span<const double> pred, std::span<const double> target);

// ---- parameter sets --------------------------------------------------------

/// Ordered collection of layer parameters; a model's gradients and optimizer
/// moments use the same layout.
struct Parameters {
  std::vector<LstmParams> lstm;
  std::vector<LinearParams> linear;

  /// Every tensor in canonical order: each LSTM (wx, wh, b), then each
  /// linear (w, b).
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  Parameters zeros_like() const;
  void set_zero();
  std::size_t count() const;
  void add(const Parameters& other);
  void scale(double s);
  bool all_finite() const;
};

struct AdamState {
  Parameters m, v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const Parameters& p);
};

void adam_step(Parameters& params, const Parameters& grads, AdamState& state, double lr);
void sgd_step(Parameters& params, const Parameters& grads, double lr);

// ---- gradient verification --------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  std::size_t checked = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor); the floor keeps coordinates
/// with vanishing gradients from reporting roundoff as error.
inline constexpr double kGradCheckFloor = 1e-6;

/// Central differences of `loss` over every coordinate of `params`, compared
/// with `analytic`. `params` is restored before returning.
GradCheckReport grad_check(Parameters& params, const Parameters& analytic, const std::function<double()>& loss,
                           double eps = 1e-5);

}  // namespace pai::nn
