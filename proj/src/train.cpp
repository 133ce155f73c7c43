#include "pai/train.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "pai/error.hpp"
#include "pai/evalx.hpp"
#include "pai/hash.hpp"
#include "pai/io.hpp"

namespace pai::train {

using dataset::SampleSet;
using dataset::Window;

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw Error(ErrorKind::InvalidSpec, "unknown optimizer '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidSpec, what); };
  if (!(lr > 0) || !std::isfinite(lr)) fail("lr must be positive");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (window < 1) fail("window must be >= 1");
  if (stride < 0) fail("stride must be >= 0");
  if (!(divergence_factor > 1)) fail("divergence_factor must exceed 1");
  if (shard_size < 1) fail("shard_size must be >= 1");
}

// ---- gradients -------------------------------------------------------------

namespace {

BatchGradient shard_gradient(const models::Model& model, const SampleSet& set, std::span<const Window> windows) {
  std::vector<double> targets, mask;
  const auto batch = models::make_batch(set, windows, &targets, &mask);
  BatchGradient g;
  g.grad = model.params().zeros_like();
  g.count = std::accumulate(mask.begin(), mask.end(), 0.0);
  g.loss = models::loss_and_gradient(model, batch, targets, mask, g.grad);
  return g;
}

}  // namespace

BatchGradient batch_gradient_serial(const models::Model& model, const SampleSet& set,
                                    std::span<const Window> windows) {
  return shard_gradient(model, set, windows);
}

BatchGradient batch_gradient_parallel(const models::Model& model, const SampleSet& set,
                                      std::span<const Window> windows, int shard_size) {
  const std::size_t step = static_cast<std::size_t>(std::max(shard_size, 1));
  const std::size_t n_shards = (windows.size() + step - 1) / step;
  std::vector<BatchGradient> shards(n_shards);
  const auto n = static_cast<std::ptrdiff_t>(n_shards);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < n; ++s) {
    const std::size_t lo = static_cast<std::size_t>(s) * step;
    const std::size_t hi = std::min(lo + step, windows.size());
    shards[static_cast<std::size_t>(s)] = shard_gradient(model, set, windows.subspan(lo, hi - lo));
  }
  BatchGradient total;
  total.grad = model.params().zeros_like();
  for (const auto& s : shards) total.count += s.count;
  for (auto& s : shards) {
    const double w = s.count / total.count;
    total.loss += w * s.loss;
    s.grad.scale(w);
    total.grad.add(s.grad);
  }
  return total;
}

// ---- training loop ---------------------------------------------------------

TrainResult train(const models::ModelSpec& spec, const SampleSet& train_set, const SampleSet& test_set,
                  const TrainConfig& cfg) {
  cfg.validate();
  spec.validate();
  if (train_set.empty()) throw Error(ErrorKind::EmptyDataset, "training set is empty");
  if (!train_set.norm) throw Error(ErrorKind::UnnormalizedInput, "training set is not normalized");
  if (!test_set.empty() && !(test_set.norm == train_set.norm))
    throw Error(ErrorKind::UnnormalizedInput, "test set must be normalized with the training statistics");

  const auto windows = dataset::make_windows(train_set, static_cast<std::size_t>(cfg.window),
                                             static_cast<std::size_t>(cfg.stride ? cfg.stride : cfg.window));
  if (windows.empty()) throw Error(ErrorKind::EmptyDataset, "no training windows");
  if (static_cast<std::size_t>(cfg.batch_size) > windows.size())
    throw Error(ErrorKind::InvalidSpec, "batch_size " + std::to_string(cfg.batch_size) + " exceeds the " +
                                            std::to_string(windows.size()) + " training windows");

  const auto t0 = std::chrono::steady_clock::now();
  models::Model model(spec);
  model.norm = train_set.norm;
  auto adam = nn::AdamState::for_params(model.params());
  std::mt19937_64 rng(mix_seed(cfg.seed, std::string_view("shuffle")));

  RunRecord rec;
  rec.config = cfg;
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Window> batch;
  std::optional<double> initial_loss;
  nn::Parameters saved;

  auto stop = [&](const std::string& why) {
    rec.converged = false;
    rec.stop_reason = why;
  };

  for (int epoch = 0; epoch < cfg.epochs && rec.converged; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0, count_sum = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi = std::min(lo + static_cast<std::size_t>(cfg.batch_size), order.size());
      batch.clear();
      for (std::size_t k = lo; k < hi; ++k) batch.push_back(windows[order[k]]);
      auto g = batch_gradient_parallel(model, train_set, batch, cfg.shard_size);
      if (!std::isfinite(g.loss) || !g.grad.all_finite()) {
        stop("non-finite loss");
        break;
      }
      if (!initial_loss) initial_loss = g.loss;
      if (g.loss > cfg.divergence_factor * *initial_loss) {
        stop("loss exceeded divergence threshold");
        break;
      }
      loss_sum += g.loss * g.count;
      count_sum += g.count;

      saved = model.params();
      if (cfg.optimizer == OptimizerKind::adam) nn::adam_step(model.params(), g.grad, adam, cfg.lr);
      else nn::sgd_step(model.params(), g.grad, cfg.lr);
      if (!model.params().all_finite()) {
        model.params() = saved;
        stop("non-finite parameters");
        break;
      }
    }
    if (!rec.converged) break;
    rec.train_loss.push_back(loss_sum / count_sum);
    rec.test_mse.push_back(test_set.empty() ? std::numeric_limits<double>::quiet_NaN()
                                            : evalx::interval_mse(model, test_set));
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  rec.final_train = rec.train_loss.empty() ? nan : rec.train_loss.back();
  rec.final_test = rec.test_mse.empty() ? nan : rec.test_mse.back();
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  model.meta.epochs = static_cast<int>(rec.epochs_completed());
  model.meta.final_train_mse = rec.final_train;
  model.meta.final_test_mse = rec.final_test;
  model.meta.seed = cfg.seed;
  model.meta.lr = cfg.lr;
  model.meta.batch_size = cfg.batch_size;
  model.meta.converged = rec.converged;
  return {std::move(model), std::move(rec)};
}

// ---- sweeps ----------------------------------------------------------------

SweepGrid SweepGrid::defaults() { return {{1e-2, 1e-3, 1e-4}, {128, 512, 2048}}; }

SweepGrid parse_grid(const std::string& text) {
  if (text == "default") return SweepGrid::defaults();
  SweepGrid g;
  std::istringstream in(text);
  std::string part;
  while (std::getline(in, part, ';')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::InvalidSpec, "grid part '" + part + "' lacks '='");
    const auto key = part.substr(0, eq);
    std::istringstream vals(part.substr(eq + 1));
    std::string v;
    while (std::getline(vals, v, ',')) {
      try {
        if (key == "lrs") g.lrs.push_back(std::stod(v));
        else if (key == "batches") g.batch_sizes.push_back(std::stoi(v));
        else throw Error(ErrorKind::InvalidSpec, "unknown grid key '" + key + "'");
      } catch (const std::logic_error&) {
        throw Error(ErrorKind::InvalidSpec, "bad grid value '" + v + "'");
      }
    }
  }
  if (g.lrs.empty() || g.batch_sizes.empty()) throw Error(ErrorKind::InvalidSpec, "grid needs lrs and batches");
  return g;
}

std::uint64_t cell_seed(std::uint64_t seed, double lr, int batch_size) {
  return mix_seed(mix_seed(seed, lr), static_cast<std::uint64_t>(batch_size));
}

TuneResult tune(const models::ModelSpec& spec, const SweepGrid& grid, const SampleSet& train_set,
                const SampleSet& test_set, const TrainConfig& base, bool keep_best_model) {
  if (grid.lrs.empty() || grid.batch_sizes.empty()) throw Error(ErrorKind::InvalidSpec, "empty sweep grid");
  struct Cell {
    TrainConfig cfg;
    models::ModelSpec spec;
  };
  std::vector<Cell> cells;
  for (double lr : grid.lrs)
    for (int bs : grid.batch_sizes) {
      Cell c{base, spec};
      c.cfg.lr = lr;
      c.cfg.batch_size = bs;
      c.cfg.seed = cell_seed(base.seed, lr, bs);
      c.spec.seed = c.cfg.seed;
      c.cfg.validate();
      cells.push_back(std::move(c));
    }

  std::vector<std::optional<TrainResult>> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  const auto n = static_cast<std::ptrdiff_t>(cells.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& c = cells[static_cast<std::size_t>(i)];
      results[static_cast<std::size_t>(i)] = train(c.spec, train_set, test_set, c.cfg);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<std::size_t> order(cells.size());
  std::iota(order.begin(), order.end(), 0);
  auto key = [](double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::infinity(); };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = results[a]->record;
    const auto& rb = results[b]->record;
    if (key(ra.final_test) != key(rb.final_test)) return key(ra.final_test) < key(rb.final_test);
    return key(ra.final_train) < key(rb.final_train);
  });

  TuneResult out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& r = *results[order[k]];
    out.ranked.push_back(r.record);
    if (!out.best && r.record.converged) {
      out.best = k;
      if (keep_best_model) out.best_model = std::move(r.model);
    }
  }
  return out;
}

// ---- curve and sweep files -------------------------------------------------

std::string format_curves(const RunRecord& record) {
  std::string out = "epoch\ttrain_loss\ttest_mse\n";
  for (std::size_t e = 0; e < record.train_loss.size(); ++e)
    out += std::to_string(e + 1) + '\t' + format_double(record.train_loss[e]) + '\t' +
           format_double(record.test_mse[e]) + '\n';
  return out;
}

void emit_curves(const RunRecord& record, const std::filesystem::path& path) {
  write_file_atomic(path, format_curves(record));
}

Curves parse_curves(const std::string& text) {
  Curves c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto num = [&](const std::string& s) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError(lineno, "bad number '" + s + "'");
    return v;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "epoch\ttrain_loss\ttest_mse") throw ParseError(1, "unexpected curve header");
      continue;
    }
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string epoch, tr, te;
    if (!std::getline(row, epoch, '\t') || !std::getline(row, tr, '\t') || !std::getline(row, te))
      throw ParseError(lineno, "curve row needs 3 columns");
    c.train_loss.push_back(num(tr));
    c.test_mse.push_back(num(te));
  }
  return c;
}

std::string format_sweep_report(const TuneResult& result) {
  std::string out = "rank\tlr\tbatch_size\tfinal_train\tfinal_test\tconverged\tseconds\tepochs\tseed\n";
  for (std::size_t k = 0; k < result.ranked.size(); ++k) {
    const auto& r = result.ranked[k];
    out += std::to_string(k + 1) + '\t' + format_double(r.config.lr) + '\t' + std::to_string(r.config.batch_size) +
           '\t' + format_double(r.final_train) + '\t' + format_double(r.final_test) + '\t' +
           (r.converged ? "true" : "false") + '\t' + format_double(r.seconds) + '\t' +
           std::to_string(r.epochs_completed()) + '\t' + std::to_string(r.config.seed) + '\n';
  }
  out += result.best ? "# best\t" + std::to_string(*result.best + 1) + '\n' : "# best\tnone\n";
  return out;
}

void write_sweep_report(const TuneResult& result, const std::filesystem::path& path) {
  write_file_atomic(path, format_sweep_report(result));
}

}  // namespace pai::train
