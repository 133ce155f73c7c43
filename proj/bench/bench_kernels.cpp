// Serial reference kernels against their OpenMP counterparts: minibatch
// gradients, per-trace inference and batched interval MSE.

#include <omp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <functional>

#include "pai/dataset.hpp"
#include "pai/evalx.hpp"
#include "pai/models.hpp"
#include "pai/synth.hpp"
#include "pai/train.hpp"

using namespace pai;

namespace {

double time_median(int reps, const std::function<void()>& body) {
  body();  // warmup
  std::vector<double> s;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    s.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return evalx::median(s);
}

double max_abs_diff(const nn::Parameters& a, const nn::Parameters& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  double worst = 0;
  for (std::size_t k = 0; k < ta.size(); ++k)
    for (std::size_t i = 0; i < ta[k].size(); ++i) worst = std::max(worst, std::abs(ta[k][i] - tb[k][i]));
  return worst;
}

void row(const char* name, double serial, double parallel, double agreement) {
  std::printf("%-28s %10.4f %10.4f %8.2fx   max|diff| %.1e\n", name, serial, parallel, serial / parallel, agreement);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Serial vs OpenMP kernel timings");
  int benchmarks = 8, skus = 8, intervals = 300, reps = 5, threads = 0, batch = 128, shard = 16;
  std::string model = "hier_lstm";
  app.add_option("--benchmarks", benchmarks)->capture_default_str();
  app.add_option("--skus", skus)->capture_default_str();
  app.add_option("--intervals", intervals)->capture_default_str();
  app.add_option("--reps", reps)->capture_default_str();
  app.add_option("--threads", threads, "0: runtime default")->capture_default_str();
  app.add_option("--batch", batch, "Windows per gradient batch")->capture_default_str();
  app.add_option("--shard-size", shard)->capture_default_str();
  app.add_option("--model", model)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) omp_set_num_threads(threads);

  synth::SynthSpec spec;
  spec.n_benchmarks = benchmarks;
  spec.n_skus = skus;
  spec.intervals_per_trace = intervals;
  const auto traces = synth::generate(spec);
  const auto raw = dataset::samples_from_traces(traces);
  const auto stats = dataset::compute_norm_stats(raw);
  const auto set = dataset::normalize(raw, stats);
  models::Model m(models::ModelSpec::defaults(models::model_kind_from_string(model)));
  m.norm = stats;

  std::printf("%s, %zu traces x %d intervals, %d threads, median of %d\n", model.c_str(), traces.size(), intervals,
              omp_get_max_threads(), reps);
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial s", "omp s", "speedup");

  auto windows = dataset::make_windows(set, 32, 32);
  windows.resize(std::min<std::size_t>(windows.size(), static_cast<std::size_t>(batch)));
  train::BatchGradient gs, gp;
  const double t_gs = time_median(reps, [&] { gs = train::batch_gradient_serial(m, set, windows); });
  const double t_gp = time_median(reps, [&] { gp = train::batch_gradient_parallel(m, set, windows, shard); });
  row("minibatch gradient", t_gs, t_gp, max_abs_diff(gs.grad, gp.grad));

  std::vector<std::vector<double>> ps, pp(traces.size());
  const double t_is = time_median(reps, [&] {
    ps.clear();
    for (const auto& t : traces) ps.push_back(models::predict_intervals(m, t));
  });
  const double t_ip = time_median(reps, [&] {
    const auto n = static_cast<std::ptrdiff_t>(traces.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i)
      pp[static_cast<std::size_t>(i)] = models::predict_intervals(m, traces[static_cast<std::size_t>(i)]);
  });
  double diff = 0;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t k = 0; k < ps[i].size(); ++k) diff = std::max(diff, std::abs(ps[i][k] - pp[i][k]));
  row("per-trace inference", t_is, t_ip, diff);
  std::printf("%-28s %10.0f %10.0f intervals/s\n", "", static_cast<double>(set.size()) / t_is,
              static_cast<double>(set.size()) / t_ip);

  double mse_s = 0, mse_p = 0;
  const int saved = omp_get_max_threads();
  const double t_ms = time_median(reps, [&] {
    omp_set_num_threads(1);
    mse_s = evalx::interval_mse(m, set);
    omp_set_num_threads(saved);
  });
  const double t_mp = time_median(reps, [&] { mse_p = evalx::interval_mse(m, set); });
  row("batched interval MSE", t_ms, t_mp, std::abs(mse_s - mse_p));
  return 0;
}
