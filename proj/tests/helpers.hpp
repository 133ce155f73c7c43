#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pai/error.hpp"
#include "pai/nn.hpp"
#include "pai/trace.hpp"

namespace testutil {

inline pai::nn::Matrix to_eigen(const oracle::Mat& m) {
  pai::nn::Matrix out(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m.front().size()));
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[r].size(); ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m[r][c];
  return out;
}

inline pai::nn::Vector to_eigen(const oracle::Vec& v) {
  return Eigen::Map<const pai::nn::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline oracle::Mat to_rows(const pai::nn::Matrix& m) {
  oracle::Mat out(static_cast<std::size_t>(m.rows()), oracle::Vec(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
  return out;
}

inline oracle::Lstm to_oracle(const pai::nn::LstmParams& p) {
  oracle::Lstm o{to_rows(p.wx), to_rows(p.wh), {}};
  o.b.assign(p.b.data(), p.b.data() + p.b.size());
  return o;
}

inline pai::trace::HardwareConfig sample_sku(std::mt19937_64& rng, const std::string& id = "SKU00") {
  std::uniform_int_distribution<int> cores(1, 64), issue(1, 8), rob(32, 1024);
  std::uniform_real_distribution<double> clock(1.5, 4.5), llc(0.5, 64.0);
  pai::trace::HardwareConfig h;
  h.sku_id = id;
  h.core_count = cores(rng);
  h.thread_count = 2 * h.core_count;
  h.clock_ghz = clock(rng);
  h.l1_kb = 48;
  h.l2_kb = 2048;
  h.llc_mb = llc(rng);
  h.issue_width = issue(rng);
  h.rob_size = rob(rng);
  return h;
}

/// Random monotone snapshot sequence with a uniform interval width and a
/// possibly shorter tail; integer-valued counters when `integral`.
inline std::vector<pai::trace::CounterSnapshot> random_snapshots(std::mt19937_64& rng, std::size_t n, std::size_t width,
                                                                 bool integral) {
  std::uniform_int_distribution<std::int64_t> step(1, 20'000'000);
  std::uniform_real_distribution<double> inc(0.0, 1e6);
  std::vector<pai::trace::CounterSnapshot> out(n);
  const std::int64_t width_instr = step(rng);
  out[0].instruction_index = step(rng);
  out[0].counters.resize(width);
  for (auto& v : out[0].counters) v = integral ? std::floor(inc(rng)) : inc(rng);
  for (std::size_t k = 1; k < n; ++k) {
    const bool tail = k + 1 == n && rng() % 2 == 0;
    out[k].instruction_index = out[k - 1].instruction_index + (tail ? 1 + width_instr / 2 : width_instr);
    out[k].counters = out[k - 1].counters;
    for (auto& v : out[k].counters) v += integral ? std::floor(inc(rng)) : inc(rng);
  }
  return out;
}

/// Fresh empty directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pai_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil

/// Checks that `expr` throws pai::Error of the given kind.
#define CHECK_ERROR_KIND(expr, k)                                  \
  do {                                                             \
    bool thrown_ = false;                                          \
    try {                                                          \
      (void)(expr);                                                \
    } catch (const pai::Error& e_) {                               \
      thrown_ = true;                                              \
      CHECK_MESSAGE(e_.kind() == (k), e_.what());                  \
    }                                                              \
    CHECK_MESSAGE(thrown_, "expected an exception: " #expr);       \
  } while (0)
