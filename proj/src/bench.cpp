#include "ulk/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "ulk/init.hpp"

namespace ulk {

const char* to_string(ConvImpl impl) { return impl == ConvImpl::kDirect ? "direct" : "blocked"; }

ConvImpl parse_conv_impl(const std::string& name) {
  if (name == "direct") return ConvImpl::kDirect;
  if (name == "blocked") return ConvImpl::kBlocked;
  throw ConfigError("unknown implementation '" + name + "' (expected direct or blocked)");
}

void BenchConfig::validate() const {
  if (resolutions.empty() || kernels.empty() || impls.empty()) throw ConfigError("benchmark grid is empty");
  for (Index r : resolutions)
    if (r < 1) throw ConfigError("resolution must be >= 1");
  for (Index k : kernels)
    if (k < 1 || k % 2 == 0) throw ConfigError("kernel sizes must be odd and >= 1, got " + std::to_string(k));
  if (batch < 1 || channels < 1 || layers < 1) throw ConfigError("batch, channels and layers must be >= 1");
  if (iters < 5) throw ConfigError("at least 5 timed iterations are required");
  if (warmup < 0) throw ConfigError("warmup must be >= 0");
  if (tiles.tile_h < 1 || tiles.tile_w < 1) throw ConfigError("tile sizes must be >= 1");
}

BenchRow bench_stack(Index resolution, Index kernel, ConvImpl impl, const BenchConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed ^ (static_cast<std::uint64_t>(resolution) << 32) ^ static_cast<std::uint64_t>(kernel));
  const Tensor<float> input = random_normal<float>(Shape{cfg.batch, cfg.channels, resolution, resolution}, rng);
  std::vector<ConvKernel<float>> weights;
  for (Index l = 0; l < cfg.layers; ++l)
    weights.push_back({random_normal<float>(Shape{cfg.channels, 1, kernel, kernel}, rng, 1.0 / double(kernel)), std::nullopt});
  const ConvParams p{1, same_padding(kernel), 1, cfg.channels};

  auto run = [&] {
    Tensor<float> y = input;
    for (const auto& w : weights) y = impl == ConvImpl::kDirect ? conv2d_direct(y, w, p) : dwconv2d_blocked(y, w, p, cfg.tiles);
    return y;
  };

  for (Index i = 0; i < cfg.warmup; ++i) run();
  std::vector<double> times;
  Tensor<float> last;
  for (Index i = 0; i < cfg.iters; ++i) {
    const auto start = std::chrono::steady_clock::now();
    last = run();
    const auto stop = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  const double median = n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);

  double checksum = 0.0;
  for (float v : last.data()) checksum += std::abs(static_cast<double>(v));
  return {resolution, kernel, impl, median, cfg.iters, checksum};
}

std::vector<BenchRow> run_bench(const BenchConfig& cfg, const std::function<void(const BenchRow&)>& on_row) {
  cfg.validate();
  std::vector<BenchRow> rows;
  for (Index r : cfg.resolutions)
    for (Index k : cfg.kernels) {
      for (ConvImpl impl : cfg.impls) {
        rows.push_back(bench_stack(r, k, impl, cfg));
        if (on_row) on_row(rows.back());
      }
    }
  return rows;
}

void write_bench_csv_header(std::ostream& os) { os << kBenchCsvHeader << '\n'; }

void write_bench_csv_row(std::ostream& os, const BenchRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%lld,%lld,%s,%.4f,%lld,%.9g", static_cast<long long>(row.resolution),
                static_cast<long long>(row.kernel), to_string(row.impl), row.median_ms, static_cast<long long>(row.iters),
                row.checksum);
  os << buf << '\n';
}

}  // namespace ulk
