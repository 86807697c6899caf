#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ulk/dwconv_blocked.hpp"

namespace ulk {

enum class ConvImpl { kDirect, kBlocked };

const char* to_string(ConvImpl impl);
ConvImpl parse_conv_impl(const std::string& name);

/// One latency measurement of a depth-wise stack.
struct BenchRow {
  Index resolution = 0;
  Index kernel = 0;
  ConvImpl impl = ConvImpl::kDirect;
  double median_ms = 0.0;
  Index iters = 0;
  double checksum = 0.0;  // sum |output|, keeps the work observable
};

struct BenchConfig {
  std::vector<Index> resolutions{16, 32, 64};
  std::vector<Index> kernels{3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29, 31};
  std::vector<ConvImpl> impls{ConvImpl::kDirect, ConvImpl::kBlocked};
  Index batch = 4;
  Index channels = 64;
  Index layers = 24;
  Index iters = 5;
  Index warmup = 2;
  std::uint64_t seed = 0;
  TileConfig tiles;

  void validate() const;
};

/// Times `layers` same-padded depth-wise k x k convolutions on a
/// (batch, channels, R, R) float input; median over `iters` runs after `warmup`.
BenchRow bench_stack(Index resolution, Index kernel, ConvImpl impl, const BenchConfig& cfg);

/// Every (R, k, impl) combination in config order.
std::vector<BenchRow> run_bench(const BenchConfig& cfg, const std::function<void(const BenchRow&)>& on_row = {});

inline constexpr const char* kBenchCsvHeader = "resolution,kernel,impl,median_ms,iters,checksum";

void write_bench_csv_header(std::ostream& os);
void write_bench_csv_row(std::ostream& os, const BenchRow& row);

}  // namespace ulk
