// ulk: benchmark, merge, audit and analysis front end.
//
// Exit codes: 0 success, 2 usage / invalid configuration, 3 I/O or file
// format error, 4 verification failure.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ulk/arch_io.hpp"
#include "ulk/bench.hpp"
#include "ulk/embed.hpp"
#include "ulk/erf.hpp"
#include "ulk/parallel.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitVerify = 4;

constexpr double kMergeTolerance = 1e-9;

struct BenchOptions {
  std::vector<ulk::Index> resolutions{16, 32, 64};
  std::vector<ulk::Index> kernels{3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29, 31};
  std::vector<std::string> impls{"direct", "blocked"};
  ulk::Index batch = 4;
  ulk::Index channels = 64;
  ulk::Index layers = 24;
  ulk::Index iters = 5;
  ulk::Index warmup = 2;
  ulk::Index tile_h = 8;
  ulk::Index tile_w = 64;
  int threads = 0;
  std::string out;
};

int cmd_bench(const BenchOptions& o) {
  ulk::BenchConfig cfg;
  cfg.resolutions = o.resolutions;
  cfg.kernels = o.kernels;
  cfg.impls.clear();
  try {
    for (const auto& name : o.impls) cfg.impls.push_back(ulk::parse_conv_impl(name));
    cfg.batch = o.batch;
    cfg.channels = o.channels;
    cfg.layers = o.layers;
    cfg.iters = o.iters;
    cfg.warmup = o.warmup;
    cfg.tiles = {o.tile_h, o.tile_w};
    cfg.validate();
  } catch (const ulk::Error& e) {
    std::cerr << "ulk bench: " << e.what() << '\n';
    return kExitUsage;
  }
  ulk::set_worker_count(o.threads);

  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out);
    if (!file) {
      std::cerr << "ulk bench: cannot open " << o.out << '\n';
      return kExitIo;
    }
  }
  std::ostream& os = o.out.empty() ? std::cout : file;
  ulk::write_bench_csv_header(os);
  ulk::run_bench(cfg, [&](const ulk::BenchRow& row) {
    ulk::write_bench_csv_row(os, row);
    os.flush();
  });
  return kExitOk;
}

struct InitOptions {
  std::string variant = "A";
  ulk::Index width = 0;
  ulk::Index classes = 0;
  std::uint64_t seed = 0;
  bool random_norms = false;
  bool f64 = false;
  std::string out;
};

int cmd_init(const InitOptions& o) {
  ulk::Model<double> model;
  try {
    ulk::ArchSpec spec = ulk::arch_spec(o.variant, o.classes);
    if (o.width > 0) spec.width = o.width;
    model = ulk::build_model<double>(spec, o.seed, {0.02, o.random_norms});
  } catch (const ulk::Error& e) {
    std::cerr << "ulk init: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    ulk::save_weights(model, o.out, o.f64 ? ulk::Dtype::kF64 : ulk::Dtype::kF32);
  } catch (const ulk::Error& e) {
    std::cerr << "ulk init: " << e.what() << '\n';
    return kExitIo;
  }
  const auto report = ulk::count_params(model);
  std::printf("wrote %s: variant %s, C=%lld, %lld parameters\n", o.out.c_str(), model.spec.name.c_str(),
              static_cast<long long>(model.spec.width), static_cast<long long>(report.total_with_head()));
  return kExitOk;
}

struct MergeOptions {
  std::string in;
  std::string out;
  bool verify = false;
  ulk::Index resolution = 64;
  std::uint64_t seed = 0;
};

int cmd_merge(const MergeOptions& o) {
  if (o.resolution < 32 || o.resolution % 32 != 0) {
    std::cerr << "ulk merge: --resolution must be a positive multiple of 32\n";
    return kExitUsage;
  }
  ulk::Model<double> model;
  ulk::Dtype dtype = ulk::Dtype::kF32;
  try {
    const auto tensors = ulk::read_weights(o.in);
    for (const auto& t : tensors)
      if (t.name.rfind("arch.", 0) != 0) {
        dtype = t.dtype;
        break;
      }
    model = ulk::model_from_named<double>(tensors);
  } catch (const ulk::Error& e) {
    std::cerr << "ulk merge: " << o.in << ": " << e.what() << '\n';
    return kExitIo;
  }

  const ulk::Model<double> merged = ulk::merge_model(model);
  if (o.verify) {
    ulk::Rng rng(o.seed);
    const auto x = ulk::random_normal<double>(ulk::Shape{1, 3, o.resolution, o.resolution}, rng);
    const double err = ulk::max_relative_error(ulk::model_forward(merged, x), ulk::model_forward(model, x));
    std::printf("max relative error: %.3e (tolerance %.0e)\n", err, kMergeTolerance);
    if (!(err <= kMergeTolerance)) {
      std::cerr << "ulk merge: verification failed\n";
      return kExitVerify;
    }
  }
  try {
    ulk::save_weights(merged, o.out, dtype);
  } catch (const ulk::Error& e) {
    std::cerr << "ulk merge: " << e.what() << '\n';
    return kExitIo;
  }
  const auto before = ulk::count_params(model).total_with_head();
  const auto after = ulk::count_params(merged).total_with_head();
  std::printf("merged %s -> %s: %lld -> %lld parameters\n", o.in.c_str(), o.out.c_str(), static_cast<long long>(before),
              static_cast<long long>(after));
  return kExitOk;
}

void print_params(const ulk::ArchSpec& spec, ulk::Index head_classes) {
  const auto r = ulk::count_params(spec, head_classes);
  const double ref = ulk::variant_row(spec.name).reference_params_m * 1e6;
  std::printf("variant %s  N=(%lld,%lld,%lld+%lld,%lld)  C=%lld\n", spec.name.c_str(),
              static_cast<long long>(spec.depths[0]), static_cast<long long>(spec.depths[1]),
              static_cast<long long>(spec.stage3_lark), static_cast<long long>(spec.depths[2] - spec.stage3_lark),
              static_cast<long long>(spec.depths[3]), static_cast<long long>(spec.width));
  const char* down_names[4] = {"stem", "down 1->2", "down 2->3", "down 3->4"};
  for (std::size_t s = 0; s < 4; ++s) {
    std::printf("  %-12s %14lld\n", down_names[s], static_cast<long long>(r.downsample[s]));
    std::printf("  stage %zu      %14lld\n", s + 1, static_cast<long long>(r.stages[s]));
  }
  std::printf("  head         %14lld\n", static_cast<long long>(r.head));
  const auto without = static_cast<double>(r.total_without_head());
  const auto with = static_cast<double>(r.total_with_head());
  std::printf("  total (no head) %11.0f  %.2fM  reference %.1fM  deviation %+.2f%%\n", without, without / 1e6, ref / 1e6,
              100.0 * (without - ref) / ref);
  std::printf("  total (head)    %11.0f  %.2fM  reference %.1fM  deviation %+.2f%%\n", with, with / 1e6, ref / 1e6,
              100.0 * (with - ref) / ref);
}

int cmd_params(const std::string& variant, bool all, ulk::Index head_classes) {
  try {
    if (!all) {
      if (variant.empty()) {
        std::cerr << "ulk params: give a variant name or --all\n";
        return kExitUsage;
      }
      print_params(ulk::arch_spec(variant), head_classes);
      return kExitOk;
    }
    ulk::Index previous = 0;
    bool monotone = true;
    for (const auto& row : ulk::kVariantTable) {
      if (row.name == "H") continue;
      const ulk::ArchSpec spec = ulk::arch_spec(row.name);
      print_params(spec, head_classes);
      const ulk::Index total = ulk::count_params(spec, head_classes).total_without_head();
      if (total <= previous) monotone = false;
      previous = total;
    }
    std::printf("monotone across A..XL: %s\n", monotone ? "yes" : "NO");
    return monotone ? kExitOk : kExitVerify;
  } catch (const ulk::Error& e) {
    std::cerr << "ulk params: " << e.what() << '\n';
    return kExitUsage;
  }
}

struct ErfOptions {
  ulk::Index kernel = 13;
  ulk::Index depth = 1;
  ulk::Index resolution = 64;
  ulk::Index channels = 4;
  ulk::Index samples = 32;
  std::uint64_t seed = 0;
  bool relu = false;
  std::string out = "erf";
};

int cmd_erf(const ErfOptions& o) {
  const ulk::ErfStackSpec spec{o.depth, o.kernel, o.channels, o.relu ? ulk::Nonlinearity::kRelu : ulk::Nonlinearity::kNone,
                               o.resolution};
  ulk::ErfMap map;
  try {
    map = ulk::erf_map(spec, o.samples, o.seed);
  } catch (const ulk::Error& e) {
    std::cerr << "ulk erf: " << e.what() << '\n';
    return kExitUsage;
  }
  std::ofstream csv(o.out + ".csv");
  std::ofstream pgm(o.out + ".pgm", std::ios::binary);
  if (!csv || !pgm) {
    std::cerr << "ulk erf: cannot write " << o.out << ".csv/.pgm\n";
    return kExitIo;
  }
  ulk::write_erf_csv(csv, map);
  ulk::write_erf_pgm(pgm, map);
  std::printf("k=%lld n=%lld R=%lld samples=%lld\n", static_cast<long long>(o.kernel), static_cast<long long>(o.depth),
              static_cast<long long>(o.resolution), static_cast<long long>(o.samples));
  for (double t : {0.2, 0.3, 0.5, 0.99}) std::printf("area(t=%.2f) = %.6f\n", t, ulk::high_contribution_area(map, t));
  return kExitOk;
}

struct EmbedOptions {
  std::string kind;
  std::string in;
  std::string out;
  ulk::Index nodes = 1;
  ulk::Index latent = 0;
  std::uint64_t seed = 0;
};

int cmd_embed(const EmbedOptions& o) {
  std::vector<ulk::NamedTensor> tensors;
  try {
    tensors = ulk::read_weights(o.in);
  } catch (const ulk::Error& e) {
    std::cerr << "ulk embed: " << o.in << ": " << e.what() << '\n';
    return kExitIo;
  }
  const ulk::NamedTensor* input = nullptr;
  const ulk::NamedTensor* proj_w = nullptr;
  const ulk::NamedTensor* proj_b = nullptr;
  for (const auto& t : tensors) {
    if (t.name == "input") input = &t;
    if (t.name == "proj.weight") proj_w = &t;
    if (t.name == "proj.bias") proj_b = &t;
  }
  if (input == nullptr && tensors.size() == 1) input = &tensors.front();
  if (input == nullptr) {
    std::cerr << "ulk embed: " << o.in << " has no tensor named 'input'\n";
    return kExitIo;
  }

  ulk::Tensor<double> result;
  try {
    const auto x = ulk::from_named<double>(*input);
    if (o.kind == "audio") {
      result = ulk::embed_audio(x);
    } else if (o.kind == "video") {
      result = ulk::embed_video(x);
    } else if (o.kind == "pointcloud") {
      result = ulk::embed_pointcloud(x);
    } else if (o.kind == "timeseries") {
      ulk::Tensor<double> w, b;
      if (proj_w != nullptr && proj_b != nullptr) {
        w = ulk::from_named<double>(*proj_w);
        b = ulk::from_named<double>(*proj_b);
      } else {
        if (o.latent < 1 || x.rank() != 3 || o.nodes < 1 || x.dim(2) % o.nodes != 0) {
          std::cerr << "ulk embed: time series needs proj.weight/proj.bias in the file or a valid --latent/--nodes\n";
          return kExitUsage;
        }
        ulk::Rng rng(o.seed);
        w = ulk::random_normal<double>(ulk::Shape{o.latent, x.dim(2) / o.nodes}, rng, 0.02);
        b = ulk::Tensor<double>(ulk::Shape{o.latent});
      }
      result = ulk::embed_timeseries(x, o.nodes, w, b);
    } else {
      std::cerr << "ulk embed: unknown kind '" << o.kind << "'\n";
      return kExitUsage;
    }
  } catch (const ulk::Error& e) {
    std::cerr << "ulk embed: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    ulk::write_weights(o.out, {ulk::to_named("embedding", result, input->dtype)});
  } catch (const ulk::Error& e) {
    std::cerr << "ulk embed: " << e.what() << '\n';
    return kExitIo;
  }
  std::printf("%s -> %s\n", input->shape.to_string().c_str(), result.shape().to_string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Large-kernel ConvNet toolkit: latency sweeps, reparameterization merges, audits, ERF maps"};
  app.require_subcommand(1);

  BenchOptions bench;
  auto* bench_cmd = app.add_subcommand("bench", "Latency of 24-layer depth-wise stacks, CSV output");
  bench_cmd->add_option("--resolutions", bench.resolutions, "Input resolutions R")->delimiter(',');
  bench_cmd->add_option("--kernels", bench.kernels, "Odd kernel sizes")->delimiter(',');
  bench_cmd->add_option("--impls", bench.impls, "direct and/or blocked")->delimiter(',');
  bench_cmd->add_option("--batch", bench.batch);
  bench_cmd->add_option("--channels", bench.channels);
  bench_cmd->add_option("--layers", bench.layers);
  bench_cmd->add_option("--iters", bench.iters, "Timed runs (>= 5)");
  bench_cmd->add_option("--warmup", bench.warmup);
  bench_cmd->add_option("--tile-h", bench.tile_h);
  bench_cmd->add_option("--tile-w", bench.tile_w);
  bench_cmd->add_option("--threads", bench.threads, "Worker count (default: ULK_THREADS or 1)");
  bench_cmd->add_option("--out", bench.out, "CSV path (default stdout)");

  InitOptions init;
  auto* init_cmd = app.add_subcommand("init", "Build a randomly initialized variant and write its weights");
  init_cmd->add_option("--variant", init.variant)->required();
  init_cmd->add_option("--width", init.width, "Override stage-1 width C");
  init_cmd->add_option("--classes", init.classes, "Classifier head size (0: none)");
  init_cmd->add_option("--seed", init.seed);
  init_cmd->add_flag("--random-norms", init.random_norms, "Randomize BN statistics and GRN parameters");
  init_cmd->add_flag("--f64", init.f64, "Store 64-bit payloads");
  init_cmd->add_option("--out", init.out)->required();

  MergeOptions merge;
  auto* merge_cmd = app.add_subcommand("merge", "Merge a model file for inference");
  merge_cmd->add_option("input", merge.in)->required();
  merge_cmd->add_option("output", merge.out)->required();
  merge_cmd->add_flag("--verify", merge.verify, "Compare merged and unmerged forward passes");
  merge_cmd->add_option("--resolution", merge.resolution, "Verification input size");
  merge_cmd->add_option("--seed", merge.seed);

  std::string params_variant;
  bool params_all = false;
  ulk::Index head_classes = 1000;
  auto* params_cmd = app.add_subcommand("params", "Parameter audit against the published counts");
  params_cmd->add_option("variant", params_variant);
  params_cmd->add_flag("--all", params_all, "Audit A..XL and check monotonicity");
  params_cmd->add_option("--head-classes", head_classes);

  ErfOptions erf;
  auto* erf_cmd = app.add_subcommand("erf", "Effective receptive field of a depth-wise stack");
  erf_cmd->add_option("--kernel,-k", erf.kernel);
  erf_cmd->add_option("--depth,-n", erf.depth);
  erf_cmd->add_option("--resolution", erf.resolution);
  erf_cmd->add_option("--channels", erf.channels);
  erf_cmd->add_option("--samples", erf.samples);
  erf_cmd->add_option("--seed", erf.seed);
  erf_cmd->add_flag("--relu", erf.relu);
  erf_cmd->add_option("--out", erf.out, "Output prefix for .csv and .pgm");

  EmbedOptions embed;
  auto* embed_cmd = app.add_subcommand("embed", "Convert a raw sample tensor into an embedding map");
  embed_cmd->add_option("--kind", embed.kind, "audio | video | pointcloud | timeseries")->required();
  embed_cmd->add_option("--in", embed.in)->required();
  embed_cmd->add_option("--out", embed.out)->required();
  embed_cmd->add_option("--nodes", embed.nodes);
  embed_cmd->add_option("--latent", embed.latent);
  embed_cmd->add_option("--seed", embed.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (*bench_cmd) return cmd_bench(bench);
  if (*init_cmd) return cmd_init(init);
  if (*merge_cmd) return cmd_merge(merge);
  if (*params_cmd) return cmd_params(params_variant, params_all, head_classes);
  if (*erf_cmd) return cmd_erf(erf);
  if (*embed_cmd) return cmd_embed(embed);
  return kExitUsage;
}
