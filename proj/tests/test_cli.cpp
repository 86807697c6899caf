#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>

#include "oracles.hpp"
#include "ulk/arch_io.hpp"

namespace {

struct CliResult {
  int code;
  std::string out;
};

CliResult run(const std::string& args) {
  const std::string cmd = std::string(ULK_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("params Q").code, 2);
  EXPECT_EQ(run("bench --kernels 4").code, 2);
  EXPECT_EQ(run("bench --iters 3").code, 2);
  EXPECT_EQ(run("erf --kernel 31 --depth 4 --resolution 64").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, ParamsAudit) {
  const CliResult one = run("params A");
  EXPECT_EQ(one.code, 0);
  EXPECT_NE(one.out.find("reference 4.4M"), std::string::npos);
  const CliResult all = run("params --all");
  EXPECT_EQ(all.code, 0);
  EXPECT_NE(all.out.find("monotone across A..XL: yes"), std::string::npos);
}

TEST(Cli, BenchWritesCsv) {
  const auto path = oracle::scratch("bench");
  const CliResult r = run("bench --resolutions 8 --kernels 3,5 --batch 1 --channels 2 --layers 2 --warmup 0 --out " + path.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string csv = slurp(path);
  EXPECT_EQ(csv.rfind("resolution,kernel,impl,median_ms,iters,checksum\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(csv.find("8,5,blocked,"), std::string::npos);
  std::filesystem::remove(path);
}

TEST(Cli, MergeVerifyAndIdempotence) {
  const auto in = oracle::scratch("in"), out = oracle::scratch("out"), again = oracle::scratch("again");
  ASSERT_EQ(run("init --variant A --width 8 --classes 4 --random-norms --out " + in.string()).code, 0);
  const CliResult r = run("merge " + in.string() + " " + out.string() + " --verify --resolution 32");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("max relative error"), std::string::npos);
  EXPECT_TRUE(ulk::load_weights<double>(out).merged());
  ASSERT_EQ(run("merge " + out.string() + " " + again.string()).code, 0);
  EXPECT_EQ(slurp(out), slurp(again));
  for (const auto& p : {in, out, again}) std::filesystem::remove(p);
}

TEST(Cli, MergeRejectsBadFiles) {
  const auto bad = oracle::scratch("bad"), out = oracle::scratch("out");
  EXPECT_EQ(run("merge /nonexistent.ulkw " + out.string()).code, 3);
  std::ofstream(bad, std::ios::binary) << "NOPE and more bytes";
  EXPECT_EQ(run("merge " + bad.string() + " " + out.string()).code, 3);
  const auto good = oracle::scratch("good");
  ASSERT_EQ(run("init --variant A --width 8 --out " + good.string()).code, 0);
  const std::string bytes = slurp(good);
  std::ofstream(bad, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() / 2);
  const CliResult r = run("merge " + bad.string() + " " + out.string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("truncated"), std::string::npos);
  for (const auto& p : {bad, good}) std::filesystem::remove(p);
}

TEST(Cli, ErfWritesCsvAndPgm) {
  const auto prefix = oracle::scratch("erf").replace_extension("").string();
  const CliResult r = run("erf --kernel 5 --depth 2 --resolution 16 --samples 2 --out " + prefix);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("area(t=0.50)"), std::string::npos);
  EXPECT_EQ(slurp(prefix + ".pgm").rfind("P5\n16 16\n255\n", 0), 0u);
  const std::string csv = slurp(prefix + ".csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 16);
  std::filesystem::remove(prefix + ".csv");
  std::filesystem::remove(prefix + ".pgm");
}

TEST(Cli, EmbedVideoAndTimeseries) {
  const auto in = oracle::scratch("video"), out = oracle::scratch("emb");
  ulk::Rng rng(1);
  ulk::write_weights(in, {ulk::to_named("input", ulk::random_normal<double>(ulk::Shape{1, 4, 3, 5, 5}, rng))});
  ASSERT_EQ(run("embed --kind video --in " + in.string() + " --out " + out.string()).code, 0);
  const auto emb = ulk::read_weights(out);
  ASSERT_EQ(emb.size(), 1u);
  EXPECT_EQ(emb[0].name, "embedding");
  EXPECT_EQ(emb[0].shape, (ulk::Shape{1, 3, 10, 10}));

  ulk::write_weights(in, {ulk::to_named("series", ulk::random_normal<double>(ulk::Shape{2, 6, 4}, rng))});
  ASSERT_EQ(run("embed --kind timeseries --nodes 2 --latent 3 --in " + in.string() + " --out " + out.string()).code, 0);
  EXPECT_EQ(ulk::read_weights(out)[0].shape, (ulk::Shape{4, 1, 6, 3}));
  EXPECT_EQ(run("embed --kind timeseries --in " + in.string() + " --out " + out.string()).code, 2);
  EXPECT_EQ(run("embed --kind smell --in " + in.string() + " --out " + out.string()).code, 2);
  for (const auto& p : {in, out}) std::filesystem::remove(p);
}
