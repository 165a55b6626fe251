#include <cstdlib>

#include <gtest/gtest.h>

#include "driverchain/errors.hpp"
#include "driverchain/report.hpp"
#include "fixtures.hpp"

using namespace driverchain;
namespace fs = std::filesystem;

namespace {

const Dataset& fixture() {
  static const Dataset d = [] {
    std::ifstream in(fixtures::traces_path());
    return parse_dataset(in, fixtures::config());
  }();
  return d;
}

EstimateRequest request_for(const fs::path& out, std::string_view group_by = "environment", int order = 1) {
  EstimateRequest r;
  r.inputs = {fixtures::traces_path()};
  r.group_by = parse_group_by(group_by);
  r.order = order;
  r.out_dir = out;
  r.config_path = fixtures::config_path().string();
  return r;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(fixtures::read_file(p)); }

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + DC_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ParseGroupBy, AddsEnvironmentAndRejectsUnknown) {
  EXPECT_EQ(parse_group_by("sex").size(), 2u);
  EXPECT_EQ(parse_group_by("environment,sex,info").size(), 3u);
  EXPECT_EQ(parse_group_by("environment").size(), 1u);
  EXPECT_THROW(parse_group_by("height"), ValidationError);
}

TEST(Sha256, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(RunEstimate, EnvironmentBundleMatchesPublishedTables) {
  fixtures::TempDir dir;
  const auto bundle = run_estimate(fixture(), request_for(dir.path()));
  ASSERT_EQ(bundle.chains.size(), 2u);
  EXPECT_EQ(fixtures::read_file(dir / "tables/highway_step1-2.csv"),
            "Initial State,To Alert,To Normal,To Takeover\n"
            "Alert,52.6,3.5,43.9\n"
            "Normal,37.4,35.1,27.5\n"
            "Takeover,16.7,0.0,83.3\n");
  EXPECT_EQ(fixtures::read_file(dir / "tables/suburbs_step2-3.csv"),
            "Initial State,To Alert,To Normal,To Takeover\n"
            "Alert,37.0,48.1,14.8\n"
            "Normal,12.5,80.5,7.0\n"
            "Takeover,25.0,25.0,50.0\n");
  EXPECT_EQ(fixtures::read_file(dir / "tables/highway_initial.csv"), "Category,Percent\nN,63.6\nA,27.7\nT,8.7\n");
  EXPECT_TRUE(fs::exists(dir / "marginals.json"));
  const auto tests = read_json(dir / "tests.json");
  bool saw_compare = false;
  for (const auto& t : tests) {
    if (t["label"] == "highway vs suburbs") {
      saw_compare = true;
      EXPECT_LT(t["result"]["p_value"].get<double>(), 0.001);
    }
  }
  EXPECT_TRUE(saw_compare);
}

TEST(RunEstimate, CrossProductAndSecondOrder) {
  fixtures::TempDir dir;
  const auto bundle = run_estimate(fixture(), request_for(dir.path(), "environment,sex", 2));
  EXPECT_EQ(bundle.chains.size(), 4u);
  EXPECT_TRUE(fs::exists(dir / "chains/highway_sex-female.json"));
  EXPECT_TRUE(fs::exists(dir / "chains/suburbs_sex-male.json"));
  EXPECT_TRUE(fs::exists(dir / "second_order/highway_sex-male.json"));
  Count n = 0;
  for (const auto& c : bundle.chains) n += c.n();
  EXPECT_EQ(n, 2 * 206);
}

TEST(RunEstimate, ManifestHashesFilesAndIsStable) {
  fixtures::TempDir a;
  fixtures::TempDir b;
  run_estimate(fixture(), request_for(a.path(), "environment,info", 2));
  run_estimate(fixture(), request_for(b.path(), "environment,info", 2));
  const auto ma = read_json(a / "manifest.json");
  EXPECT_EQ(ma, read_json(b / "manifest.json"));
  ASSERT_FALSE(ma["files"].empty());
  for (const auto& f : ma["files"]) {
    const auto content = fixtures::read_file(a / f["path"].get<std::string>());
    EXPECT_EQ(f["sha256"], sha256_hex(content)) << f["path"];
    EXPECT_EQ(f["bytes"].get<std::size_t>(), content.size());
  }
}

TEST(RunEstimate, EmptyDatasetThrows) {
  fixtures::TempDir dir;
  EXPECT_THROW(run_estimate(Dataset{}, request_for(dir.path())), EstimationError);
}

TEST(Cli, IngestThenEstimateEqualsOneShot) {
  fixtures::TempDir dir;
  const auto traces = fixtures::traces_path().string();
  ASSERT_EQ(run_cli("ingest --input " + traces + " --report " + (dir / "rej.json").string() + " --out " +
                    (dir / "ing").string()),
            0);
  ASSERT_EQ(run_cli("estimate --input " + (dir / "ing/traces.jsonl").string() + " --group-by sex --order 2 --out " +
                    (dir / "two").string()),
            0);
  ASSERT_EQ(run_cli("estimate --input " + traces + " --group-by sex --order 2 --out " + (dir / "one").string()), 0);
  auto strip = [](nlohmann::json m) {
    auto& files = m["files"];
    files.erase(std::remove_if(files.begin(), files.end(), [](const auto& f) { return f["path"] == "metadata.json"; }),
                files.end());
    return m;
  };
  EXPECT_EQ(strip(read_json(dir / "one/manifest.json")), strip(read_json(dir / "two/manifest.json")));
  EXPECT_EQ(read_json(dir / "rej.json")["rejections"].size(), 0u);
}

TEST(Cli, EstimateWithoutValidTracesFails) {
  fixtures::TempDir dir;
  std::ofstream(dir / "bad.jsonl") << "{\"profile\": 1}\n";
  EXPECT_NE(run_cli("estimate --input " + (dir / "bad.jsonl").string() + " --out " + (dir / "o").string()), 0);
  EXPECT_NE(run_cli("ingest --input " + (dir / "bad.jsonl").string()), 0);
}

TEST(Cli, ExportAndSimulateAreDeterministic) {
  fixtures::TempDir dir;
  ASSERT_EQ(run_cli("recover-counts --tables " + fixtures::tables_path().string() + " --out " + dir.path().string()), 0);
  ASSERT_EQ(run_cli("export-prism --chain " + (dir / "highway.json").string() + " --out " + (dir / "pm").string()), 0);
  EXPECT_EQ(fixtures::read_file(dir / "pm/highway.pm"),
            fixtures::read_file(fixtures::source_dir() / "tests" / "golden" / "highway.pm"));
  ASSERT_EQ(run_cli("--seed 5 simulate --chain " + (dir / "suburbs.json").string() + " --n 3000 --out " +
                    (dir / "a.csv").string()),
            0);
  ASSERT_EQ(run_cli("--seed 5 simulate --chain " + (dir / "suburbs.json").string() + " --n 3000 --out " +
                    (dir / "b.csv").string()),
            0);
  EXPECT_EQ(fixtures::read_file(dir / "a.csv"), fixtures::read_file(dir / "b.csv"));
}

TEST(Cli, RecoverSingleRow) {
  EXPECT_EQ(run_cli("recover-counts --row 52.6,3.5,43.9 --total 57"), 0);
  EXPECT_NE(run_cli("recover-counts --row 63.5,27.8,8.7 --total 206"), 0);
}
