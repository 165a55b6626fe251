#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "driverchain/chain.hpp"
#include "driverchain/core_types.hpp"

namespace fixtures {

using namespace driverchain;

inline std::filesystem::path source_dir() { return DC_SOURCE_DIR; }
inline std::filesystem::path config_path() { return source_dir() / "config" / "scenario.json"; }
inline std::filesystem::path tables_path() { return source_dir() / "data" / "reference_tables.json"; }
inline std::filesystem::path traces_path() { return source_dir() / "data" / "synthetic_traces.jsonl"; }

inline const ScenarioConfig& config() {
  static const ScenarioConfig c = ScenarioConfig::load(config_path());
  return c;
}

inline std::vector<PercentTables> reference_tables() {
  std::ifstream in(tables_path());
  const auto doc = nlohmann::json::parse(in);
  std::vector<PercentTables> out;
  for (const auto& t : doc) out.push_back(PercentTables::from_json(t));
  return out;
}

using Rows = std::array<std::array<Count, 3>, 3>;

// Rows and columns in state-code order (Takeover, Alert, Normal).
inline ChainModel literal_chain(std::string label, Environment env, StateCounts initial, const Rows& step1,
                                const Rows& step2) {
  ChainModel c;
  c.label = std::move(label);
  c.environment = env;
  c.initial_counts = initial;
  c.steps[0].counts = step1;
  c.steps[1].counts = step2;
  return c;
}

// Counts worked out by hand from the published percentage tables (n = 206).
inline ChainModel highway_counts() {
  return literal_chain("highway", Environment::Highway, {18, 57, 131},
                       Rows{{{15, 3, 0}, {25, 30, 2}, {36, 49, 46}}},
                       Rows{{{58, 11, 7}, {26, 39, 17}, {17, 17, 14}}});
}

inline ChainModel suburbs_counts() {
  return literal_chain("suburbs", Environment::Suburbs, {4, 17, 185},
                       Rows{{{3, 1, 0}, {9, 6, 2}, {12, 47, 126}}},
                       Rows{{{12, 6, 6}, {8, 20, 26}, {9, 16, 103}}});
}

inline ChainModel all_normal(Count n) {
  ChainModel c;
  c.label = "all_normal";
  c.initial_counts = {0, 0, n};
  c.steps[0].counts[2][2] = n;
  c.steps[1].counts[2][2] = n;
  return c;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("dc_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixtures
