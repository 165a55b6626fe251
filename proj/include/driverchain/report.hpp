#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "driverchain/chain.hpp"
#include "driverchain/ingestion.hpp"
#include "driverchain/stats.hpp"

namespace driverchain {

enum class GroupField { Environment, Sex, Info, Order };

/// Parses "environment,sex,info". Environment is always part of the grouping and is added
/// when missing. Throws ValidationError on unknown fields.
std::vector<GroupField> parse_group_by(std::string_view text);

struct SequenceGroup {
  std::string label;  // "highway", "highway_sex-female_info-high"
  Environment environment = Environment::Highway;
  /// Value per non-environment field, e.g. {"sex", "female"}.
  std::vector<std::pair<std::string, std::string>> filters;
  std::vector<StateSequence> sequences;
};

/// Cross-product grouping in a fixed order (environment, then sex, info, order). Empty
/// groups are omitted.
std::vector<SequenceGroup> group_sequences(const Dataset& dataset, std::span<const GroupField> fields);

/// Label of the group without its environment part, used to pair environments for comparison.
std::string filter_key(const SequenceGroup& group);

struct EstimateRequest {
  std::vector<std::filesystem::path> inputs;
  std::vector<GroupField> group_by{GroupField::Environment};
  int order = 1;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::string config_path;
  std::filesystem::path out_dir;
};

struct BundleFile {
  std::string path;  // relative to the bundle directory, '/'-separated
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct ReportBundle {
  std::filesystem::path dir;
  std::vector<SequenceGroup> groups;
  std::vector<ChainModel> chains;
  std::vector<BundleFile> files;  // everything except manifest.json itself
};

/// Estimates one chain per group, runs the stationarity (and with order 2, order) tests,
/// environment comparisons and subgroup homogeneity, and writes chains, CSV
/// tables, marginals, test results, metadata and a SHA-256 manifest into out_dir.
/// Throws EstimationError when the dataset has no valid traces.
ReportBundle run_estimate(const Dataset& dataset, const EstimateRequest& request);

std::string sha256_hex(std::string_view bytes);

inline constexpr std::string_view kToolVersion = "1.0.0";

}  // namespace driverchain
