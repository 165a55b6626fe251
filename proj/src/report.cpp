#include "driverchain/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "driverchain/errors.hpp"
#include "driverchain/simulate.hpp"

namespace driverchain {

namespace fs = std::filesystem;

std::vector<GroupField> parse_group_by(std::string_view text) {
  std::vector<GroupField> fields{GroupField::Environment};
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto name = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    if (name == "environment" || name.empty()) {
      // always present
    } else if (name == "sex") {
      fields.push_back(GroupField::Sex);
    } else if (name == "info" || name == "info_level") {
      fields.push_back(GroupField::Info);
    } else if (name == "order" || name == "scenario_order") {
      fields.push_back(GroupField::Order);
    } else {
      throw ValidationError(fmt::format("unknown group-by field '{}'", name));
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  std::ranges::sort(fields);
  fields.erase(std::unique(fields.begin(), fields.end()), fields.end());
  return fields;
}

namespace {

struct FieldSplit {
  std::string name;
  std::vector<std::pair<std::string, TracePredicate>> values;
};

FieldSplit split_for(GroupField field) {
  switch (field) {
    case GroupField::Sex:
      return {"sex", {{"female", by_sex(Sex::Female)}, {"male", by_sex(Sex::Male)}}};
    case GroupField::Info:
      return {"info", {{"high", by_info_level(InfoLevel::High)}, {"low", by_info_level(InfoLevel::Low)}}};
    case GroupField::Order:
      return {"order",
              {{"highway_first", by_scenario_order(ScenarioOrder::HighwayFirst)},
               {"suburbs_first", by_scenario_order(ScenarioOrder::SuburbsFirst)}}};
    case GroupField::Environment: break;
  }
  return {};
}

}  // namespace

std::vector<SequenceGroup> group_sequences(const Dataset& dataset, std::span<const GroupField> fields) {
  struct Partial {
    std::vector<std::pair<std::string, std::string>> filters;
    Dataset data;
  };
  std::vector<Partial> partials{{{}, dataset}};
  for (auto field : fields) {
    if (field == GroupField::Environment) continue;
    const auto split = split_for(field);
    std::vector<Partial> next;
    for (const auto& p : partials) {
      for (const auto& [value, predicate] : split.values) {
        Partial child{p.filters, slice(p.data, predicate)};
        child.filters.emplace_back(split.name, value);
        next.push_back(std::move(child));
      }
    }
    partials = std::move(next);
  }

  std::vector<SequenceGroup> out;
  for (auto env : kAllEnvironments) {
    for (const auto& p : partials) {
      if (p.data.traces.empty()) continue;
      SequenceGroup g;
      g.environment = env;
      g.filters = p.filters;
      g.label = std::string(to_string(env));
      for (const auto& [name, value] : p.filters) g.label += fmt::format("_{}-{}", name, value);
      g.sequences = to_state_sequences(p.data, env);
      out.push_back(std::move(g));
    }
  }
  return out;
}

std::string filter_key(const SequenceGroup& group) {
  std::string key;
  for (const auto& [name, value] : group.filters) key += fmt::format("{}-{};", name, value);
  return key;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 computation failed");
  }
  std::string out;
  for (unsigned int i = 0; i < length; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

namespace {

class BundleWriter {
 public:
  explicit BundleWriter(fs::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& relative, const std::string& content) {
    const auto path = dir_ / relative;
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
    out << content;
    if (!out) throw IoError(fmt::format("short write to '{}'", path.string()));
    files.push_back({relative, sha256_hex(content), content.size()});
  }

  void write_json(const std::string& relative, const nlohmann::json& doc) { write(relative, doc.dump(2) + "\n"); }

  std::vector<BundleFile> files;

 private:
  fs::path dir_;
};

nlohmann::json result_or_error(const auto& run) {
  try {
    return to_json(run());
  } catch (const std::exception& e) {
    return {{"error", e.what()}};
  }
}

nlohmann::json distribution_json(const StateDistribution& d) {
  nlohmann::json probs = nlohmann::json::object();
  for (auto s : kTableOrder) probs[std::string(to_string(s))] = d.probs[index(s)];
  return {{"scene", d.scene}, {"probs", probs}};
}

}  // namespace

ReportBundle run_estimate(const Dataset& dataset, const EstimateRequest& request) {
  if (dataset.traces.empty()) throw EstimationError("no valid traces to estimate from");
  if (request.order != 1 && request.order != 2) throw ValidationError("order must be 1 or 2");

  ReportBundle bundle;
  bundle.dir = request.out_dir;
  bundle.groups = group_sequences(dataset, request.group_by);
  BundleWriter writer(request.out_dir);

  nlohmann::json marginals = nlohmann::json::object();
  auto tests = nlohmann::json::array();
  for (const auto& group : bundle.groups) {
    auto chain = estimate_chain(group.sequences, group.label, {request.alpha});
    chain.environment = group.environment;
    writer.write_json(fmt::format("chains/{}.json", group.label), to_json(chain));
    writer.write(fmt::format("tables/{}_initial.csv", group.label), initial_csv(chain));
    for (int step = 1; step <= kNumSteps; ++step) {
      writer.write(fmt::format("tables/{}_step{}-{}.csv", group.label, step, step + 1), transition_csv(chain, step));
    }
    try {
      auto list = nlohmann::json::array();
      for (const auto& d : propagate(chain)) list.push_back(distribution_json(d));
      marginals[group.label] = std::move(list);
    } catch (const EstimationError& e) {
      marginals[group.label] = {{"error", e.what()}};
    }
    tests.push_back({{"label", group.label},
                     {"result", result_or_error([&] { return test_stationarity(chain); })}});
    if (request.order == 2) {
      const auto second = estimate_second_order(group.sequences);
      writer.write_json(fmt::format("second_order/{}.json", group.label), to_json(second));
      tests.push_back({{"label", group.label}, {"result", result_or_error([&] { return test_order(second); })}});
    }
    bundle.chains.push_back(std::move(chain));
  }

  // Highway against suburbs within each subgroup.
  for (std::size_t i = 0; i < bundle.groups.size(); ++i) {
    if (bundle.groups[i].environment != Environment::Highway) continue;
    for (std::size_t j = 0; j < bundle.groups.size(); ++j) {
      if (bundle.groups[j].environment != Environment::Suburbs ||
          filter_key(bundle.groups[i]) != filter_key(bundle.groups[j])) {
        continue;
      }
      const auto& a = bundle.chains[i];
      const auto& b = bundle.chains[j];
      tests.push_back({{"label", fmt::format("{} vs {}", a.label, b.label)},
                       {"result", result_or_error([&] { return compare_groups(a.steps, b.steps); })}});
    }
  }
  // Subgroups against each other within an environment.
  if (request.group_by.size() > 1) {
    for (auto env : kAllEnvironments) {
      std::vector<Subgroup> subgroups;
      for (std::size_t i = 0; i < bundle.groups.size(); ++i) {
        if (bundle.groups[i].environment != env) continue;
        const auto& steps = bundle.chains[i].steps;
        subgroups.push_back({bundle.groups[i].label, {steps.begin(), steps.end()}});
      }
      if (subgroups.size() < 2) continue;
      tests.push_back({{"label", fmt::format("{} subgroups", to_string(env))},
                       {"result", result_or_error([&] { return test_homogeneity(subgroups); })}});
    }
  }

  writer.write_json("marginals.json", marginals);
  writer.write_json("tests.json", tests);

  auto inputs = nlohmann::json::array();
  for (const auto& p : request.inputs) inputs.push_back(p.generic_string());
  auto group_by = nlohmann::json::array();
  for (auto f : request.group_by) {
    group_by.push_back(f == GroupField::Environment ? "environment"
                       : f == GroupField::Sex       ? "sex"
                       : f == GroupField::Info      ? "info"
                                                    : "order");
  }
  writer.write_json("metadata.json", {{"tool", "driverchain"},
                                      {"version", kToolVersion},
                                      {"inputs", inputs},
                                      {"config", request.config_path},
                                      {"seed", request.seed},
                                      {"group_by", group_by},
                                      {"order", request.order},
                                      {"alpha", request.alpha},
                                      {"traces", dataset.traces.size()},
                                      {"rejected", dataset.provenance.rejections.size()}});

  bundle.files = writer.files;
  std::ranges::sort(bundle.files, {}, &BundleFile::path);
  auto manifest = nlohmann::json::array();
  for (const auto& f : bundle.files) manifest.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  BundleWriter(request.out_dir).write_json("manifest.json", {{"files", manifest}});
  return bundle;
}

}  // namespace driverchain
