// driverchain: ingest -> estimate -> test -> simulate -> export, plus the collection server.

#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "driverchain/chain.hpp"
#include "driverchain/errors.hpp"
#include "driverchain/ingestion.hpp"
#include "driverchain/prism.hpp"
#include "driverchain/report.hpp"
#include "driverchain/server.hpp"
#include "driverchain/simulate.hpp"
#include "driverchain/stats.hpp"

#ifndef DRIVERCHAIN_DEFAULT_CONFIG
#define DRIVERCHAIN_DEFAULT_CONFIG "config/scenario.json"
#endif

namespace fs = std::filesystem;
using namespace driverchain;

namespace {

struct GlobalOptions {
  std::string config = DRIVERCHAIN_DEFAULT_CONFIG;
  std::uint64_t seed = 0;
};

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read '{}'", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << content;
}

std::vector<fs::path> to_paths(const std::vector<std::string>& names) { return {names.begin(), names.end()}; }

Dataset load_traces(const std::vector<std::string>& inputs, const ScenarioConfig& config) {
  const auto paths = to_paths(inputs);
  auto dataset = parse_dataset(paths, config);
  for (const auto& r : dataset.provenance.rejections) {
    std::cerr << fmt::format("rejected {}:{}:", r.source, r.line);
    for (const auto& e : r.errors) std::cerr << fmt::format(" {} ({})", e.field, e.reason);
    std::cerr << '\n';
  }
  return dataset;
}

std::vector<ChainModel> load_chains(const fs::path& path) {
  const auto doc = read_json(path);
  std::vector<ChainModel> chains;
  const auto& list = doc.is_object() && doc.contains("chains") ? doc["chains"] : doc;
  if (list.is_array()) {
    for (const auto& c : list) chains.push_back(chain_from_json(c));
  } else {
    chains.push_back(chain_from_json(list));
  }
  return chains;
}

std::string result_row(const std::string& label, const TestResult& r) {
  return fmt::format("{:<40} {:<13} {}={:>10.4f}  df={:<3} p={:.4g}", label, to_string(r.kind),
                     to_string(r.statistic_type), r.statistic, r.df, r.p_value);
}

// ---------------------------------------------------------------------------------------------

int cmd_ingest(const GlobalOptions& g, const std::vector<std::string>& inputs, const std::string& report,
               const std::string& out_dir) {
  const auto config = ScenarioConfig::load(g.config);
  const auto dataset = load_traces(inputs, config);
  if (!report.empty()) write_file(report, rejections_to_json(dataset.provenance).dump(2) + "\n");
  if (!out_dir.empty()) {
    std::ostringstream out;
    serialize_dataset(dataset, out);
    write_file(fs::path(out_dir) / "traces.jsonl", out.str());
  }
  std::cout << fmt::format("{} valid traces, {} rejected lines\n", dataset.traces.size(),
                           dataset.provenance.rejections.size());
  return dataset.traces.empty() ? 1 : 0;
}

int cmd_estimate(const GlobalOptions& g, const std::vector<std::string>& inputs, const std::string& group_by,
                 int order, double alpha, const std::string& out_dir) {
  const auto config = ScenarioConfig::load(g.config);
  const auto dataset = load_traces(inputs, config);
  if (dataset.traces.empty()) {
    std::cerr << "estimate: no valid traces in input\n";
    return 1;
  }
  EstimateRequest request;
  request.inputs = to_paths(inputs);
  request.group_by = parse_group_by(group_by);
  request.order = order;
  request.alpha = alpha;
  request.seed = g.seed;
  request.config_path = g.config;
  request.out_dir = out_dir;
  const auto bundle = run_estimate(dataset, request);
  for (const auto& chain : bundle.chains) {
    std::cout << fmt::format("{} (n={})\n{}", chain.label, chain.n(), initial_csv(chain));
    for (int step = 1; step <= kNumSteps; ++step) std::cout << transition_csv(chain, step);
    std::cout << '\n';
  }
  std::cout << fmt::format("wrote {} files to {}\n", bundle.files.size() + 1, out_dir);
  return 0;
}

int cmd_test(const GlobalOptions& g, const std::string& kind, const std::vector<std::string>& inputs,
             const std::string& group_by, const std::string& env_filter, const std::string& statistic,
             const std::string& out_path) {
  const Statistic stat = statistic == "x2" ? Statistic::Pearson : Statistic::LikelihoodRatio;
  std::vector<std::pair<std::string, TestResult>> results;
  auto record = [&](std::string label, auto&& run) {
    try {
      results.emplace_back(std::move(label), run());
    } catch (const InapplicableError& e) {
      std::cerr << fmt::format("{}: not applicable ({})\n", label, e.what());
    }
  };

  const bool chain_input = inputs.size() == 1 && fs::path(inputs[0]).extension() == ".json";
  if (chain_input) {
    const auto chains = load_chains(inputs[0]);
    if (kind == "compare") {
      if (chains.size() != 2) throw ValidationError("compare needs exactly two chains");
      record(chains[0].label + " vs " + chains[1].label,
             [&] { return compare_groups(chains[0].steps, chains[1].steps); });
    } else if (kind == "homogeneity") {
      std::vector<Subgroup> subgroups;
      for (const auto& c : chains) subgroups.push_back({c.label, {c.steps.begin(), c.steps.end()}});
      record("homogeneity", [&] { return test_homogeneity(subgroups); });
    } else if (kind == "stationarity") {
      for (const auto& c : chains) record(c.label, [&] { return test_stationarity(c, stat); });
    } else {
      throw ValidationError("the order test needs trace input (scene triples are not in chain documents)");
    }
  } else {
    const auto config = ScenarioConfig::load(g.config);
    const auto dataset = load_traces(inputs, config);
    auto groups = group_sequences(dataset, parse_group_by(group_by));
    if (env_filter != "all") {
      const auto env = parse_environment(env_filter);
      if (!env) throw ValidationError(fmt::format("unknown environment '{}'", env_filter));
      std::erase_if(groups, [&](const SequenceGroup& grp) { return grp.environment != *env; });
    }
    std::vector<ChainModel> chains;
    for (const auto& grp : groups) chains.push_back(estimate_chain(grp.sequences, grp.label));

    if (kind == "compare") {
      const bool by_environment = parse_group_by(group_by).size() == 1;
      for (std::size_t i = 0; i < groups.size(); ++i) {
        for (std::size_t j = i + 1; j < groups.size(); ++j) {
          const bool pair = by_environment ? filter_key(groups[i]) == filter_key(groups[j])
                                           : groups[i].environment == groups[j].environment;
          if (!pair) continue;
          record(groups[i].label + " vs " + groups[j].label,
                 [&] { return compare_groups(chains[i].steps, chains[j].steps); });
        }
      }
    } else if (kind == "homogeneity") {
      for (auto env : kAllEnvironments) {
        std::vector<Subgroup> subgroups;
        for (std::size_t i = 0; i < groups.size(); ++i) {
          if (groups[i].environment == env) {
            subgroups.push_back({groups[i].label, {chains[i].steps.begin(), chains[i].steps.end()}});
          }
        }
        if (subgroups.size() >= 2) record(std::string(to_string(env)), [&] { return test_homogeneity(subgroups); });
      }
    } else if (kind == "stationarity") {
      for (const auto& c : chains) record(c.label, [&] { return test_stationarity(c, stat); });
    } else {
      for (const auto& grp : groups) record(grp.label, [&] { return test_order(grp.sequences); });
    }
  }

  auto doc = nlohmann::json::array();
  for (const auto& [label, r] : results) {
    std::cerr << result_row(label, r) << '\n';
    auto j = to_json(r);
    j["label"] = label;
    doc.push_back(std::move(j));
  }
  std::cout << doc.dump(2) << '\n';
  if (!out_path.empty()) write_file(out_path, doc.dump(2) + "\n");
  return results.empty() ? 1 : 0;
}

int cmd_simulate(const GlobalOptions& g, const std::string& chain_path, std::size_t n, const std::string& out) {
  const auto chain = load_chains(chain_path).at(0);
  const auto trajectories = sample(chain, n, g.seed);
  write_file(out, trajectories_csv(trajectories));
  const auto exact = propagate(chain);
  const auto empirical = empirical_marginals(trajectories);
  for (std::size_t k = 0; k < 3; ++k) {
    std::cout << fmt::format("scene {}: TV(empirical, exact) = {:.5f}\n", k + 1,
                             n ? total_variation(empirical[k], exact[k]) : 0.0);
  }
  std::cout << fmt::format("wrote {} trajectories to {} (mt19937_64, seed {})\n", n, out, g.seed);
  return 0;
}

int cmd_export(const std::string& chain_path, const std::string& label_override, const std::string& out_dir) {
  int status = 0;
  for (const auto& chain : load_chains(chain_path)) {
    const auto label = sanitize_label(label_override.empty() ? chain.label : label_override);
    const auto model = export_dtmc(chain);
    write_file(fs::path(out_dir) / (label + ".pm"), model);
    write_file(fs::path(out_dir) / (label + ".pctl"), export_properties(chain));
    const auto report = self_check(model, chain);
    for (const auto& p : report.properties) {
      std::cout << fmt::format("{:<28} {:.6f}\n", p.property, p.expected);
    }
    if (!report.passed()) {
      status = 1;
      if (report.parse_error) std::cerr << "self-check parse error: " << *report.parse_error << '\n';
      for (const auto& m : report.mismatches) std::cerr << "self-check: " << m << '\n';
    } else {
      std::cout << fmt::format("{}: self-check passed, wrote {}.pm and {}.pctl\n", chain.label, label, label);
    }
  }
  return status;
}

std::string counts_string(const std::vector<Count>& counts) {
  std::string out;
  for (std::size_t i = 0; i < counts.size(); ++i) out += fmt::format("{}{}", i ? ", " : "", counts[i]);
  return out;
}

int cmd_recover(const GlobalOptions& g, const std::string& tables_path, const std::vector<double>& row, Count total,
                const std::string& out_dir, const std::string& synthesize_path) {
  if (!row.empty()) {
    try {
      const auto counts = recover_counts(row, total);
      std::cout << fmt::format("({})\n", counts_string(counts));
      return 0;
    } catch (const AmbiguityError& e) {
      std::cerr << e.what() << '\n';
      for (const auto& c : e.candidates()) std::cerr << fmt::format("  candidate ({})\n", counts_string(c));
      return 2;
    }
  }
  if (tables_path.empty()) throw ValidationError("recover-counts needs --tables or --row/--total");
  const auto doc = read_json(tables_path);
  std::vector<ChainModel> chains;
  for (const auto& t : doc.is_array() ? doc : nlohmann::json::array({doc})) {
    std::vector<std::string> notes;
    auto chain = recover_chain(PercentTables::from_json(t), &notes);
    for (const auto& note : notes) std::cerr << "note: " << note << '\n';
    std::cout << fmt::format("{} (n={})\n  scene 1: T={} A={} N={}\n", chain.label, chain.n(),
                             chain.initial_counts[0], chain.initial_counts[1], chain.initial_counts[2]);
    for (int step = 1; step <= kNumSteps; ++step) {
      for (auto from : kTableOrder) {
        const auto& c = chain.counts(step).counts[index(from)];
        std::cout << fmt::format("  {} {:<8} -> A={} N={} T={}\n", step_name(step), display_name(from),
                                 c[index(DriverState::Alert)], c[index(DriverState::Normal)],
                                 c[index(DriverState::Takeover)]);
      }
    }
    if (!out_dir.empty()) write_file(fs::path(out_dir) / (sanitize_label(chain.label) + ".json"), to_json(chain).dump(2) + "\n");
    chains.push_back(std::move(chain));
  }
  if (!synthesize_path.empty()) {
    auto find = [&](Environment env) -> const ChainModel& {
      for (const auto& c : chains) {
        if (c.environment == env) return c;
      }
      throw ValidationError(fmt::format("no {} table to synthesize from", to_string(env)));
    };
    const auto config = ScenarioConfig::load(g.config);
    const auto synth = synthesize_dataset(find(Environment::Highway), find(Environment::Suburbs), config, g.seed);
    std::ostringstream out;
    serialize_dataset(synth.dataset, out);
    write_file(synthesize_path, out.str());
    std::cout << fmt::format("synthesized {} traces ({} female, {} male) to {}\n", synth.dataset.traces.size(),
                             synth.groups.female, synth.groups.male, synthesize_path);
  }
  return 0;
}

CollectionServer* g_server = nullptr;

int cmd_serve(const GlobalOptions& g, const std::string& sessions, const std::string& static_dir,
              const std::string& host, int port) {
  auto config = ScenarioConfig::load(g.config);
  std::optional<fs::path> bundle;
  if (!static_dir.empty()) bundle = static_dir;
  CollectionServer server(std::move(config), sessions, bundle);
  const int bound = server.bind(host, port);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cout << fmt::format("serving on http://{}:{} (sessions in {})\n", host, bound, server.log().path().string())
            << std::flush;
  server.listen();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Driver behaviour Markov-chain toolkit"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "Scenario config JSON")->capture_default_str();
  app.add_option("--seed", g.seed, "Seed for synthesis and sampling")->capture_default_str();

  std::vector<std::string> inputs;
  std::string out;
  std::string report;
  std::string group_by = "environment";

  auto* ingest = app.add_subcommand("ingest", "Validate trace files and report rejected lines");
  ingest->add_option("--input", inputs, "Trace files (JSONL)")->required();
  ingest->add_option("--report", report, "Write rejection records as JSON");
  ingest->add_option("--out", out, "Directory for normalized traces.jsonl");

  int order = 1;
  double alpha = 0.0;
  auto* estimate = app.add_subcommand("estimate", "Estimate chains and write a report bundle");
  estimate->add_option("--input", inputs, "Trace files (JSONL)")->required();
  estimate->add_option("--group-by", group_by, "environment[,sex][,info][,order]")->capture_default_str();
  estimate->add_option("--order", order, "1, or 2 to add second-order models")->check(CLI::IsMember({1, 2}));
  estimate->add_option("--alpha", alpha, "Additive smoothing for derived probabilities")->check(CLI::NonNegativeNumber);
  estimate->add_option("--out", out, "Bundle directory")->required();

  std::string kind;
  std::string env_filter = "all";
  std::string statistic = "g2";
  auto* test = app.add_subcommand("test", "Run a chi-square test family");
  test->add_option("--kind", kind, "Test family")->required()->check(
      CLI::IsMember({"compare", "stationarity", "homogeneity", "order"}));
  test->add_option("--input", inputs, "traces.jsonl file(s) or one chains .json")->required();
  test->add_option("--group-by", group_by, "Grouping field(s)")->capture_default_str();
  test->add_option("--env", env_filter, "highway, suburbs or all")->capture_default_str();
  test->add_option("--statistic", statistic, "Stationarity statistic: g2 or x2")->check(CLI::IsMember({"g2", "x2"}));
  test->add_option("--out", out, "Also write the JSON results here");

  std::string chain_path;
  std::size_t n = 0;
  auto* simulate = app.add_subcommand("simulate", "Sample trajectories from a chain");
  simulate->add_option("--chain", chain_path, "Chain JSON")->required();
  simulate->add_option("--n", n, "Number of trajectories")->required();
  simulate->add_option("--out", out, "CSV output")->required();

  std::string label;
  auto* export_prism = app.add_subcommand("export-prism", "Write DTMC model and PCTL properties");
  export_prism->add_option("--chain", chain_path, "Chain JSON")->required();
  export_prism->add_option("--label", label, "File stem (defaults to the chain label)");
  export_prism->add_option("--out", out, "Output directory")->required();

  std::string tables_path;
  std::vector<double> row;
  Count total = 0;
  std::string synthesize_path;
  auto* recover = app.add_subcommand("recover-counts", "Recover integer counts from percentage tables");
  recover->add_option("--tables", tables_path, "Percentage tables JSON");
  recover->add_option("--row", row, "One row of percentages")->delimiter(',');
  recover->add_option("--total", total, "Row total for --row");
  recover->add_option("--out", out, "Directory for recovered chain JSON");
  recover->add_option("--synthesize", synthesize_path, "Write a trace dataset implied by the recovered counts");

  std::string sessions = "sessions";
  std::string static_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve the scenario runner and collect sessions");
  serve->add_option("--sessions", sessions, "Session directory")->capture_default_str();
  serve->add_option("--static", static_dir, "Scenario runner bundle directory");
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(g, inputs, report, out);
    if (*estimate) return cmd_estimate(g, inputs, group_by, order, alpha, out);
    if (*test) return cmd_test(g, kind, inputs, group_by, env_filter, statistic, out);
    if (*simulate) return cmd_simulate(g, chain_path, n, out);
    if (*export_prism) return cmd_export(chain_path, label, out);
    if (*recover) return cmd_recover(g, tables_path, row, total, out, synthesize_path);
    if (*serve) return cmd_serve(g, sessions, static_dir, host, port);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
