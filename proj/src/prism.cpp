#include "driverchain/prism.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

#include <fmt/format.h>

#include "driverchain/errors.hpp"
#include "driverchain/simulate.hpp"

namespace driverchain {

namespace {

constexpr int kFinalStep = 3;
constexpr int kStartS = static_cast<int>(index(kStartState));

// Half-up rounding of count/total to millionths, exact in integers.
std::int64_t exact_micros(Count count, Count total) { return (2 * kMicros * count + total) / (2 * total); }

std::vector<DtmcBranch> branches_for(const StateCounts& counts, const StateProbs& probs, double alpha,
                                     int next_step, const std::string& guard) {
  const Count total = counts[0] + counts[1] + counts[2];
  std::vector<DtmcBranch> out;
  std::int64_t sum = 0;
  for (std::size_t t = 0; t < kNumStates; ++t) {
    if (probs[t] <= 0.0) continue;
    const auto micros = alpha == 0.0 ? exact_micros(counts[t], total) : std::llround(probs[t] * kMicros);
    out.push_back({micros, next_step, static_cast<int>(t)});
    sum += micros;
  }
  out.back().micros += kMicros - sum;
  if (out.back().micros < 0) throw EstimationError(fmt::format("negative residual branch for guard {}", guard));
  return out;
}

std::string format_micros(std::int64_t micros) { return fmt::format("{}.{:06d}", micros / kMicros, micros % kMicros); }

}  // namespace

std::string DtmcCommand::guard() const {
  if (!s) return fmt::format("step={}", step);
  return fmt::format("step={} & s={}", step, *s);
}

const DtmcCommand* DtmcModel::find(int step, int s) const noexcept {
  for (const auto& c : commands) {
    if (c.step == step && (!c.s || *c.s == s)) return &c;
  }
  return nullptr;
}

DtmcModel build_dtmc(const ChainModel& chain) {
  const auto marginals = propagate(chain);
  DtmcModel model;

  DtmcCommand start{0, kStartS, {}};
  start.branches = branches_for(chain.initial_counts, marginals[0].probs, chain.alpha, 1, start.guard());
  model.commands.push_back(std::move(start));

  for (int step = 1; step <= kNumSteps; ++step) {
    const auto m = chain.transition(step);
    const auto& reach = marginals[static_cast<std::size_t>(step - 1)].probs;
    for (auto s : kAllStates) {
      if (reach[index(s)] <= 0.0) continue;
      DtmcCommand cmd{step, static_cast<int>(index(s)), {}};
      cmd.branches = branches_for(chain.counts(step).counts[index(s)], m.probs[index(s)], chain.alpha, step + 1,
                                  cmd.guard());
      model.commands.push_back(std::move(cmd));
    }
  }
  model.commands.push_back({kFinalStep, std::nullopt, {DtmcBranch{kMicros, std::nullopt, 0}}});
  return model;
}

std::string render_dtmc(const DtmcModel& model) {
  std::string out = "dtmc\n\n";
  out += fmt::format("module {}\n", model.module_name);
  out += fmt::format("  step : [0..{}] init 0;\n", kFinalStep);
  out += fmt::format("  s : [0..{}] init {};\n", kNumStates - 1, kStartS);
  for (const auto& cmd : model.commands) {
    out += fmt::format("  [] {} -> ", cmd.guard());
    for (std::size_t i = 0; i < cmd.branches.size(); ++i) {
      const auto& b = cmd.branches[i];
      if (i) out += " + ";
      out += format_micros(b.micros) + " : ";
      out += b.next_step ? fmt::format("(step'={})&(s'={})", *b.next_step, b.next_s) : "true";
    }
    out += ";\n";
  }
  out += "endmodule\n";
  return out;
}

std::string export_dtmc(const ChainModel& chain) { return render_dtmc(build_dtmc(chain)); }

namespace {

std::int64_t parse_decimal_micros(const std::string& text, std::size_t line_no) {
  const auto dot = text.find('.');
  const std::string whole = text.substr(0, dot);
  std::string frac = dot == std::string::npos ? "" : text.substr(dot + 1);
  if (frac.size() > 6) throw ParseError(fmt::format("line {}: probability '{}' has more than six decimals", line_no, text));
  frac.resize(6, '0');
  return std::stoll(whole) * kMicros + std::stoll(frac);
}

}  // namespace

DtmcModel parse_dtmc(std::string_view text) {
  static const std::regex kModule(R"(^module\s+(\w+)$)");
  static const std::regex kVar(R"(^(\w+)\s*:\s*\[(\d+)\.\.(\d+)\]\s+init\s+(\d+);$)");
  static const std::regex kCommand(R"(^\[\]\s*step=(\d+)(\s*&\s*s=(\d+))?\s*->\s*(.+);$)");
  static const std::regex kBranch(R"(^(\d+(\.\d+)?)\s*:\s*(\(step'=(\d+)\)&\(s'=(\d+)\)|true)$)");

  DtmcModel model;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  enum class Stage { Header, Module, Body, Done } stage = Stage::Header;
  int vars = 0;

  while (std::getline(in, raw)) {
    ++line_no;
    const auto first = raw.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const std::string line = raw.substr(first, raw.find_last_not_of(" \t\r") - first + 1);
    std::smatch m;
    switch (stage) {
      case Stage::Header:
        if (line != "dtmc") throw ParseError(fmt::format("line {}: expected 'dtmc'", line_no));
        stage = Stage::Module;
        break;
      case Stage::Module:
        if (!std::regex_match(line, m, kModule)) throw ParseError(fmt::format("line {}: expected 'module'", line_no));
        model.module_name = m[1];
        stage = Stage::Body;
        break;
      case Stage::Body: {
        if (line == "endmodule") {
          stage = Stage::Done;
          break;
        }
        if (std::regex_match(line, m, kVar)) {
          ++vars;
          break;
        }
        if (!std::regex_match(line, m, kCommand)) {
          throw ParseError(fmt::format("line {}: unrecognised statement '{}'", line_no, line));
        }
        DtmcCommand cmd;
        cmd.step = std::stoi(m[1]);
        if (m[3].matched) cmd.s = std::stoi(m[3]);
        std::string updates = m[4];
        std::size_t pos = 0;
        while (pos <= updates.size()) {
          auto plus = updates.find(" + ", pos);
          auto part = updates.substr(pos, plus == std::string::npos ? std::string::npos : plus - pos);
          part.erase(0, part.find_first_not_of(' '));
          part.erase(part.find_last_not_of(' ') + 1);
          std::smatch b;
          if (!std::regex_match(part, b, kBranch)) {
            throw ParseError(fmt::format("line {}: malformed branch '{}'", line_no, part));
          }
          DtmcBranch branch;
          branch.micros = parse_decimal_micros(b[1], line_no);
          if (b[4].matched) {
            branch.next_step = std::stoi(b[4]);
            branch.next_s = std::stoi(b[5]);
          }
          cmd.branches.push_back(branch);
          if (plus == std::string::npos) break;
          pos = plus + 3;
        }
        model.commands.push_back(std::move(cmd));
        break;
      }
      case Stage::Done:
        throw ParseError(fmt::format("line {}: content after endmodule", line_no));
    }
  }
  if (stage != Stage::Done) throw ParseError(stage == Stage::Header ? "empty model text" : "missing 'endmodule'");
  if (vars != 2) throw ParseError(fmt::format("expected 2 variable declarations, found {}", vars));
  return model;
}

std::vector<std::string> property_templates() {
  std::vector<std::string> out{fmt::format("P=? [ F (step={} & s={}) ]", kFinalStep, index(DriverState::Takeover))};
  for (int scene = 1; scene <= kFinalStep; ++scene) {
    for (std::size_t s = 0; s < kNumStates; ++s) out.push_back(fmt::format("P=? [ F (step={} & s={}) ]", scene, s));
  }
  out.push_back(fmt::format("P=? [ G (s!={}) ]", index(DriverState::Takeover)));
  return out;
}

std::string export_properties(const ChainModel&) {
  std::string out;
  for (const auto& p : property_templates()) out += p + '\n';
  return out;
}

namespace {

// Scene marginals plus probability of never taking over, assembled in template order.
std::vector<PropertyValue> assemble(const std::array<StateProbs, 3>& scenes, double never_takeover) {
  const auto templates = property_templates();
  std::vector<PropertyValue> out;
  out.push_back({templates[0], scenes[2][index(DriverState::Takeover)]});
  std::size_t t = 1;
  for (const auto& scene : scenes) {
    for (double p : scene) out.push_back({templates[t++], p});
  }
  out.push_back({templates[t], never_takeover});
  return out;
}

}  // namespace

std::vector<PropertyValue> evaluate_properties(const ChainModel& chain) {
  const auto marginals = propagate(chain);
  // Mass that has not visited Takeover, pushed through the same matrices.
  StateProbs alive = marginals[0].probs;
  alive[index(DriverState::Takeover)] = 0.0;
  for (int step = 1; step <= kNumSteps; ++step) {
    const auto m = chain.transition(step);
    StateProbs next{};
    for (std::size_t a = 0; a < kNumStates; ++a) {
      if (alive[a] == 0.0) continue;
      for (std::size_t b = 0; b < kNumStates; ++b) next[b] += alive[a] * m.probs[a][b];
    }
    next[index(DriverState::Takeover)] = 0.0;
    alive = next;
  }
  return assemble({marginals[0].probs, marginals[1].probs, marginals[2].probs}, alive[0] + alive[1] + alive[2]);
}

std::vector<PropertyValue> evaluate_properties(const DtmcModel& model) {
  std::array<StateProbs, 4> mass{};
  std::array<StateProbs, 4> alive{};
  mass[0][kStartS] = 1.0;
  alive[0][kStartS] = 1.0;
  for (int step = 0; step < kFinalStep; ++step) {
    for (std::size_t s = 0; s < kNumStates; ++s) {
      const double m = mass[static_cast<std::size_t>(step)][s];
      if (m == 0.0) continue;
      const auto* cmd = model.find(step, static_cast<int>(s));
      if (!cmd) throw EstimationError(fmt::format("no command for reachable state step={} & s={}", step, s));
      for (const auto& b : cmd->branches) {
        const int ns = b.next_step ? *b.next_step : step;
        const int nv = b.next_step ? b.next_s : static_cast<int>(s);
        if (ns != step + 1 || nv < 0 || nv >= static_cast<int>(kNumStates)) {
          throw EstimationError(fmt::format("command {} leaves the step-indexed layout", cmd->guard()));
        }
        mass[static_cast<std::size_t>(ns)][static_cast<std::size_t>(nv)] += m * b.probability();
        if (nv != static_cast<int>(index(DriverState::Takeover))) {
          alive[static_cast<std::size_t>(ns)][static_cast<std::size_t>(nv)] +=
              alive[static_cast<std::size_t>(step)][s] * b.probability();
        }
      }
    }
  }
  const auto& last = alive[kFinalStep];
  return assemble({mass[1], mass[2], mass[3]}, last[0] + last[1] + last[2]);
}

double property_tolerance(std::string_view property) {
  int scenes = 3;
  if (const auto at = property.find("step="); at != std::string_view::npos && at + 5 < property.size()) {
    scenes = property[at + 5] - '0';
  }
  return static_cast<double>(scenes) * static_cast<double>(kNumStates - 1) * kPrintTolerance;
}

SelfCheckReport self_check(std::string_view dtmc_text, const ChainModel& chain) {
  SelfCheckReport report;
  DtmcModel parsed;
  try {
    parsed = parse_dtmc(dtmc_text);
  } catch (const ParseError& e) {
    report.parse_error = e.what();
    return report;
  }

  const auto expected = build_dtmc(chain);
  for (const auto& cmd : parsed.commands) {
    std::int64_t sum = 0;
    for (const auto& b : cmd.branches) sum += b.micros;
    if (sum != kMicros) {
      report.mismatches.push_back(fmt::format("[{}] branch probabilities sum to {}", cmd.guard(), format_micros(sum)));
    }
  }
  for (const auto& want : expected.commands) {
    auto it = std::ranges::find_if(parsed.commands, [&](const DtmcCommand& c) { return c.guard() == want.guard(); });
    if (it == parsed.commands.end()) {
      report.mismatches.push_back(fmt::format("[{}] command missing", want.guard()));
      continue;
    }
    if (it->branches.size() != want.branches.size()) {
      report.mismatches.push_back(fmt::format("[{}] has {} branches, expected {}", want.guard(), it->branches.size(),
                                              want.branches.size()));
      continue;
    }
    // Exact probabilities, so the check does not depend on the residual rule.
    const double tolerance = kPrintTolerance * static_cast<double>(std::max<std::size_t>(1, want.branches.size() - 1));
    for (std::size_t i = 0; i < want.branches.size(); ++i) {
      const auto& got = it->branches[i];
      const auto& ref = want.branches[i];
      if (got.next_step != ref.next_step || got.next_s != ref.next_s) {
        report.mismatches.push_back(fmt::format("[{}] branch {} targets a different state", want.guard(), i));
        continue;
      }
      double exact = 1.0;
      if (ref.next_step) {
        exact = want.step == 0 ? chain.initial()[static_cast<std::size_t>(ref.next_s)]
                               : chain.transition(want.step).probs[static_cast<std::size_t>(*want.s)]
                                                                  [static_cast<std::size_t>(ref.next_s)];
      }
      if (std::abs(got.probability() - exact) > tolerance + 1e-12) {
        report.mismatches.push_back(fmt::format("[{}] branch to s'={} is {} but the chain gives {:.9f}", want.guard(),
                                                ref.next_s, format_micros(got.micros), exact));
      }
    }
  }
  for (const auto& cmd : parsed.commands) {
    if (std::ranges::none_of(expected.commands, [&](const DtmcCommand& c) { return c.guard() == cmd.guard(); })) {
      report.mismatches.push_back(fmt::format("[{}] unexpected command", cmd.guard()));
    }
  }

  std::vector<PropertyValue> actual;
  try {
    actual = evaluate_properties(parsed);
  } catch (const EstimationError& e) {
    report.mismatches.push_back(e.what());
    return report;
  }
  const auto reference = evaluate_properties(chain);
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double tolerance = property_tolerance(reference[i].property);
    report.properties.push_back({reference[i].property, reference[i].value, actual[i].value, tolerance});
    if (std::abs(reference[i].value - actual[i].value) > tolerance + 1e-12) {
      report.mismatches.push_back(fmt::format("{}: text gives {:.9f}, chain gives {:.9f}", reference[i].property,
                                              actual[i].value, reference[i].value));
    }
  }
  return report;
}

std::string sanitize_label(std::string_view label) {
  std::string out;
  for (char c : label) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
    out += ok ? c : '_';
  }
  return out.empty() ? "chain" : out;
}

}  // namespace driverchain
