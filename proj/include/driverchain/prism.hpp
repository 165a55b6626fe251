#pragma once

// Model-checker export of a non-stationary chain as a step-indexed DTMC.
//
// State variables are step in [0..3] and s in [0..2] (0 Takeover, 1 Alert, 2 Normal). Step 0 is
// the Start state (s = 2); step 3 is absorbing. Branch probabilities are printed with six
// decimals; the rounding residual goes to the last non-zero branch (highest s) so each
// command's printed probabilities sum to exactly 1.000000.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "driverchain/chain.hpp"

namespace driverchain {

inline constexpr std::int64_t kMicros = 1'000'000;

struct DtmcBranch {
  std::int64_t micros = 0;  // probability in millionths, as printed
  std::optional<int> next_step;  // nullopt: self-loop ("true")
  int next_s = 0;

  double probability() const noexcept { return static_cast<double>(micros) / kMicros; }
  friend bool operator==(const DtmcBranch&, const DtmcBranch&) = default;
};

struct DtmcCommand {
  int step = 0;
  std::optional<int> s;  // nullopt: guard on step only
  std::vector<DtmcBranch> branches;

  std::string guard() const;
  friend bool operator==(const DtmcCommand&, const DtmcCommand&) = default;
};

struct DtmcModel {
  std::string module_name = "driver";
  std::vector<DtmcCommand> commands;

  const DtmcCommand* find(int step, int s) const noexcept;
};

/// Throws EstimationError if an undefined row is reachable.
DtmcModel build_dtmc(const ChainModel& chain);
std::string render_dtmc(const DtmcModel& model);
std::string export_dtmc(const ChainModel& chain);

/// Mini-parser for exactly the subset render_dtmc() emits. Throws ParseError.
DtmcModel parse_dtmc(std::string_view text);

struct PropertyValue {
  std::string property;
  double value = 0.0;
};

/// PCTL templates, one per line: eventual takeover, F (step=K & s=S) for every scene and
/// state, and G (s!=0).
std::vector<std::string> property_templates();
std::string export_properties(const ChainModel& chain);

/// Values of property_templates() by exact propagation through the chain.
std::vector<PropertyValue> evaluate_properties(const ChainModel& chain);
/// Values of property_templates() on a parsed model. Throws EstimationError on a reachable
/// state without a command.
std::vector<PropertyValue> evaluate_properties(const DtmcModel& model);

inline constexpr double kPrintTolerance = 5e-7;

/// How far a property of the printed model may sit from the exact value. Each rounded row
/// moves an event probability by at most (branches - 1) * kPrintTolerance, and the error
/// adds up over the scenes the property looks at.
double property_tolerance(std::string_view property);

struct PropertyCheck {
  std::string property;
  double expected = 0.0;  // from the chain
  double actual = 0.0;    // from the parsed text
  double tolerance = 0.0;
};

struct SelfCheckReport {
  std::optional<std::string> parse_error;
  std::vector<std::string> mismatches;  // each names the offending guard or property
  std::vector<PropertyCheck> properties;

  bool passed() const noexcept { return !parse_error && mismatches.empty(); }
};

SelfCheckReport self_check(std::string_view dtmc_text, const ChainModel& chain);

/// File-system safe version of a chain label ("highway/female" -> "highway_female").
std::string sanitize_label(std::string_view label);

}  // namespace driverchain
