#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "driverchain/core_types.hpp"

namespace driverchain {

/// One schema problem, addressed by a JSON-path-like field name ("scenarios[0].scenes[2].confidence").
struct FieldError {
  std::string field;
  std::string reason;

  friend bool operator==(const FieldError&, const FieldError&) = default;
};

struct Rejection {
  std::string source;
  std::size_t line = 0;  // 1-based
  std::vector<FieldError> errors;
};

struct Provenance {
  std::vector<std::string> sources;
  std::vector<Rejection> rejections;
};

struct Dataset {
  std::vector<InteractionTrace> traces;
  Provenance provenance;
};

/// Start state plus scenes 1..3.
struct StateSequence {
  std::string participant_id;
  Environment environment = Environment::Highway;
  std::array<DriverState, 4> states{DriverState::Normal, DriverState::Normal, DriverState::Normal,
                                    DriverState::Normal};

  DriverState scene(int k) const { return states.at(static_cast<std::size_t>(k)); }

  friend bool operator==(const StateSequence&, const StateSequence&) = default;
};

inline constexpr DriverState kStartState = DriverState::Normal;

struct DecodeResult {
  std::optional<InteractionTrace> trace;
  std::vector<FieldError> errors;

  bool ok() const noexcept { return trace.has_value(); }
};

/// Decodes and validates one trace object. `loa` and `trust_score` are derived from the
/// selected choices and trust items; when the input carries them they must agree.
DecodeResult decode_trace(const nlohmann::json& doc, const ScenarioConfig& config);

/// Reads line-delimited traces. Bad lines (malformed JSON, schema violations, duplicate ids)
/// are recorded in provenance.rejections and skipped; blank lines are ignored.
Dataset parse_dataset(std::istream& in, const ScenarioConfig& config, std::string source_name = "<stream>");
/// Throws IoError if any file cannot be opened.
Dataset parse_dataset(std::span<const std::filesystem::path> paths, const ScenarioConfig& config);

void serialize_dataset(const Dataset& dataset, std::ostream& out);
nlohmann::json rejections_to_json(const Provenance& provenance);

/// Throws ValidationError naming the participant if a trace lacks the environment or a scene.
std::vector<StateSequence> to_state_sequences(const Dataset& dataset, Environment env);

using TracePredicate = std::function<bool(const ParticipantProfile&, const Condition&)>;

/// Order-preserving subset. Provenance is carried over unchanged.
Dataset slice(const Dataset& dataset, const TracePredicate& predicate);

TracePredicate by_sex(Sex sex);
TracePredicate by_info_level(InfoLevel level);
TracePredicate by_scenario_order(ScenarioOrder order);
TracePredicate both(TracePredicate a, TracePredicate b);

}  // namespace driverchain
