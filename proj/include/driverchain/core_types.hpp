#pragma once

// Domain vocabulary shared by ingestion, estimation and the collection server.

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace driverchain {

/// Exact rational with a positive, reduced denominator.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1);

  std::int64_t num() const noexcept { return num_; }
  std::int64_t den() const noexcept { return den_; }
  double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

  /// "p/q", or "p" when the denominator is 1.
  std::string to_string() const;
  static Rational parse(std::string_view text);

  friend bool operator==(const Rational&, const Rational&) = default;
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) noexcept;

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

/// Level of autonomy granted to the vehicle, the mean of the selected choices' SAE levels (0..3).
using Loa = Rational;

inline constexpr int kMinLoaLevel = 0;
inline constexpr int kMaxLoaLevel = 3;

/// Behavioural state. Codes double as array indices everywhere in the library.
enum class DriverState : std::uint8_t { Takeover = 0, Alert = 1, Normal = 2 };

inline constexpr std::size_t kNumStates = 3;
inline constexpr std::array<DriverState, kNumStates> kAllStates{DriverState::Takeover, DriverState::Alert,
                                                                DriverState::Normal};

constexpr std::size_t index(DriverState s) noexcept { return static_cast<std::size_t>(s); }
constexpr DriverState state_from_index(std::size_t i) noexcept { return static_cast<DriverState>(i); }

std::string_view to_string(DriverState s) noexcept;
/// Title-case name as printed in tables ("Alert").
std::string_view display_name(DriverState s) noexcept;
char letter(DriverState s) noexcept;
DriverState parse_driver_state(std::string_view text);

enum class Sex : std::uint8_t { Female, Male };
enum class InfoLevel : std::uint8_t { High, Low };
enum class ScenarioOrder : std::uint8_t { HighwayFirst, SuburbsFirst };
enum class Environment : std::uint8_t { Highway, Suburbs };

inline constexpr std::array<Environment, 2> kAllEnvironments{Environment::Highway, Environment::Suburbs};

std::string_view to_string(Sex v) noexcept;
std::string_view to_string(InfoLevel v) noexcept;
std::string_view to_string(ScenarioOrder v) noexcept;
std::string_view to_string(Environment v) noexcept;

std::optional<Sex> parse_sex(std::string_view text) noexcept;
std::optional<InfoLevel> parse_info_level(std::string_view text) noexcept;
std::optional<ScenarioOrder> parse_scenario_order(std::string_view text) noexcept;
std::optional<Environment> parse_environment(std::string_view text) noexcept;

struct ParticipantProfile {
  std::string id;
  int age = 0;
  Sex sex = Sex::Female;
  std::optional<std::string> gender;
  bool has_license = true;

  friend bool operator==(const ParticipantProfile&, const ParticipantProfile&) = default;
};

inline constexpr int kMinParticipantAge = 18;

struct Condition {
  InfoLevel info_level = InfoLevel::High;
  ScenarioOrder scenario_order = ScenarioOrder::HighwayFirst;

  friend bool operator==(const Condition&, const Condition&) = default;
};

struct TrustItem {
  std::string item_label;
  int polarity = 1;  // +1 or -1

  friend bool operator==(const TrustItem&, const TrustItem&) = default;
};

struct SceneResponse {
  int scene_index = 1;
  std::vector<std::string> selected_choice_ids;
  Loa loa;
  int confidence = 3;  // 1..5
  int comfort = 0;     // -1, 0, 1
  std::vector<TrustItem> trust_items;
  int trust_score = 0;  // sum of polarities, unclamped
  std::optional<std::string> free_text;

  friend bool operator==(const SceneResponse&, const SceneResponse&) = default;
};

inline constexpr int kScenesPerScenario = 3;

struct ScenarioResponse {
  Environment environment = Environment::Highway;
  std::vector<SceneResponse> scenes;

  friend bool operator==(const ScenarioResponse&, const ScenarioResponse&) = default;
};

struct InteractionTrace {
  ParticipantProfile profile;
  Condition condition;
  std::vector<ScenarioResponse> scenarios;
  /// Raw questionnaire answers, carried through untouched.
  std::optional<nlohmann::json> questionnaires;

  /// nullptr when the environment is missing.
  const ScenarioResponse* find_scenario(Environment env) const noexcept;

  friend bool operator==(const InteractionTrace&, const InteractionTrace&) = default;
};

struct Choice {
  std::string id;
  std::string text;
  int loa_level = 0;
};

struct SceneConfig {
  int scene_index = 1;
  std::string narration;
  std::string image;
  std::vector<Choice> choices;
  nlohmann::json interface_high = nlohmann::json::object();
  nlohmann::json interface_low = nlohmann::json::object();

  const Choice* find_choice(std::string_view id) const noexcept;
};

struct ScenarioScript {
  Environment environment = Environment::Highway;
  std::vector<SceneConfig> scenes;
};

/// Scene scripts shared by the UI and ingestion. Parsed from config/scenario.json.
class ScenarioConfig {
 public:
  /// Validates: both environments present, scenes 1..3, >= 2 choices per scene,
  /// unique choice ids per scene, every loa_level in 0..3.
  static ScenarioConfig from_json(const nlohmann::json& doc);
  static ScenarioConfig load(const std::filesystem::path& path);

  const SceneConfig& scene(Environment env, int scene_index) const;
  const ScenarioScript& script(Environment env) const;
  const ScenarioScript* find_script(Environment env) const noexcept;
  /// The document it was parsed from, served verbatim to the UI.
  const nlohmann::json& document() const noexcept { return document_; }

 private:
  std::vector<ScenarioScript> scripts_;
  nlohmann::json document_;
};

/// Takeover if loa <= 1/2, Normal if loa >= 2, Alert otherwise. Throws DomainError outside [0,3].
DriverState map_state(const Loa& loa);

/// Exact mean of the selected choices' levels. Throws ValidationError on an empty selection
/// or an id the scene does not define.
Loa loa_from_choices(std::span<const std::string> selected, const SceneConfig& scene);

/// Serialization to the line-delimited trace schema. Decoding with validation lives in ingestion.
nlohmann::json to_json(const InteractionTrace& trace);
nlohmann::json to_json(const SceneResponse& scene);

}  // namespace driverchain
