#include "driverchain/core_types.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "driverchain/errors.hpp"

namespace driverchain {

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw DomainError("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  num_ = num / g;
  den_ = den / g;
}

std::string Rational::to_string() const {
  if (den_ == 1) return std::to_string(num_);
  return fmt::format("{}/{}", num_, den_);
}

namespace {

std::int64_t parse_int(std::string_view text, std::string_view whole) {
  std::int64_t value = 0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (!text.empty() && text.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || first == last) {
    throw ValidationError(fmt::format("malformed rational '{}'", whole));
  }
  return value;
}

}  // namespace

Rational Rational::parse(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) return Rational(parse_int(text, text));
  const auto den = parse_int(text.substr(slash + 1), text);
  if (den == 0) throw ValidationError(fmt::format("malformed rational '{}'", text));
  return Rational(parse_int(text.substr(0, slash), text), den);
}

std::strong_ordering operator<=>(const Rational& a, const Rational& b) noexcept {
  // Denominators are positive, so cross-multiplication preserves order. Values here are tiny.
  return a.num_ * b.den_ <=> b.num_ * a.den_;
}

std::string_view to_string(DriverState s) noexcept {
  switch (s) {
    case DriverState::Takeover: return "takeover";
    case DriverState::Alert: return "alert";
    case DriverState::Normal: return "normal";
  }
  return "?";
}

std::string_view display_name(DriverState s) noexcept {
  switch (s) {
    case DriverState::Takeover: return "Takeover";
    case DriverState::Alert: return "Alert";
    case DriverState::Normal: return "Normal";
  }
  return "?";
}

char letter(DriverState s) noexcept { return display_name(s).front(); }

DriverState parse_driver_state(std::string_view text) {
  if (text == "takeover" || text == "T") return DriverState::Takeover;
  if (text == "alert" || text == "A") return DriverState::Alert;
  if (text == "normal" || text == "N") return DriverState::Normal;
  throw ValidationError(fmt::format("unknown driver state '{}'", text));
}

std::string_view to_string(Sex v) noexcept { return v == Sex::Female ? "female" : "male"; }
std::string_view to_string(InfoLevel v) noexcept { return v == InfoLevel::High ? "high" : "low"; }
std::string_view to_string(ScenarioOrder v) noexcept {
  return v == ScenarioOrder::HighwayFirst ? "highway_first" : "suburbs_first";
}
std::string_view to_string(Environment v) noexcept { return v == Environment::Highway ? "highway" : "suburbs"; }

std::optional<Sex> parse_sex(std::string_view text) noexcept {
  if (text == "female") return Sex::Female;
  if (text == "male") return Sex::Male;
  return std::nullopt;
}

std::optional<InfoLevel> parse_info_level(std::string_view text) noexcept {
  if (text == "high") return InfoLevel::High;
  if (text == "low") return InfoLevel::Low;
  return std::nullopt;
}

std::optional<ScenarioOrder> parse_scenario_order(std::string_view text) noexcept {
  if (text == "highway_first") return ScenarioOrder::HighwayFirst;
  if (text == "suburbs_first") return ScenarioOrder::SuburbsFirst;
  return std::nullopt;
}

std::optional<Environment> parse_environment(std::string_view text) noexcept {
  if (text == "highway") return Environment::Highway;
  if (text == "suburbs") return Environment::Suburbs;
  return std::nullopt;
}

const ScenarioResponse* InteractionTrace::find_scenario(Environment env) const noexcept {
  auto it = std::ranges::find(scenarios, env, &ScenarioResponse::environment);
  return it == scenarios.end() ? nullptr : &*it;
}

const Choice* SceneConfig::find_choice(std::string_view id) const noexcept {
  auto it = std::ranges::find(choices, id, &Choice::id);
  return it == choices.end() ? nullptr : &*it;
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& doc) {
  ScenarioConfig config;
  config.document_ = doc;
  if (!doc.is_object() || !doc.contains("scenarios") || !doc["scenarios"].is_array()) {
    throw ValidationError("scenario config: missing 'scenarios' array");
  }
  for (const auto& jscript : doc["scenarios"]) {
    ScenarioScript script;
    const auto env = parse_environment(jscript.value("environment", ""));
    if (!env) throw ValidationError("scenario config: unknown environment");
    script.environment = *env;
    if (config.find_script(*env)) {
      throw ValidationError(fmt::format("scenario config: duplicate environment '{}'", to_string(*env)));
    }
    for (const auto& jscene : jscript.at("scenes")) {
      SceneConfig scene;
      scene.scene_index = jscene.at("scene_index").get<int>();
      scene.narration = jscene.value("narration", "");
      scene.image = jscene.value("image", "");
      if (jscene.contains("interface")) {
        scene.interface_high = jscene["interface"].value("high", nlohmann::json::object());
        scene.interface_low = jscene["interface"].value("low", nlohmann::json::object());
      }
      std::set<std::string> ids;
      for (const auto& jchoice : jscene.at("choices")) {
        Choice choice{jchoice.at("id").get<std::string>(), jchoice.value("text", ""),
                      jchoice.at("loa_level").get<int>()};
        if (choice.loa_level < kMinLoaLevel || choice.loa_level > kMaxLoaLevel) {
          throw ValidationError(fmt::format("scenario config: choice '{}' has loa_level {} outside 0..3",
                                            choice.id, choice.loa_level));
        }
        if (!ids.insert(choice.id).second) {
          throw ValidationError(fmt::format("scenario config: duplicate choice id '{}' in {} scene {}", choice.id,
                                            to_string(*env), scene.scene_index));
        }
        scene.choices.push_back(std::move(choice));
      }
      if (scene.choices.size() < 2) {
        throw ValidationError(fmt::format("scenario config: {} scene {} needs at least two choices",
                                          to_string(*env), scene.scene_index));
      }
      script.scenes.push_back(std::move(scene));
    }
    std::ranges::sort(script.scenes, {}, &SceneConfig::scene_index);
    for (int i = 0; i < kScenesPerScenario; ++i) {
      if (script.scenes.size() != kScenesPerScenario || script.scenes[i].scene_index != i + 1) {
        throw ValidationError(
            fmt::format("scenario config: {} must define scenes 1, 2 and 3 exactly once", to_string(*env)));
      }
    }
    config.scripts_.push_back(std::move(script));
  }
  for (auto env : kAllEnvironments) {
    if (!config.find_script(env)) {
      throw ValidationError(fmt::format("scenario config: environment '{}' missing", to_string(env)));
    }
  }
  return config;
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read scenario config '{}'", path.string()));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("scenario config '{}': {}", path.string(), e.what()));
  }
  return from_json(doc);
}

const ScenarioScript* ScenarioConfig::find_script(Environment env) const noexcept {
  auto it = std::ranges::find(scripts_, env, &ScenarioScript::environment);
  return it == scripts_.end() ? nullptr : &*it;
}

const ScenarioScript& ScenarioConfig::script(Environment env) const {
  const auto* s = find_script(env);
  if (!s) throw ValidationError(fmt::format("no scenario script for '{}'", to_string(env)));
  return *s;
}

const SceneConfig& ScenarioConfig::scene(Environment env, int scene_index) const {
  const auto& s = script(env);
  if (scene_index < 1 || scene_index > kScenesPerScenario) {
    throw ValidationError(fmt::format("scene index {} outside 1..3", scene_index));
  }
  return s.scenes[static_cast<std::size_t>(scene_index - 1)];
}

DriverState map_state(const Loa& loa) {
  if (loa < Rational(kMinLoaLevel) || loa > Rational(kMaxLoaLevel)) {
    throw DomainError(fmt::format("LoA {} outside [0, 3]", loa.to_string()));
  }
  if (loa <= Rational(1, 2)) return DriverState::Takeover;
  if (loa >= Rational(2)) return DriverState::Normal;
  return DriverState::Alert;
}

Loa loa_from_choices(std::span<const std::string> selected, const SceneConfig& scene) {
  if (selected.empty()) throw ValidationError("empty choice selection");
  std::int64_t sum = 0;
  for (const auto& id : selected) {
    const auto* choice = scene.find_choice(id);
    if (!choice) throw ValidationError(fmt::format("unknown choice id '{}' in scene {}", id, scene.scene_index));
    sum += choice->loa_level;
  }
  return Rational(sum, static_cast<std::int64_t>(selected.size()));
}

nlohmann::json to_json(const SceneResponse& scene) {
  nlohmann::json j;
  j["scene_index"] = scene.scene_index;
  j["selected_choice_ids"] = scene.selected_choice_ids;
  j["loa"] = scene.loa.to_string();
  j["confidence"] = scene.confidence;
  j["comfort"] = scene.comfort;
  auto items = nlohmann::json::array();
  for (const auto& item : scene.trust_items) {
    items.push_back({{"item_label", item.item_label}, {"polarity", item.polarity}});
  }
  j["trust_items"] = std::move(items);
  j["trust_score"] = scene.trust_score;
  if (scene.free_text) j["free_text"] = *scene.free_text;
  return j;
}

nlohmann::json to_json(const InteractionTrace& trace) {
  nlohmann::json profile{{"id", trace.profile.id},
                         {"age", trace.profile.age},
                         {"sex", to_string(trace.profile.sex)},
                         {"has_license", trace.profile.has_license}};
  if (trace.profile.gender) profile["gender"] = *trace.profile.gender;

  auto scenarios = nlohmann::json::array();
  for (const auto& scenario : trace.scenarios) {
    auto scenes = nlohmann::json::array();
    for (const auto& scene : scenario.scenes) scenes.push_back(to_json(scene));
    scenarios.push_back({{"environment", to_string(scenario.environment)}, {"scenes", std::move(scenes)}});
  }

  nlohmann::json j{{"profile", std::move(profile)},
                   {"condition",
                    {{"info_level", to_string(trace.condition.info_level)},
                     {"scenario_order", to_string(trace.condition.scenario_order)}}},
                   {"scenarios", std::move(scenarios)}};
  if (trace.questionnaires) j["questionnaires"] = *trace.questionnaires;
  return j;
}

}  // namespace driverchain
