#include "driverchain/ingestion.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_set>

#include <fmt/format.h>

#include "driverchain/errors.hpp"

namespace driverchain {

namespace {

using nlohmann::json;

// Accumulates field errors while walking a document, so one bad line reports everything wrong with it.
class Decoder {
 public:
  explicit Decoder(const ScenarioConfig& config) : config_(config) {}

  std::vector<FieldError> errors;

  void fail(std::string field, std::string reason) { errors.push_back({std::move(field), std::move(reason)}); }

  const json* member(const json& obj, const std::string& path, const char* key, json::value_t type,
                     bool required = true) {
    const std::string field = path.empty() ? key : path + "." + key;
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
      if (required) fail(field, "missing");
      return nullptr;
    }
    const bool number_ok = type == json::value_t::number_integer && it->is_number_integer();
    if (it->type() != type && !number_ok) {
      fail(field, fmt::format("expected {}", type_name(type)));
      return nullptr;
    }
    return &*it;
  }

  std::optional<int> integer(const json& obj, const std::string& path, const char* key) {
    const auto* v = member(obj, path, key, json::value_t::number_integer);
    if (!v) return std::nullopt;
    return v->get<int>();
  }

  std::optional<std::string> string(const json& obj, const std::string& path, const char* key,
                                    bool required = true) {
    const auto* v = member(obj, path, key, json::value_t::string, required);
    if (!v) return std::nullopt;
    return v->get<std::string>();
  }

  std::optional<ParticipantProfile> profile(const json& doc) {
    const auto* p = member(doc, "", "profile", json::value_t::object);
    if (!p) return std::nullopt;
    const auto before = errors.size();
    ParticipantProfile out;
    if (auto id = string(*p, "profile", "id")) {
      if (id->empty()) fail("profile.id", "must be non-empty");
      out.id = *id;
    }
    if (auto age = integer(*p, "profile", "age")) {
      if (*age < kMinParticipantAge) fail("profile.age", fmt::format("must be >= {}", kMinParticipantAge));
      out.age = *age;
    }
    if (auto sex = string(*p, "profile", "sex")) {
      if (auto parsed = parse_sex(*sex)) {
        out.sex = *parsed;
      } else {
        fail("profile.sex", fmt::format("unknown value '{}'", *sex));
      }
    }
    out.gender = string(*p, "profile", "gender", false);
    if (const auto* lic = member(*p, "profile", "has_license", json::value_t::boolean)) {
      out.has_license = lic->get<bool>();
    }
    if (errors.size() != before) return std::nullopt;
    return out;
  }

  std::optional<Condition> condition(const json& doc) {
    const auto* c = member(doc, "", "condition", json::value_t::object);
    if (!c) return std::nullopt;
    const auto before = errors.size();
    Condition out;
    if (auto info = string(*c, "condition", "info_level")) {
      if (auto parsed = parse_info_level(*info)) {
        out.info_level = *parsed;
      } else {
        fail("condition.info_level", fmt::format("unknown value '{}'", *info));
      }
    }
    if (auto order = string(*c, "condition", "scenario_order")) {
      if (auto parsed = parse_scenario_order(*order)) {
        out.scenario_order = *parsed;
      } else {
        fail("condition.scenario_order", fmt::format("unknown value '{}'", *order));
      }
    }
    if (errors.size() != before) return std::nullopt;
    return out;
  }

  std::optional<SceneResponse> scene(const json& s, const std::string& path, Environment env) {
    if (!s.is_object()) {
      fail(path, "expected object");
      return std::nullopt;
    }
    const auto before = errors.size();
    SceneResponse out;
    const auto index = integer(s, path, "scene_index");
    if (index) {
      if (*index < 1 || *index > kScenesPerScenario) fail(path + ".scene_index", "must be 1, 2 or 3");
      out.scene_index = *index;
    }

    if (const auto* ids = member(s, path, "selected_choice_ids", json::value_t::array)) {
      std::set<std::string> seen;
      for (std::size_t i = 0; i < ids->size(); ++i) {
        const auto& id = (*ids)[i];
        if (!id.is_string()) {
          fail(fmt::format("{}.selected_choice_ids[{}]", path, i), "expected string");
          continue;
        }
        if (!seen.insert(id.get<std::string>()).second) {
          fail(fmt::format("{}.selected_choice_ids[{}]", path, i), "duplicate choice id");
        }
        out.selected_choice_ids.push_back(id.get<std::string>());
      }
      if (ids->empty()) fail(path + ".selected_choice_ids", "must be non-empty");
    }

    if (auto confidence = integer(s, path, "confidence")) {
      if (*confidence < 1 || *confidence > 5) fail(path + ".confidence", "must be in 1..5");
      out.confidence = *confidence;
    }
    if (auto comfort = integer(s, path, "comfort")) {
      if (*comfort < -1 || *comfort > 1) fail(path + ".comfort", "must be -1, 0 or 1");
      out.comfort = *comfort;
    }

    if (const auto* items = member(s, path, "trust_items", json::value_t::array)) {
      for (std::size_t i = 0; i < items->size(); ++i) {
        const auto item_path = fmt::format("{}.trust_items[{}]", path, i);
        const auto& item = (*items)[i];
        if (!item.is_object()) {
          fail(item_path, "expected object");
          continue;
        }
        auto label = string(item, item_path, "item_label");
        auto polarity = integer(item, item_path, "polarity");
        if (polarity && *polarity != 1 && *polarity != -1) fail(item_path + ".polarity", "must be 1 or -1");
        if (label && polarity) out.trust_items.push_back({*label, *polarity});
      }
    }
    out.free_text = string(s, path, "free_text", false);

    if (errors.size() != before || !index) return std::nullopt;

    const auto& scene_config = config_.scene(env, out.scene_index);
    for (std::size_t i = 0; i < out.selected_choice_ids.size(); ++i) {
      if (!scene_config.find_choice(out.selected_choice_ids[i])) {
        fail(fmt::format("{}.selected_choice_ids[{}]", path, i),
             fmt::format("unknown choice id '{}'", out.selected_choice_ids[i]));
      }
    }
    if (errors.size() != before) return std::nullopt;
    out.loa = loa_from_choices(out.selected_choice_ids, scene_config);

    if (const auto* loa = member(s, path, "loa", json::value_t::string, false)) {
      try {
        if (Rational::parse(loa->get<std::string>()) != out.loa) {
          fail(path + ".loa", fmt::format("does not match selected choices ({})", out.loa.to_string()));
        }
      } catch (const ValidationError& e) {
        fail(path + ".loa", e.what());
      }
    }

    out.trust_score = 0;
    for (const auto& item : out.trust_items) out.trust_score += item.polarity;
    if (const auto* score = member(s, path, "trust_score", json::value_t::number_integer, false)) {
      if (score->get<int>() != out.trust_score) {
        fail(path + ".trust_score", fmt::format("does not match trust items ({})", out.trust_score));
      }
    }
    if (errors.size() != before) return std::nullopt;
    return out;
  }

  std::optional<ScenarioResponse> scenario(const json& s, const std::string& path) {
    if (!s.is_object()) {
      fail(path, "expected object");
      return std::nullopt;
    }
    const auto before = errors.size();
    ScenarioResponse out;
    auto env_name = string(s, path, "environment");
    std::optional<Environment> env;
    if (env_name) {
      env = parse_environment(*env_name);
      if (!env) fail(path + ".environment", fmt::format("unknown value '{}'", *env_name));
    }
    const auto* scenes = member(s, path, "scenes", json::value_t::array);
    if (!env || !scenes) return std::nullopt;
    out.environment = *env;

    std::array<bool, kScenesPerScenario> seen{};
    for (std::size_t i = 0; i < scenes->size(); ++i) {
      const auto scene_path = fmt::format("{}.scenes[{}]", path, i);
      auto decoded = scene((*scenes)[i], scene_path, *env);
      if (!decoded) continue;
      auto& slot = seen[static_cast<std::size_t>(decoded->scene_index - 1)];
      if (slot) {
        fail(scene_path + ".scene_index", fmt::format("duplicate scene {}", decoded->scene_index));
        continue;
      }
      slot = true;
      out.scenes.push_back(std::move(*decoded));
    }
    if (errors.size() != before) return std::nullopt;
    for (int k = 1; k <= kScenesPerScenario; ++k) {
      if (!seen[static_cast<std::size_t>(k - 1)]) fail(path + ".scenes", fmt::format("missing scene {}", k));
    }
    if (errors.size() != before) return std::nullopt;
    std::ranges::sort(out.scenes, {}, &SceneResponse::scene_index);
    return out;
  }

 private:
  static const char* type_name(json::value_t t) {
    switch (t) {
      case json::value_t::object: return "object";
      case json::value_t::array: return "array";
      case json::value_t::string: return "string";
      case json::value_t::boolean: return "boolean";
      case json::value_t::number_integer: return "integer";
      default: return "value";
    }
  }

  const ScenarioConfig& config_;
};

}  // namespace

DecodeResult decode_trace(const nlohmann::json& doc, const ScenarioConfig& config) {
  Decoder d(config);
  DecodeResult result;
  if (!doc.is_object()) {
    result.errors.push_back({"$", "expected a JSON object"});
    return result;
  }
  auto profile = d.profile(doc);
  auto condition = d.condition(doc);

  std::vector<ScenarioResponse> scenarios;
  if (const auto* list = d.member(doc, "", "scenarios", nlohmann::json::value_t::array)) {
    for (std::size_t i = 0; i < list->size(); ++i) {
      if (auto s = d.scenario((*list)[i], fmt::format("scenarios[{}]", i))) scenarios.push_back(std::move(*s));
    }
    if (d.errors.empty()) {
      if (scenarios.size() != kAllEnvironments.size() || scenarios[0].environment == scenarios[1].environment) {
        d.fail("scenarios", "must contain exactly one highway and one suburbs scenario");
      } else if (condition) {
        const auto first = condition->scenario_order == ScenarioOrder::HighwayFirst ? Environment::Highway
                                                                                   : Environment::Suburbs;
        if (scenarios[0].environment != first) {
          d.fail("scenarios", fmt::format("order does not match condition.scenario_order ({} first)",
                                          to_string(first)));
        }
      }
    }
  }

  std::optional<nlohmann::json> questionnaires;
  if (auto it = doc.find("questionnaires"); it != doc.end() && !it->is_null()) questionnaires = *it;

  result.errors = std::move(d.errors);
  if (result.errors.empty() && profile && condition) {
    result.trace = InteractionTrace{std::move(*profile), *condition, std::move(scenarios), std::move(questionnaires)};
  }
  return result;
}

namespace {

void parse_into(Dataset& dataset, std::unordered_set<std::string>& ids, std::istream& in,
                const ScenarioConfig& config, const std::string& source) {
  dataset.provenance.sources.push_back(source);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      dataset.provenance.rejections.push_back({source, line_no, {{"$", fmt::format("malformed JSON: {}", e.what())}}});
      continue;
    }
    auto decoded = decode_trace(doc, config);
    if (!decoded.ok()) {
      dataset.provenance.rejections.push_back({source, line_no, std::move(decoded.errors)});
      continue;
    }
    if (!ids.insert(decoded.trace->profile.id).second) {
      dataset.provenance.rejections.push_back(
          {source, line_no, {{"profile.id", fmt::format("duplicate participant id '{}'", decoded.trace->profile.id)}}});
      continue;
    }
    dataset.traces.push_back(std::move(*decoded.trace));
  }
}

}  // namespace

Dataset parse_dataset(std::istream& in, const ScenarioConfig& config, std::string source_name) {
  Dataset dataset;
  std::unordered_set<std::string> ids;
  parse_into(dataset, ids, in, config, source_name);
  return dataset;
}

Dataset parse_dataset(std::span<const std::filesystem::path> paths, const ScenarioConfig& config) {
  Dataset dataset;
  std::unordered_set<std::string> ids;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot read '{}'", path.string()));
    parse_into(dataset, ids, in, config, path.string());
  }
  return dataset;
}

void serialize_dataset(const Dataset& dataset, std::ostream& out) {
  for (const auto& trace : dataset.traces) out << to_json(trace).dump() << '\n';
}

nlohmann::json rejections_to_json(const Provenance& provenance) {
  auto list = nlohmann::json::array();
  for (const auto& r : provenance.rejections) {
    auto errors = nlohmann::json::array();
    for (const auto& e : r.errors) errors.push_back({{"field", e.field}, {"reason", e.reason}});
    list.push_back({{"source", r.source}, {"line", r.line}, {"errors", std::move(errors)}});
  }
  return {{"sources", provenance.sources}, {"rejected", provenance.rejections.size()}, {"rejections", list}};
}

std::vector<StateSequence> to_state_sequences(const Dataset& dataset, Environment env) {
  std::vector<StateSequence> out;
  out.reserve(dataset.traces.size());
  for (const auto& trace : dataset.traces) {
    const auto* scenario = trace.find_scenario(env);
    if (!scenario) {
      throw ValidationError(
          fmt::format("participant '{}' has no {} scenario", trace.profile.id, to_string(env)));
    }
    StateSequence seq{trace.profile.id, env, {}};
    seq.states[0] = kStartState;
    for (int k = 1; k <= kScenesPerScenario; ++k) {
      auto it = std::ranges::find(scenario->scenes, k, &SceneResponse::scene_index);
      if (it == scenario->scenes.end()) {
        throw ValidationError(
            fmt::format("participant '{}' is missing {} scene {}", trace.profile.id, to_string(env), k));
      }
      seq.states[static_cast<std::size_t>(k)] = map_state(it->loa);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

Dataset slice(const Dataset& dataset, const TracePredicate& predicate) {
  Dataset out;
  out.provenance = dataset.provenance;
  std::ranges::copy_if(dataset.traces, std::back_inserter(out.traces),
                       [&](const InteractionTrace& t) { return predicate(t.profile, t.condition); });
  return out;
}

TracePredicate by_sex(Sex sex) {
  return [sex](const ParticipantProfile& p, const Condition&) { return p.sex == sex; };
}

TracePredicate by_info_level(InfoLevel level) {
  return [level](const ParticipantProfile&, const Condition& c) { return c.info_level == level; };
}

TracePredicate by_scenario_order(ScenarioOrder order) {
  return [order](const ParticipantProfile&, const Condition& c) { return c.scenario_order == order; };
}

TracePredicate both(TracePredicate a, TracePredicate b) {
  return [a = std::move(a), b = std::move(b)](const ParticipantProfile& p, const Condition& c) {
    return a(p, c) && b(p, c);
  };
}

}  // namespace driverchain
