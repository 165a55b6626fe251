#include "driverchain/chain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "driverchain/errors.hpp"
#include "driverchain/rng.hpp"

namespace driverchain {

Count CountMatrix::row_total(DriverState from) const {
  const auto& row = counts[index(from)];
  return std::accumulate(row.begin(), row.end(), Count{0});
}

Count CountMatrix::col_total(DriverState to) const {
  Count sum = 0;
  for (const auto& row : counts) sum += row[index(to)];
  return sum;
}

Count CountMatrix::total() const {
  Count sum = 0;
  for (auto s : kAllStates) sum += row_total(s);
  return sum;
}

StateCounts CountMatrix::origin_marginals() const {
  StateCounts out{};
  for (auto s : kAllStates) out[index(s)] = row_total(s);
  return out;
}

StateCounts CountMatrix::destination_marginals() const {
  StateCounts out{};
  for (auto s : kAllStates) out[index(s)] = col_total(s);
  return out;
}

std::string step_name(int step) { return fmt::format("{}->{}", step, step + 1); }

Count ChainModel::n() const { return std::accumulate(initial_counts.begin(), initial_counts.end(), Count{0}); }

StateProbs ChainModel::initial() const {
  StateProbs p{};
  const double denom = static_cast<double>(n()) + alpha * kNumStates;
  if (denom <= 0.0) throw EstimationError(fmt::format("chain '{}' has no observations", label));
  for (std::size_t i = 0; i < kNumStates; ++i) p[i] = (static_cast<double>(initial_counts[i]) + alpha) / denom;
  return p;
}

TransitionMatrix ChainModel::transition(int step) const {
  const auto& c = counts(step);
  TransitionMatrix m;
  m.step = step;
  for (auto from : kAllStates) {
    const auto f = index(from);
    const double denom = static_cast<double>(c.row_total(from)) + alpha * kNumStates;
    m.defined[f] = denom > 0.0;
    if (!m.defined[f]) continue;
    for (std::size_t t = 0; t < kNumStates; ++t) {
      m.probs[f][t] = (static_cast<double>(c.counts[f][t]) + alpha) / denom;
    }
  }
  return m;
}

ChainModel estimate_chain(std::span<const StateSequence> sequences, std::string label, EstimateOptions options) {
  if (sequences.empty()) throw EstimationError("cannot estimate a chain from zero sequences");
  if (options.alpha < 0.0) throw DomainError("smoothing alpha must be non-negative");
  ChainModel chain;
  chain.label = std::move(label);
  chain.alpha = options.alpha;
  chain.environment = sequences.front().environment;
  for (const auto& seq : sequences) {
    if (chain.environment && seq.environment != *chain.environment) chain.environment.reset();
    ++chain.initial_counts[index(seq.states[1])];
    for (int step = 1; step <= kNumSteps; ++step) {
      const auto from = index(seq.states[static_cast<std::size_t>(step)]);
      const auto to = index(seq.states[static_cast<std::size_t>(step + 1)]);
      ++chain.steps[static_cast<std::size_t>(step - 1)].counts[from][to];
    }
  }
  return chain;
}

Count SecondOrderModel::context_total(DriverState s1, DriverState s2) const {
  const auto& row = counts[index(s1)][index(s2)];
  return std::accumulate(row.begin(), row.end(), Count{0});
}

StateProbs SecondOrderModel::conditional(DriverState s1, DriverState s2) const {
  const auto total = context_total(s1, s2);
  if (total == 0) {
    throw EstimationError(fmt::format("context ({}, {}) was never observed", letter(s1), letter(s2)));
  }
  StateProbs p{};
  for (std::size_t k = 0; k < kNumStates; ++k) {
    p[k] = static_cast<double>(counts[index(s1)][index(s2)][k]) / static_cast<double>(total);
  }
  return p;
}

StateProbs SecondOrderModel::first_order(DriverState s2) const {
  StateCounts pooled{};
  for (auto s1 : kAllStates) {
    for (std::size_t k = 0; k < kNumStates; ++k) pooled[k] += counts[index(s1)][index(s2)][k];
  }
  const auto total = std::accumulate(pooled.begin(), pooled.end(), Count{0});
  if (total == 0) throw EstimationError(fmt::format("state {} never observed in scene 2", letter(s2)));
  StateProbs p{};
  for (std::size_t k = 0; k < kNumStates; ++k) p[k] = static_cast<double>(pooled[k]) / static_cast<double>(total);
  return p;
}

SecondOrderModel estimate_second_order(std::span<const StateSequence> sequences) {
  if (sequences.empty()) throw EstimationError("cannot estimate a second-order model from zero sequences");
  SecondOrderModel model;
  for (const auto& seq : sequences) {
    ++model.counts[index(seq.states[1])][index(seq.states[2])][index(seq.states[3])];
  }
  return model;
}

std::int64_t percent_tenths(Count count, Count total) {
  if (total <= 0) throw DomainError("percentage of a zero total");
  // floor(1000 * count / total + 1/2), exactly.
  return (2000 * count + total) / (2 * total);
}

namespace {

void search_compositions(std::span<const std::int64_t> targets, Count total, std::size_t cell, Count remaining,
                         std::vector<Count>& current, std::vector<std::vector<Count>>& found) {
  if (cell + 1 == targets.size()) {
    if (percent_tenths(remaining, total) == targets[cell]) {
      current[cell] = remaining;
      found.push_back(current);
    }
    return;
  }
  for (Count c = 0; c <= remaining; ++c) {
    if (percent_tenths(c, total) != targets[cell]) continue;
    current[cell] = c;
    search_compositions(targets, total, cell + 1, remaining - c, current, found);
  }
}

std::string join_percents(std::span<const double> percents) {
  std::string out;
  for (std::size_t i = 0; i < percents.size(); ++i) {
    out += fmt::format("{}{:.1f}", i ? ", " : "", percents[i]);
  }
  return out;
}

}  // namespace

std::vector<Count> recover_counts(std::span<const double> percents, Count total) {
  if (percents.empty()) throw DomainError("recover_counts needs at least one percentage");
  if (total <= 0) throw DomainError("recover_counts needs a positive row total");
  std::vector<std::int64_t> targets;
  for (double p : percents) {
    if (!(p >= 0.0 && p <= 100.0)) throw DomainError(fmt::format("percentage {} outside [0, 100]", p));
    targets.push_back(std::llround(p * 10.0));
  }
  std::vector<Count> current(percents.size(), 0);
  std::vector<std::vector<Count>> found;
  search_compositions(targets, total, 0, total, current, found);
  if (found.empty()) {
    throw InconsistencyError(
        fmt::format("no integer row with total {} rounds to ({})", total, join_percents(percents)));
  }
  if (found.size() > 1) {
    throw AmbiguityError(fmt::format("{} integer rows with total {} round to ({})", found.size(), total,
                                     join_percents(percents)),
                         std::move(found));
  }
  return found.front();
}

namespace {

StateProbs state_percents(const nlohmann::json& obj, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(fmt::format("{}: expected an object keyed by state", where));
  StateProbs out{};
  for (auto s : kAllStates) {
    auto it = obj.find(std::string(to_string(s)));
    if (it == obj.end() || !it->is_number()) {
      throw ValidationError(fmt::format("{}: missing percentage for '{}'", where, to_string(s)));
    }
    out[index(s)] = it->get<double>();
  }
  return out;
}

}  // namespace

PercentTables PercentTables::from_json(const nlohmann::json& doc) {
  PercentTables t;
  t.label = doc.value("label", "");
  if (doc.contains("environment")) {
    t.environment = parse_environment(doc["environment"].get<std::string>());
    if (!t.environment) throw ValidationError("percent tables: unknown environment");
  }
  if (t.label.empty() && t.environment) t.label = std::string(to_string(*t.environment));
  t.n = doc.at("n").get<Count>();
  t.initial = state_percents(doc.at("initial"), "initial");
  const auto& steps = doc.at("steps");
  if (!steps.is_array() || steps.size() != kNumSteps) throw ValidationError("percent tables: need two steps");
  for (std::size_t k = 0; k < kNumSteps; ++k) {
    for (auto from : kAllStates) {
      auto it = steps[k].find(std::string(to_string(from)));
      if (it == steps[k].end() || it->is_null()) continue;  // zero-total row
      t.steps[k][index(from)] = state_percents(*it, fmt::format("steps[{}].{}", k, to_string(from)));
    }
  }
  return t;
}

namespace {

bool row_present(const StateProbs& row) {
  return std::ranges::any_of(row, [](double p) { return p != 0.0; });
}

// Totals in [0, n] for which the row recovers to exactly one integer row.
std::vector<bool> recoverable_totals(const StateProbs& row, Count n) {
  std::vector<bool> ok(static_cast<std::size_t>(n) + 1, false);
  if (!row_present(row)) {
    ok[0] = true;
    return ok;
  }
  for (Count t = 1; t <= n; ++t) {
    try {
      recover_counts(row, t);
      ok[static_cast<std::size_t>(t)] = true;
    } catch (const InconsistencyError&) {
    } catch (const AmbiguityError&) {
    }
  }
  return ok;
}

StateCounts infer_initial_counts(const PercentTables& tables) {
  std::array<std::vector<bool>, kNumStates> ok;
  for (auto s : kAllStates) ok[index(s)] = recoverable_totals(tables.steps[0][index(s)], tables.n);
  std::vector<std::vector<Count>> found;
  for (Count t = 0; t <= tables.n; ++t) {
    for (Count a = 0; a + t <= tables.n; ++a) {
      const Count nn = tables.n - t - a;
      const std::array<Count, kNumStates> c{t, a, nn};
      bool fits = true;
      for (std::size_t i = 0; i < kNumStates && fits; ++i) {
        fits = ok[i][static_cast<std::size_t>(c[i])] &&
               std::abs(static_cast<double>(c[i]) * 1000.0 / static_cast<double>(tables.n) -
                        tables.initial[i] * 10.0) <= kInitialTenthsTolerance;
      }
      if (fits) found.push_back({c.begin(), c.end()});
    }
  }
  if (found.empty()) {
    throw InconsistencyError(fmt::format("{}: scene-1 percentages ({}) match no split of {} and no split near them "
                                         "makes the step 1->2 rows recoverable",
                                         tables.label, join_percents(tables.initial), tables.n));
  }
  if (found.size() > 1) {
    throw AmbiguityError(fmt::format("{}: {} scene-1 splits make the step 1->2 rows recoverable", tables.label,
                                     found.size()),
                         std::move(found));
  }
  return {found[0][0], found[0][1], found[0][2]};
}

}  // namespace

ChainModel recover_chain(const PercentTables& tables, std::vector<std::string>* notes) {
  ChainModel chain;
  chain.label = tables.label;
  chain.environment = tables.environment;
  try {
    const auto initial = recover_counts(tables.initial, tables.n);
    std::ranges::copy(initial, chain.initial_counts.begin());
  } catch (const InconsistencyError& e) {
    chain.initial_counts = infer_initial_counts(tables);
    if (notes) {
      notes->push_back(fmt::format("{}: scene-1 percentages ({}) match no split of {}; used the unique row totals "
                                   "that make every step 1->2 row recoverable: T={} A={} N={}",
                                   tables.label, join_percents(tables.initial), tables.n, chain.initial_counts[0],
                                   chain.initial_counts[1], chain.initial_counts[2]));
    }
  }

  StateCounts origin = chain.initial_counts;
  for (std::size_t k = 0; k < kNumSteps; ++k) {
    auto& m = chain.steps[k];
    m.step = static_cast<int>(k) + 1;
    for (auto from : kAllStates) {
      const auto total = origin[index(from)];
      if (total == 0) continue;
      try {
        const auto row = recover_counts(tables.steps[k][index(from)], total);
        std::ranges::copy(row, m.counts[index(from)].begin());
      } catch (const std::runtime_error& e) {
        throw InconsistencyError(fmt::format("{} step {} row {}: {}", tables.label, step_name(m.step),
                                             display_name(from), e.what()));
      }
    }
    origin = m.destination_marginals();
  }
  return chain;
}

std::vector<std::array<DriverState, 3>> trajectories_from_counts(const ChainModel& chain) {
  if (chain.steps[0].origin_marginals() != chain.initial_counts) {
    throw EstimationError(fmt::format("chain '{}': step 1->2 row totals differ from scene-1 counts", chain.label));
  }
  if (chain.steps[0].destination_marginals() != chain.steps[1].origin_marginals()) {
    throw EstimationError(
        fmt::format("chain '{}': step 1->2 destination marginals differ from step 2->3 row totals", chain.label));
  }
  std::vector<std::array<DriverState, 3>> out;
  out.reserve(static_cast<std::size_t>(chain.n()));
  for (auto mid : kAllStates) {
    std::vector<DriverState> incoming;
    std::vector<DriverState> outgoing;
    for (auto s : kAllStates) {
      incoming.insert(incoming.end(), static_cast<std::size_t>(chain.steps[0].at(s, mid)), s);
      outgoing.insert(outgoing.end(), static_cast<std::size_t>(chain.steps[1].at(mid, s)), s);
    }
    for (std::size_t i = 0; i < incoming.size(); ++i) out.push_back({incoming[i], mid, outgoing[i]});
  }
  return out;
}

namespace {

const Choice& choice_for_state(const SceneConfig& scene, DriverState state) {
  const Choice* best = nullptr;
  for (const auto& c : scene.choices) {
    if (map_state(Rational(c.loa_level)) != state) continue;
    // Normal prefers the highest level, Takeover the lowest.
    if (!best || (state == DriverState::Normal ? c.loa_level > best->loa_level : c.loa_level < best->loa_level)) {
      best = &c;
    }
  }
  if (!best) {
    throw ValidationError(
        fmt::format("scene {} has no single choice coding to {}", scene.scene_index, to_string(state)));
  }
  return *best;
}

ScenarioResponse synthetic_scenario(Environment env, const std::array<DriverState, 3>& states,
                                    const ScenarioConfig& config) {
  ScenarioResponse scenario{env, {}};
  for (int k = 1; k <= kScenesPerScenario; ++k) {
    const auto& scene = config.scene(env, k);
    const auto& choice = choice_for_state(scene, states[static_cast<std::size_t>(k - 1)]);
    SceneResponse r;
    r.scene_index = k;
    r.selected_choice_ids = {choice.id};
    r.loa = Rational(choice.loa_level);
    scenario.scenes.push_back(std::move(r));
  }
  return scenario;
}

}  // namespace

SynthesizedDataset synthesize_dataset(const ChainModel& highway, const ChainModel& suburbs,
                                      const ScenarioConfig& config, std::uint64_t seed) {
  auto hw = trajectories_from_counts(highway);
  auto sb = trajectories_from_counts(suburbs);
  if (hw.size() != sb.size()) {
    throw EstimationError(fmt::format("highway chain has n={} but suburbs chain has n={}", hw.size(), sb.size()));
  }
  Rng rng(seed);
  rng.shuffle(std::span(hw));
  rng.shuffle(std::span(sb));

  const auto n = hw.size();
  std::vector<Sex> sexes(n, Sex::Female);
  std::fill(sexes.begin(), sexes.begin() + static_cast<std::ptrdiff_t>(n / 2), Sex::Male);
  rng.shuffle(std::span(sexes));

  SynthesizedDataset out;
  out.dataset.provenance.sources.push_back(fmt::format("synthetic:{}+{}:seed={}", highway.label, suburbs.label, seed));
  for (std::size_t k = 0; k < n; ++k) {
    InteractionTrace trace;
    trace.profile.id = fmt::format("p{:04d}", k + 1);
    trace.profile.age = 20 + static_cast<int>(rng.below(54));
    trace.profile.sex = sexes[k];
    trace.profile.has_license = true;
    const auto cell = k % 4;
    trace.condition.info_level = cell < 2 ? InfoLevel::High : InfoLevel::Low;
    trace.condition.scenario_order = cell % 2 == 0 ? ScenarioOrder::HighwayFirst : ScenarioOrder::SuburbsFirst;

    auto first = synthetic_scenario(Environment::Highway, hw[k], config);
    auto second = synthetic_scenario(Environment::Suburbs, sb[k], config);
    if (trace.condition.scenario_order == ScenarioOrder::SuburbsFirst) std::swap(first, second);
    trace.scenarios = {std::move(first), std::move(second)};

    (trace.profile.sex == Sex::Female ? out.groups.female : out.groups.male)++;
    (trace.condition.info_level == InfoLevel::High ? out.groups.high_info : out.groups.low_info)++;
    (trace.condition.scenario_order == ScenarioOrder::HighwayFirst ? out.groups.highway_first
                                                                   : out.groups.suburbs_first)++;
    out.dataset.traces.push_back(std::move(trace));
  }
  return out;
}

namespace {

nlohmann::json state_object(const StateCounts& counts) {
  nlohmann::json j = nlohmann::json::object();
  for (auto s : kTableOrder) j[std::string(to_string(s))] = counts[index(s)];
  return j;
}

nlohmann::json state_object(const StateProbs& probs) {
  nlohmann::json j = nlohmann::json::object();
  for (auto s : kTableOrder) j[std::string(to_string(s))] = probs[index(s)];
  return j;
}

StateCounts read_counts(const nlohmann::json& obj, const std::string& where) {
  StateCounts out{};
  for (auto s : kAllStates) {
    auto it = obj.find(std::string(to_string(s)));
    if (it == obj.end() || !it->is_number_integer() || it->get<Count>() < 0) {
      throw ValidationError(fmt::format("{}: missing or negative count for '{}'", where, to_string(s)));
    }
    out[index(s)] = it->get<Count>();
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const ChainModel& chain) {
  nlohmann::json j;
  j["label"] = chain.label;
  if (chain.environment) j["environment"] = to_string(*chain.environment);
  j["n"] = chain.n();
  j["alpha"] = chain.alpha;
  j["initial"] = {{"counts", state_object(chain.initial_counts)}, {"probs", state_object(chain.initial())}};
  auto steps = nlohmann::json::array();
  for (int step = 1; step <= kNumSteps; ++step) {
    const auto& c = chain.counts(step);
    const auto m = chain.transition(step);
    nlohmann::json counts = nlohmann::json::object();
    nlohmann::json probs = nlohmann::json::object();
    for (auto from : kTableOrder) {
      const auto key = std::string(to_string(from));
      counts[key] = state_object(c.counts[index(from)]);
      probs[key] = m.defined[index(from)] ? state_object(m.probs[index(from)]) : nlohmann::json(nullptr);
    }
    steps.push_back({{"step", step_name(step)}, {"counts", counts}, {"probs", probs}});
  }
  j["steps"] = std::move(steps);
  return j;
}

ChainModel chain_from_json(const nlohmann::json& doc) {
  ChainModel chain;
  try {
    chain.label = doc.value("label", "");
    if (doc.contains("environment")) {
      chain.environment = parse_environment(doc["environment"].get<std::string>());
      if (!chain.environment) throw ValidationError("chain: unknown environment");
    }
    chain.alpha = doc.value("alpha", 0.0);
    chain.initial_counts = read_counts(doc.at("initial").at("counts"), "initial.counts");
    const auto& steps = doc.at("steps");
    if (!steps.is_array() || steps.size() != kNumSteps) throw ValidationError("chain: need two steps");
    for (std::size_t k = 0; k < kNumSteps; ++k) {
      chain.steps[k].step = static_cast<int>(k) + 1;
      for (auto from : kAllStates) {
        chain.steps[k].counts[index(from)] = read_counts(
            steps[k].at("counts").at(std::string(to_string(from))), fmt::format("steps[{}].{}", k, to_string(from)));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("chain document: {}", e.what()));
  }
  return chain;
}

nlohmann::json to_json(const SecondOrderModel& model) {
  auto contexts = nlohmann::json::array();
  for (auto s1 : kAllStates) {
    for (auto s2 : kAllStates) {
      nlohmann::json ctx{{"s1", to_string(s1)},
                         {"s2", to_string(s2)},
                         {"counts", state_object(model.counts[index(s1)][index(s2)])}};
      ctx["probs"] = model.observed(s1, s2) ? state_object(model.conditional(s1, s2)) : nlohmann::json(nullptr);
      contexts.push_back(std::move(ctx));
    }
  }
  return {{"contexts", std::move(contexts)}};
}

namespace {

std::string tenths_string(std::int64_t tenths) { return fmt::format("{}.{}", tenths / 10, tenths % 10); }

std::string percent_cell(const ChainModel& chain, Count count, Count total, double prob) {
  if (chain.alpha == 0.0) return tenths_string(percent_tenths(count, total));
  return tenths_string(std::llround(prob * 1000.0));
}

}  // namespace

std::string transition_csv(const ChainModel& chain, int step) {
  const auto& c = chain.counts(step);
  const auto m = chain.transition(step);
  std::string out = "Initial State,To Alert,To Normal,To Takeover\n";
  for (auto from : kTableOrder) {
    out += display_name(from);
    for (auto to : kTableOrder) {
      out += ',';
      if (m.defined[index(from)]) out += percent_cell(chain, c.at(from, to), c.row_total(from), m.at(from, to));
    }
    out += '\n';
  }
  return out;
}

std::string initial_csv(const ChainModel& chain) {
  const auto p = chain.initial();
  std::string out = "Category,Percent\n";
  for (auto s : {DriverState::Normal, DriverState::Alert, DriverState::Takeover}) {
    out += fmt::format("{},{}\n", letter(s), percent_cell(chain, chain.initial_counts[index(s)], chain.n(), p[index(s)]));
  }
  return out;
}

}  // namespace driverchain
