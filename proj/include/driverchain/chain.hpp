#pragma once

// Non-stationary Markov chain estimation over the three driver states.
//
// Counts are the primary representation; probabilities are derived on demand. Step 1 is the
// scene 1 -> 2 transition, step 2 is scene 2 -> 3. The Start -> scene 1 transition is kept as a
// single row of initial counts because the Start state is always Normal.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "driverchain/core_types.hpp"
#include "driverchain/ingestion.hpp"

namespace driverchain {

using Count = std::int64_t;
using StateCounts = std::array<Count, kNumStates>;
using StateProbs = std::array<double, kNumStates>;

inline constexpr int kNumSteps = 2;

struct CountMatrix {
  int step = 1;  // 1: scene 1->2, 2: scene 2->3
  std::array<StateCounts, kNumStates> counts{};  // [from][to]

  Count at(DriverState from, DriverState to) const { return counts[index(from)][index(to)]; }
  Count row_total(DriverState from) const;
  Count col_total(DriverState to) const;
  Count total() const;
  StateCounts origin_marginals() const;
  StateCounts destination_marginals() const;

  friend bool operator==(const CountMatrix&, const CountMatrix&) = default;
};

std::string step_name(int step);  // "1->2"

struct TransitionMatrix {
  int step = 1;
  std::array<StateProbs, kNumStates> probs{};
  std::array<bool, kNumStates> defined{};  // false for rows with no observations (alpha = 0)

  double at(DriverState from, DriverState to) const { return probs[index(from)][index(to)]; }
};

struct ChainModel {
  std::string label;
  std::optional<Environment> environment;
  StateCounts initial_counts{};  // scene-1 states
  std::array<CountMatrix, kNumSteps> steps{CountMatrix{1, {}}, CountMatrix{2, {}}};
  /// Additive smoothing applied when deriving probabilities; counts stay raw.
  double alpha = 0.0;

  Count n() const;
  StateProbs initial() const;
  TransitionMatrix transition(int step) const;
  const CountMatrix& counts(int step) const { return steps.at(static_cast<std::size_t>(step - 1)); }
};

struct EstimateOptions {
  double alpha = 0.0;
};

/// Throws EstimationError on empty input.
ChainModel estimate_chain(std::span<const StateSequence> sequences, std::string label = {},
                          EstimateOptions options = {});

struct SecondOrderModel {
  std::array<std::array<StateCounts, kNumStates>, kNumStates> counts{};  // [s1][s2][s3]

  Count context_total(DriverState s1, DriverState s2) const;
  bool observed(DriverState s1, DriverState s2) const { return context_total(s1, s2) > 0; }
  /// P(s3 | s1, s2); throws EstimationError for an unobserved context.
  StateProbs conditional(DriverState s1, DriverState s2) const;
  /// First-order P(s3 | s2) from the same counts.
  StateProbs first_order(DriverState s2) const;
};

SecondOrderModel estimate_second_order(std::span<const StateSequence> sequences);

/// Integer counts whose shares, rounded half-up to one decimal, equal `percents`.
/// Exhaustive search over compositions of `total`. Throws InconsistencyError when nothing
/// matches and AmbiguityError (listing candidates) when more than one does.
std::vector<Count> recover_counts(std::span<const double> percents, Count total);

/// Percentage of `count / total`, rounded half-up to one decimal, in tenths of a percent.
std::int64_t percent_tenths(Count count, Count total);

/// A chain as printed in percentage tables: initial distribution plus two step matrices.
struct PercentTables {
  std::string label;
  std::optional<Environment> environment;
  Count n = 0;
  StateProbs initial{};  // percentages, indexed by state code
  std::array<std::array<StateProbs, kNumStates>, kNumSteps> steps{};  // [step][from][to] percentages

  static PercentTables from_json(const nlohmann::json& doc);
};

/// Scene-1 splits may sit this far (in tenths of a percent) from the printed shares when
/// they have to be inferred from the step 1->2 rows.
inline constexpr double kInitialTenthsTolerance = 1.5;

/// Recovers initial counts from n, then each step's rows using the previous step's
/// destination marginals as row totals. Rows with a zero total must be all-zero.
/// When the scene-1 percentages match no split of n, the split is inferred as the unique one
/// within kInitialTenthsTolerance whose totals make every step 1->2 row recoverable; a note
/// saying so is appended to `notes`.
ChainModel recover_chain(const PercentTables& tables, std::vector<std::string>* notes = nullptr);

/// The canonical multiset of scene trajectories implied by the counts: for each scene-2 state,
/// incoming scene-1 states and outgoing scene-3 states are paired in state-code order.
/// Throws EstimationError if step destination marginals do not match the next origin marginals.
std::vector<std::array<DriverState, 3>> trajectories_from_counts(const ChainModel& chain);

struct SynthesisReport {
  std::size_t female = 0;
  std::size_t male = 0;
  std::size_t high_info = 0;
  std::size_t low_info = 0;
  std::size_t highway_first = 0;
  std::size_t suburbs_first = 0;
};

struct SynthesizedDataset {
  Dataset dataset;
  SynthesisReport groups;
};

/// Builds a trace dataset whose re-estimated chains equal `highway` and `suburbs` at the count
/// level. The seed shuffles trajectory order and fills profile fields; half the participants
/// (rounded down) are male and conditions cycle through the four cells.
SynthesizedDataset synthesize_dataset(const ChainModel& highway, const ChainModel& suburbs,
                                      const ScenarioConfig& config, std::uint64_t seed);

nlohmann::json to_json(const ChainModel& chain);
ChainModel chain_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SecondOrderModel& model);

/// Rows Alert/Normal/Takeover, columns To Alert/To Normal/To Takeover,
/// percentages at one decimal. Undefined rows print empty cells.
std::string transition_csv(const ChainModel& chain, int step);
/// Category/percent rows N, A, T for the scene-1 distribution.
std::string initial_csv(const ChainModel& chain);

/// Row/column order used by the printed tables.
inline constexpr std::array<DriverState, kNumStates> kTableOrder{DriverState::Alert, DriverState::Normal,
                                                                 DriverState::Takeover};

}  // namespace driverchain
