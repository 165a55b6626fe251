#include "driverchain/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <fmt/format.h>

#include "driverchain/errors.hpp"
#include "driverchain/rng.hpp"

namespace driverchain {

namespace {

void require_reachable_rows_defined(const ChainModel& chain, const TransitionMatrix& m, const StateProbs& origin) {
  for (auto s : kAllStates) {
    if (origin[index(s)] > 0.0 && !m.defined[index(s)]) {
      throw EstimationError(fmt::format("chain '{}': row {} of step {} is undefined but reachable", chain.label,
                                        display_name(s), step_name(m.step)));
    }
  }
}

}  // namespace

std::array<StateDistribution, 3> propagate(const ChainModel& chain) {
  std::array<StateDistribution, 3> out;
  out[0] = {1, chain.initial()};
  for (int step = 1; step <= kNumSteps; ++step) {
    const auto m = chain.transition(step);
    const auto& from = out[static_cast<std::size_t>(step - 1)].probs;
    require_reachable_rows_defined(chain, m, from);
    StateProbs next{};
    for (std::size_t a = 0; a < kNumStates; ++a) {
      if (from[a] == 0.0) continue;
      for (std::size_t b = 0; b < kNumStates; ++b) next[b] += from[a] * m.probs[a][b];
    }
    out[static_cast<std::size_t>(step)] = {step + 1, next};
  }
  return out;
}

std::vector<Trajectory> sample(const ChainModel& chain, std::size_t n, std::uint64_t seed, unsigned threads) {
  propagate(chain);  // validates reachability
  const auto initial = chain.initial();
  const std::array<TransitionMatrix, kNumSteps> matrices{chain.transition(1), chain.transition(2)};

  std::vector<Trajectory> out(n);
  const std::size_t chunks = (n + kSampleChunk - 1) / kSampleChunk;
  auto run_chunk = [&](std::size_t c) {
    const auto stream_seed = derive_seed(seed, c);
    Rng rng(stream_seed);
    const auto end = std::min(n, (c + 1) * kSampleChunk);
    for (std::size_t i = c * kSampleChunk; i < end; ++i) {
      auto& t = out[i];
      t.stream_seed = stream_seed;
      auto s = rng.categorical(initial);
      t.states[0] = state_from_index(s);
      for (std::size_t k = 0; k < kNumSteps; ++k) {
        s = rng.categorical(matrices[k].probs[s]);
        t.states[k + 1] = state_from_index(s);
      }
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, chunks));
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    return out;
  }
  std::vector<std::jthread> workers;
  for (unsigned w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t c = w; c < chunks; c += threads) run_chunk(c);
    });
  }
  workers.clear();  // joins
  return out;
}

double total_variation(const StateDistribution& p, const StateDistribution& q) {
  if (p.scene != q.scene) {
    throw DomainError(fmt::format("total variation between scene {} and scene {}", p.scene, q.scene));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < kNumStates; ++i) sum += std::abs(p.probs[i] - q.probs[i]);
  return 0.5 * sum;
}

std::array<StateDistribution, 3> empirical_marginals(const std::vector<Trajectory>& trajectories) {
  std::array<StateDistribution, 3> out{StateDistribution{1, {}}, StateDistribution{2, {}}, StateDistribution{3, {}}};
  if (trajectories.empty()) return out;
  for (const auto& t : trajectories) {
    for (std::size_t k = 0; k < 3; ++k) out[k].probs[index(t.states[k])] += 1.0;
  }
  const auto n = static_cast<double>(trajectories.size());
  for (auto& d : out) {
    for (auto& p : d.probs) p /= n;
  }
  return out;
}

std::vector<StateSequence> to_sequences(const std::vector<Trajectory>& trajectories, Environment env) {
  std::vector<StateSequence> out;
  out.reserve(trajectories.size());
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& s = trajectories[i].states;
    out.push_back({fmt::format("sim{}", i), env, {kStartState, s[0], s[1], s[2]}});
  }
  return out;
}

std::string trajectories_csv(const std::vector<Trajectory>& trajectories) {
  std::string out = "idx,s1,s2,s3\n";
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& s = trajectories[i].states;
    out += fmt::format("{},{},{},{}\n", i, to_string(s[0]), to_string(s[1]), to_string(s[2]));
  }
  return out;
}

}  // namespace driverchain
