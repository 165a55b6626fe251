#pragma once

// Forward propagation and seeded sampling. Distributions are row vectors multiplied by
// row-stochastic matrices: d_{k+1} = d_k * P_k.
//
// Sampling uses std::mt19937_64. Trajectories are generated in fixed-size chunks; chunk c draws
// from its own engine seeded with derive_seed(seed, c), so output is bit-identical for a given
// (chain, n, seed) regardless of how many worker threads run.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "driverchain/chain.hpp"

namespace driverchain {

struct StateDistribution {
  int scene = 1;
  StateProbs probs{};
};

struct Trajectory {
  std::array<DriverState, 3> states{};  // scenes 1..3
  std::uint64_t stream_seed = 0;        // seed of the chunk that produced it

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

inline constexpr std::size_t kSampleChunk = 4096;

/// Scene marginals d1, d2, d3. Throws EstimationError naming the row when an undefined row is
/// reached with positive probability.
std::array<StateDistribution, 3> propagate(const ChainModel& chain);

/// `threads` = 0 uses the hardware concurrency.
std::vector<Trajectory> sample(const ChainModel& chain, std::size_t n, std::uint64_t seed, unsigned threads = 0);

/// Half the L1 distance. Throws DomainError if the scene indices differ.
double total_variation(const StateDistribution& p, const StateDistribution& q);

/// Empirical scene marginals of a sample.
std::array<StateDistribution, 3> empirical_marginals(const std::vector<Trajectory>& trajectories);

std::vector<StateSequence> to_sequences(const std::vector<Trajectory>& trajectories, Environment env);

/// idx,s1,s2,s3 with lowercase state names.
std::string trajectories_csv(const std::vector<Trajectory>& trajectories);

}  // namespace driverchain
