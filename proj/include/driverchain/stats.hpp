#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "driverchain/chain.hpp"
#include "driverchain/ingestion.hpp"

namespace driverchain {

/// Regularized lower incomplete gamma P(df/2, x/2): series below df/2 + 1, Lentz continued
/// fraction above. Throws DomainError for x < 0 or df < 1.
double chi_square_cdf(double x, int df);
/// Upper tail 1 - cdf, computed directly so small p-values keep their relative precision.
double chi_square_sf(double x, int df);

/// Observed counts with derived expected counts. Construct through make_table() so zero-marginal
/// rows and columns are dropped and recorded in `notes`.
struct ContingencyTable {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<std::int64_t>> observed;
  std::vector<std::vector<double>> expected;
  std::vector<std::string> notes;

  std::size_t rows() const noexcept { return observed.size(); }
  std::size_t cols() const noexcept { return col_labels.size(); }
};

ContingencyTable make_table(std::vector<std::string> row_labels, std::vector<std::string> col_labels,
                            std::vector<std::vector<std::int64_t>> observed);

enum class TestKind { Pearson, LikelihoodRatio, Compare, Stationarity, Homogeneity, Order };
enum class Statistic { Pearson, LikelihoodRatio };

std::string_view to_string(TestKind kind) noexcept;
std::string_view to_string(Statistic stat) noexcept;

struct TestResult {
  TestKind kind = TestKind::Pearson;
  Statistic statistic_type = Statistic::Pearson;
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  std::vector<std::string> notes;

  bool rejects(double alpha) const noexcept { return p_value < alpha; }
};

nlohmann::json to_json(const TestResult& result);

/// Sum of (O - E)^2 / E. Throws InapplicableError when fewer than two rows or columns remain.
TestResult pearson_chi_square(const ContingencyTable& table);
/// G^2 = 2 sum O ln(O / E), zero cells contributing nothing. Same applicability rules.
TestResult likelihood_ratio(const ContingencyTable& table);

/// Two-row table over (step, from, to) cells of every step present in the groups.
TestResult compare_groups(std::span<const CountMatrix> group_a, std::span<const CountMatrix> group_b);

struct Subgroup {
  std::string label;
  std::vector<CountMatrix> steps;
};

/// compare_groups generalized to G >= 2 rows.
TestResult test_homogeneity(std::span<const Subgroup> subgroups);

/// Per origin state, a step x destination 2x3 table; statistics and df are summed over
/// strata observed at both steps. G^2 by default; the Pearson sum is recorded in the notes.
TestResult test_stationarity(const ChainModel& chain, Statistic statistic = Statistic::LikelihoodRatio);

/// First- against second-order likelihood-ratio test on the scene 2->3 transition given (s1, s2).
TestResult test_order(std::span<const StateSequence> sequences);
/// Same test from precomputed (s1, s2, s3) counts.
TestResult test_order(const SecondOrderModel& model);

}  // namespace driverchain
