#include "driverchain/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "driverchain/errors.hpp"

namespace driverchain {

namespace {

constexpr int kMaxIterations = 10000;
constexpr double kEpsilon = 1e-16;
constexpr double kTiny = 1e-300;

// P(a, x) by the power series; used below the mean, where it converges quickly.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kMaxIterations; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEpsilon) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Q(a, x) by the modified Lentz continued fraction; used above the mean.
double gamma_q_continued_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEpsilon) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

void check_domain(double x, int df) {
  if (df < 1) throw DomainError(fmt::format("chi-square df must be >= 1, got {}", df));
  if (!(x >= 0.0)) throw DomainError(fmt::format("chi-square argument must be >= 0, got {}", x));
}

}  // namespace

double chi_square_cdf(double x, int df) {
  check_domain(x, df);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double a = 0.5 * df;
  const double half = 0.5 * x;
  if (x < df + 1.0) return gamma_p_series(a, half);
  return 1.0 - gamma_q_continued_fraction(a, half);
}

double chi_square_sf(double x, int df) {
  check_domain(x, df);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double a = 0.5 * df;
  const double half = 0.5 * x;
  if (x < df + 1.0) return 1.0 - gamma_p_series(a, half);
  return gamma_q_continued_fraction(a, half);
}

ContingencyTable make_table(std::vector<std::string> row_labels, std::vector<std::string> col_labels,
                            std::vector<std::vector<std::int64_t>> observed) {
  if (observed.size() != row_labels.size()) throw DomainError("contingency table: row label count mismatch");
  for (const auto& row : observed) {
    if (row.size() != col_labels.size()) throw DomainError("contingency table: ragged rows");
    if (std::ranges::any_of(row, [](auto v) { return v < 0; })) {
      throw DomainError("contingency table: negative count");
    }
  }

  ContingencyTable table;
  std::vector<std::size_t> keep_cols;
  for (std::size_t j = 0; j < col_labels.size(); ++j) {
    std::int64_t total = 0;
    for (const auto& row : observed) total += row[j];
    if (total > 0) {
      keep_cols.push_back(j);
    } else {
      table.notes.push_back(fmt::format("dropped column '{}' (zero marginal)", col_labels[j]));
    }
  }
  for (auto j : keep_cols) table.col_labels.push_back(col_labels[j]);

  for (std::size_t i = 0; i < observed.size(); ++i) {
    const auto total = std::accumulate(observed[i].begin(), observed[i].end(), std::int64_t{0});
    if (total == 0) {
      table.notes.push_back(fmt::format("dropped row '{}' (zero marginal)", row_labels[i]));
      continue;
    }
    std::vector<std::int64_t> row;
    for (auto j : keep_cols) row.push_back(observed[i][j]);
    table.observed.push_back(std::move(row));
    table.row_labels.push_back(std::move(row_labels[i]));
  }

  std::vector<double> row_totals(table.rows(), 0.0);
  std::vector<double> col_totals(table.cols(), 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    for (std::size_t j = 0; j < table.cols(); ++j) {
      const auto v = static_cast<double>(table.observed[i][j]);
      row_totals[i] += v;
      col_totals[j] += v;
      grand += v;
    }
  }
  table.expected.assign(table.rows(), std::vector<double>(table.cols(), 0.0));
  for (std::size_t i = 0; i < table.rows(); ++i) {
    for (std::size_t j = 0; j < table.cols(); ++j) table.expected[i][j] = row_totals[i] * col_totals[j] / grand;
  }
  return table;
}

std::string_view to_string(TestKind kind) noexcept {
  switch (kind) {
    case TestKind::Pearson: return "pearson";
    case TestKind::LikelihoodRatio: return "likelihood_ratio";
    case TestKind::Compare: return "compare";
    case TestKind::Stationarity: return "stationarity";
    case TestKind::Homogeneity: return "homogeneity";
    case TestKind::Order: return "order";
  }
  return "?";
}

std::string_view to_string(Statistic stat) noexcept { return stat == Statistic::Pearson ? "X2" : "G2"; }

nlohmann::json to_json(const TestResult& result) {
  return {{"kind", to_string(result.kind)},
          {"statistic_type", to_string(result.statistic_type)},
          {"statistic", result.statistic},
          {"df", result.df},
          {"p_value", result.p_value},
          {"notes", result.notes}};
}

namespace {

void require_applicable(const ContingencyTable& table) {
  if (table.rows() < 2 || table.cols() < 2) {
    throw InapplicableError(
        fmt::format("degenerate {}x{} table after dropping zero marginals", table.rows(), table.cols()));
  }
}

TestResult finish(TestKind kind, Statistic type, double statistic, int df, std::vector<std::string> notes) {
  if (df < 1) throw InapplicableError("test has zero degrees of freedom");
  statistic = std::max(statistic, 0.0);
  return TestResult{kind, type, statistic, df, chi_square_sf(statistic, df), std::move(notes)};
}

double pearson_statistic(const ContingencyTable& table) {
  double sum = 0.0;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    for (std::size_t j = 0; j < table.cols(); ++j) {
      const double diff = static_cast<double>(table.observed[i][j]) - table.expected[i][j];
      sum += diff * diff / table.expected[i][j];
    }
  }
  return sum;
}

double g2_statistic(const ContingencyTable& table) {
  double sum = 0.0;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    for (std::size_t j = 0; j < table.cols(); ++j) {
      const auto o = static_cast<double>(table.observed[i][j]);
      if (o > 0.0) sum += o * std::log(o / table.expected[i][j]);
    }
  }
  return 2.0 * sum;
}

int table_df(const ContingencyTable& table) {
  return static_cast<int>((table.rows() - 1) * (table.cols() - 1));
}

std::vector<int> sorted_steps(std::span<const CountMatrix> group) {
  std::vector<int> steps;
  for (const auto& m : group) steps.push_back(m.step);
  std::ranges::sort(steps);
  if (std::ranges::adjacent_find(steps) != steps.end()) throw DomainError("group lists the same step twice");
  return steps;
}

// Columns are (step, from, to) cells in step order, then state-code order.
TestResult grouped_table_test(std::span<const Subgroup> groups, TestKind kind) {
  if (groups.size() < 2) throw InapplicableError("need at least two groups");
  const auto steps = sorted_steps(groups.front().steps);
  if (steps.empty()) throw InapplicableError("groups contain no count matrices");
  for (const auto& g : groups) {
    if (sorted_steps(g.steps) != steps) throw DomainError(fmt::format("group '{}' covers different steps", g.label));
  }

  std::vector<std::string> col_labels;
  for (int step : steps) {
    for (auto from : kAllStates) {
      for (auto to : kAllStates) col_labels.push_back(fmt::format("{}:{}->{}", step_name(step), letter(from), letter(to)));
    }
  }
  std::vector<std::string> row_labels;
  std::vector<std::vector<std::int64_t>> observed;
  for (const auto& g : groups) {
    row_labels.push_back(g.label);
    std::vector<std::int64_t> row;
    for (int step : steps) {
      const auto& m = *std::ranges::find(g.steps, step, &CountMatrix::step);
      for (auto from : kAllStates) {
        for (auto to : kAllStates) row.push_back(m.at(from, to));
      }
    }
    observed.push_back(std::move(row));
  }
  auto table = make_table(std::move(row_labels), std::move(col_labels), std::move(observed));
  require_applicable(table);
  auto notes = table.notes;
  notes.push_back(fmt::format("{}x{} table over (step, from, to) cells; Pearson X2", table.rows(), table.cols()));
  return finish(kind, Statistic::Pearson, pearson_statistic(table), table_df(table), std::move(notes));
}

}  // namespace

TestResult pearson_chi_square(const ContingencyTable& table) {
  require_applicable(table);
  return finish(TestKind::Pearson, Statistic::Pearson, pearson_statistic(table), table_df(table), table.notes);
}

TestResult likelihood_ratio(const ContingencyTable& table) {
  require_applicable(table);
  return finish(TestKind::LikelihoodRatio, Statistic::LikelihoodRatio, g2_statistic(table), table_df(table),
                table.notes);
}

TestResult compare_groups(std::span<const CountMatrix> group_a, std::span<const CountMatrix> group_b) {
  const std::array<Subgroup, 2> groups{Subgroup{"a", {group_a.begin(), group_a.end()}},
                                       Subgroup{"b", {group_b.begin(), group_b.end()}}};
  return grouped_table_test(groups, TestKind::Compare);
}

TestResult test_homogeneity(std::span<const Subgroup> subgroups) {
  return grouped_table_test(subgroups, TestKind::Homogeneity);
}

TestResult test_stationarity(const ChainModel& chain, Statistic statistic) {
  double stat = 0.0;
  double pearson_sum = 0.0;
  int df = 0;
  std::vector<std::string> notes;
  for (auto from : kAllStates) {
    const auto& first = chain.counts(1).counts[index(from)];
    const auto& second = chain.counts(2).counts[index(from)];
    const auto name = display_name(from);
    if (chain.counts(1).row_total(from) == 0 || chain.counts(2).row_total(from) == 0) {
      notes.push_back(fmt::format("skipped origin {} (absent at one step)", name));
      continue;
    }
    std::vector<std::string> cols;
    for (auto to : kAllStates) cols.emplace_back(display_name(to));
    auto table = make_table({"1->2", "2->3"}, std::move(cols),
                            {{first.begin(), first.end()}, {second.begin(), second.end()}});
    if (table.cols() < 2) {
      notes.push_back(fmt::format("skipped origin {} (single destination at both steps)", name));
      continue;
    }
    for (const auto& n : table.notes) notes.push_back(fmt::format("origin {}: {}", name, n));
    const double x2 = pearson_statistic(table);
    const double g2 = g2_statistic(table);
    pearson_sum += x2;
    stat += statistic == Statistic::Pearson ? x2 : g2;
    df += table_df(table);
    notes.push_back(fmt::format("origin {}: X2={:.4f} G2={:.4f} df={}", name, x2, g2, table_df(table)));
  }
  if (df == 0) throw InapplicableError("no origin state is observed with two destinations at both steps");
  if (statistic == Statistic::LikelihoodRatio) {
    notes.push_back(fmt::format("Pearson X2 sum={:.4f} (p={:.4g})", pearson_sum, chi_square_sf(pearson_sum, df)));
  }
  return finish(TestKind::Stationarity, statistic, stat, df, std::move(notes));
}

TestResult test_order(const SecondOrderModel& model) {
  int contexts = 0;
  int middles = 0;
  double g2 = 0.0;
  for (auto s2 : kAllStates) {
    bool middle_seen = false;
    StateProbs first_order{};
    for (auto s1 : kAllStates) {
      if (!model.observed(s1, s2)) continue;
      if (!middle_seen) first_order = model.first_order(s2);
      middle_seen = true;
      ++contexts;
      const auto total = static_cast<double>(model.context_total(s1, s2));
      for (auto s3 : kAllStates) {
        const auto n = static_cast<double>(model.counts[index(s1)][index(s2)][index(s3)]);
        if (n > 0.0) g2 += n * std::log((n / total) / first_order[index(s3)]);
      }
    }
    if (middle_seen) ++middles;
  }
  if (contexts < 2) throw InapplicableError("order test needs at least two observed (s1, s2) contexts");
  constexpr int kFree = static_cast<int>(kNumStates) - 1;
  const int df = kFree * contexts - kFree * middles;
  std::vector<std::string> notes{
      fmt::format("{} observed contexts, {} distinct scene-2 states; df = 2*{} - 2*{}", contexts, middles, contexts,
                  middles)};
  return finish(TestKind::Order, Statistic::LikelihoodRatio, 2.0 * g2, df, std::move(notes));
}

TestResult test_order(std::span<const StateSequence> sequences) {
  return test_order(estimate_second_order(sequences));
}

}  // namespace driverchain
