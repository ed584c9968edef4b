#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ltr/metrics.hpp"
#include "ltr/rng.hpp"
#include "testutil.hpp"

using ltr::RngStream;

namespace {

// Positions without sorting: 1 + number of documents strictly better, with
// earlier-index ties counted as better.
std::vector<int> oracle_positions(const std::vector<double>& scores) {
  const int n = int(scores.size());
  std::vector<int> pos(n, 1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (scores[j] > scores[i] || (scores[j] == scores[i] && j < i)) pos[i]++;
    }
  return pos;
}

// Ideal DCG@k found by brute force over all permutations (n <= 8).
double oracle_ideal_dcg(const std::vector<int>& labels, int k) {
  std::vector<int> perm(labels.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0;
  do {
    double dcg = 0;
    for (int r = 0; r < std::min<int>(k, int(labels.size())); ++r)
      dcg += (std::pow(2.0, labels[perm[r]]) - 1.0) / std::log2(2.0 + r);
    best = std::max(best, dcg);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double oracle_ndcg(const std::vector<int>& labels, const std::vector<double>& scores, int k) {
  auto pos = oracle_positions(scores);
  double dcg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (pos[i] <= k) dcg += (std::pow(2.0, labels[i]) - 1.0) / std::log2(1.0 + pos[i]);
  return dcg / oracle_ideal_dcg(labels, k);
}

}  // namespace

TEST_CASE("ndcg basics") {
  SUBCASE("scores in label order give ndcg 1") {
    std::vector<int> y = {3, 2, 1, 0};
    std::vector<double> s = {9, 6, 3, 1};
    for (int k : {1, 2, 4}) CHECK(ltr::ndcg_at_k(y, s, k) == doctest::Approx(1.0));
  }
  SUBCASE("reversed two-document list has ndcg@1 of 0") {
    std::vector<int> y = {0, 1};
    std::vector<double> s = {5, 2};
    CHECK(ltr::ndcg_at_k(y, s, 1) == doctest::Approx(0.0));
  }
  SUBCASE("ties break by original index") {
    std::vector<int> y = {0, 1};
    std::vector<double> s = {1.0, 1.0};
    // Document 0 wins the tie, so the relevant one sits at rank 2.
    CHECK(ltr::ndcg_at_k(y, s, 1) == doctest::Approx(0.0));
  }
  SUBCASE("all-zero labels are a contract violation") {
    std::vector<int> y = {0, 0};
    std::vector<double> s = {1, 2};
    CHECK_THROWS_AS(ltr::ndcg_at_k(y, s, 1), ltr::ContractError);
  }
  SUBCASE("random instances match the brute-force oracle") {
    RngStream rng(3);
    for (int trial = 0; trial < 30; ++trial) {
      const int n = 2 + int(rng.next_below(5));  // up to 6 docs, 8! is the oracle limit
      std::vector<int> y(n);
      std::vector<double> s(n);
      bool any = false;
      for (int i = 0; i < n; ++i) {
        y[i] = int(rng.next_below(4));
        s[i] = rng.next_below(4) * 0.5;  // deliberate ties
        any |= y[i] > 0;
      }
      if (!any) y[0] = 1;
      for (int k : {1, 3, n})
        CHECK(ltr::ndcg_at_k(y, s, k) == doctest::Approx(oracle_ndcg(y, s, k)).epsilon(1e-12));
    }
  }
}

TEST_CASE("mrr and arp") {
  SUBCASE("relevant at rank 1") {
    std::vector<int> y = {1, 0};
    std::vector<double> s = {2, 1};
    CHECK(ltr::reciprocal_rank(y, s) == doctest::Approx(1.0));
  }
  SUBCASE("single relevant at rank 4 of 6") {
    std::vector<int> y = {0, 0, 0, 1, 0, 0};
    std::vector<double> s = {9, 8, 7, 3, 2, 1};
    CHECK(ltr::reciprocal_rank(y, s) == doctest::Approx(0.25));
    CHECK(ltr::relevance_position(y, s) == doctest::Approx(4.0));
  }
  SUBCASE("no relevant item is a contract violation") {
    std::vector<int> y = {0, 0};
    std::vector<double> s = {1, 2};
    CHECK_THROWS_AS(ltr::reciprocal_rank(y, s), ltr::ContractError);
    CHECK_THROWS_AS(ltr::relevance_position(y, s), ltr::ContractError);
  }
  SUBCASE("random 6-doc instances match the sort-and-scan oracle") {
    RngStream rng(5);
    for (int trial = 0; trial < 30; ++trial) {
      const int n = 6;
      std::vector<int> y(n, 0);
      std::vector<double> s(n);
      for (int i = 0; i < n; ++i) s[i] = rng.next_below(5) * 0.25;
      y[rng.next_below(n)] = 1;
      if (trial % 3 == 0) y[rng.next_below(n)] = 1;  // sometimes two relevant

      auto pos = oracle_positions(s);
      int first = n + 1;
      double sum = 0;
      int count = 0;
      for (int i = 0; i < n; ++i)
        if (y[i] > 0) {
          first = std::min(first, pos[i]);
          sum += pos[i];
          ++count;
        }
      CHECK(ltr::reciprocal_rank(y, s) == doctest::Approx(1.0 / first).epsilon(1e-12));
      CHECK(ltr::relevance_position(y, s) == doctest::Approx(sum / count).epsilon(1e-12));
    }
  }
}

TEST_CASE("rank_order is stable descending") {
  std::vector<double> s = {1.0, 3.0, 1.0, 3.0};
  auto order = ltr::rank_order(s);
  CHECK(order == std::vector<int>{1, 3, 0, 2});
}

TEST_CASE("bootstrap confidence intervals") {
  SUBCASE("deterministic given seed and covers the mean") {
    RngStream rng(7);
    std::vector<double> vals(200);
    for (auto& v : vals) v = rng.next_uniform();
    auto a = ltr::bootstrap_metric("m", vals, 1000, 42);
    auto b = ltr::bootstrap_metric("m", vals, 1000, 42);
    CHECK(a.ci_low == b.ci_low);
    CHECK(a.ci_high == b.ci_high);
    CHECK(a.ci_low < a.mean);
    CHECK(a.mean < a.ci_high);
  }
  SUBCASE("width shrinks like 1/sqrt(n)") {
    RngStream rng(9);
    std::vector<double> small(100), big(1000);
    for (auto& v : small) v = rng.next_normal();
    for (auto& v : big) v = rng.next_normal();
    auto a = ltr::bootstrap_metric("m", small, 1000, 1);
    auto b = ltr::bootstrap_metric("m", big, 1000, 1);
    const double ratio = (a.ci_high - a.ci_low) / (b.ci_high - b.ci_low);
    CHECK(ratio > std::sqrt(10.0) * 0.7);
    CHECK(ratio < std::sqrt(10.0) * 1.3);
  }
}

TEST_CASE("report formatting") {
  ltr::MetricReport rep;
  rep.n_queries = 3;
  rep.metrics.push_back(ltr::bootstrap_metric("ndcg@5", {0.5, 0.6, 0.7}, 200, 3));
  rep.metrics.push_back(ltr::bootstrap_metric("mrr", {1.0, 0.5, 0.25}, 200, 3));
  const std::string table = ltr::format_table(rep);
  CHECK(table.find("ndcg@5") != std::string::npos);
  const std::string records = ltr::format_records(rep);
  CHECK(records.find("metric=ndcg k=5 mean=0.6") != std::string::npos);
  CHECK(records.find("metric=mrr mean=") != std::string::npos);
}
