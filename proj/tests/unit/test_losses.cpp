#include <doctest.h>

#include <cmath>

#include "ltr/losses.hpp"
#include "ltr/metrics.hpp"
#include "testutil.hpp"

using ltr::Graph;
using ltr::Mat;
using ltr::NodeId;
using ltr::RngStream;

namespace {

Graph<double> empty_graph() { return Graph<double>{}; }

double softmax_loss_value(const Mat<double>& scores, const std::vector<int>& labels,
                          const std::vector<std::uint8_t>& valid) {
  auto g = empty_graph();
  NodeId row = g.tape.leaf(scores);
  return g.tape.value(ltr::softmax_ce_loss(g, row, labels, valid)).data[0];
}

double approx_ndcg_value(const Mat<double>& scores, const std::vector<int>& labels,
                         const std::vector<std::uint8_t>& valid, double eta) {
  auto g = empty_graph();
  NodeId row = g.tape.leaf(scores);
  return g.tape.value(ltr::approx_ndcg_loss(g, row, labels, valid, eta)).data[0];
}

}  // namespace

TEST_CASE("softmax cross entropy values") {
  SUBCASE("equal scores, one relevant, n docs -> ln(n)") {
    for (int n : {2, 4, 7}) {
      Mat<double> s(1, n);
      std::vector<int> y(n, 0);
      y[n / 2] = 1;
      CHECK(softmax_loss_value(s, y, std::vector<std::uint8_t>(n, 1)) ==
            doctest::Approx(std::log(double(n))).epsilon(1e-12));
    }
  }
  SUBCASE("single-document list is zero loss") {
    CHECK(softmax_loss_value(Mat<double>(1, 1, {3.7}), {1}, {1}) ==
          doctest::Approx(0.0));
  }
  SUBCASE("direct evaluation for y=[1,0], scores=[2,0]") {
    const double want = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
    CHECK(softmax_loss_value(Mat<double>(1, 2, {2, 0}), {1, 0}, {1, 1}) ==
          doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("invariant to adding a constant to all valid scores") {
    RngStream rng(3);
    Mat<double> s = testutil::random_mat(1, 5, rng);
    Mat<double> shifted = s;
    for (auto& v : shifted.data) v += 11.25;
    std::vector<int> y = {0, 2, 0, 1, 0};
    auto valid = std::vector<std::uint8_t>(5, 1);
    CHECK(softmax_loss_value(s, y, valid) ==
          doctest::Approx(softmax_loss_value(shifted, y, valid)).epsilon(1e-9));
  }
  SUBCASE("all-zero labels rejected") {
    auto g = empty_graph();
    NodeId row = g.tape.leaf(Mat<double>(1, 2, {1, 2}));
    std::vector<int> y = {0, 0};
    CHECK_THROWS_AS(ltr::softmax_ce_loss(g, row, y, {1, 1}), ltr::DataError);
  }
  SUBCASE("masked slots do not contribute") {
    // Third slot is masked; loss must equal the two-doc loss.
    Mat<double> s3(1, 3, {2, 0, 99});
    std::vector<int> y3 = {1, 0, 5};
    const double a = softmax_loss_value(s3, y3, {1, 1, 0});
    const double b = softmax_loss_value(Mat<double>(1, 2, {2, 0}), {1, 0}, {1, 1});
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
}

TEST_CASE("approx ndcg loss values") {
  SUBCASE("single relevant single-document list is -1") {
    CHECK(approx_ndcg_value(Mat<double>(1, 1, {0.3}), {1}, {1}, 0.1) ==
          doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("with exact ranks the negated loss equals full-list NDCG") {
    RngStream rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 3 + int(rng.next_below(5));
      Mat<double> s = testutil::random_mat(1, n, rng.fork(trial));
      std::vector<int> y(n);
      bool any = false;
      for (int i = 0; i < n; ++i) {
        y[i] = int(rng.next_below(3));
        any |= y[i] > 0;
      }
      if (!any) y[0] = 2;
      auto valid = std::vector<std::uint8_t>(n, 1);

      // Evaluate the loss formula with true ranks substituted.
      auto order = ltr::rank_order(std::span<const double>(s.data.data(), s.data.size()));
      std::vector<int> rank(n);
      for (int r = 0; r < n; ++r) rank[order[r]] = r + 1;
      double acc = 0;
      for (int i = 0; i < n; ++i)
        acc += (std::pow(2.0, y[i]) - 1.0) / std::log2(1.0 + rank[i]);
      const double neg_loss_exact = acc / ltr::ideal_dcg(y, valid);

      const double ndcg = ltr::ndcg_at_k(y, std::span<const double>(s.data.data(), s.data.size()), n);
      CHECK(neg_loss_exact == doctest::Approx(ndcg).epsilon(1e-12));
    }
  }
  SUBCASE("negated loss never exceeds 1") {
    RngStream rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 2 + int(rng.next_below(6));
      Mat<double> s = testutil::random_mat(1, n, rng.fork(trial));
      std::vector<int> y(n, 0);
      y[rng.next_below(n)] = 1 + int(rng.next_below(3));
      const double eta = trial % 2 ? 0.1 : 10.0;
      CHECK(-approx_ndcg_value(s, y, std::vector<std::uint8_t>(n, 1), eta) <= 1.0 + 1e-12);
    }
  }
  SUBCASE("rank approximation error is non-increasing in eta") {
    RngStream rng(9);
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 5;
      // Distinct scores with comfortable gaps.
      std::vector<double> base = {0.0, 0.4, 0.8, 1.2, 1.6};
      RngStream r2 = rng.fork(trial);
      r2.shuffle(base);
      Mat<double> s(1, n);
      for (int i = 0; i < n; ++i) s.data[i] = base[i];
      auto valid = std::vector<std::uint8_t>(n, 1);
      auto order = ltr::rank_order(std::span<const double>(s.data.data(), s.data.size()));
      std::vector<int> rank(n);
      for (int r = 0; r < n; ++r) rank[order[r]] = r + 1;

      double prev = 1e300;
      for (double eta : {0.1, 1.0, 10.0, 50.0}) {
        auto g = empty_graph();
        NodeId row = g.tape.leaf(s);
        const auto& rh = g.tape.value(g.tape.approx_rank(row, valid, eta));
        double worst = 0;
        for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(rh.data[i] - rank[i]));
        CHECK(worst <= prev + 1e-12);
        prev = worst;
      }
      CHECK(prev < 1e-6);  // eta = 50 is effectively exact at these gaps
    }
  }
}

TEST_CASE("losses are invariant to simultaneous permutation") {
  RngStream rng(11);
  const int n = 6;
  Mat<double> s = testutil::random_mat(1, n, rng.fork(0));
  std::vector<int> y = {0, 2, 1, 0, 3, 0};
  std::vector<std::uint8_t> valid = {1, 1, 1, 1, 1, 0};
  std::vector<int> perm = {4, 0, 5, 2, 1, 3};

  Mat<double> ps(1, n);
  std::vector<int> py(n);
  std::vector<std::uint8_t> pvalid(n);
  for (int i = 0; i < n; ++i) {
    ps.data[i] = s.data[perm[i]];
    py[i] = y[perm[i]];
    pvalid[i] = valid[perm[i]];
  }
  CHECK(softmax_loss_value(s, y, valid) ==
        doctest::Approx(softmax_loss_value(ps, py, pvalid)).epsilon(1e-12));
  CHECK(approx_ndcg_value(s, y, valid, 0.7) ==
        doctest::Approx(approx_ndcg_value(ps, py, pvalid, 0.7)).epsilon(1e-12));
}

TEST_CASE("loss gradients match finite differences") {
  RngStream rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 4;
    Mat<double> s = testutil::random_mat(1, n, rng.fork(trial));
    std::vector<int> y = {0, 2, 1, 0};
    auto valid = std::vector<std::uint8_t>(n, 1);

    for (bool use_softmax : {true, false}) {
      auto loss = [&] {
        auto g = empty_graph();
        NodeId row = g.tape.leaf(s, true);
        NodeId l = use_softmax ? ltr::softmax_ce_loss(g, row, y, valid)
                               : ltr::approx_ndcg_loss(g, row, y, valid, 1.0);
        return g.tape.value(l).data[0];
      };
      auto g = empty_graph();
      NodeId row = g.tape.leaf(s, true);
      NodeId l = use_softmax ? ltr::softmax_ce_loss(g, row, y, valid)
                             : ltr::approx_ndcg_loss(g, row, y, valid, 1.0);
      g.tape.backward(l);
      CHECK(testutil::max_rel_err(g.tape.grad(row), testutil::fd_gradient(loss, s)) < 1e-4);
    }
  }
}
