#include <doctest.h>

#include <map>
#include <sstream>

#include "ltr/dataset.hpp"
#include "ltr/error.hpp"
#include "ltr/rng.hpp"

using ltr::Dataset;
using ltr::RankedQuery;

namespace {

Dataset parse_text(const std::string& text) {
  std::istringstream in(text);
  return ltr::parse_ranking_stream(in);
}

// Small synthetic fixture: n_qids queries, docs_per docs, n_features features.
Dataset make_fixture(int n_qids, int docs_per, int n_features, std::uint64_t seed = 1) {
  ltr::RngStream rng(seed);
  Dataset ds;
  ds.n_features = n_features;
  for (int q = 0; q < n_qids; ++q) {
    RankedQuery rq;
    rq.qid = std::to_string(100 + q);
    rq.features = ltr::Mat<double>(docs_per, n_features);
    for (int d = 0; d < docs_per; ++d) {
      rq.labels.push_back(int(rng.next_below(3)));
      for (int f = 0; f < n_features; ++f)
        rq.features(d, f) = rng.next_uniform() * 10 - 5;
    }
    if (!rq.has_relevant()) rq.labels[0] = 1;
    ds.queries.push_back(std::move(rq));
  }
  return ds;
}

}  // namespace

TEST_CASE("parse groups lines by qid in file order") {
  Dataset ds = parse_text("2 qid:1 1:0.5\n0 qid:1 1:0.3\n");
  REQUIRE(ds.queries.size() == 1);
  const auto& q = ds.queries[0];
  CHECK(q.qid == "1");
  CHECK(q.labels == std::vector<int>{2, 0});
  CHECK(q.features(0, 0) == 0.5);
  CHECK(q.features(1, 0) == 0.3);
}

TEST_CASE("parse empty file") {
  Dataset ds = parse_text("");
  CHECK(ds.queries.empty());
  CHECK(ds.n_features == 0);
}

TEST_CASE("parse accepts non-contiguous qids and missing indices") {
  Dataset ds = parse_text(
      "1 qid:a 1:1.0 3:3.0\n"
      "0 qid:b 2:2.0\n"
      "2 qid:a 1:9.0\n");
  REQUIRE(ds.queries.size() == 2);
  CHECK(ds.n_features == 3);
  CHECK(ds.queries[0].n_docs() == 2);
  CHECK(ds.queries[0].features(0, 1) == 0.0);  // missing index defaults to 0
  CHECK(ds.queries[0].features(1, 0) == 9.0);
  CHECK(ds.queries[1].features(0, 1) == 2.0);
}

TEST_CASE("parse errors carry line numbers") {
  CHECK_THROWS_WITH_AS(parse_text("1 qid:1 1:0.5\nnot a line\n"),
                       doctest::Contains("line 2"), ltr::ParseError);
  CHECK_THROWS_AS(parse_text("-1 qid:1 1:0.5\n"), ltr::ParseError);
  CHECK_THROWS_AS(parse_text("1 noqid 1:0.5\n"), ltr::ParseError);
  CHECK_THROWS_AS(parse_text("1 qid:1 0:0.5\n"), ltr::ParseError);
}

TEST_CASE("parse-serialize round trip") {
  Dataset ds = make_fixture(3, 4, 5);
  std::ostringstream out;
  ltr::serialize_ranking_stream(ds, out);
  Dataset back = parse_text(out.str());
  REQUIRE(back.queries.size() == ds.queries.size());
  CHECK(back.n_features == ds.n_features);
  for (std::size_t i = 0; i < ds.queries.size(); ++i) {
    CHECK(back.queries[i].qid == ds.queries[i].qid);
    CHECK(back.queries[i].labels == ds.queries[i].labels);
    CHECK(back.queries[i].features.data == ds.queries[i].features.data);
  }
}

TEST_CASE("filter_no_relevant") {
  Dataset ds;
  ds.n_features = 1;
  auto add = [&](std::vector<int> labels) {
    RankedQuery q;
    q.qid = std::to_string(ds.queries.size());
    q.labels = std::move(labels);
    q.features = ltr::Mat<double>(int(q.labels.size()), 1);
    ds.queries.push_back(std::move(q));
  };
  add({0, 0, 0});
  add({0, 1});
  for (int i = 0; i < 8; ++i) add(i % 2 ? std::vector<int>{0, 2} : std::vector<int>{0, 0});

  Dataset kept = ltr::filter_no_relevant(ds);
  // Exactly the all-zero ones are gone.
  std::size_t expect = 0;
  for (const auto& q : ds.queries) expect += q.has_relevant();
  CHECK(kept.queries.size() == expect);
  for (const auto& q : kept.queries) CHECK(q.has_relevant());
}

TEST_CASE("truncate_lists keeps the head of the file order") {
  Dataset ds = make_fixture(1, 250, 2);
  for (int d = 0; d < 250; ++d) ds.queries[0].features(d, 0) = d;
  Dataset cut = ltr::truncate_lists(ds, 200);
  REQUIRE(cut.queries[0].n_docs() == 200);
  for (int d = 0; d < 200; ++d) CHECK(cut.queries[0].features(d, 0) == d);

  Dataset small = ltr::truncate_lists(make_fixture(1, 50, 2), 200);
  CHECK(small.queries[0].n_docs() == 50);
}

TEST_CASE("truncate and filter commute when relevant docs are in the head") {
  // Construct queries whose relevant documents all sit in the first 3 slots.
  Dataset ds = make_fixture(6, 8, 2, 9);
  for (auto& q : ds.queries) {
    for (auto& y : q.labels) y = 0;
    q.labels[1] = 2;
  }
  ds.queries[4].labels[1] = 0;  // one all-zero query

  Dataset a = ltr::filter_no_relevant(ltr::truncate_lists(ds, 3));
  Dataset b = ltr::truncate_lists(ltr::filter_no_relevant(ds), 3);
  REQUIRE(a.queries.size() == b.queries.size());
  for (std::size_t i = 0; i < a.queries.size(); ++i) {
    CHECK(a.queries[i].qid == b.queries[i].qid);
    CHECK(a.queries[i].labels == b.queries[i].labels);
    CHECK(a.queries[i].features.data == b.queries[i].features.data);
  }
}

TEST_CASE("feature stats") {
  SUBCASE("constant feature maps to zero; two-point standardization") {
    Dataset ds = parse_text(
        "1 qid:1 1:1 2:0\n"
        "0 qid:1 1:1 2:2\n"
        "1 qid:2 1:1 2:0\n"
        "0 qid:2 1:1 2:2\n");
    auto st = ltr::fit_feature_stats(ds);
    CHECK(st.constant[0]);
    CHECK_FALSE(st.constant[1]);
    Dataset norm = ltr::apply_normalization(ds, st);
    for (const auto& q : norm.queries) {
      CHECK(q.features(0, 0) == 0.0);
      CHECK(q.features(0, 1) == doctest::Approx(-1.0));  // population std
      CHECK(q.features(1, 1) == doctest::Approx(1.0));
    }
  }
  SUBCASE("normalized train split has near-zero mean") {
    Dataset ds = make_fixture(20, 7, 4, 33);
    auto st = ltr::fit_feature_stats(ds);
    Dataset norm = ltr::apply_normalization(ds, st);
    for (int f = 0; f < 4; ++f) {
      double mean = 0;
      std::size_t n = 0;
      for (const auto& q : norm.queries)
        for (int d = 0; d < q.n_docs(); ++d, ++n) mean += q.features(d, f);
      mean /= double(n);
      CHECK(std::abs(mean) < 1e-6);
    }
  }
  SUBCASE("unfitted stats rejected") {
    ltr::FeatureStats st;
    CHECK_THROWS_AS(ltr::apply_normalization(make_fixture(1, 2, 2), st), ltr::DataError);
  }
  SUBCASE("sidecar round trip") {
    Dataset ds = make_fixture(5, 4, 3, 21);
    auto st = ltr::fit_feature_stats(ds);
    const std::string path = "feature_stats_test.txt";
    ltr::save_feature_stats(st, path);
    auto back = ltr::load_feature_stats(path);
    CHECK(back.mean == st.mean);
    CHECK(back.std_dev == st.std_dev);
    std::remove(path.c_str());
  }
}

TEST_CASE("make_batches") {
  Dataset ds = make_fixture(3, 4, 2);
  SUBCASE("batch sizes [2,1] for 3 queries at batch_size 2") {
    auto batches = ltr::make_batches(ds, 2, 0, false);
    REQUIRE(batches.size() == 2);
    CHECK(batches[0].n_queries == 2);
    CHECK(batches[1].n_queries == 1);
  }
  SUBCASE("no shuffle preserves file order") {
    auto batches = ltr::make_batches(ds, 2, 123, false);
    CHECK(batches[0].qids[0] == "100");
    CHECK(batches[0].qids[1] == "101");
    CHECK(batches[1].qids[0] == "102");
  }
  SUBCASE("every (qid, doc) appears exactly once per epoch") {
    Dataset mixed = make_fixture(7, 5, 2, 5);
    // vary list sizes
    mixed.queries[2] = ltr::truncate_lists(make_fixture(1, 2, 2, 6), 2).queries[0];
    mixed.queries[2].qid = "102";
    auto batches = ltr::make_batches(mixed, 3, 99, true);
    std::map<std::pair<std::string, int>, int> seen;
    for (const auto& b : batches)
      for (int q = 0; q < b.n_queries; ++q)
        for (int s = 0; s < b.max_list; ++s)
          if (b.valid(q, s)) seen[{b.qids[q], s}]++;
    std::size_t expected = mixed.total_docs();
    CHECK(seen.size() == expected);
    for (const auto& [k, v] : seen) CHECK(v == 1);
  }
  SUBCASE("padding is zeroed and masked") {
    Dataset mixed = make_fixture(2, 3, 2, 8);
    mixed.queries[1] = ltr::truncate_lists(mixed, 1).queries[1];
    auto batches = ltr::make_batches(mixed, 2, 0, false);
    const auto& b = batches[0];
    CHECK(b.max_list == 3);
    CHECK(b.valid(0, 2));
    CHECK_FALSE(b.valid(1, 1));
    CHECK(b.label(1, 2) == 0);
    CHECK(b.feature(1, 2, 0) == 0.0);
  }
  SUBCASE("same seed, same batch order") {
    auto b1 = ltr::make_batches(ds, 2, 77, true);
    auto b2 = ltr::make_batches(ds, 2, 77, true);
    REQUIRE(b1.size() == b2.size());
    for (std::size_t i = 0; i < b1.size(); ++i) CHECK(b1[i].qids == b2[i].qids);
  }
}
