// End-to-end checks of the command-line interface. The binary path comes
// from the LTR_BIN environment variable (set by ctest).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ltr/dataset.hpp"
#include "ltr/metrics.hpp"
#include "ltr/rng.hpp"

namespace fs = std::filesystem;

namespace {

std::string bin() {
  const char* b = std::getenv("LTR_BIN");
  REQUIRE_MESSAGE(b != nullptr, "LTR_BIN must point at the ltr binary");
  return b;
}

int run(const std::string& args, const std::string& out_file = "") {
  std::string cmd = bin() + " " + args;
  if (!out_file.empty()) cmd += " > " + out_file + " 2>&1";
  else cmd += " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("ltr_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

void write_fixture(const std::string& path, int n_queries = 10) {
  ltr::RngStream root(17);
  ltr::Dataset ds;
  ds.n_features = 4;
  for (int q = 0; q < n_queries; ++q) {
    ltr::RankedQuery rq;
    rq.qid = std::to_string(q);
    rq.features = ltr::Mat<double>(6, 4);
    std::vector<double> target(6, 0.0);
    ltr::RngStream rng = root.fork(q);
    for (int d = 0; d < 6; ++d)
      for (int f = 0; f < 4; ++f) {
        rq.features(d, f) = rng.next_uniform() * 2 - 1;
        target[d] += rq.features(d, f) * (f + 1);
      }
    auto order = ltr::rank_order(target);
    rq.labels.assign(6, 0);
    rq.labels[order[0]] = 1;
    ds.queries.push_back(std::move(rq));
  }
  ltr::serialize_ranking_file(ds, path);
}

void write_config(const std::string& path, const std::string& train_path) {
  std::ofstream out(path);
  out << "[data]\n"
      << "train_path = " << train_path << "\n"
      << "max_docs = 0\n"
      << "[scorer]\n"
      << "family = attn_din\n"
      << "dense.widths = 8\n"
      << "attn.width = 4\n"
      << "attn.heads = 2\n"
      << "[train]\n"
      << "max_steps = 25\n"
      << "batch_size = 4\n"
      << "lr = 0.05\n"
      << "seed = 9\n";
}

}  // namespace

TEST_CASE("missing dataset path exits 2 and names the path") {
  Workspace ws;
  write_config(ws.path("cfg.ini"), ws.path("nope.txt"));
  const int code = run("train --config " + ws.path("cfg.ini") + " --out-dir " +
                           ws.path("out"),
                       ws.path("log.txt"));
  CHECK(code == 2);
  CHECK(slurp(ws.path("log.txt")).find("nope.txt") != std::string::npos);
}

TEST_CASE("unknown config keys exit 2") {
  Workspace ws;
  write_fixture(ws.path("train.txt"));
  write_config(ws.path("cfg.ini"), ws.path("train.txt"));
  const int code = run("train --config " + ws.path("cfg.ini") + " --out-dir " +
                           ws.path("out") + " --override no.such.key=1",
                       ws.path("log.txt"));
  CHECK(code == 2);
  CHECK(slurp(ws.path("log.txt")).find("no.such.key") != std::string::npos);
}

TEST_CASE("malformed data exits 3") {
  Workspace ws;
  std::ofstream(ws.path("bad.txt")) << "not a valid line\n";
  write_config(ws.path("cfg.ini"), ws.path("bad.txt"));
  const int code = run("train --config " + ws.path("cfg.ini") + " --out-dir " + ws.path("out"),
                       ws.path("log.txt"));
  CHECK(code == 3);
}

TEST_CASE("train writes all four artifact kinds and echoes overrides") {
  Workspace ws;
  write_fixture(ws.path("train.txt"));
  write_config(ws.path("cfg.ini"), ws.path("train.txt"));
  const int code = run("train --config " + ws.path("cfg.ini") + " --out-dir " + ws.path("out") +
                           " --override loss.kind=approx_ndcg",
                       ws.path("log.txt"));
  REQUIRE(code == 0);
  CHECK(fs::exists(ws.path("out") + "/checkpoint_best.bin"));
  CHECK(fs::exists(ws.path("out") + "/checkpoint_final.bin"));
  CHECK(fs::exists(ws.path("out") + "/run_log.txt"));
  CHECK(fs::exists(ws.path("out") + "/metrics.txt"));
  const std::string cfg = slurp(ws.path("out") + "/config.txt");
  CHECK(cfg.find("loss.kind = approx_ndcg") != std::string::npos);
  CHECK(cfg.find("scorer.n_features = 4") != std::string::npos);  // inferred
  const std::string log = slurp(ws.path("out") + "/run_log.txt");
  CHECK(log.find("step=0 loss=") != std::string::npos);

  SUBCASE("the echoed config alone reproduces the run") {
    const int code2 = run("train --config " + ws.path("out") + "/config.txt --out-dir " +
                              ws.path("out2"),
                          ws.path("log2.txt"));
    REQUIRE(code2 == 0);
    CHECK(slurp(ws.path("out") + "/metrics_records.txt") ==
          slurp(ws.path("out2") + "/metrics_records.txt"));
  }

  SUBCASE("evaluate and predict consume the checkpoint") {
    const int ecode = run("evaluate --checkpoint " + ws.path("out") + "/checkpoint_best.bin" +
                              " --data " + ws.path("train.txt") + " --metrics ndcg@1 mrr",
                          ws.path("eval.txt"));
    REQUIRE(ecode == 0);
    CHECK(slurp(ws.path("eval.txt")).find("metric=mrr") != std::string::npos);

    const int pcode = run("predict --checkpoint " + ws.path("out") + "/checkpoint_best.bin" +
                              " --data " + ws.path("train.txt") + " --out " + ws.path("pred.tsv"),
                          ws.path("pred_log.txt"));
    REQUIRE(pcode == 0);

    // Ranks in the prediction output agree with the shared score ordering.
    std::ifstream pred(ws.path("pred.tsv"));
    std::string header;
    std::getline(pred, header);
    std::string qid;
    int doc, rank;
    double score;
    std::vector<double> scores;
    std::vector<int> ranks;
    std::string prev_qid;
    auto check_query = [&]() {
      if (scores.empty()) return;
      auto order = ltr::rank_order(scores);
      for (std::size_t r = 0; r < order.size(); ++r) CHECK(ranks[order[r]] == int(r) + 1);
      scores.clear();
      ranks.clear();
    };
    while (pred >> qid >> doc >> score >> rank) {
      if (qid != prev_qid) {
        check_query();
        prev_qid = qid;
      }
      scores.push_back(score);
      ranks.push_back(rank);
    }
    check_query();
  }
}

TEST_CASE("benchmark reports medians, p95 and parameter counts") {
  Workspace ws;
  // Workloads around a millisecond per repetition keep the medians well
  // clear of timer noise.
  const std::string overrides =
      " --override scorer.n_features=24 --override scorer.dense.widths=64,32"
      " --override scorer.attn.width=16";
  const int code = run("benchmark" + overrides +
                           " --list-sizes 40 --reps 60 --warmup 20 --out-dir " + ws.path("bench"),
                       ws.path("bench_log.txt"));
  REQUIRE(code == 0);
  const std::string records = slurp(ws.path("bench") + "/benchmark_records.txt");
  CHECK(records.find("scorer=univariate list_size=40 median_ms=") != std::string::npos);
  CHECK(records.find("scorer=gsf") != std::string::npos);
  CHECK(records.find("scorer=attn_din") != std::string::npos);
  CHECK(records.find("params=") != std::string::npos);

  SUBCASE("two runs of the same scorer have medians within 20 percent") {
    const int code2 = run("benchmark" + overrides +
                              " --families univariate --list-sizes 40 --reps 60 --warmup 20"
                              " --out-dir " + ws.path("bench2"),
                          ws.path("bench2_log.txt"));
    REQUIRE(code2 == 0);
    auto median_of = [](const std::string& text) {
      auto pos = text.find("median_ms=");
      REQUIRE(pos != std::string::npos);
      return std::stod(text.substr(pos + 10));
    };
    const double m1 = median_of(slurp(ws.path("bench") + "/benchmark_records.txt"));
    const double m2 = median_of(slurp(ws.path("bench2") + "/benchmark_records.txt"));
    CHECK(std::abs(m1 - m2) <= 0.2 * std::max(m1, m2));
  }
}

TEST_CASE("params table is consistent across commands") {
  Workspace ws;
  const int code = run(
      "params --override scorer.n_features=20 --override scorer.dense.widths=16,8"
      " --group-sizes 2 4",
      ws.path("params.txt"));
  REQUIRE(code == 0);
  const std::string out = slurp(ws.path("params.txt"));
  CHECK(out.find("univariate\t") != std::string::npos);
  CHECK(out.find("gsf(m=2)\t") != std::string::npos);
  CHECK(out.find("gsf(m=4)\t") != std::string::npos);
  CHECK(out.find("attn_din\t") != std::string::npos);
}
