#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "ltr/checkpoint.hpp"
#include "ltr/scorers.hpp"
#include "testutil.hpp"

using ltr::CheckpointData;
using ltr::Mat;
using ltr::TensorBlob;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("tensor blobs preserve payloads per dtype") {
  ltr::RngStream rng(3);
  Mat<float> mf = Mat<float>::uniform(3, 4, rng.fork(0), -1.f, 1.f);
  TensorBlob tb = TensorBlob::from("w", mf);
  CHECK(tb.dtype == 'f');
  CHECK(tb.to_mat<float>().data == mf.data);
  CHECK_THROWS_AS(tb.to_mat<double>(), ltr::DataError);
}

TEST_CASE("checkpoint file round trip") {
  CheckpointData ckpt;
  ckpt.precision = 'd';
  ckpt.step = 123;
  ckpt.rng_state = 0xDEADBEEF12345678ULL;
  ckpt.spec_text = "scorer.family = univariate\nscorer.n_features = 3\n";
  ltr::RngStream rng(5);
  ckpt.tensors.push_back(TensorBlob::from("param/a", testutil::random_mat(2, 3, rng.fork(0))));
  ckpt.tensors.push_back(TensorBlob::from("param/b", testutil::random_mat(1, 1, rng.fork(1))));

  TempFile tmp("ckpt_unit_test.bin");
  ltr::save_checkpoint_file(ckpt, tmp.path);
  CheckpointData back = ltr::load_checkpoint_file(tmp.path);
  CHECK(back.version == 1);
  CHECK(back.precision == 'd');
  CHECK(back.step == 123);
  CHECK(back.rng_state == ckpt.rng_state);
  CHECK(back.spec_text == ckpt.spec_text);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[0].name == "param/a");
  CHECK(back.tensors[0].bytes == ckpt.tensors[0].bytes);
}

TEST_CASE("corrupt files are rejected") {
  TempFile tmp("ckpt_corrupt_test.bin");
  {
    std::ofstream out(tmp.path, std::ios::binary);
    out << "definitely not a checkpoint";
  }
  CHECK_THROWS_AS(ltr::load_checkpoint_file(tmp.path), ltr::DataError);
  CHECK_THROWS_AS(ltr::load_checkpoint_file("no_such_file.bin"), ltr::DataError);
}

TEST_CASE("model pack/unpack restores parameters and batch-norm state") {
  ltr::ScorerSpec spec;
  spec.family = ltr::ScorerFamily::univariate;
  spec.n_features = 4;
  spec.dense.hidden = {3};
  spec.dense.input_batch_norm = true;
  auto params = ltr::init_scorer_params<float>(spec, 11);
  auto stats = ltr::init_scorer_stats<float>(spec);
  stats.at(0).mean.data[0] = 0.75f;  // make state distinctive
  stats.at(0).initialized = true;

  CheckpointData ckpt;
  ltr::pack_model(params, stats, ckpt);

  auto params2 = ltr::init_scorer_params<float>(spec, 999);  // different init
  auto stats2 = ltr::init_scorer_stats<float>(spec);
  ltr::unpack_model(ckpt, params2, stats2);
  for (const auto& name : params.names())
    CHECK(params2.value(name).data == params.value(name).data);
  CHECK(stats2.at(0).mean.data[0] == 0.75f);
  CHECK(stats2.at(0).initialized);

  SUBCASE("missing tensors are reported by name") {
    CheckpointData incomplete = ckpt;
    incomplete.tensors.erase(incomplete.tensors.begin());
    auto params3 = ltr::init_scorer_params<float>(spec, 1);
    auto stats3 = ltr::init_scorer_stats<float>(spec);
    CHECK_THROWS_AS(ltr::unpack_model(incomplete, params3, stats3), ltr::DataError);
  }
}

TEST_CASE("feature stats pack into checkpoints") {
  ltr::FeatureStats fs;
  fs.mean = {1.0, 2.0};
  fs.std_dev = {0.5, 0.0};
  fs.constant = {0, 1};
  fs.fitted = true;
  CheckpointData ckpt;
  ltr::pack_feature_stats(fs, ckpt);
  REQUIRE(ltr::has_feature_stats(ckpt));
  auto back = ltr::unpack_feature_stats(ckpt);
  CHECK(back.mean == fs.mean);
  CHECK(back.std_dev == fs.std_dev);
  CHECK(back.constant[1] == 1);
}
