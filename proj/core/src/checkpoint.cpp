// Copyright (c) 2026 The ltr Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ltr/checkpoint.hpp"

#include <bit>
#include <fstream>

namespace ltr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

namespace {

constexpr char kMagic[8] = {'L', 'T', 'R', 'C', 'K', 'P', 'T', '\0'};

template <class T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod(out, std::uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

std::string read_string(std::istream& in) {
  const auto len = read_pod<std::uint32_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), std::streamsize(len));
  if (!in) throw DataError("checkpoint: truncated string");
  return s;
}

}  // namespace

void save_checkpoint_file(const CheckpointData& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof kMagic);
  write_pod(out, ckpt.version);
  write_pod(out, ckpt.precision);
  write_pod(out, ckpt.step);
  write_pod(out, ckpt.rng_state);
  write_string(out, ckpt.spec_text);
  write_pod(out, std::uint32_t(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    write_string(out, t.name);
    write_pod(out, t.dtype);
    write_pod(out, t.rows);
    write_pod(out, t.cols);
    write_pod(out, std::uint64_t(t.bytes.size()));
    out.write(reinterpret_cast<const char*>(t.bytes.data()),
              std::streamsize(t.bytes.size()));
  }
  if (!out) throw DataError("checkpoint write failed: " + path);
}

CheckpointData load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw DataError("not a checkpoint file: " + path);
  CheckpointData ckpt;
  ckpt.version = read_pod<std::uint32_t>(in);
  if (ckpt.version != 1)
    throw DataError("unsupported checkpoint version " + std::to_string(ckpt.version));
  ckpt.precision = read_pod<char>(in);
  ckpt.step = read_pod<std::uint64_t>(in);
  ckpt.rng_state = read_pod<std::uint64_t>(in);
  ckpt.spec_text = read_string(in);
  const auto n = read_pod<std::uint32_t>(in);
  ckpt.tensors.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    TensorBlob t;
    t.name = read_string(in);
    t.dtype = read_pod<char>(in);
    t.rows = read_pod<std::uint32_t>(in);
    t.cols = read_pod<std::uint32_t>(in);
    const auto payload = read_pod<std::uint64_t>(in);
    t.bytes.resize(payload);
    in.read(reinterpret_cast<char*>(t.bytes.data()), std::streamsize(payload));
    if (!in) throw DataError("checkpoint: truncated tensor " + t.name);
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

void pack_feature_stats(const FeatureStats& fs, CheckpointData& ckpt) {
  if (!fs.fitted) return;
  Mat<double> mean(1, int(fs.mean.size()));
  Mat<double> sd(1, int(fs.std_dev.size()));
  for (std::size_t i = 0; i < fs.mean.size(); ++i) {
    mean.data[i] = fs.mean[i];
    sd.data[i] = fs.std_dev[i];
  }
  ckpt.tensors.push_back(TensorBlob::from("fstats/mean", mean));
  ckpt.tensors.push_back(TensorBlob::from("fstats/std", sd));
}

bool has_feature_stats(const CheckpointData& ckpt) {
  return ckpt.find("fstats/mean") != nullptr;
}

FeatureStats unpack_feature_stats(const CheckpointData& ckpt) {
  const TensorBlob* mean = ckpt.find("fstats/mean");
  const TensorBlob* sd = ckpt.find("fstats/std");
  if (!mean || !sd) throw DataError("checkpoint has no feature statistics");
  FeatureStats fs;
  Mat<double> m = mean->to_mat<double>();
  Mat<double> s = sd->to_mat<double>();
  fs.mean.assign(m.data.begin(), m.data.end());
  fs.std_dev.assign(s.data.begin(), s.data.end());
  fs.constant.resize(fs.std_dev.size());
  for (std::size_t i = 0; i < fs.std_dev.size(); ++i)
    fs.constant[i] = fs.std_dev[i] == 0.0;
  fs.fitted = true;
  return fs;
}

}  // namespace ltr
