// Copyright 2026 The asfield Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "asf/regressor.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "asf/error.h"
#include "gtest/gtest.h"

namespace asf {
namespace {

NetworkConfig SmallConfig(int points) {
  NetworkConfig c;
  c.encoder = {3, 16, 16, 32};
  c.head = {32, 16, 16};
  c.num_points = points;
  return c;
}

PointCloud RandomCloud(int n, Rng& rng) {
  PointCloud pc;
  std::normal_distribution<double> g(0.0, 0.5);
  for (int i = 0; i < n; ++i) pc.points.emplace_back(g(rng), g(rng), g(rng));
  return pc;
}

TEST(NetworkTest, DefaultParameterCount) {
  const NetworkConfig c;
  // 3-64-64-128-256 encoder, 256-128-16 head.
  const size_t want = (3 + 1) * 64 + (64 + 1) * 64 + (64 + 1) * 128 + (128 + 1) * 256 +
                      (256 + 1) * 128 + (128 + 1) * 16;
  EXPECT_EQ(ParameterCount(c), want);
  EXPECT_EQ(NetworkParams::Init(c, 1).values.size(), want);
  EXPECT_EQ(c.output_size(), 16);
}

TEST(NetworkTest, ForwardIsBitwisePermutationInvariant) {
  Rng rng(3);
  const NetworkConfig cfg;
  const NetworkParams p = NetworkParams::Init(cfg, 5);
  PointCloud pc = RandomCloud(kCloudSize, rng);
  const std::vector<double> base = Forward(p, pc);
  for (int t = 0; t < 100; ++t) {
    std::shuffle(pc.points.begin(), pc.points.end(), rng);
    const std::vector<double> out = Forward(p, pc);
    ASSERT_EQ(std::memcmp(out.data(), base.data(), sizeof(double) * out.size()), 0);
  }
}

TEST(NetworkTest, RejectsWrongPointCount) {
  Rng rng(3);
  const NetworkParams p = NetworkParams::Init(SmallConfig(32), 1);
  EXPECT_THROW(Forward(p, RandomCloud(31, rng)), InvalidArgument);
  NetworkConfig bad;
  bad.encoder = {2, 8};
  EXPECT_THROW(bad.Validate(), InvalidArgument);
}

// Per-layer relative error ||g - g_fd|| / ||g_fd|| over sampled entries.
void CheckGradient(const NetworkConfig& cfg, int samples_per_layer, double tol) {
  Rng rng(21);
  NetworkParams p = NetworkParams::Init(cfg, 9);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (const auto& lv : p.Layers()) {
    for (int o = 0; o < lv.out; ++o) p.values[lv.bias_offset + o] = u(rng);
  }
  std::vector<PointCloud> clouds;
  std::vector<std::vector<double>> targets;
  for (int s = 0; s < 3; ++s) {
    clouds.push_back(RandomCloud(cfg.num_points, rng));
    std::vector<double> t(cfg.output_size());
    for (double& x : t) x = u(rng) * 10.0;
    targets.push_back(t);
  }
  std::vector<Sample> batch;
  for (int s = 0; s < 3; ++s) batch.push_back(Sample{&clouds[s], &targets[s]});
  auto loss = [&](const NetworkParams& q) {
    double l = 0.0;
    for (int s = 0; s < 3; ++s) l += Loss(Forward(q, clouds[s]), targets[s]);
    return l / 3.0;
  };
  double batch_loss = 0.0;
  const std::vector<double> g = Gradient(p, batch, &batch_loss);
  EXPECT_NEAR(batch_loss, loss(p), 1e-12);

  const double h = 1e-6;
  const auto layers = p.Layers();
  for (size_t l = 0; l < layers.size(); ++l) {
    const auto& lv = layers[l];
    const size_t count = static_cast<size_t>(lv.in + 1) * lv.out;
    std::uniform_int_distribution<size_t> pick(0, count - 1);
    double num = 0.0;
    double den = 0.0;
    for (int k = 0; k < samples_per_layer; ++k) {
      const size_t idx = lv.weight_offset + pick(rng);
      NetworkParams plus = p;
      NetworkParams minus = p;
      plus.values[idx] += h;
      minus.values[idx] -= h;
      const double fd = (loss(plus) - loss(minus)) / (2.0 * h);
      num += (g[idx] - fd) * (g[idx] - fd);
      den += fd * fd;
    }
    ASSERT_GT(den, 0.0) << "layer " << l;
    EXPECT_LT(std::sqrt(num / den), tol) << "layer " << l;
  }
}

TEST(GradientTest, MatchesFiniteDifferencesSmall) { CheckGradient(SmallConfig(48), 40, 1e-4); }

TEST(GradientTest, IndependentOfThreadCount) {
  Rng rng(4);
  const NetworkConfig cfg = SmallConfig(40);
  const NetworkParams p = NetworkParams::Init(cfg, 2);
  std::vector<PointCloud> clouds;
  std::vector<std::vector<double>> targets;
  for (int s = 0; s < 21; ++s) {
    clouds.push_back(RandomCloud(40, rng));
    targets.push_back(std::vector<double>(16, 0.1 * s));
  }
  std::vector<Sample> batch;
  for (int s = 0; s < 21; ++s) batch.push_back(Sample{&clouds[s], &targets[s]});
  double l1 = 0.0, l3 = 0.0;
  const auto g1 = Gradient(p, batch, &l1, 1);
  const auto g3 = Gradient(p, batch, &l3, 3);
  EXPECT_EQ(l1, l3);
  ASSERT_EQ(std::memcmp(g1.data(), g3.data(), sizeof(double) * g1.size()), 0);
}

Dataset ToyDataset(int n, int points) {
  Rng rng(6);
  Dataset ds;
  for (int i = 0; i < n; ++i) {
    DatasetRecord r;
    r.id = i;
    const double scale = 0.5 + 0.5 * i / n;
    r.cloud = RandomCloud(points, rng);
    for (Vec3& v : r.cloud.points) v *= scale;
    AsfLabel label;
    label.sh.order = 3;
    label.sh.frequency = 125.0;
    label.sh.coeffs.assign(16, 0.0);
    label.sh.coeffs[0] = 1.0 * scale;
    label.sh.coeffs[2] = -0.3 * scale;
    r.labels.emplace(125.0, label);
    ds.records.push_back(r);
  }
  return ds;
}

TEST(TrainTest, LossDecreasesAndBestEpochIsKept) {
  const Dataset ds = ToyDataset(40, 32);
  const Split split = SplitDataset(ds.records.size(), 1);
  TrainConfig cfg;
  cfg.network = SmallConfig(32);
  cfg.epochs = 25;
  cfg.batch_size = 8;
  cfg.learning_rate = 3e-3;
  std::vector<EpochLog> seen;
  const TrainResult r = Train(ds, split, 125.0, cfg, [&](const EpochLog& e) { seen.push_back(e); });
  ASSERT_EQ(r.history.size(), 25u);
  EXPECT_EQ(seen.size(), 25u);
  EXPECT_LT(r.history.back().train_loss, 0.2 * r.history.front().train_loss);
  double best = 1e300;
  for (const auto& h : r.history) best = std::min(best, h.test_loss);
  EXPECT_DOUBLE_EQ(r.history[r.best_epoch].test_loss, best);
  EXPECT_DOUBLE_EQ(r.history[3].lr, std::max(3e-3 * std::pow(0.9, 3), 1e-5));
  EXPECT_THROW(Train(ds, split, 250.0, cfg), InvalidArgument);
}

TEST(TrainTest, DivergenceIsReported) {
  Dataset ds = ToyDataset(16, 32);
  ds.records[0].labels.at(125.0).sh.coeffs[0] = std::nan("");
  Split split;
  for (int i = 0; i < 16; ++i) split.train.push_back(i);
  TrainConfig cfg;
  cfg.network = SmallConfig(32);
  cfg.epochs = 2;
  try {
    Train(ds, split, 125.0, cfg);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.epoch(), 0);
  }
}

TEST(EvaluateTest, ReplayedLabelsGiveZeroNre) {
  DatasetSpec spec;
  spec.count = 4;
  spec.frequencies = {125.0, 250.0};
  spec.cloud_size = 32;
  spec.surface_samples = 128;
  const Dataset ds = GenerateDataset(spec);
  const NreStats s = EvaluateTestset(
      ds, {0, 1, 2, 3}, [&](const DatasetRecord& r, double f) { return r.labels.at(f).sh.coeffs; });
  EXPECT_EQ(s.count, 8u);
  EXPECT_DOUBLE_EQ(s.overall_mean, 0.0);
  EXPECT_DOUBLE_EQ(s.p95, 0.0);
  std::ostringstream out;
  WriteNreHistogramCsv(s, 0.05, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "scope,bin_lo,bin_hi,count");
  int overall = 0;
  while (std::getline(in, line)) {
    if (line.rfind("overall,", 0) == 0) overall += std::stoi(line.substr(line.rfind(',') + 1));
  }
  EXPECT_EQ(overall, 8);
}

TEST(EvaluateTest, Percentiles) {
  EXPECT_DOUBLE_EQ(Percentile({1, 2, 3, 4, 5}, 50), 3.0);
  EXPECT_DOUBLE_EQ(Percentile({1, 2, 3, 4}, 75), 3.25);
  EXPECT_DOUBLE_EQ(Percentile({7}, 95), 7.0);
}

TEST(ModelIoTest, RoundTripAndHashMismatch) {
  NetworkParams p = NetworkParams::Init(SmallConfig(32), 3);
  p.frequency = 500.0;
  const auto dir = std::filesystem::temp_directory_path() / "asf_model_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "asf_500.bin").string();
  SaveModel(p, path, {{"seed", 3}});
  const NetworkParams q = LoadModel(path);
  EXPECT_EQ(q.values, p.values);
  EXPECT_EQ(q.config.encoder, p.config.encoder);
  EXPECT_DOUBLE_EQ(q.frequency, 500.0);

  std::ifstream in(path + ".json");
  nlohmann::json side = nlohmann::json::parse(in);
  in.close();
  EXPECT_EQ(side["seed"], 3);
  side["config_hash"] = "0000000000000000";
  std::ofstream(path + ".json") << side.dump();
  EXPECT_THROW(LoadModel(path), InvalidArgument);

  std::ofstream(path, std::ios::binary) << "nope";
  EXPECT_THROW(LoadModel(path), IoError);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(LoadModel(path), IoError);
}

TEST(PredictTest, AlignsAndChecksFrequency) {
  Rng rng(1);
  ModelSet models;
  NetworkParams p = NetworkParams::Init(SmallConfig(32), 3);
  p.frequency = 125.0;
  models.emplace(125.0, p);
  const PointCloud pc = RandomCloud(32, rng);
  const SHCoefficients a = PredictAsf(models, pc, -Vec3::UnitX(), 125.0);
  EXPECT_EQ(a.coeffs, Forward(p, AlignIncoming(pc, -Vec3::UnitX())));
  EXPECT_EQ(a.order, 3);
  EXPECT_THROW(PredictAsf(models, pc, -Vec3::UnitX(), 250.0), InvalidArgument);
  EXPECT_THROW(PredictAsf(models, pc, -Vec3::UnitX(), 2000.0), InvalidArgument);
}

}  // namespace
}  // namespace asf
