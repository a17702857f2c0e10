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

#ifndef ASF_REGRESSOR_H_
#define ASF_REGRESSOR_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "asf/dataset.h"
#include "asf/pointcloud.h"
#include "asf/shfield.h"

namespace asf {

// Shared per-point MLP, coordinate-wise max-pool, then a dense head.
struct NetworkConfig {
  std::vector<int> encoder = {3, 64, 64, 128, 256};
  std::vector<int> head = {256, 128, 16};
  bool relu = true;  // on every layer except the last head layer
  int num_points = kCloudSize;

  void Validate() const;
  int output_size() const { return head.back(); }
};

struct LayerView {
  int in = 0;
  int out = 0;
  size_t weight_offset = 0;  // out x in, row-major
  size_t bias_offset = 0;
};

struct NetworkParams {
  NetworkConfig config;
  double frequency = 0.0;
  // Label settings the model was trained against.
  double r_ref = kReferenceRadius;
  int grid_level = kDefaultGridLevel;
  int sh_order = kDefaultShOrder;
  std::vector<double> values;  // all weights and biases, layer by layer

  std::vector<LayerView> Layers() const;
  size_t ParameterCount() const { return values.size(); }

  // Zero parameters for `config`.
  static NetworkParams Zeros(const NetworkConfig& config);
  // Uniform fan-in initialisation U(-1/sqrt(in), 1/sqrt(in)), zero biases.
  static NetworkParams Init(const NetworkConfig& config, uint64_t seed);
};

size_t ParameterCount(const NetworkConfig& config);

// Requires pc.size() == config.num_points. Bitwise invariant under any
// permutation of the input points.
std::vector<double> Forward(const NetworkParams& params, const PointCloud& pc);
SHCoefficients ForwardSh(const NetworkParams& params, const PointCloud& pc);

// Mean squared difference over the coefficients.
double Loss(const std::vector<double>& pred, const std::vector<double>& target);
double Loss(const SHCoefficients& pred, const SHCoefficients& target);

struct Sample {
  const PointCloud* cloud = nullptr;
  const std::vector<double>* target = nullptr;
};

// Analytic gradient of the mean batch loss. Max-pool routes gradient to the
// arg-max point of each feature (lowest index on ties). `loss_out` receives
// the mean batch loss when non-null. Samples are grouped into fixed chunks of
// 8 and chunk sums are combined by a fixed pairwise tree, so the result does
// not depend on `threads`.
std::vector<double> Gradient(const NetworkParams& params, const std::vector<Sample>& batch,
                             double* loss_out = nullptr, int threads = 1);

struct TrainConfig {
  double learning_rate = 1e-3;
  double decay = 0.9;  // per epoch
  double lr_floor = 1e-5;
  int batch_size = 128;
  int epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  uint64_t seed = 1;
  double train_ratio = 0.9;
  bool safeguard = false;  // halve lr whenever the epoch train loss rises
  int threads = 1;
  NetworkConfig network;

  void Validate() const;
  // max(learning_rate * decay^epoch, lr_floor)
  double LearningRate(int epoch) const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  NetworkParams params;  // parameters with the lowest test loss
  std::vector<EpochLog> history;
  int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Trains one model for `frequency` on `split.train`, evaluating on
// `split.test` every epoch. Throws TrainingDiverged on a NaN loss.
TrainResult Train(const Dataset& dataset, const Split& split, double frequency,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// One model per frequency band.
using ModelSet = std::map<double, NetworkParams>;

// Aligns `pc` so that `incoming` maps to -x, then runs the band's model.
SHCoefficients PredictAsf(const ModelSet& models, const PointCloud& pc, const Vec3& incoming,
                          double frequency);

struct NreStats {
  std::map<double, double> mean_by_frequency;
  std::map<double, std::vector<double>> values_by_frequency;
  double overall_mean = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
  double p95 = 0.0;
  size_t count = 0;
};

// Predictor from (record, frequency) to SH coefficients.
using Predictor = std::function<std::vector<double>(const DatasetRecord&, double)>;

// NRE between the label field and the predicted field, both reconstructed
// on the dataset grid and clamped to [0, 1].
NreStats EvaluateTestset(const Dataset& dataset, const std::vector<int>& indices,
                         const Predictor& predict);
NreStats EvaluateTestset(const ModelSet& models, const Dataset& dataset,
                         const std::vector<int>& indices);

// Linear-interpolated percentile of `values` (q in [0, 100]).
double Percentile(std::vector<double> values, double q);

// Histogram rows "scope,bin_lo,bin_hi,count" for each frequency and overall,
// followed by percentile markers.
void WriteNreHistogramCsv(const NreStats& stats, double bin_width, std::ostream& out);

void WriteMetricsCsv(const std::vector<EpochLog>& history, std::ostream& out);

// Binary model: "ASFN", u32 version, f64 frequency, u32 layer count, u32 dims,
// u8 relu, u32 num_points, then each layer's row-major weights and biases as
// little-endian f64. A JSON sidecar (<path>.json) carries the config hash.
void SaveModel(const NetworkParams& params, const std::string& path,
               const nlohmann::json& extra = {});
NetworkParams LoadModel(const std::string& path);
// FNV-1a over the architecture, frequency and label settings.
std::string ConfigHash(const NetworkConfig& config, double frequency, double r_ref, int grid_level,
                       int sh_order);

}  // namespace asf

#endif  // ASF_REGRESSOR_H_
