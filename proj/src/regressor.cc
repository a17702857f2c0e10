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
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "Eigen/Dense"
#include "asf/error.h"
#include "asf/manifest.h"

namespace asf {

namespace {

constexpr int kRowBlock = 8;
constexpr int kColBlock = 32;
constexpr int kChunk = 8;
constexpr uint32_t kModelVersion = 1;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int RoundUp(int n, int m) { return (n + m - 1) / m * m; }

// Transposed, column-padded copy of one layer for the per-point kernel.
struct PackedLayer {
  int in = 0;
  int out = 0;
  int out_padded = 0;
  std::vector<double> wt;    // in x out_padded
  std::vector<double> bias;  // out_padded
};

PackedLayer Pack(const NetworkParams& params, const LayerView& lv) {
  PackedLayer p;
  p.in = lv.in;
  p.out = lv.out;
  p.out_padded = RoundUp(lv.out, kColBlock);
  p.wt.assign(static_cast<size_t>(p.in) * p.out_padded, 0.0);
  p.bias.assign(p.out_padded, 0.0);
  const double* w = params.values.data() + lv.weight_offset;
  for (int o = 0; o < lv.out; ++o) {
    for (int i = 0; i < lv.in; ++i) {
      p.wt[static_cast<size_t>(i) * p.out_padded + o] = w[o * lv.in + i];
    }
    p.bias[o] = params.values[lv.bias_offset + o];
  }
  return p;
}

// y = act(x W^T + b) for `rows` points. Every row goes through the same
// instruction sequence (tails are zero-padded into a full block), which keeps
// each point's features independent of its position in the cloud.
void DenseRows(const double* x, int rows, const PackedLayer& layer, bool relu, double* y) {
  const int in = layer.in;
  const int out = layer.out;
  const int outp = layer.out_padded;
  std::vector<double> xb(static_cast<size_t>(kRowBlock) * in);
  alignas(64) double acc[kRowBlock][kColBlock];
  for (int i0 = 0; i0 < rows; i0 += kRowBlock) {
    const int valid = std::min(kRowBlock, rows - i0);
    std::fill(xb.begin(), xb.end(), 0.0);
    std::memcpy(xb.data(), x + static_cast<size_t>(i0) * in,
                sizeof(double) * static_cast<size_t>(valid) * in);
    for (int j0 = 0; j0 < outp; j0 += kColBlock) {
      for (int r = 0; r < kRowBlock; ++r) {
        for (int jj = 0; jj < kColBlock; ++jj) acc[r][jj] = layer.bias[j0 + jj];
      }
      for (int k = 0; k < in; ++k) {
        const double* w = layer.wt.data() + static_cast<size_t>(k) * outp + j0;
        for (int r = 0; r < kRowBlock; ++r) {
          const double xr = xb[static_cast<size_t>(r) * in + k];
          for (int jj = 0; jj < kColBlock; ++jj) acc[r][jj] += xr * w[jj];
        }
      }
      for (int r = 0; r < valid; ++r) {
        double* yr = y + static_cast<size_t>(i0 + r) * out;
        for (int jj = 0; jj < kColBlock && j0 + jj < out; ++jj) {
          const double v = acc[r][jj];
          yr[j0 + jj] = (relu && v < 0.0) ? 0.0 : v;
        }
      }
    }
  }
}

struct EncoderPass {
  std::vector<double> pooled;  // F
  std::vector<int> argmax;     // F, lowest index on ties
};

std::vector<double> CloudMatrix(const PointCloud& pc) {
  std::vector<double> x(pc.size() * 3);
  for (size_t i = 0; i < pc.size(); ++i) {
    x[3 * i] = pc.points[i].x();
    x[3 * i + 1] = pc.points[i].y();
    x[3 * i + 2] = pc.points[i].z();
  }
  return x;
}

// Runs the shared encoder over `rows` points; returns every layer's output
// when `keep` is non-null.
std::vector<double> RunEncoder(const std::vector<PackedLayer>& enc, bool relu,
                               const std::vector<double>& x, int rows,
                               std::vector<std::vector<double>>* keep) {
  std::vector<double> cur = x;
  for (const auto& layer : enc) {
    std::vector<double> next(static_cast<size_t>(rows) * layer.out);
    DenseRows(cur.data(), rows, layer, relu, next.data());
    if (keep != nullptr) keep->push_back(cur);
    cur = std::move(next);
  }
  if (keep != nullptr) keep->push_back(cur);
  return cur;
}

EncoderPass MaxPool(const std::vector<double>& h, int rows, int f) {
  EncoderPass pass;
  pass.pooled.assign(h.begin(), h.begin() + f);
  pass.argmax.assign(f, 0);
  for (int i = 1; i < rows; ++i) {
    const double* hr = h.data() + static_cast<size_t>(i) * f;
    for (int j = 0; j < f; ++j) {
      if (hr[j] > pass.pooled[j]) {
        pass.pooled[j] = hr[j];
        pass.argmax[j] = i;
      }
    }
  }
  return pass;
}

std::vector<PackedLayer> PackEncoder(const NetworkParams& params) {
  const auto layers = params.Layers();
  const size_t n_enc = params.config.encoder.size() - 1;
  std::vector<PackedLayer> enc;
  for (size_t l = 0; l < n_enc; ++l) enc.push_back(Pack(params, layers[l]));
  return enc;
}

void CheckCloud(const NetworkParams& params, const PointCloud& pc) {
  if (static_cast<int>(pc.size()) != params.config.num_points) {
    throw InvalidArgument("network expects " + std::to_string(params.config.num_points) +
                          " points, got " + std::to_string(pc.size()));
  }
}

// Owned (and therefore consistently aligned) copies, so Eigen's kernels pick
// the same code path no matter where `params.values` was allocated.
RowMatrix Weights(const NetworkParams& params, const LayerView& lv) {
  return Eigen::Map<const RowMatrix>(params.values.data() + lv.weight_offset, lv.out, lv.in);
}

Eigen::VectorXd Bias(const NetworkParams& params, const LayerView& lv) {
  return Eigen::Map<const Eigen::VectorXd>(params.values.data() + lv.bias_offset, lv.out);
}

// Dense head on a single vector; `acts` receives the input of every layer
// followed by the final output.
std::vector<double> RunHead(const NetworkParams& params, const std::vector<double>& g,
                            std::vector<Eigen::VectorXd>* acts) {
  const auto layers = params.Layers();
  const size_t n_enc = params.config.encoder.size() - 1;
  Eigen::VectorXd a =
      Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
  for (size_t l = n_enc; l < layers.size(); ++l) {
    const auto& lv = layers[l];
    if (acts != nullptr) acts->push_back(a);
    const RowMatrix w = Weights(params, lv);
    const Eigen::VectorXd b = Bias(params, lv);
    Eigen::VectorXd z = w * a + b;
    const bool last = (l + 1 == layers.size());
    if (params.config.relu && !last) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  if (acts != nullptr) acts->push_back(a);
  return std::vector<double>(a.data(), a.data() + a.size());
}

// Plain loop so the sum does not depend on where `dst` happens to be aligned.
void AddTo(const double* src, Eigen::Index n, double* dst) {
  for (Eigen::Index i = 0; i < n; ++i) dst[i] += src[i];
}

// Accumulates d(loss)/d(params) * scale for one sample into `grad`; returns
// the sample loss.
double AccumulateSample(const NetworkParams& params, const std::vector<PackedLayer>& enc,
                        const Sample& s, double scale, std::vector<double>* grad) {
  const auto layers = params.Layers();
  const NetworkConfig& cfg = params.config;
  const size_t n_enc = cfg.encoder.size() - 1;
  const int rows = static_cast<int>(s.cloud->size());
  const int feat = cfg.encoder.back();
  const bool relu = cfg.relu;

  const std::vector<double> x = CloudMatrix(*s.cloud);
  const std::vector<double> h = RunEncoder(enc, relu, x, rows, nullptr);
  const EncoderPass pass = MaxPool(h, rows, feat);

  std::vector<Eigen::VectorXd> acts;
  const std::vector<double> out = RunHead(params, pass.pooled, &acts);
  const std::vector<double>& target = *s.target;
  if (target.size() != out.size()) {
    throw InvalidArgument("target length does not match network output");
  }
  const double m = static_cast<double>(out.size());
  double loss = 0.0;
  Eigen::VectorXd delta(static_cast<Eigen::Index>(out.size()));
  for (size_t i = 0; i < out.size(); ++i) {
    const double d = out[i] - target[i];
    loss += d * d;
    delta[static_cast<Eigen::Index>(i)] = 2.0 * d / m * scale;
  }
  loss /= m;

  double* gv = grad->data();
  // Head, last layer first. acts[k] is the input of head layer k.
  for (size_t l = layers.size(); l-- > n_enc;) {
    const auto& lv = layers[l];
    const Eigen::VectorXd& a_in = acts[l - n_enc];
    const RowMatrix gw = delta * a_in.transpose();
    AddTo(gw.data(), gw.size(), gv + lv.weight_offset);
    AddTo(delta.data(), delta.size(), gv + lv.bias_offset);
    const RowMatrix w = Weights(params, lv);
    Eigen::VectorXd back = w.transpose() * delta;
    if (relu && l > n_enc) {
      for (Eigen::Index i = 0; i < back.size(); ++i) {
        if (!(a_in[i] > 0.0)) back[i] = 0.0;
      }
    }
    delta = std::move(back);
  }
  // delta is now d(loss)/d(pooled feature).

  std::vector<int> unique_rows(pass.argmax.begin(), pass.argmax.end());
  std::sort(unique_rows.begin(), unique_rows.end());
  unique_rows.erase(std::unique(unique_rows.begin(), unique_rows.end()), unique_rows.end());
  const int nu = static_cast<int>(unique_rows.size());
  std::vector<double> xu(static_cast<size_t>(nu) * 3);
  for (int r = 0; r < nu; ++r) {
    std::copy_n(x.data() + 3 * unique_rows[r], 3, xu.data() + 3 * r);
  }
  std::vector<std::vector<double>> enc_acts;
  RunEncoder(enc, relu, xu, nu, &enc_acts);

  RowMatrix d(nu, feat);
  d.setZero();
  for (int j = 0; j < feat; ++j) {
    const int pos =
        static_cast<int>(std::lower_bound(unique_rows.begin(), unique_rows.end(), pass.argmax[j]) -
                         unique_rows.begin());
    const double hval = enc_acts.back()[static_cast<size_t>(pos) * feat + j];
    if (!relu || hval > 0.0) d(pos, j) = delta[j];
  }

  for (size_t l = n_enc; l-- > 0;) {
    const auto& lv = layers[l];
    const RowMatrix a_in = Eigen::Map<const RowMatrix>(enc_acts[l].data(), nu, lv.in);
    const RowMatrix gw = d.transpose() * a_in;
    const Eigen::VectorXd gb = d.colwise().sum().transpose();
    AddTo(gw.data(), gw.size(), gv + lv.weight_offset);
    AddTo(gb.data(), gb.size(), gv + lv.bias_offset);
    if (l == 0) break;
    const RowMatrix w = Weights(params, lv);
    RowMatrix back = d * w;
    if (relu) back = (a_in.array() > 0.0).cast<double>() * back.array();
    d = std::move(back);
  }
  return loss;
}

template <typename T>
void WriteLe(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T ReadLe(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw IoError("truncated model file");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

void NetworkConfig::Validate() const {
  if (encoder.size() < 2 || head.size() < 2) {
    throw InvalidArgument("network needs at least one encoder and one head layer");
  }
  if (encoder.front() != 3) throw InvalidArgument("encoder input must be 3 (xyz)");
  if (encoder.back() != head.front()) {
    throw InvalidArgument("head input must equal the pooled feature width");
  }
  for (int d : encoder) {
    if (d < 1) throw InvalidArgument("layer widths must be positive");
  }
  for (int d : head) {
    if (d < 1) throw InvalidArgument("layer widths must be positive");
  }
  if (num_points < 1) throw InvalidArgument("num_points must be positive");
}

size_t ParameterCount(const NetworkConfig& config) {
  size_t n = 0;
  for (size_t l = 0; l + 1 < config.encoder.size(); ++l) {
    n += static_cast<size_t>(config.encoder[l] + 1) * config.encoder[l + 1];
  }
  for (size_t l = 0; l + 1 < config.head.size(); ++l) {
    n += static_cast<size_t>(config.head[l] + 1) * config.head[l + 1];
  }
  return n;
}

std::vector<LayerView> NetworkParams::Layers() const {
  std::vector<LayerView> out;
  size_t offset = 0;
  auto add = [&](int in, int o) {
    LayerView lv;
    lv.in = in;
    lv.out = o;
    lv.weight_offset = offset;
    offset += static_cast<size_t>(in) * o;
    lv.bias_offset = offset;
    offset += o;
    out.push_back(lv);
  };
  for (size_t l = 0; l + 1 < config.encoder.size(); ++l) {
    add(config.encoder[l], config.encoder[l + 1]);
  }
  for (size_t l = 0; l + 1 < config.head.size(); ++l) {
    add(config.head[l], config.head[l + 1]);
  }
  return out;
}

NetworkParams NetworkParams::Zeros(const NetworkConfig& config) {
  config.Validate();
  NetworkParams p;
  p.config = config;
  p.values.assign(asf::ParameterCount(config), 0.0);
  return p;
}

NetworkParams NetworkParams::Init(const NetworkConfig& config, uint64_t seed) {
  NetworkParams p = Zeros(config);
  Rng rng(seed);
  for (const auto& lv : p.Layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(lv.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (size_t i = 0; i < static_cast<size_t>(lv.in) * lv.out; ++i) {
      p.values[lv.weight_offset + i] = u(rng);
    }
  }
  return p;
}

std::vector<double> Forward(const NetworkParams& params, const PointCloud& pc) {
  CheckCloud(params, pc);
  const auto enc = PackEncoder(params);
  const int rows = static_cast<int>(pc.size());
  const std::vector<double> h = RunEncoder(enc, params.config.relu, CloudMatrix(pc), rows, nullptr);
  const EncoderPass pass = MaxPool(h, rows, params.config.encoder.back());
  return RunHead(params, pass.pooled, nullptr);
}

SHCoefficients ForwardSh(const NetworkParams& params, const PointCloud& pc) {
  SHCoefficients c;
  c.coeffs = Forward(params, pc);
  c.order = static_cast<int>(std::lround(std::sqrt(c.coeffs.size()))) - 1;
  c.frequency = params.frequency;
  return c;
}

double Loss(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size() || pred.empty()) {
    throw InvalidArgument("loss operands differ in length");
  }
  double s = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

double Loss(const SHCoefficients& pred, const SHCoefficients& target) {
  return Loss(pred.coeffs, target.coeffs);
}

std::vector<double> Gradient(const NetworkParams& params, const std::vector<Sample>& batch,
                             double* loss_out, int threads) {
  if (batch.empty()) throw InvalidArgument("gradient of an empty batch");
  for (const auto& s : batch) CheckCloud(params, *s.cloud);
  const auto enc = PackEncoder(params);
  const double scale = 1.0 / static_cast<double>(batch.size());
  const size_t n_chunks = (batch.size() + kChunk - 1) / kChunk;

  std::vector<std::vector<double>> chunk_grad(n_chunks);
  std::vector<double> chunk_loss(n_chunks, 0.0);
  auto run_chunk = [&](size_t c) {
    chunk_grad[c].assign(params.values.size(), 0.0);
    const size_t end = std::min(batch.size(), (c + 1) * kChunk);
    for (size_t i = c * kChunk; i < end; ++i) {
      chunk_loss[c] += AccumulateSample(params, enc, batch[i], scale, &chunk_grad[c]);
    }
  };

  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n_chunks)));
  if (workers == 1) {
    for (size_t c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        for (size_t c = t; c < n_chunks; c += workers) run_chunk(c);
      });
    }
    for (auto& th : pool) th.join();
  }

  // Fixed pairwise tree reduction.
  for (size_t stride = 1; stride < n_chunks; stride *= 2) {
    for (size_t c = 0; c + stride < n_chunks; c += 2 * stride) {
      auto& dst = chunk_grad[c];
      const auto& src = chunk_grad[c + stride];
      for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      chunk_loss[c] += chunk_loss[c + stride];
    }
  }
  if (loss_out != nullptr) *loss_out = chunk_loss[0] * scale;
  return std::move(chunk_grad[0]);
}

void TrainConfig::Validate() const {
  network.Validate();
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (!(learning_rate > 0.0) || !(lr_floor > 0.0) || lr_floor > learning_rate) {
    throw InvalidArgument("learning rate must satisfy 0 < floor <= initial");
  }
  if (!(decay > 0.0 && decay <= 1.0)) throw InvalidArgument("decay must be in (0, 1]");
}

double TrainConfig::LearningRate(int epoch) const {
  return std::max(learning_rate * std::pow(decay, epoch), lr_floor);
}

TrainResult Train(const Dataset& dataset, const Split& split, double frequency,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.Validate();
  if (split.train.empty()) throw InvalidArgument("training split is empty");

  std::vector<Sample> train_samples;
  std::vector<Sample> test_samples;
  auto collect = [&](const std::vector<int>& idx, std::vector<Sample>* out) {
    for (int i : idx) {
      const DatasetRecord& rec = dataset.records.at(i);
      auto it = rec.labels.find(frequency);
      if (it == rec.labels.end()) {
        throw InvalidArgument("record " + std::to_string(rec.id) + " has no label at " +
                              std::to_string(frequency) + " Hz");
      }
      out->push_back(Sample{&rec.cloud, &it->second.sh.coeffs});
    }
  };
  collect(split.train, &train_samples);
  collect(split.test, &test_samples);

  NetworkParams params = NetworkParams::Init(cfg.network, cfg.seed);
  params.frequency = frequency;
  params.r_ref = dataset.r_ref;
  params.grid_level = dataset.grid_level;
  params.sh_order = dataset.sh_order;

  const size_t n = params.values.size();
  std::vector<double> m1(n, 0.0);
  std::vector<double> m2(n, 0.0);
  int64_t step = 0;
  Rng rng(cfg.seed ^ 0x5DEECE66DULL);

  TrainResult result;
  result.params = params;
  double best = std::numeric_limits<double>::infinity();
  double lr_scale = 1.0;
  double prev_train = std::numeric_limits<double>::infinity();

  auto mean_loss = [&](const std::vector<Sample>& samples) {
    double s = 0.0;
    for (const auto& smp : samples) s += Loss(Forward(params, *smp.cloud), *smp.target);
    return samples.empty() ? 0.0 : s / static_cast<double>(samples.size());
  };

  std::vector<size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = std::max(cfg.LearningRate(epoch) * lr_scale, cfg.lr_floor);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      std::vector<Sample> batch;
      for (size_t i = b0; i < b1; ++i) batch.push_back(train_samples[order[i]]);
      double batch_loss = 0.0;
      const std::vector<double> g = Gradient(params, batch, &batch_loss, cfg.threads);
      if (!std::isfinite(batch_loss)) {
        throw TrainingDiverged(
            epoch, "training diverged at epoch " + std::to_string(epoch) + " (loss is NaN)");
      }
      epoch_loss += batch_loss * static_cast<double>(b1 - b0);
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (size_t i = 0; i < n; ++i) {
        m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g[i];
        m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        params.values[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg.epsilon);
      }
    }
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = epoch_loss / static_cast<double>(order.size());
    log.test_loss = test_samples.empty() ? log.train_loss : mean_loss(test_samples);
    if (!std::isfinite(log.train_loss) || !std::isfinite(log.test_loss)) {
      throw TrainingDiverged(epoch, "training diverged at epoch " + std::to_string(epoch));
    }
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
    if (log.test_loss < best) {
      best = log.test_loss;
      result.params = params;
      result.best_epoch = epoch;
    }
    if (cfg.safeguard && log.train_loss > prev_train) lr_scale *= 0.5;
    prev_train = log.train_loss;
  }
  return result;
}

SHCoefficients PredictAsf(const ModelSet& models, const PointCloud& pc, const Vec3& incoming,
                          double frequency) {
  const bool supported = std::find(std::begin(kAsfFrequencies), std::end(kAsfFrequencies),
                                   frequency) != std::end(kAsfFrequencies);
  auto it = models.find(frequency);
  if (!supported || it == models.end()) {
    throw InvalidArgument("no ASF model for " + std::to_string(frequency) + " Hz");
  }
  return ForwardSh(it->second, AlignIncoming(pc, incoming));
}

double Percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(values.size() - 1, lo + 1);
  const double t = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - t) + values[hi] * t;
}

NreStats EvaluateTestset(const Dataset& dataset, const std::vector<int>& indices,
                         const Predictor& predict) {
  const FieldGrid grid = Icosphere(dataset.grid_level);
  const std::vector<double> weights = VoronoiSolidAngles(grid);
  auto clamp01 = [](std::vector<double> v) {
    for (double& x : v) x = std::clamp(x, 0.0, 1.0);
    return v;
  };
  NreStats stats;
  std::vector<double> all;
  for (int idx : indices) {
    const DatasetRecord& rec = dataset.records.at(idx);
    for (const auto& [freq, label] : rec.labels) {
      SHCoefficients pred = label.sh;
      pred.coeffs = predict(rec, freq);
      const auto target = clamp01(EvaluateOnGrid(label.sh, grid));
      const auto guess = clamp01(EvaluateOnGrid(pred, grid));
      const double e = WeightedNre(target, guess, weights);
      stats.values_by_frequency[freq].push_back(e);
      all.push_back(e);
    }
  }
  for (const auto& [freq, vals] : stats.values_by_frequency) {
    stats.mean_by_frequency[freq] =
        std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
  }
  stats.count = all.size();
  if (!all.empty()) {
    stats.overall_mean =
        std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
    stats.p50 = Percentile(all, 50.0);
    stats.p75 = Percentile(all, 75.0);
    stats.p95 = Percentile(all, 95.0);
  }
  return stats;
}

NreStats EvaluateTestset(const ModelSet& models, const Dataset& dataset,
                         const std::vector<int>& indices) {
  for (const auto& [freq, model] : models) {
    if (model.grid_level != dataset.grid_level || model.sh_order != dataset.sh_order ||
        model.r_ref != dataset.r_ref) {
      throw InvalidArgument("model/config hash mismatch: model for " + std::to_string(freq) +
                            " Hz was trained with different label settings");
    }
  }
  return EvaluateTestset(dataset, indices, [&](const DatasetRecord& rec, double f) {
    auto it = models.find(f);
    if (it == models.end()) {
      throw InvalidArgument("no model for " + std::to_string(f) + " Hz");
    }
    return Forward(it->second, rec.cloud);
  });
}

void WriteNreHistogramCsv(const NreStats& stats, double bin_width, std::ostream& out) {
  out << "scope,bin_lo,bin_hi,count\n";
  out.precision(10);
  auto emit = [&](const std::string& scope, const std::vector<double>& vals) {
    if (vals.empty()) return;
    const double hi = std::max(1.0, *std::max_element(vals.begin(), vals.end()));
    const int bins = static_cast<int>(std::ceil(hi / bin_width - 1e-12));
    std::vector<int> counts(bins, 0);
    for (double v : vals) {
      const int b = std::min(bins - 1, static_cast<int>(std::floor(v / bin_width)));
      ++counts[std::max(0, b)];
    }
    for (int b = 0; b < bins; ++b) {
      out << scope << ',' << b * bin_width << ',' << (b + 1) * bin_width << ',' << counts[b]
          << '\n';
    }
  };
  std::vector<double> all;
  for (const auto& [freq, vals] : stats.values_by_frequency) {
    std::ostringstream name;
    name << freq;
    emit(name.str(), vals);
    all.insert(all.end(), vals.begin(), vals.end());
  }
  emit("overall", all);
  out << "percentile,50,," << stats.p50 << '\n';
  out << "percentile,75,," << stats.p75 << '\n';
  out << "percentile,95,," << stats.p95 << '\n';
}

void WriteMetricsCsv(const std::vector<EpochLog>& history, std::ostream& out) {
  out << "epoch,train_loss,test_loss,lr\n";
  out.precision(12);
  for (const auto& h : history) {
    out << h.epoch << ',' << h.train_loss << ',' << h.test_loss << ',' << h.lr << '\n';
  }
}

std::string ConfigHash(const NetworkConfig& config, double frequency, double r_ref, int grid_level,
                       int sh_order) {
  std::ostringstream s;
  s << "enc";
  for (int d : config.encoder) s << ':' << d;
  s << "|head";
  for (int d : config.head) s << ':' << d;
  s << "|relu:" << config.relu << "|n:" << config.num_points << "|f:" << std::setprecision(17)
    << frequency << "|r:" << r_ref << "|g:" << grid_level << "|o:" << sh_order;
  return Fnv1aHex(s.str());
}

void SaveModel(const NetworkParams& params, const std::string& path, const nlohmann::json& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model " + path);
  out.write("ASFN", 4);
  WriteLe<uint32_t>(out, kModelVersion);
  WriteLe<double>(out, params.frequency);
  WriteLe<uint32_t>(out, static_cast<uint32_t>(params.config.encoder.size()));
  for (int d : params.config.encoder) WriteLe<uint32_t>(out, static_cast<uint32_t>(d));
  WriteLe<uint32_t>(out, static_cast<uint32_t>(params.config.head.size()));
  for (int d : params.config.head) WriteLe<uint32_t>(out, static_cast<uint32_t>(d));
  WriteLe<uint8_t>(out, params.config.relu ? 1 : 0);
  WriteLe<uint32_t>(out, static_cast<uint32_t>(params.config.num_points));
  WriteLe<double>(out, params.r_ref);
  WriteLe<uint32_t>(out, static_cast<uint32_t>(params.grid_level));
  WriteLe<uint32_t>(out, static_cast<uint32_t>(params.sh_order));
  for (double v : params.values) WriteLe<double>(out, v);
  if (!out) throw IoError("failed writing model " + path);

  nlohmann::json side = extra.is_object() ? extra : nlohmann::json::object();
  side["format_version"] = kModelVersion;
  side["frequency"] = params.frequency;
  side["parameter_count"] = params.values.size();
  side["encoder"] = params.config.encoder;
  side["head"] = params.config.head;
  side["r_ref"] = params.r_ref;
  side["grid_level"] = params.grid_level;
  side["sh_order"] = params.sh_order;
  side["config_hash"] =
      ConfigHash(params.config, params.frequency, params.r_ref, params.grid_level, params.sh_order);
  std::ofstream js(path + ".json");
  if (!js) throw IoError("cannot write model sidecar " + path + ".json");
  js << side.dump(2) << '\n';
}

NetworkParams LoadModel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "ASFN", 4) != 0) {
    throw IoError(path + " is not an asfield model");
  }
  const uint32_t version = ReadLe<uint32_t>(in);
  if (version != kModelVersion) {
    throw IoError("unsupported model version " + std::to_string(version));
  }
  NetworkParams p;
  p.frequency = ReadLe<double>(in);
  p.config.encoder.resize(ReadLe<uint32_t>(in));
  for (int& d : p.config.encoder) d = static_cast<int>(ReadLe<uint32_t>(in));
  p.config.head.resize(ReadLe<uint32_t>(in));
  for (int& d : p.config.head) d = static_cast<int>(ReadLe<uint32_t>(in));
  p.config.relu = ReadLe<uint8_t>(in) != 0;
  p.config.num_points = static_cast<int>(ReadLe<uint32_t>(in));
  p.r_ref = ReadLe<double>(in);
  p.grid_level = static_cast<int>(ReadLe<uint32_t>(in));
  p.sh_order = static_cast<int>(ReadLe<uint32_t>(in));
  p.config.Validate();
  p.values.resize(ParameterCount(p.config));
  for (double& v : p.values) v = ReadLe<double>(in);

  std::ifstream js(path + ".json");
  if (js) {
    const nlohmann::json side = nlohmann::json::parse(js);
    const std::string expected =
        ConfigHash(p.config, p.frequency, p.r_ref, p.grid_level, p.sh_order);
    if (side.value("config_hash", std::string()) != expected) {
      throw InvalidArgument("model/config hash mismatch for " + path);
    }
  }
  return p;
}

}  // namespace asf
