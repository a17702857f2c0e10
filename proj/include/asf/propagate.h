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

#ifndef ASF_PROPAGATE_H_
#define ASF_PROPAGATE_H_

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "Eigen/Geometry"
#include "asf/pointcloud.h"
#include "asf/regressor.h"
#include "asf/shfield.h"

namespace asf {

inline constexpr int kNumBands = 7;
inline constexpr std::array<double, kNumBands> kBandCenters = {125.0,  250.0,  500.0, 1000.0,
                                                               2000.0, 4000.0, 8000.0};
// Bands below this index use ASFs at scatterers; the rest are geometric.
inline constexpr int kNumAsfBands = 4;

using BandArray = std::array<double, kNumBands>;

struct Material {
  BandArray alpha{};     // absorption per band
  double scatter = 0.0;  // fraction of reflected energy sent diffusely

  void Validate() const;
};

// Rigid pose sample; rotation is a unit quaternion.
struct Keyframe {
  double time = 0.0;
  Vec3 translation = Vec3::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
};

struct SceneObject {
  std::string name;
  TriangleMesh mesh;  // local frame
  Material material;
  std::vector<Keyframe> keyframes;  // empty: static at the local frame

  bool is_wall() const { return mesh.is_wall; }
  bool is_scatterer() const { return mesh.is_scatterer; }
  // Linear translation and slerp rotation between keyframes, clamped at the
  // ends.
  Eigen::Isometry3d PoseAt(double time) const;
};

struct Source {
  Vec3 position = Vec3::Zero();
  BandArray power{1, 1, 1, 1, 1, 1, 1};
};

struct ListenerKey {
  double time = 0.0;
  Vec3 position = Vec3::Zero();
};

struct Listener {
  Vec3 position = Vec3::Zero();
  double radius = 0.5;  // detector sphere for specular paths
  std::vector<ListenerKey> keyframes;

  Vec3 PositionAt(double time) const;
};

enum class AsfMode { kNetwork, kOracle, kNone };

struct SimSettings {
  int n_rays = 100000;
  int max_order = 200;
  double bin_width = 1e-3;
  double ir_length = 2.0;
  uint64_t seed = 1;
  int frames = 1;
  double frame_dt = 0.1;
  bool diffraction_compensation = true;
  int threads = 1;
  double sound_speed = kSoundSpeed;
  int roulette_depth = 50;
  double region_density = 600.0;  // scatterer surface samples per m^2, near training clouds
  AsfMode asf_mode = AsfMode::kNetwork;
  std::string model_dir;  // asf_<freq>.bin files for kNetwork

  void Validate() const;
};

struct Scene {
  std::vector<SceneObject> objects;
  Source source;
  Listener listener;
  SimSettings sim;

  // Throws InvalidScene on bad materials, flags or settings.
  void Validate() const;
};

// Scene JSON (see README for the schema). Relative obj paths resolve against
// the scene file's directory.
Scene LoadScene(const std::string& path);
Scene SceneFromJson(const nlohmann::json& j, const std::string& base_dir);

struct EnergyHistogram {
  double band = 0.0;
  double bin_width = 1e-3;
  std::vector<double> bins;

  EnergyHistogram() = default;
  EnergyHistogram(double band_hz, double width, double length);
  // Adds `energy` at floor(delay / bin_width); later deposits are dropped.
  void Deposit(double delay, double energy);
  double Total() const;
  double length() const { return bin_width * static_cast<double>(bins.size()); }
};

using BandHistograms = std::array<EnergyHistogram, kNumBands>;

// Rows "band,bin_index,energy".
void WriteHistogramCsv(const BandHistograms& h, std::ostream& out);

// (1/N) sum f_j / pr_j. Throws InvalidArgument on a non-positive probability
// or mismatched lengths.
double MonteCarloEstimate(const std::vector<double>& f, const std::vector<double>& pr);

// Per-direction gain of the visibility-switched estimator: p^2 when the
// emitter sees the listener, 1 - p^2 when it does not.
double EventGain(double p, bool visible);

struct ScatterSample {
  Vec3 direction = Vec3::Zero();
  BandArray intensity{};  // I_in * gain / Pr for the ASF bands, 0 elsewhere
};

struct ScatterEventResult {
  std::vector<ScatterSample> samples;
  // ASF bands with no prediction: the caller reflects them geometrically.
  std::array<bool, kNumAsfBands> fallback{};
};

// Monte Carlo scattering of `intensity` at a scatterer hit, sampling
// `n_samples` uniform outgoing directions (Pr = 1/4pi). `asf[b]` is the
// prediction for band b in the canonical frame of `incoming`, or null.
ScatterEventResult ScatterEvent(const Vec3& incoming, const BandArray& intensity,
                                const std::array<const SHCoefficients*, kNumAsfBands>& asf,
                                bool visible, int n_samples, Rng& rng);

struct Reflection {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::Zero();
  BandArray intensity{};
  bool specular = true;
};

// Wall interaction: with probability `scatter` a cosine-weighted direction
// about the normal, otherwise the mirror direction. Intensities are scaled by
// (1 - alpha) per band. `normal` may face either way.
Reflection Reflect(const Vec3& point, const Vec3& direction, const Vec3& normal,
                   const Material& material, const BandArray& intensity, Rng& rng);

// Source of ASF predictions for scatter regions.
class AsfSource {
 public:
  virtual ~AsfSource() = default;
  virtual bool Available(double frequency) const = 0;
  // `region` is in world coordinates; `incoming` is the propagation
  // direction of the incident wave.
  virtual SHCoefficients Predict(const PointCloud& region, const Vec3& incoming,
                                 double frequency) const = 0;
};

// Trained per-band regressors.
class NetworkAsfSource : public AsfSource {
 public:
  explicit NetworkAsfSource(ModelSet models) : models_(std::move(models)) {}
  bool Available(double frequency) const override;
  SHCoefficients Predict(const PointCloud& region, const Vec3& incoming,
                         double frequency) const override;

 private:
  ModelSet models_;
};

// Analytic reference: fits a sphere (centroid, mean radius) to the region and
// projects the rigid-sphere oracle field.
class OracleSphereAsfSource : public AsfSource {
 public:
  explicit OracleSphereAsfSource(int grid_level = 2) : grid_level_(grid_level) {}
  bool Available(double frequency) const override;
  SHCoefficients Predict(const PointCloud& region, const Vec3& incoming,
                         double frequency) const override;

 private:
  int grid_level_;
};

// Field of constant magnitude `p` in every band; for tests.
class ConstantAsfSource : public AsfSource {
 public:
  explicit ConstantAsfSource(double p) : p_(p) {}
  bool Available(double) const override { return true; }
  SHCoefficients Predict(const PointCloud&, const Vec3&, double frequency) const override;

 private:
  double p_;
};

// "asf_<freq>.bin", the per-band model file name inside a model directory.
std::string ModelFileName(double frequency);

// Loads every asf_<freq>.bin present in `dir`.
ModelSet LoadModelDir(const std::string& dir);

struct Hit {
  double t = 0.0;
  int triangle = -1;
  int object = -1;
  Vec3 normal = Vec3::Zero();  // unit geometric normal
};

// World-space triangles of one frame with a BVH.
class SceneGeometry {
 public:
  SceneGeometry() = default;
  explicit SceneGeometry(const std::vector<TriangleMesh>& meshes);

  // Nearest hit with t in (eps, t_max), skipping triangles of `ignore_object`.
  bool Intersect(const Vec3& origin, const Vec3& dir, double t_max, Hit* hit,
                 int ignore_object = -1) const;
  // True iff the open segment a-b crosses no triangle.
  bool Visible(const Vec3& a, const Vec3& b, int ignore_object = -1) const;
  // First hit per object along the open segment a-b, ordered by distance.
  std::vector<Hit> SegmentHits(const Vec3& a, const Vec3& b, int ignore_object = -1) const;
  // Ray-parity inside test against the closed mesh of `object`.
  bool Inside(const Vec3& p, int object) const;

  size_t triangle_count() const { return tris_.size(); }

 private:
  struct Tri {
    Vec3 v0, e1, e2, normal;
    int object;
  };
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1;
    int right = -1;
    int first = 0;
    int count = 0;
  };
  int Build(int first, int count, int depth);
  bool HitTri(const Tri& tri, const Vec3& o, const Vec3& d, double t_min, double t_max,
              double* t) const;
  template <typename Visit>
  void Traverse(const Vec3& o, const Vec3& d, double t_max, Visit&& visit) const;

  std::vector<Tri> tris_;
  std::vector<Node> nodes_;
};

struct FrameResult {
  int frame = 0;
  double time = 0.0;
  Vec3 listener = Vec3::Zero();
  bool direct_visible = true;
  BandHistograms histograms;
  double seconds = 0.0;  // wall-clock
  int64_t scatter_events = 0;
  int64_t fallbacks = 0;  // ASF bands reflected geometrically
  size_t asf_cache_size = 0;
};

using FrameCallback = std::function<void(const FrameResult&)>;

// Simulates every frame of `scene`. `asf` may be null (geometric fallback at
// scatterers). Deterministic for a given seed regardless of thread count.
// Throws InvalidScene if the source or listener lies inside a scatterer.
std::vector<FrameResult> Simulate(const Scene& scene, const AsfSource* asf,
                                  const FrameCallback& on_frame = {});

// Single-frame convenience wrapper.
FrameResult SimulateFrame(const Scene& scene, int frame, const AsfSource* asf);

}  // namespace asf

#endif  // ASF_PROPAGATE_H_
