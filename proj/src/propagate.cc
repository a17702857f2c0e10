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

#include "asf/propagate.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <thread>

#include "asf/error.h"
#include "asf/oracle.h"
#include "spdlog/spdlog.h"

namespace asf {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kEps = 1e-6;        // self-intersection guard, m
constexpr double kCacheCell = 0.25;  // region-centre quantisation, m
constexpr int kCacheDirLevel = 2;    // 162 incoming-direction cells
constexpr int kChunkRays = 2048;
constexpr double kRouletteThreshold = 1e-4;  // -40 dB of launch energy, below the T30 range
constexpr double kInf = std::numeric_limits<double>::infinity();

uint64_t SplitMix(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double Uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

Vec3 CosineDirection(const Vec3& n, Rng& rng) {
  const Vec3 a = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 t = n.cross(a).normalized();
  const Vec3 b = n.cross(t);
  const double u1 = Uniform01(rng);
  const double u2 = Uniform01(rng);
  const double r = std::sqrt(u1);
  const double phi = 2.0 * kPi * u2;
  return (r * std::cos(phi) * t + r * std::sin(phi) * b + std::sqrt(std::max(0.0, 1.0 - u1)) * n)
      .normalized();
}

bool InUnit(double v) { return v >= 0.0 && v <= 1.0; }

// --- JSON helpers ---------------------------------------------------------

Vec3 ReadVec3(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) {
    throw InvalidScene(what + " must be a 3-element array");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

BandArray ReadBands(const nlohmann::json& j, const std::string& what) {
  BandArray out{};
  if (j.is_number()) {
    out.fill(j.get<double>());
    return out;
  }
  if (!j.is_array() || j.size() != kNumBands) {
    throw InvalidScene(what + " must hold 7 per-band values");
  }
  for (int b = 0; b < kNumBands; ++b) out[b] = j[b].get<double>();
  return out;
}

std::string Resolve(const std::string& path, const std::string& base_dir) {
  const std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (std::filesystem::path(base_dir) / p).string();
}

TriangleMesh ReadPrimitive(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "sphere") {
    return MakeSphereMesh(
        j.at("radius").get<double>(),
        ReadVec3(j.value("center", nlohmann::json::array({0, 0, 0})), "sphere center"),
        j.value("level", 3));
  }
  if (type == "box") {
    return MakeBoxMesh(ReadVec3(j.at("min"), "box min"), ReadVec3(j.at("max"), "box max"),
                       j.value("inward", true));
  }
  if (type == "floor") {
    return MakeFloorMesh(j.at("half_extent").get<double>(), j.value("height", 0.0));
  }
  throw InvalidScene("unknown primitive type '" + type + "'");
}

void ReadFlags(const nlohmann::json& j, TriangleMesh* mesh) {
  if (j.is_object()) {
    mesh->is_wall = j.value("is_wall", false);
    mesh->is_scatterer = j.value("is_scatterer", false);
    return;
  }
  if (!j.is_array()) throw InvalidScene("object flags must be an array or object");
  for (const auto& f : j) {
    const std::string s = f.get<std::string>();
    if (s == "wall" || s == "is_wall") {
      mesh->is_wall = true;
    } else if (s == "scatterer" || s == "is_scatterer") {
      mesh->is_scatterer = true;
    } else {
      throw InvalidScene("unknown object flag '" + s + "'");
    }
  }
}

SceneObject ReadObject(const nlohmann::json& j, const std::string& base_dir, size_t index) {
  SceneObject obj;
  obj.name = j.value("name", "object" + std::to_string(index));
  if (j.contains("obj_path")) {
    obj.mesh = LoadObj(Resolve(j.at("obj_path").get<std::string>(), base_dir));
  } else if (j.contains("primitive")) {
    obj.mesh = ReadPrimitive(j.at("primitive"));
  } else {
    throw InvalidScene("object '" + obj.name + "' has neither obj_path nor primitive");
  }
  obj.mesh.is_wall = false;
  obj.mesh.is_scatterer = false;
  ReadFlags(j.value("flags", nlohmann::json::array()), &obj.mesh);
  if (j.contains("material")) {
    const auto& m = j.at("material");
    obj.material.alpha = ReadBands(m.value("alpha", nlohmann::json(0.0)), "material.alpha");
    obj.material.scatter = m.value("scatter", 0.0);
  }
  for (const auto& k : j.value("keyframes", nlohmann::json::array())) {
    Keyframe key;
    key.time = k.at("time").get<double>();
    if (k.contains("translation")) key.translation = ReadVec3(k.at("translation"), "translation");
    if (k.contains("rotation")) {
      const auto& r = k.at("rotation");
      if (!r.is_array() || r.size() != 4) {
        throw InvalidScene("keyframe rotation must be a quaternion [w, x, y, z]");
      }
      key.rotation = Eigen::Quaterniond(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(),
                                        r[3].get<double>());
      if (!(key.rotation.norm() > 0.0)) throw InvalidScene("zero keyframe quaternion");
      key.rotation.normalize();
    }
    obj.keyframes.push_back(key);
  }
  return obj;
}

template <typename T, typename F>
auto Interpolate(const std::vector<T>& keys, double time, F&& lerp) {
  if (time <= keys.front().time) return lerp(keys.front(), keys.front(), 0.0);
  if (time >= keys.back().time) return lerp(keys.back(), keys.back(), 0.0);
  size_t i = 0;
  while (i + 1 < keys.size() && keys[i + 1].time <= time) ++i;
  const double span = keys[i + 1].time - keys[i].time;
  const double s = span > 0.0 ? (time - keys[i].time) / span : 0.0;
  return lerp(keys[i], keys[i + 1], s);
}

// --- ASF cache ------------------------------------------------------------

struct AsfEntry {
  Mat3 align = Mat3::Identity();
  std::array<bool, kNumAsfBands> has{};
  std::array<SHCoefficients, kNumAsfBands> sh;
  // min(Q, 1) / S_p with S_p the integral of p^2 and Q the ratio of
  // scattered to intercepted power; 0 when S_p vanishes.
  std::array<double, kNumAsfBands> scale{};
  int max_order = 0;

  bool Any() const {
    return std::any_of(has.begin(), has.end(), [](bool h) { return h; });
  }

  // Clamped magnitudes toward world direction `w`.
  std::array<double, kNumAsfBands> Magnitudes(const Vec3& w) const {
    std::array<double, kNumAsfBands> p{};
    double y[64];
    ShBasisAll(max_order, align * w, y);
    for (int b = 0; b < kNumAsfBands; ++b) {
      if (!has[b]) continue;
      double s = 0.0;
      for (size_t i = 0; i < sh[b].coeffs.size(); ++i) s += sh[b].coeffs[i] * y[i];
      p[b] = std::clamp(s, 0.0, 1.0);
    }
    return p;
  }
};

class AsfCache {
 public:
  AsfCache(const AsfSource* source, uint64_t seed)
      : source_(source),
        seed_(seed),
        dir_grid_(Icosphere(kCacheDirLevel)),
        quad_grid_(Icosphere(kDefaultGridLevel)),
        quad_weights_(VoronoiSolidAngles(quad_grid_)) {}

  void Reset(const RegionIndex* index) {
    std::lock_guard<std::mutex> lock(mu_);
    index_ = index;
    map_.clear();
    regions_.clear();
  }

  size_t size() {
    std::lock_guard<std::mutex> lock(mu_);
    return map_.size();
  }

  // Null when no scatterer surface lies near `center`.
  std::shared_ptr<const AsfEntry> Get(const Vec3& center, const Vec3& dir) {
    const Key key = {std::llround(center.x() / kCacheCell), std::llround(center.y() / kCacheCell),
                     std::llround(center.z() / kCacheCell),
                     NearestGridPoint(dir_grid_, dir.normalized())};
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = map_.find(key);
      if (it != map_.end()) return it->second;
    }
    // Computed from the quantised key only, so any thread gets the same entry.
    auto entry = Compute(key);
    std::lock_guard<std::mutex> lock(mu_);
    return map_.emplace(key, std::move(entry)).first->second;
  }

 private:
  using Key = std::array<int64_t, 4>;

  std::shared_ptr<const AsfEntry> Compute(const Key& key) {
    const Vec3 qc = kCacheCell * Vec3(static_cast<double>(key[0]), static_cast<double>(key[1]),
                                      static_cast<double>(key[2]));
    const Vec3 qd = dir_grid_.points[key[3]];
    const std::shared_ptr<const PointCloud> cloud = Region({key[0], key[1], key[2]}, qc);
    if (!cloud) return nullptr;
    const PointCloud& region = *cloud;
    auto e = std::make_shared<AsfEntry>();
    e->align = IncomingAlignment(qd);

    // Projected area of the region seen along qd; pi * 1.5 * <rho^2> is exact
    // for a sphere sampled uniformly over its surface.
    const Vec3 c = region.Centroid();
    double rho2 = 0.0;
    for (const Vec3& p : region.points) {
      const Vec3 d = p - c;
      rho2 += (d - d.dot(qd) * qd).squaredNorm();
    }
    rho2 /= static_cast<double>(region.size());
    const double area = std::max(1.5 * kPi * rho2, 1e-6);

    for (int b = 0; b < kNumAsfBands; ++b) {
      const double f = kBandCenters[b];
      if (source_ == nullptr || !source_->Available(f)) continue;
      SHCoefficients sh = source_->Predict(region, qd, f);
      if (ShCoefficientCount(sh.order) > 64) throw InvalidArgument("ASF SH order too high");
      const std::vector<double> vals = EvaluateOnGrid(sh, quad_grid_);
      double sp = 0.0;
      for (size_t i = 0; i < vals.size(); ++i) {
        const double p = std::clamp(vals[i], 0.0, 1.0);
        sp += quad_weights_[i] * p * p;
      }
      const double q = kReferenceRadius * kReferenceRadius * sp / area;
      e->scale[b] = sp > 0.0 ? std::min(q, 1.0) / sp : 0.0;
      e->max_order = std::max(e->max_order, sh.order);
      e->sh[b] = std::move(sh);
      e->has[b] = true;
    }
    return e;
  }

  using CellKey = std::array<int64_t, 3>;

  // Resampled cloud around a cell centre; shared by every incoming direction.
  std::shared_ptr<const PointCloud> Region(const CellKey& cell, const Vec3& qc) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = regions_.find(cell);
      if (it != regions_.end()) return it->second;
    }
    uint64_t h = seed_;
    for (int64_t k : cell) h = SplitMix(h ^ static_cast<uint64_t>(k));
    std::shared_ptr<const PointCloud> cloud;
    try {
      cloud = std::make_shared<const PointCloud>(ExtractRegionAt(*index_, qc, h));
    } catch (const EmptyRegion&) {
    }
    std::lock_guard<std::mutex> lock(mu_);
    return regions_.emplace(cell, std::move(cloud)).first->second;
  }

  const AsfSource* source_;
  uint64_t seed_;
  const RegionIndex* index_ = nullptr;
  FieldGrid dir_grid_;
  FieldGrid quad_grid_;
  std::vector<double> quad_weights_;
  std::mutex mu_;
  std::map<Key, std::shared_ptr<const AsfEntry>> map_;
  std::map<CellKey, std::shared_ptr<const PointCloud>> regions_;
};

// --- tracer ---------------------------------------------------------------

struct FrameSetup {
  const Scene* scene = nullptr;
  SceneGeometry geo;
  std::vector<char> scatterer;  // per object
  Vec3 src = Vec3::Zero();
  Vec3 lis = Vec3::Zero();
  AsfCache* cache = nullptr;  // null: scatterers are geometric in all bands
  int nbins = 0;
};

struct ChunkStats {
  int64_t scatter_events = 0;
  int64_t fallbacks = 0;
};

class Tracer {
 public:
  Tracer(const FrameSetup& f, double* hist, ChunkStats* stats)
      : f_(f),
        sim_(f.scene->sim),
        hist_(hist),
        stats_(stats),
        r2_(f.scene->listener.radius * f.scene->listener.radius) {}

  void Deposit(int band, double length, double energy) {
    if (!(energy > 0.0)) return;
    const double delay = length / sim_.sound_speed;
    const auto bin = static_cast<int64_t>(std::floor(delay / sim_.bin_width));
    if (bin < 0 || bin >= f_.nbins) return;
    hist_[static_cast<size_t>(band) * f_.nbins + bin] += energy;
  }

  // Per-band fraction of energy reaching the listener straight from `a`.
  // Walls block outright. Scatterers block the geometric bands; in the ASF
  // bands, with compensation on, each crossed scatterer passes 1 - p^2 of
  // the energy, p taken in the forward direction.
  void Connection(const Vec3& a, int ignore, int lo, int hi, BandArray* f) const {
    for (int b = lo; b < hi; ++b) (*f)[b] = 0.0;
    const std::vector<Hit> hits = f_.geo.SegmentHits(a, f_.lis, ignore);
    if (hits.empty()) {
      for (int b = lo; b < hi; ++b) (*f)[b] = 1.0;
      return;
    }
    for (const Hit& h : hits) {
      if (!f_.scatterer[h.object]) return;
    }
    if (!sim_.diffraction_compensation || f_.cache == nullptr || lo >= kNumAsfBands) return;
    const int top = std::min(hi, kNumAsfBands);
    for (int b = lo; b < top; ++b) (*f)[b] = 1.0;
    const Vec3 u = (f_.lis - a).normalized();
    for (const Hit& h : hits) {
      const Vec3 x = a + h.t * u;
      auto entry = f_.cache->Get(x + kRegionOffset * u, u);
      if (!entry) {
        for (int b = lo; b < top; ++b) (*f)[b] = 0.0;
        return;
      }
      const auto p = entry->Magnitudes(u);
      for (int b = lo; b < top; ++b) {
        (*f)[b] = entry->has[b] ? (*f)[b] * EventGain(p[b], false) : 0.0;
      }
    }
  }

  void Trace(int group, Rng& rng) {
    const int lo = group == 0 ? 0 : kNumAsfBands;
    const int hi = group == 0 ? kNumAsfBands : kNumBands;
    BandArray e{};
    double e0 = 0.0;
    for (int b = lo; b < hi; ++b) {
      e[b] = f_.scene->source.power[b] / static_cast<double>(sim_.n_rays);
      e0 += e[b];
    }
    if (!(e0 > 0.0)) return;

    Vec3 pos = f_.src;
    Vec3 dir = UniformUnitVector(rng);
    Vec3 prev = f_.src;
    double length = 0.0;
    int bounces = 0;
    int ignore = -1;
    bool specular = false;  // the direct segment is deposited separately

    while (true) {
      Hit hit;
      const bool found = f_.geo.Intersect(pos, dir, kInf, &hit, ignore);
      if (specular) Detect(pos, dir, found ? hit.t : kInf, length, e, lo, hi);
      if (!found || ++bounces > sim_.max_order) break;
      const Vec3 x = pos + hit.t * dir;
      length += hit.t;
      ignore = -1;

      const bool asf_event = group == 0 && f_.cache != nullptr && f_.scatterer[hit.object];
      if (asf_event) {
        ScatterStep(x, hit, rng, lo, hi, &e, &pos, &dir, &prev, &ignore, &specular, length);
      } else {
        WallStep(x, hit, rng, lo, hi, &e, &pos, &dir, &specular, length);
        prev = x;
      }

      double total = 0.0;
      for (int b = lo; b < hi; ++b) total += e[b];
      if (!(total > 0.0)) break;
      if (bounces > sim_.roulette_depth) {
        const double q = std::clamp(total / (kRouletteThreshold * e0), 0.05, 1.0);
        if (Uniform01(rng) >= q) break;
        for (int b = lo; b < hi; ++b) e[b] /= q;
      }
    }
  }

 private:
  // Detector sphere for paths whose last event was specular.
  void Detect(const Vec3& pos, const Vec3& dir, double seg, double length, const BandArray& e,
              int lo, int hi) {
    const Vec3 w = f_.lis - pos;
    const double tc = w.dot(dir);
    if (tc <= 0.0 || tc >= seg) return;
    if (w.squaredNorm() - tc * tc >= r2_) return;
    const double inv_area = 1.0 / (kPi * r2_);
    for (int b = lo; b < hi; ++b) Deposit(b, length + tc, e[b] * inv_area);
  }

  void WallStep(const Vec3& x, const Hit& hit, Rng& rng, int lo, int hi, BandArray* e, Vec3* pos,
                Vec3* dir, bool* specular, double length) {
    const Material& m = f_.scene->objects[hit.object].material;
    Vec3 n = hit.normal;
    if (n.dot(*dir) > 0.0) n = -n;
    if (m.scatter > 0.0) {
      const Vec3 v = f_.lis - x;
      const double d = v.norm();
      const double cos_l = n.dot(v) / d;
      if (cos_l > 0.0) {
        BandArray f{};
        Connection(x + kEps * n, -1, lo, hi, &f);
        const double g = m.scatter * cos_l / (kPi * d * d);
        for (int b = lo; b < hi; ++b) {
          Deposit(b, length + d, (*e)[b] * (1.0 - m.alpha[b]) * g * f[b]);
        }
      }
    }
    const Reflection r = Reflect(x, *dir, n, m, *e, rng);
    for (int b = lo; b < hi; ++b) (*e)[b] = r.intensity[b];
    *pos = r.origin;
    *dir = r.direction;
    *specular = r.specular;
  }

  void ScatterStep(const Vec3& x, const Hit& hit, Rng& rng, int lo, int hi, BandArray* e, Vec3* pos,
                   Vec3* dir, Vec3* prev, int* ignore, bool* specular, double length) {
    const Vec3 center = x + kRegionOffset * (*dir);
    const auto entry = f_.cache->Get(center, *dir);
    std::array<bool, kNumAsfBands> has{};
    if (entry) has = entry->has;
    int with = 0;
    int without = 0;
    for (int b = lo; b < hi; ++b) {
      if ((*e)[b] <= 0.0) continue;
      (has[b] ? with : without) += 1;
    }
    if (with == 0) {
      stats_->fallbacks += without;
      WallStep(x, hit, rng, lo, hi, e, pos, dir, specular, length);
      *prev = x;
      return;
    }
    if (without > 0) {
      // Mixed availability: follow one branch at random, weight 2.
      stats_->fallbacks += without;
      const bool asf_branch = Uniform01(rng) < 0.5;
      for (int b = lo; b < hi; ++b) (*e)[b] = has[b] == asf_branch ? 2.0 * (*e)[b] : 0.0;
      if (!asf_branch) {
        WallStep(x, hit, rng, lo, hi, e, pos, dir, specular, length);
        *prev = x;
        return;
      }
    }
    ++stats_->scatter_events;

    // Scattered contribution toward the listener. With compensation on it is
    // only added when the emitter sees the listener; otherwise the occluded
    // connection carries the 1 - p^2 share instead.
    const bool visible = f_.geo.Visible(*prev, f_.lis);
    if (!sim_.diffraction_compensation || visible) {
      const Vec3 v = f_.lis - center;
      const double d = std::max(v.norm(), kRegionRadius);
      const auto p = entry->Magnitudes(v.normalized());
      BandArray f{};
      Connection(center, hit.object, lo, hi, &f);
      const double path = length + (f_.lis - x).norm();
      for (int b = lo; b < hi; ++b) {
        if (!has[b]) continue;
        Deposit(b, path, (*e)[b] * entry->scale[b] * p[b] * p[b] / (d * d) * f[b]);
      }
    }

    // Continue along a uniformly drawn direction (Pr = 1 / 4pi).
    const Vec3 w = UniformUnitVector(rng);
    const auto p = entry->Magnitudes(w);
    for (int b = lo; b < hi; ++b) {
      (*e)[b] = has[b] ? (*e)[b] * entry->scale[b] * p[b] * p[b] * 4.0 * kPi : 0.0;
    }
    *pos = center;
    *dir = w;
    *prev = center;
    *ignore = hit.object;
    *specular = false;
  }

  const FrameSetup& f_;
  const SimSettings& sim_;
  double* hist_;
  ChunkStats* stats_;
  double r2_;
};

TriangleMesh Posed(const SceneObject& obj, double time) {
  TriangleMesh m = obj.mesh;
  if (obj.keyframes.empty()) return m;
  const Eigen::Isometry3d pose = obj.PoseAt(time);
  for (Vec3& v : m.vertices) v = pose * v;
  return m;
}

std::vector<FrameResult> RunFrames(const Scene& scene, const AsfSource* asf, int first, int last,
                                   const FrameCallback& on_frame) {
  scene.Validate();
  const SimSettings& sim = scene.sim;
  const int nbins = static_cast<int>(std::ceil(sim.ir_length / sim.bin_width - 1e-9));
  const size_t hist_size = static_cast<size_t>(kNumBands) * nbins;

  std::vector<char> scatterer(scene.objects.size());
  bool any_scatterer = false;
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    scatterer[i] = scene.objects[i].is_scatterer();
    any_scatterer = any_scatterer || scatterer[i];
  }
  const bool use_asf = asf != nullptr && any_scatterer;
  AsfCache cache(asf, sim.seed);
  RegionIndex index;
  std::vector<Eigen::Matrix4d> cached_poses;

  std::vector<FrameResult> results;
  for (int frame = first; frame < last; ++frame) {
    const auto t0 = std::chrono::steady_clock::now();
    const double time = frame * sim.frame_dt;

    FrameSetup setup;
    setup.scene = &scene;
    setup.scatterer = scatterer;
    setup.src = scene.source.position;
    setup.lis = scene.listener.PositionAt(time);
    setup.nbins = nbins;
    std::vector<TriangleMesh> meshes;
    meshes.reserve(scene.objects.size());
    for (const auto& obj : scene.objects) meshes.push_back(Posed(obj, time));
    setup.geo = SceneGeometry(meshes);

    for (size_t i = 0; i < meshes.size(); ++i) {
      if (!scatterer[i]) continue;
      if (setup.geo.Inside(setup.src, static_cast<int>(i))) {
        throw InvalidScene("source lies inside scatterer '" + scene.objects[i].name + "'");
      }
      if (setup.geo.Inside(setup.lis, static_cast<int>(i))) {
        throw InvalidScene("listener lies inside scatterer '" + scene.objects[i].name +
                           "' at frame " + std::to_string(frame));
      }
    }
    if (!((setup.lis - setup.src).norm() > 1e-9)) {
      throw InvalidScene("source and listener coincide");
    }

    if (use_asf) {
      // Regions only change when a scatterer moves.
      std::vector<Eigen::Matrix4d> poses;
      for (size_t i = 0; i < scene.objects.size(); ++i) {
        if (scatterer[i]) poses.push_back(scene.objects[i].PoseAt(time).matrix());
      }
      if (results.empty() || poses != cached_poses) {
        std::vector<const TriangleMesh*> ptrs;
        std::vector<int> ids;
        for (size_t i = 0; i < meshes.size(); ++i) {
          if (!scatterer[i]) continue;
          ptrs.push_back(&meshes[i]);
          ids.push_back(static_cast<int>(i));
        }
        index = RegionIndex::FromMeshes(ptrs, ids, sim.region_density,
                                        SplitMix(sim.seed ^ static_cast<uint64_t>(frame)));
        cache.Reset(&index);
        cached_poses = std::move(poses);
      }
      setup.cache = &cache;
    }

    FrameResult res;
    res.frame = frame;
    res.time = time;
    res.listener = setup.lis;
    res.direct_visible = setup.geo.Visible(setup.src, setup.lis);

    // Direct path, deposited exactly.
    std::vector<double> total(hist_size, 0.0);
    {
      ChunkStats unused;
      Tracer tracer(setup, total.data(), &unused);
      const double d = (setup.lis - setup.src).norm();
      for (int group = 0; group < 2; ++group) {
        const int lo = group == 0 ? 0 : kNumAsfBands;
        const int hi = group == 0 ? kNumAsfBands : kNumBands;
        BandArray f{};
        tracer.Connection(setup.src, -1, lo, hi, &f);
        for (int b = lo; b < hi; ++b) {
          tracer.Deposit(b, d, scene.source.power[b] * f[b] / (4.0 * kPi * d * d));
        }
      }
    }

    // Fixed chunks, each with its own histogram, merged in chunk order so
    // that the sum does not depend on the worker count.
    const int64_t nchunks = (sim.n_rays + kChunkRays - 1) / kChunkRays;
    std::vector<std::vector<double>> chunk_hist(nchunks);
    std::vector<ChunkStats> chunk_stats(nchunks);
    std::atomic<int64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto worker = [&]() {
      try {
        while (true) {
          const int64_t c = next.fetch_add(1);
          if (c >= nchunks) return;
          chunk_hist[c].assign(hist_size, 0.0);
          Tracer tracer(setup, chunk_hist[c].data(), &chunk_stats[c]);
          const int64_t begin = c * kChunkRays;
          const int64_t end = std::min<int64_t>(sim.n_rays, begin + kChunkRays);
          for (int64_t ray = begin; ray < end; ++ray) {
            for (int group = 0; group < 2; ++group) {
              const uint64_t stream = (static_cast<uint64_t>(frame) << 40) ^
                                      (static_cast<uint64_t>(ray) << 1) ^
                                      static_cast<uint64_t>(group);
              Rng rng(SplitMix(sim.seed ^ SplitMix(stream)));
              tracer.Trace(group, rng);
            }
          }
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        next.store(nchunks);
      }
    };
    const int nthreads = static_cast<int>(std::min<int64_t>(std::max(sim.threads, 1), nchunks));
    if (nthreads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);

    for (int64_t c = 0; c < nchunks; ++c) {
      for (size_t i = 0; i < hist_size; ++i) total[i] += chunk_hist[c][i];
      res.scatter_events += chunk_stats[c].scatter_events;
      res.fallbacks += chunk_stats[c].fallbacks;
    }
    for (int b = 0; b < kNumBands; ++b) {
      res.histograms[b] = EnergyHistogram(kBandCenters[b], sim.bin_width, sim.ir_length);
      std::copy(total.begin() + static_cast<int64_t>(b) * nbins,
                total.begin() + static_cast<int64_t>(b + 1) * nbins,
                res.histograms[b].bins.begin());
    }
    if (use_asf) res.asf_cache_size = cache.size();
    if (res.fallbacks > 0) {
      spdlog::warn(
          "frame {}: {} low-band scatterer interactions had no ASF and were "
          "reflected geometrically",
          frame, res.fallbacks);
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    spdlog::debug("frame {} traced in {:.3f} s ({} scatter events, {} cached ASFs)", frame,
                  res.seconds, res.scatter_events, res.asf_cache_size);
    if (on_frame) on_frame(res);
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace

// --- scene types ----------------------------------------------------------

void Material::Validate() const {
  for (double a : alpha) {
    if (!InUnit(a)) throw InvalidScene("absorption coefficients must lie in [0, 1]");
  }
  if (!InUnit(scatter)) throw InvalidScene("scattering coefficient must lie in [0, 1]");
}

Eigen::Isometry3d SceneObject::PoseAt(double time) const {
  if (keyframes.empty()) return Eigen::Isometry3d::Identity();
  return Interpolate(keyframes, time, [](const Keyframe& a, const Keyframe& b, double s) {
    Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
    pose.linear() = a.rotation.slerp(s, b.rotation).normalized().toRotationMatrix();
    pose.translation() = (1.0 - s) * a.translation + s * b.translation;
    return pose;
  });
}

Vec3 Listener::PositionAt(double time) const {
  if (keyframes.empty()) return position;
  return Interpolate(keyframes, time, [](const ListenerKey& a, const ListenerKey& b, double s) {
    return Vec3((1.0 - s) * a.position + s * b.position);
  });
}

void SimSettings::Validate() const {
  if (n_rays < 1) throw InvalidScene("sim.n_rays must be >= 1");
  if (max_order < 0 || max_order > 200) throw InvalidScene("sim.max_order must lie in [0, 200]");
  if (!(bin_width > 0.0)) throw InvalidScene("sim.bin_width must be positive");
  if (!(ir_length >= bin_width)) throw InvalidScene("sim.ir_length must cover one bin");
  if (frames < 1) throw InvalidScene("sim.frames must be >= 1");
  if (!(frame_dt >= 0.0)) throw InvalidScene("sim.frame_dt must be non-negative");
  if (threads < 1) throw InvalidScene("sim.threads must be >= 1");
  if (!(sound_speed > 0.0)) throw InvalidScene("sim.sound_speed must be positive");
  if (roulette_depth < 0) throw InvalidScene("sim.roulette_depth must be non-negative");
  if (!(region_density > 0.0)) throw InvalidScene("sim.region_density must be positive");
}

void Scene::Validate() const {
  sim.Validate();
  for (const auto& obj : objects) {
    try {
      obj.mesh.Validate();
    } catch (const InvalidArgument& e) {
      throw InvalidScene("object '" + obj.name + "': " + e.what());
    }
    if (obj.is_wall() == obj.is_scatterer()) {
      throw InvalidScene("object '" + obj.name +
                         "' must be flagged as exactly one of wall or "
                         "scatterer");
    }
    obj.material.Validate();
    for (size_t k = 1; k < obj.keyframes.size(); ++k) {
      if (obj.keyframes[k].time < obj.keyframes[k - 1].time) {
        throw InvalidScene("object '" + obj.name + "' keyframes are not sorted by time");
      }
    }
  }
  for (double p : source.power) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidScene("source power must be >= 0");
  }
  if (!source.position.allFinite() || !listener.position.allFinite()) {
    throw InvalidScene("non-finite source or listener position");
  }
  if (!(listener.radius > 0.0)) throw InvalidScene("listener radius must be positive");
  for (size_t k = 1; k < listener.keyframes.size(); ++k) {
    if (listener.keyframes[k].time < listener.keyframes[k - 1].time) {
      throw InvalidScene("listener keyframes are not sorted by time");
    }
  }
}

Scene SceneFromJson(const nlohmann::json& j, const std::string& base_dir) {
  Scene scene;
  try {
    size_t i = 0;
    for (const auto& o : j.value("objects", nlohmann::json::array())) {
      scene.objects.push_back(ReadObject(o, base_dir, i++));
    }
    const auto& src = j.at("source");
    scene.source.position = ReadVec3(src.at("position"), "source.position");
    if (src.contains("power")) scene.source.power = ReadBands(src.at("power"), "source.power");
    const auto& lis = j.at("listener");
    scene.listener.position = ReadVec3(lis.at("position"), "listener.position");
    scene.listener.radius = lis.value("radius", 0.5);
    for (const auto& k : lis.value("keyframes", nlohmann::json::array())) {
      scene.listener.keyframes.push_back(
          {k.at("time").get<double>(), ReadVec3(k.at("position"), "listener keyframe")});
    }
    const nlohmann::json sim = j.value("sim", nlohmann::json::object());
    SimSettings& s = scene.sim;
    s.n_rays = sim.value("n_rays", s.n_rays);
    s.max_order = sim.value("max_order", s.max_order);
    s.bin_width = sim.value("bin_width", s.bin_width);
    s.ir_length = sim.value("ir_length", s.ir_length);
    s.seed = sim.value("seed", s.seed);
    s.frames = sim.value("frames", s.frames);
    s.frame_dt = sim.value("frame_dt", s.frame_dt);
    s.diffraction_compensation = sim.value("diffraction_compensation", s.diffraction_compensation);
    s.threads = sim.value("threads", s.threads);
    s.sound_speed = sim.value("sound_speed", s.sound_speed);
    s.roulette_depth = sim.value("roulette_depth", s.roulette_depth);
    s.region_density = sim.value("region_density", s.region_density);
    const std::string mode = sim.value("asf", std::string("network"));
    if (mode == "network") {
      s.asf_mode = AsfMode::kNetwork;
    } else if (mode == "oracle") {
      s.asf_mode = AsfMode::kOracle;
    } else if (mode == "none") {
      s.asf_mode = AsfMode::kNone;
    } else {
      throw InvalidScene("sim.asf must be one of network, oracle, none");
    }
    if (sim.contains("model_dir")) {
      s.model_dir = Resolve(sim.at("model_dir").get<std::string>(), base_dir);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidScene(std::string("malformed scene JSON: ") + e.what());
  }
  scene.Validate();
  return scene;
}

Scene LoadScene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidScene("cannot parse scene " + path + ": " + e.what());
  }
  return SceneFromJson(j, std::filesystem::path(path).parent_path().string());
}

// --- histograms -----------------------------------------------------------

EnergyHistogram::EnergyHistogram(double band_hz, double width, double length)
    : band(band_hz), bin_width(width) {
  if (!(width > 0.0) || !(length >= width)) {
    throw InvalidArgument("histogram needs a positive bin width and at least one bin");
  }
  bins.assign(static_cast<size_t>(std::ceil(length / width - 1e-9)), 0.0);
}

void EnergyHistogram::Deposit(double delay, double energy) {
  if (!(energy >= 0.0) || !std::isfinite(energy)) {
    throw InvalidArgument("histogram energy must be finite and non-negative");
  }
  if (!(delay >= 0.0)) throw InvalidArgument("negative delay");
  const double bin = std::floor(delay / bin_width);
  if (bin < static_cast<double>(bins.size())) bins[static_cast<size_t>(bin)] += energy;
}

double EnergyHistogram::Total() const {
  double s = 0.0;
  for (double v : bins) s += v;
  return s;
}

void WriteHistogramCsv(const BandHistograms& h, std::ostream& out) {
  out << "band,bin_index,energy\n";
  out.precision(12);
  for (const auto& hist : h) {
    for (size_t i = 0; i < hist.bins.size(); ++i) {
      out << hist.band << ',' << i << ',' << hist.bins[i] << '\n';
    }
  }
}

// --- estimator primitives -------------------------------------------------

double MonteCarloEstimate(const std::vector<double>& f, const std::vector<double>& pr) {
  if (f.size() != pr.size()) throw InvalidArgument("sample and probability counts differ");
  if (f.empty()) throw InvalidArgument("Monte Carlo estimate needs at least one sample");
  double s = 0.0;
  for (size_t i = 0; i < f.size(); ++i) {
    if (!(pr[i] > 0.0) || !std::isfinite(pr[i])) {
      throw InvalidArgument("sample probabilities must be positive");
    }
    s += f[i] / pr[i];
  }
  return s / static_cast<double>(f.size());
}

double EventGain(double p, bool visible) {
  const double c = std::clamp(p, 0.0, 1.0);
  return visible ? c * c : 1.0 - c * c;
}

ScatterEventResult ScatterEvent(const Vec3& incoming, const BandArray& intensity,
                                const std::array<const SHCoefficients*, kNumAsfBands>& asf,
                                bool visible, int n_samples, Rng& rng) {
  if (n_samples < 1) throw InvalidArgument("scatter event needs at least one sample");
  const Mat3 align = IncomingAlignment(incoming.normalized());
  ScatterEventResult out;
  for (int b = 0; b < kNumAsfBands; ++b) {
    out.fallback[b] = asf[b] == nullptr;
    if (out.fallback[b]) {
      spdlog::warn("no ASF for the {} Hz band; falling back to geometric reflection",
                   kBandCenters[b]);
    }
  }
  out.samples.resize(static_cast<size_t>(n_samples));
  for (auto& s : out.samples) {
    s.direction = UniformUnitVector(rng);
    const Vec3 local = align * s.direction;
    for (int b = 0; b < kNumAsfBands; ++b) {
      if (asf[b] == nullptr) continue;
      const double p = std::clamp(Evaluate(*asf[b], local), 0.0, 1.0);
      s.intensity[b] = intensity[b] * EventGain(p, visible) * 4.0 * kPi;
    }
  }
  return out;
}

Reflection Reflect(const Vec3& point, const Vec3& direction, const Vec3& normal,
                   const Material& material, const BandArray& intensity, Rng& rng) {
  Vec3 n = normal.normalized();
  if (n.dot(direction) > 0.0) n = -n;
  Reflection r;
  r.origin = point + kEps * n;
  if (material.scatter > 0.0 && Uniform01(rng) < material.scatter) {
    r.direction = CosineDirection(n, rng);
    r.specular = false;
  } else {
    r.direction = (direction - 2.0 * direction.dot(n) * n).normalized();
    r.specular = true;
  }
  for (int b = 0; b < kNumBands; ++b) r.intensity[b] = intensity[b] * (1.0 - material.alpha[b]);
  return r;
}

// --- ASF sources ----------------------------------------------------------

bool NetworkAsfSource::Available(double frequency) const { return models_.count(frequency) > 0; }

SHCoefficients NetworkAsfSource::Predict(const PointCloud& region, const Vec3& incoming,
                                         double frequency) const {
  return PredictAsf(models_, region, incoming, frequency);
}

bool OracleSphereAsfSource::Available(double frequency) const {
  return std::find(std::begin(kAsfFrequencies), std::end(kAsfFrequencies), frequency) !=
         std::end(kAsfFrequencies);
}

SHCoefficients OracleSphereAsfSource::Predict(const PointCloud& region, const Vec3&,
                                              double frequency) const {
  if (region.points.empty()) throw InvalidArgument("empty region");
  const Vec3 c = region.Centroid();
  double radius = 0.0;
  for (const Vec3& p : region.points) radius += (p - c).norm();
  radius /= static_cast<double>(region.size());
  ScatterConfig cfg;
  cfg.scatterers = {SphereScatterer{std::max(radius, 1e-3), Vec3::Zero()}};
  cfg.frequency = frequency;
  cfg.incoming = Vec3(-1.0, 0.0, 0.0);
  static const auto grid = std::make_shared<const FieldGrid>(Icosphere(2));
  static const std::vector<double> weights = VoronoiSolidAngles(*grid);
  if (grid_level_ != 2) {
    const auto g = std::make_shared<const FieldGrid>(Icosphere(grid_level_));
    return Project(ComputeAsf(cfg, g, kReferenceRadius).field, kDefaultShOrder);
  }
  SHCoefficients out;
  out.frequency = frequency;
  out.coeffs = ProjectSamples(grid->points, ComputeAsf(cfg, grid, kReferenceRadius).field.pressures,
                              kDefaultShOrder, weights);
  return out;
}

SHCoefficients ConstantAsfSource::Predict(const PointCloud&, const Vec3&, double frequency) const {
  SHCoefficients c;
  c.order = kDefaultShOrder;
  c.frequency = frequency;
  c.coeffs.assign(ShCoefficientCount(c.order), 0.0);
  c.coeffs[0] = p_ * std::sqrt(4.0 * kPi);
  return c;
}

std::string ModelFileName(double frequency) {
  return "asf_" + std::to_string(static_cast<int>(std::lround(frequency))) + ".bin";
}

ModelSet LoadModelDir(const std::string& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("model directory not found: " + dir);
  ModelSet models;
  for (double f : kAsfFrequencies) {
    const auto path = std::filesystem::path(dir) / ModelFileName(f);
    if (std::filesystem::exists(path)) models[f] = LoadModel(path.string());
  }
  return models;
}

// --- geometry -------------------------------------------------------------

SceneGeometry::SceneGeometry(const std::vector<TriangleMesh>& meshes) {
  for (size_t m = 0; m < meshes.size(); ++m) {
    const auto& mesh = meshes[m];
    for (const auto& t : mesh.triangles) {
      Tri tri;
      tri.v0 = mesh.vertices[t[0]];
      tri.e1 = mesh.vertices[t[1]] - tri.v0;
      tri.e2 = mesh.vertices[t[2]] - tri.v0;
      tri.normal = tri.e1.cross(tri.e2).normalized();
      tri.object = static_cast<int>(m);
      tris_.push_back(tri);
    }
  }
  if (!tris_.empty()) {
    nodes_.reserve(2 * tris_.size());
    Build(0, static_cast<int>(tris_.size()), 0);
  }
}

int SceneGeometry::Build(int first, int count, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box;
  Eigen::AlignedBox3d cbox;
  for (int i = first; i < first + count; ++i) {
    const Tri& t = tris_[i];
    box.extend(t.v0).extend(t.v0 + t.e1).extend(t.v0 + t.e2);
    cbox.extend(t.v0 + (t.e1 + t.e2) / 3.0);
  }
  nodes_[id].box = box;
  if (count <= 4 || depth > 48) {
    nodes_[id].first = first;
    nodes_[id].count = count;
    return id;
  }
  int axis;
  cbox.sizes().maxCoeff(&axis);
  const int mid = first + count / 2;
  std::nth_element(tris_.begin() + first, tris_.begin() + mid, tris_.begin() + first + count,
                   [axis](const Tri& a, const Tri& b) {
                     return (3.0 * a.v0 + a.e1 + a.e2)[axis] < (3.0 * b.v0 + b.e1 + b.e2)[axis];
                   });
  const int left = Build(first, mid - first, depth + 1);
  const int right = Build(mid, first + count - mid, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

bool SceneGeometry::HitTri(const Tri& tri, const Vec3& o, const Vec3& d, double t_min, double t_max,
                           double* t) const {
  const Vec3 p = d.cross(tri.e2);
  const double det = tri.e1.dot(p);
  if (std::abs(det) < 1e-14) return false;
  const double inv = 1.0 / det;
  const Vec3 s = o - tri.v0;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 q = s.cross(tri.e1);
  const double v = d.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  const double tt = tri.e2.dot(q) * inv;
  if (!(tt > t_min && tt < t_max)) return false;
  *t = tt;
  return true;
}

template <typename Visit>
void SceneGeometry::Traverse(const Vec3& o, const Vec3& d, double t_max, Visit&& visit) const {
  if (nodes_.empty()) return;
  const Vec3 inv = d.cwiseInverse();
  int stack[128];
  int sp = 0;
  stack[sp++] = 0;
  double limit = t_max;
  while (sp > 0) {
    const Node& n = nodes_[stack[--sp]];
    double tn = 0.0;
    double tf = limit;
    bool miss = false;
    for (int a = 0; a < 3 && !miss; ++a) {
      double t0 = (n.box.min()[a] - o[a]) * inv[a];
      double t1 = (n.box.max()[a] - o[a]) * inv[a];
      if (std::isnan(t0) || std::isnan(t1)) continue;  // on a slab plane, parallel
      if (t0 > t1) std::swap(t0, t1);
      tn = std::max(tn, t0);
      tf = std::min(tf, t1 * (1.0 + 1e-12) + 1e-12);
      miss = tn > tf;
    }
    if (miss) continue;
    if (n.count > 0) {
      for (int i = n.first; i < n.first + n.count; ++i) {
        if (!visit(i, &limit)) return;
      }
    } else {
      stack[sp++] = n.left;
      stack[sp++] = n.right;
    }
  }
}

bool SceneGeometry::Intersect(const Vec3& origin, const Vec3& dir, double t_max, Hit* hit,
                              int ignore_object) const {
  bool found = false;
  Traverse(origin, dir, t_max, [&](int i, double* limit) {
    const Tri& tri = tris_[i];
    if (tri.object == ignore_object) return true;
    double t;
    if (HitTri(tri, origin, dir, kEps, *limit, &t)) {
      *limit = t;
      hit->t = t;
      hit->triangle = i;
      hit->object = tri.object;
      hit->normal = tri.normal;
      found = true;
    }
    return true;
  });
  return found;
}

bool SceneGeometry::Visible(const Vec3& a, const Vec3& b, int ignore_object) const {
  const Vec3 d = b - a;
  const double len = d.norm();
  if (!(len > 2.0 * kEps)) return true;
  const Vec3 u = d / len;
  bool blocked = false;
  Traverse(a, u, len - kEps, [&](int i, double* limit) {
    const Tri& tri = tris_[i];
    if (tri.object == ignore_object) return true;
    double t;
    if (HitTri(tri, a, u, kEps, *limit, &t)) {
      blocked = true;
      return false;
    }
    return true;
  });
  return !blocked;
}

std::vector<Hit> SceneGeometry::SegmentHits(const Vec3& a, const Vec3& b, int ignore_object) const {
  std::map<int, Hit> first;
  const Vec3 d = b - a;
  const double len = d.norm();
  if (!(len > 2.0 * kEps)) return {};
  const Vec3 u = d / len;
  Traverse(a, u, len - kEps, [&](int i, double* limit) {
    const Tri& tri = tris_[i];
    if (tri.object == ignore_object) return true;
    double t;
    if (HitTri(tri, a, u, kEps, *limit, &t)) {
      auto it = first.find(tri.object);
      if (it == first.end() || t < it->second.t) {
        first[tri.object] = Hit{t, i, tri.object, tri.normal};
      }
    }
    return true;
  });
  std::vector<Hit> out;
  for (const auto& [obj, h] : first) out.push_back(h);
  std::sort(out.begin(), out.end(), [](const Hit& x, const Hit& y) { return x.t < y.t; });
  return out;
}

bool SceneGeometry::Inside(const Vec3& p, int object) const {
  // An irrational-looking direction keeps the parity ray off edges.
  const Vec3 dir = Vec3(0.5373, 0.6011, 0.5913).normalized();
  int crossings = 0;
  Traverse(p, dir, kInf, [&](int i, double* limit) {
    const Tri& tri = tris_[i];
    double t;
    if (tri.object == object && HitTri(tri, p, dir, 0.0, *limit, &t)) ++crossings;
    return true;
  });
  return (crossings % 2) == 1;
}

// --- simulation -----------------------------------------------------------

std::vector<FrameResult> Simulate(const Scene& scene, const AsfSource* asf,
                                  const FrameCallback& on_frame) {
  return RunFrames(scene, asf, 0, scene.sim.frames, on_frame);
}

FrameResult SimulateFrame(const Scene& scene, int frame, const AsfSource* asf) {
  if (frame < 0 || frame >= scene.sim.frames) throw InvalidArgument("frame index out of range");
  return RunFrames(scene, asf, frame, frame + 1, {}).front();
}

}  // namespace asf
