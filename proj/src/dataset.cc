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

#include "asf/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "asf/error.h"
#include "json.hpp"

namespace asf {

namespace {

using nlohmann::json;

// Dense samples on the union surface of `spheres` (points buried inside a
// neighbouring sphere are rejected).
std::vector<Vec3> SampleSphereUnion(const std::vector<SphereScatterer>& spheres, int n, Rng& rng) {
  std::vector<double> cdf;
  double acc = 0.0;
  for (const auto& s : spheres) {
    acc += s.radius * s.radius;
    cdf.push_back(acc);
  }
  std::uniform_real_distribution<double> u(0.0, acc);
  std::vector<Vec3> pts;
  pts.reserve(n);
  int guard = 0;
  while (static_cast<int>(pts.size()) < n) {
    if (++guard > 100 * n) throw NumericalFailure("sphere union has no exposed surface");
    const double r = u(rng);
    size_t k = std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin();
    k = std::min(k, spheres.size() - 1);
    const Vec3 p = spheres[k].center + spheres[k].radius * UniformUnitVector(rng);
    bool buried = false;
    for (size_t o = 0; o < spheres.size(); ++o) {
      if (o != k && (p - spheres[o].center).norm() < spheres[o].radius) {
        buried = true;
        break;
      }
    }
    if (!buried) pts.push_back(p);
  }
  return pts;
}

std::vector<SphereScatterer> DrawComposite(Rng& rng) {
  std::uniform_real_distribution<double> radius(0.3, 0.6);
  std::uniform_real_distribution<double> spacing(0.7, 1.3);
  std::uniform_real_distribution<double> longest(1.0, 2.0);
  const double r1 = radius(rng);
  const double r2 = radius(rng);
  const Vec3 axis = UniformUnitVector(rng);
  const double d = (r1 + r2) * spacing(rng);
  const double extent = std::max(d + r1 + r2, 2.0 * std::max(r1, r2));
  const double s = longest(rng) / extent;
  return {SphereScatterer{r1 * s, -0.5 * d * s * axis},
          SphereScatterer{r2 * s, 0.5 * d * s * axis}};
}

json MatToJson(const Mat3& m) {
  json a = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  }
  return a;
}

Mat3 MatFromJson(const json& a) {
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = a.at(r * 3 + c).get<double>();
  }
  return m;
}

json RecordToJson(const DatasetRecord& rec, const Dataset& ds) {
  json spheres = json::array();
  for (const auto& s : rec.spheres) {
    spheres.push_back(
        {{"radius", s.radius}, {"center", {s.center.x(), s.center.y(), s.center.z()}}});
  }
  json points = json::array();
  for (const Vec3& p : rec.cloud.points) points.push_back({p.x(), p.y(), p.z()});
  json labels = json::array();
  for (const auto& [freq, label] : rec.labels) {
    labels.push_back({{"frequency", freq},
                      {"order", label.sh.order},
                      {"sh_coeffs", label.sh.coeffs},
                      {"pressures", label.pressures},
                      {"clip_count", label.clip_count}});
  }
  return json{{"id", rec.id},
              {"config",
               {{"spheres", spheres},
                {"composite", rec.composite},
                {"approximate", rec.composite},
                {"augmented", rec.augmented},
                {"rotation", MatToJson(rec.rotation)}}},
              {"r_ref", ds.r_ref},
              {"grid_level", ds.grid_level},
              {"points", points},
              {"labels", labels}};
}

}  // namespace

std::vector<double> Dataset::Frequencies() const {
  std::vector<double> out;
  if (records.empty()) return out;
  for (const auto& [f, _] : records.front().labels) out.push_back(f);
  return out;
}

void LabelRecord(DatasetRecord* record, const std::vector<double>& frequencies,
                 const std::shared_ptr<const FieldGrid>& grid, double r_ref, int sh_order) {
  record->labels.clear();
  for (double f : frequencies) {
    ScatterConfig cfg;
    cfg.scatterers = record->spheres;
    cfg.frequency = f;
    AsfResult asf = ComputeAsf(cfg, grid, r_ref);
    AsfLabel label;
    label.sh = Project(asf.field, sh_order);
    label.pressures = std::move(asf.field.pressures);
    label.clip_count = asf.clip_count;
    record->labels.emplace(f, std::move(label));
  }
}

DatasetRecord MakeRecord(const std::vector<SphereScatterer>& spheres, int cloud_size,
                         int surface_samples, Rng& rng) {
  PointCloud dense;
  dense.points = SampleSphereUnion(spheres, std::max(surface_samples, cloud_size), rng);
  PointCloud cloud = FarthestPointSample(dense, cloud_size, rng);
  const Vec3 centroid = cloud.Centroid();
  for (Vec3& p : cloud.points) p -= centroid;
  cloud.frame = Frame::kCanonical;

  DatasetRecord rec;
  rec.spheres = spheres;
  for (auto& s : rec.spheres) s.center -= centroid;
  rec.composite = spheres.size() > 1;
  rec.cloud = std::move(cloud);
  return rec;
}

Dataset GenerateDataset(const DatasetSpec& spec) {
  if (spec.count < 1) throw InvalidArgument("dataset count must be >= 1");
  if (spec.composite_fraction < 0.0 || spec.composite_fraction > 1.0) {
    throw InvalidArgument("composite fraction must be in [0, 1]");
  }
  if (spec.frequencies.empty()) throw InvalidArgument("no frequencies requested");
  auto grid = std::make_shared<const FieldGrid>(Icosphere(spec.grid_level));

  Dataset base;
  base.r_ref = spec.r_ref;
  base.grid_level = spec.grid_level;
  base.sh_order = spec.sh_order;
  const int n_base = (spec.count + 1) / 2;
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> radius(spec.min_radius, spec.max_radius);
  for (int i = 0; i < n_base; ++i) {
    std::vector<SphereScatterer> spheres;
    if (unit(rng) < spec.composite_fraction) {
      spheres = DrawComposite(rng);
    } else {
      spheres = {SphereScatterer{radius(rng), Vec3::Zero()}};
    }
    DatasetRecord rec = MakeRecord(spheres, spec.cloud_size, spec.surface_samples, rng);
    rec.id = i;
    LabelRecord(&rec, spec.frequencies, grid, spec.r_ref, spec.sh_order);
    base.records.push_back(std::move(rec));
  }

  Dataset rotated = RandomRotationAugment(base, spec.seed ^ 0xA5A5A5A5ULL);
  Dataset out = base;
  for (int i = 0; static_cast<int>(out.records.size()) < spec.count; ++i) {
    DatasetRecord rec = rotated.records[i];
    rec.id = static_cast<int>(out.records.size());
    out.records.push_back(std::move(rec));
  }
  return out;
}

Dataset RandomRotationAugment(const Dataset& dataset, uint64_t seed) {
  auto grid = std::make_shared<const FieldGrid>(Icosphere(dataset.grid_level));
  Rng rng(seed);
  Dataset out;
  out.r_ref = dataset.r_ref;
  out.grid_level = dataset.grid_level;
  out.sh_order = dataset.sh_order;
  for (const auto& rec : dataset.records) {
    const Mat3 r = RandomRotation(rng);
    DatasetRecord aug = rec;
    aug.augmented = true;
    aug.rotation = r * rec.rotation;
    for (auto& s : aug.spheres) s.center = r * s.center;
    for (auto& p : aug.cloud.points) p = r * p;
    std::vector<double> freqs;
    for (const auto& [f, _] : rec.labels) freqs.push_back(f);
    LabelRecord(&aug, freqs, grid, dataset.r_ref, dataset.sh_order);
    out.records.push_back(std::move(aug));
  }
  return out;
}

Split SplitDataset(size_t n, uint64_t seed, double train_ratio) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  size_t n_train = static_cast<size_t>(std::llround(train_ratio * static_cast<double>(n)));
  if (n >= 2) n_train = std::clamp<size_t>(n_train, 1, n - 1);
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<long>(n_train));
  s.test.assign(idx.begin() + static_cast<long>(n_train), idx.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void WriteJsonl(const Dataset& dataset, std::ostream& out) {
  for (const auto& rec : dataset.records) {
    out << RecordToJson(rec, dataset).dump() << '\n';
  }
}

void WriteJsonl(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset " + path);
  WriteJsonl(dataset, out);
  out.flush();
  if (!out) throw IoError("failed writing dataset " + path);
}

Dataset ReadJsonl(std::istream& in) {
  Dataset ds;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    DatasetRecord rec;
    rec.id = j.at("id").get<int>();
    const json& cfg = j.at("config");
    for (const auto& s : cfg.at("spheres")) {
      const auto c = s.at("center").get<std::vector<double>>();
      rec.spheres.push_back(
          SphereScatterer{s.at("radius").get<double>(), Vec3(c.at(0), c.at(1), c.at(2))});
    }
    rec.composite = cfg.value("composite", false);
    rec.augmented = cfg.value("augmented", false);
    if (cfg.contains("rotation")) rec.rotation = MatFromJson(cfg.at("rotation"));
    rec.cloud.frame = Frame::kCanonical;
    for (const auto& p : j.at("points")) {
      rec.cloud.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(),
                                    p.at(2).get<double>());
    }
    for (const auto& l : j.at("labels")) {
      AsfLabel label;
      label.sh.frequency = l.at("frequency").get<double>();
      label.sh.order = l.at("order").get<int>();
      label.sh.coeffs = l.at("sh_coeffs").get<std::vector<double>>();
      label.sh.Validate();
      label.pressures = l.value("pressures", std::vector<double>{});
      label.clip_count = l.value("clip_count", 0);
      rec.labels.emplace(label.sh.frequency, std::move(label));
    }
    if (first) {
      ds.r_ref = j.at("r_ref").get<double>();
      ds.grid_level = j.at("grid_level").get<int>();
      ds.sh_order = rec.labels.empty() ? kDefaultShOrder : rec.labels.begin()->second.sh.order;
      first = false;
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

Dataset ReadJsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path);
  try {
    return ReadJsonl(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed dataset " + path + ": " + e.what());
  }
}

}  // namespace asf
