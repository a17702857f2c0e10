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

#ifndef ASF_DATASET_H_
#define ASF_DATASET_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "asf/oracle.h"
#include "asf/pointcloud.h"
#include "asf/shfield.h"

namespace asf {

struct AsfLabel {
  SHCoefficients sh;
  std::vector<double> pressures;  // clipped oracle magnitudes on the grid
  int clip_count = 0;
};

// One scatterer configuration in the canonical frame (origin at the cloud
// centroid, plane wave along -x) with a label per frequency.
struct DatasetRecord {
  int id = 0;
  std::vector<SphereScatterer> spheres;
  bool composite = false;  // two-sphere, single-scattering approximation
  bool augmented = false;
  Mat3 rotation = Mat3::Identity();  // applied to the base configuration
  PointCloud cloud;
  std::map<double, AsfLabel> labels;  // keyed by frequency in Hz
};

struct Dataset {
  double r_ref = kReferenceRadius;
  int grid_level = kDefaultGridLevel;
  int sh_order = kDefaultShOrder;
  std::vector<DatasetRecord> records;

  std::vector<double> Frequencies() const;
};

struct DatasetSpec {
  int count = 100;
  std::vector<double> frequencies = {125.0, 250.0, 500.0, 1000.0};
  uint64_t seed = 1;
  double composite_fraction = 0.0;
  double r_ref = kReferenceRadius;
  int grid_level = kDefaultGridLevel;
  int sh_order = kDefaultShOrder;
  int cloud_size = kCloudSize;
  int surface_samples = 4096;  // dense samples before FPS
  double min_radius = 0.5;     // single spheres
  double max_radius = 1.0;
};

// Oracle labels (ASF + SH projection) for every requested frequency.
void LabelRecord(DatasetRecord* record, const std::vector<double>& frequencies,
                 const std::shared_ptr<const FieldGrid>& grid, double r_ref, int sh_order);

// Builds the cloud for `spheres`, recentres everything on the cloud centroid.
DatasetRecord MakeRecord(const std::vector<SphereScatterer>& spheres, int cloud_size,
                         int surface_samples, Rng& rng);

// Half of the records are freshly drawn configurations; the other half are
// rotated copies of them (see RandomRotationAugment).
Dataset GenerateDataset(const DatasetSpec& spec);

// One uniform SO(3) rotation per record about the centroid, with labels
// regenerated from the oracle for the rotated geometry.
Dataset RandomRotationAugment(const Dataset& dataset, uint64_t seed);

struct Split {
  std::vector<int> train;
  std::vector<int> test;
};

// Deterministic shuffled split; train gets round(ratio * n) records.
Split SplitDataset(size_t n, uint64_t seed, double train_ratio = 0.9);

void WriteJsonl(const Dataset& dataset, std::ostream& out);
void WriteJsonl(const Dataset& dataset, const std::string& path);
Dataset ReadJsonl(std::istream& in);
Dataset ReadJsonl(const std::string& path);

}  // namespace asf

#endif  // ASF_DATASET_H_
