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

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include "asf/dataset.h"
#include "asf/error.h"
#include "asf/manifest.h"
#include "asf/oracle.h"
#include "asf/pointcloud.h"
#include "asf/propagate.h"
#include "asf/regressor.h"
#include "asf/render.h"
#include "asf/shfield.h"
#include "asf/sphgeom.h"

namespace py = pybind11;

namespace asf {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

RowMat ToMatrix(const std::vector<Vec3>& pts) {
  RowMat m(pts.size(), 3);
  for (size_t i = 0; i < pts.size(); ++i) m.row(i) = pts[i].transpose();
  return m;
}

PointCloud FromMatrix(const RowMat& m) {
  PointCloud pc;
  for (Eigen::Index i = 0; i < m.rows(); ++i) pc.points.emplace_back(m.row(i).transpose());
  return pc;
}

std::shared_ptr<const FieldGrid> SharedGrid(int level) {
  return std::make_shared<const FieldGrid>(Icosphere(level));
}

// Histograms of one frame as a (bands, bins) array.
py::array_t<double> HistogramArray(const BandHistograms& h) {
  const size_t bins = h.front().bins.size();
  py::array_t<double> out({static_cast<size_t>(kNumBands), bins});
  auto r = out.mutable_unchecked<2>();
  for (int b = 0; b < kNumBands; ++b) {
    for (size_t i = 0; i < bins; ++i) r(b, i) = h[b].bins[i];
  }
  return out;
}

}  // namespace
}  // namespace asf

PYBIND11_MODULE(_core, m) {
  using namespace asf;
  m.doc() = "Acoustic scattering fields: oracle, SH fitting, regressor and propagation";
  m.attr("__version__") = kVersion;

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericalFailure>(m, "NumericalFailure", PyExc_ArithmeticError);

  m.attr("band_centers") = std::vector<double>(kBandCenters.begin(), kBandCenters.end());

  m.def(
      "icosphere", [](int level) { return ToMatrix(Icosphere(level).points); },
      py::arg("level") = kDefaultGridLevel, "Unit vectors of a subdivided icosahedron.");
  m.def(
      "voronoi_solid_angles", [](int level) { return VoronoiSolidAngles(Icosphere(level)); },
      py::arg("level") = kDefaultGridLevel);
  m.def(
      "sh_basis", [](int order, const Vec3& v) { return ShBasisAll(order, v.normalized()); },
      py::arg("order"), py::arg("direction"));

  m.def(
      "compute_asf",
      [](double radius, double frequency, int level, double r_ref) {
        ScatterConfig cfg;
        cfg.frequency = frequency;
        cfg.scatterers = {SphereScatterer{radius, Vec3::Zero()}};
        return ComputeAsf(cfg, SharedGrid(level), r_ref).field.pressures;
      },
      py::arg("radius"), py::arg("frequency"), py::arg("level") = kDefaultGridLevel,
      py::arg("r_ref") = kReferenceRadius,
      "Clipped |scattered pressure| of a rigid sphere on the icosphere grid.");

  m.def(
      "project",
      [](const std::vector<double>& pressures, int order, int level) {
        SphericalField f{SharedGrid(level), pressures, 0.0, kReferenceRadius};
        return Project(f, order).coeffs;
      },
      py::arg("pressures"), py::arg("order") = kDefaultShOrder,
      py::arg("level") = kDefaultGridLevel, "Voronoi-weighted least-squares SH fit.");

  m.def(
      "fit_error_curve",
      [](const std::vector<double>& pressures, int max_order, int level) {
        SphericalField f{SharedGrid(level), pressures, 0.0, kReferenceRadius};
        std::vector<double> out;
        for (const auto& pt : FitErrorCurve(f, max_order)) out.push_back(pt.relative_error);
        return out;
      },
      py::arg("pressures"), py::arg("max_order"), py::arg("level") = kDefaultGridLevel);

  m.def(
      "evaluate_sh",
      [](const std::vector<double>& coeffs, const Vec3& v) {
        SHCoefficients c;
        c.coeffs = coeffs;
        c.order = static_cast<int>(std::lround(std::sqrt(coeffs.size()))) - 1;
        return Evaluate(c, v.normalized());
      },
      py::arg("coeffs"), py::arg("direction"));

  m.def(
      "generate_dataset",
      [](int count, std::vector<double> freqs, uint64_t seed, double composites,
         const std::string& path) {
        DatasetSpec spec;
        spec.count = count;
        spec.frequencies = std::move(freqs);
        spec.seed = seed;
        spec.composite_fraction = composites;
        const Dataset ds = GenerateDataset(spec);
        WriteJsonl(ds, path);
        return ds.records.size();
      },
      py::arg("count"), py::arg("freqs") = std::vector<double>{125, 250, 500, 1000},
      py::arg("seed") = 1, py::arg("composites") = 0.0, py::arg("path"),
      "Writes an oracle-labelled JSON-lines dataset and returns its record count.");

  m.def("parameter_count", []() { return ParameterCount(NetworkConfig{}); });

  m.def(
      "forward",
      [](const RowMat& cloud, uint64_t init_seed) {
        NetworkConfig cfg;
        cfg.num_points = static_cast<int>(cloud.rows());
        return Forward(NetworkParams::Init(cfg, init_seed), FromMatrix(cloud));
      },
      py::arg("cloud"), py::arg("init_seed") = 1,
      "Forward pass of a freshly initialised regressor (for inspection).");

  m.def(
      "predict_asf",
      [](const std::string& model_dir, const RowMat& cloud, const Vec3& incoming,
         double frequency) {
        return PredictAsf(LoadModelDir(model_dir), FromMatrix(cloud), incoming, frequency).coeffs;
      },
      py::arg("model_dir"), py::arg("cloud"), py::arg("incoming"), py::arg("frequency"));

  m.def(
      "mc_estimate",
      [](const std::vector<double>& f, const std::vector<double>& pr) {
        return MonteCarloEstimate(f, pr);
      },
      py::arg("values"), py::arg("probabilities"));

  m.def(
      "simulate",
      [](const std::string& scene_path, int frame) {
        const Scene scene = LoadScene(scene_path);
        std::unique_ptr<AsfSource> asf;
        if (scene.sim.asf_mode == AsfMode::kOracle) {
          asf = std::make_unique<OracleSphereAsfSource>();
        } else if (scene.sim.asf_mode == AsfMode::kNetwork && !scene.sim.model_dir.empty()) {
          asf = std::make_unique<NetworkAsfSource>(LoadModelDir(scene.sim.model_dir));
        }
        FrameResult r;
        {
          py::gil_scoped_release release;
          r = SimulateFrame(scene, frame, asf.get());
        }
        return py::make_tuple(HistogramArray(r.histograms), r.histograms.front().bin_width);
      },
      py::arg("scene"), py::arg("frame") = 0,
      "Per-band energy histograms (bands x bins) and the bin width for one frame.");

  m.def(
      "synthesize",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& energy,
         double bin_width, int sample_rate, uint64_t seed) {
        if (energy.ndim() != 2 || energy.shape(0) != kNumBands) {
          throw InvalidArgument("energy must have shape (7, bins)");
        }
        std::vector<EnergyHistogram> h;
        auto r = energy.unchecked<2>();
        for (int b = 0; b < kNumBands; ++b) {
          EnergyHistogram e(kBandCenters[b], bin_width, bin_width * energy.shape(1));
          e.bins.assign(energy.shape(1), 0.0);
          for (py::ssize_t i = 0; i < energy.shape(1); ++i) e.bins[i] = r(b, i);
          h.push_back(std::move(e));
        }
        return Synthesize(Envelopes(h), sample_rate, seed).samples;
      },
      py::arg("energy"), py::arg("bin_width"), py::arg("sample_rate") = kDefaultSampleRate,
      py::arg("seed") = 1, "Random-phase impulse response from band energy histograms.");

  m.def(
      "rt60",
      [](const std::vector<double>& energy, double bin_width) {
        EnergyHistogram h(500.0, bin_width, bin_width * energy.size());
        h.bins = energy;
        return Rt60(h);
      },
      py::arg("energy"), py::arg("bin_width"));

  m.def("sabine_rt60", &SabineRt60, py::arg("volume"), py::arg("surface_area"), py::arg("alpha"));
}
