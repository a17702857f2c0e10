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

#include "asf/shfield.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <sstream>

#include "asf/error.h"
#include "asf/oracle.h"
#include "gtest/gtest.h"

namespace asf {
namespace {

constexpr double kPi = std::numbers::pi;

TEST(ShBasisTest, ClosedFormValues) {
  EXPECT_NEAR(ShBasis(0, 0, {0.3, 1.1}), 0.5 / std::sqrt(kPi), 1e-14);
  EXPECT_NEAR(ShBasis(1, 0, {0.0, 0.0}), std::sqrt(3.0 / (4.0 * kPi)), 1e-14);
  // Without the Condon-Shortley phase Y_1^1 is +sqrt(3/4pi) x.
  const Vec3 v(0.6, 0.0, 0.8);
  std::vector<double> y = ShBasisAll(1, v);
  EXPECT_NEAR(y[ShIndex(1, 1)], std::sqrt(3.0 / (4.0 * kPi)) * 0.6, 1e-14);
  EXPECT_NEAR(y[ShIndex(1, -1)], 0.0, 1e-14);
  EXPECT_NEAR(y[ShIndex(1, 0)], std::sqrt(3.0 / (4.0 * kPi)) * 0.8, 1e-14);
  // Y_2^0 = sqrt(5/16pi)(3z^2 - 1)
  const double y20 = ShBasisAll(2, v)[ShIndex(2, 0)];
  EXPECT_NEAR(y20, std::sqrt(5.0 / (16.0 * kPi)) * (3.0 * 0.64 - 1.0), 1e-13);
}

TEST(ShBasisTest, AllMatchesSingle) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const Vec3 v = UniformUnitVector(rng);
    const Direction d = CartToSph(v);
    const auto all = ShBasisAll(4, v);
    for (int l = 0; l <= 4; ++l) {
      for (int m = -l; m <= l; ++m) {
        EXPECT_NEAR(all[ShIndex(l, m)], ShBasis(l, m, d), 1e-12);
      }
    }
  }
}

// Gauss-Legendre nodes on [-1, 1] by Newton iteration.
void GaussLegendre(int n, std::vector<double>* x, std::vector<double>* w) {
  x->resize(n);
  w->resize(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    (*x)[i] = z;
    (*w)[i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

TEST(ShBasisTest, OrthonormalUpToOrderFive) {
  std::vector<double> gx, gw;
  GaussLegendre(16, &gx, &gw);
  const int n_phi = 32;
  const int n = ShCoefficientCount(5);
  std::vector<double> gram(n * n, 0.0);
  for (size_t i = 0; i < gx.size(); ++i) {
    const double st = std::sqrt(1.0 - gx[i] * gx[i]);
    for (int j = 0; j < n_phi; ++j) {
      const double phi = 2.0 * kPi * j / n_phi;
      const Vec3 v(st * std::cos(phi), st * std::sin(phi), gx[i]);
      const auto y = ShBasisAll(5, v);
      const double wt = gw[i] * 2.0 * kPi / n_phi;
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) gram[a * n + b] += wt * y[a] * y[b];
      }
    }
  }
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) EXPECT_NEAR(gram[a * n + b], a == b ? 1.0 : 0.0, 1e-6);
  }
}

TEST(ShBasisTest, VoronoiQuadratureIsNearlyOrthonormal) {
  const FieldGrid g = Icosphere(4);
  const auto w = VoronoiSolidAngles(g);
  const int n = ShCoefficientCount(3);
  std::vector<double> gram(n * n, 0.0);
  for (size_t i = 0; i < g.size(); ++i) {
    const auto y = ShBasisAll(3, g.points[i]);
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) gram[a * n + b] += w[i] * y[a] * y[b];
    }
  }
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) EXPECT_NEAR(gram[a * n + b], a == b ? 1.0 : 0.0, 5e-3);
  }
}

SphericalField FieldFrom(const std::shared_ptr<const FieldGrid>& g, const SHCoefficients& c) {
  SphericalField f;
  f.grid = g;
  f.frequency = c.frequency;
  f.pressures = EvaluateOnGrid(c, *g);
  return f;
}

TEST(ProjectTest, RecoversBandLimitedField) {
  auto g = std::make_shared<const FieldGrid>(Icosphere(3));
  SHCoefficients c;
  c.order = 3;
  c.frequency = 250.0;
  for (int i = 0; i < 16; ++i) c.coeffs.push_back(0.1 * std::sin(1.0 + i));
  const SHCoefficients back = Project(FieldFrom(g, c), 3);
  ASSERT_EQ(back.coeffs.size(), 16u);
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(back.coeffs[i], c.coeffs[i], 1e-10);
  EXPECT_DOUBLE_EQ(back.frequency, 250.0);
}

TEST(ProjectTest, RejectsUnderdeterminedFits) {
  auto g = std::make_shared<const FieldGrid>(Icosphere(0));  // 12 points
  SphericalField f;
  f.grid = g;
  f.pressures.assign(g->size(), 1.0);
  EXPECT_NO_THROW(Project(f, 2));
  EXPECT_THROW(Project(f, 3), InvalidArgument);
  EXPECT_THROW(Project(f, -1), InvalidArgument);
}

TEST(NreTest, ZeroForIdenticalAndUndefinedForZeroTarget) {
  const std::vector<double> w(4, 1.0);
  EXPECT_DOUBLE_EQ(WeightedNre({1, 2, 3, 4}, {1, 2, 3, 4}, w), 0.0);
  EXPECT_NEAR(WeightedNre({1, 1, 1, 1}, {0, 0, 0, 0}, w), 1.0, 1e-15);
  EXPECT_THROW(WeightedNre({0, 0, 0, 0}, {1, 0, 0, 0}, w), UndefinedMetric);
}

TEST(FitErrorTest, MonotoneAndSmallForSmoothOracleField) {
  auto g = std::make_shared<const FieldGrid>(Icosphere(3));
  ScatterConfig cfg;
  cfg.scatterers = {SphereScatterer{0.75, Vec3::Zero()}};
  cfg.frequency = 125.0;
  const auto asf = ComputeAsf(cfg, g);
  const auto curve = FitErrorCurve(asf.field, 6);
  ASSERT_EQ(curve.size(), 7u);
  for (size_t i = 0; i < curve.size(); ++i) EXPECT_EQ(curve[i].order, static_cast<int>(i));
  for (size_t i = 1; i < curve.size(); ++i) {
    EXPECT_LE(curve[i].relative_error, curve[i - 1].relative_error);
  }
  for (const auto& pt : curve) EXPECT_NEAR(pt.relative_error, std::sqrt(pt.nre), 1e-15);
  EXPECT_LT(curve[3].nre, 0.01);
  EXPECT_LT(curve[6].relative_error, 0.01);
  std::ostringstream out;
  WriteFitErrorCsv(curve, 125.0, out);
  EXPECT_EQ(out.str().rfind("freq,order,rel,nre\n", 0), 0u);
}

TEST(ProjectTest, Idempotent) {
  auto g = std::make_shared<const FieldGrid>(Icosphere(3));
  SphericalField f;
  f.grid = g;
  for (const Vec3& p : g->points) f.pressures.push_back(std::exp(p.x()) + p.y() * p.z());
  const SHCoefficients once = Project(f, 3);
  const SHCoefficients twice = Project(FieldFrom(g, once), 3);
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(twice.coeffs[i], once.coeffs[i], 1e-10);
}

TEST(NreTest, InvariantUnderPointPermutation) {
  const FieldGrid g = Icosphere(2);
  const auto w = VoronoiSolidAngles(g);
  std::vector<double> t, p;
  for (const Vec3& v : g.points) {
    t.push_back(1.0 + 0.5 * v.x());
    p.push_back(1.0 + 0.4 * v.x() + 0.1 * v.z());
  }
  const double base = WeightedNre(t, p, w);
  std::vector<size_t> perm(t.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(9);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> tp, pp, wp;
  for (size_t i : perm) {
    tp.push_back(t[i]);
    pp.push_back(p[i]);
    wp.push_back(w[i]);
  }
  EXPECT_NEAR(WeightedNre(tp, pp, wp), base, 1e-12);
  EXPECT_GT(base, 0.0);
}

TEST(JsonTest, RoundTrip) {
  SHCoefficients c;
  c.order = 1;
  c.frequency = 500.0;
  c.coeffs = {0.5, -0.25, 0.125, 1.0};
  const SHCoefficients back = ShCoefficientsFromJson(ToJson(c));
  EXPECT_EQ(back.order, 1);
  EXPECT_EQ(back.coeffs, c.coeffs);
  EXPECT_DOUBLE_EQ(back.frequency, 500.0);
}

}  // namespace
}  // namespace asf
