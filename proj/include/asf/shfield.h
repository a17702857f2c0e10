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

#ifndef ASF_SHFIELD_H_
#define ASF_SHFIELD_H_

#include <iosfwd>
#include <memory>
#include <vector>

#include "asf/sphgeom.h"
#include "json.hpp"

namespace asf {

inline constexpr int kDefaultShOrder = 3;  // 16 coefficients

// Coefficient count for a real SH expansion up to `order`.
constexpr int ShCoefficientCount(int order) { return (order + 1) * (order + 1); }

// Canonical index of (l, m): l ascending, m from -l to +l.
constexpr int ShIndex(int l, int m) { return l * (l + 1) + m; }

struct SHCoefficients {
  int order = kDefaultShOrder;
  std::vector<double> coeffs;
  double frequency = 0.0;  // Hz

  // Throws InvalidArgument on a length mismatch or non-finite entry.
  void Validate() const;
};

// Real-valued field sampled on a FieldGrid at radius `reference_radius`.
struct SphericalField {
  std::shared_ptr<const FieldGrid> grid;
  std::vector<double> pressures;
  double frequency = 0.0;
  double reference_radius = 5.0;

  void Validate() const;
};

// Real orthonormal spherical harmonic, without the Condon-Shortley phase:
//   m > 0: sqrt(2) K_l^m P_l^m(cos t) cos(m p)
//   m = 0: K_l^0 P_l^0(cos t)
//   m < 0: sqrt(2) K_l^|m| P_l^|m|(cos t) sin(|m| p)
double ShBasis(int l, int m, const Direction& d);

// All basis values up to `order` at unit vector `v`, canonical order.
void ShBasisAll(int order, const Vec3& v, double* out);
std::vector<double> ShBasisAll(int order, const Vec3& v);

// Least-squares SH fit of the sampled field, weighted by the Voronoi solid
// angles of the grid points. Solves the normal equations; falls back to column-pivoted QR when
// cond(A) > 1e8 and throws NumericalFailure (with the condition number) if A is rank deficient.
SHCoefficients Project(const SphericalField& field, int order);

// Same solve against raw samples on an arbitrary set of unit directions.
// Unweighted when `weights` is empty.
std::vector<double> ProjectSamples(const std::vector<Vec3>& directions,
                                   const std::vector<double>& values, int order,
                                   const std::vector<double>& weights = {});

double Evaluate(const SHCoefficients& c, const Direction& d);
double Evaluate(const SHCoefficients& c, const Vec3& v);

// Field of `c` sampled at every grid point (unclamped).
std::vector<double> EvaluateOnGrid(const SHCoefficients& c, const FieldGrid& grid);

// Discretised normalized reproduction error: weighted by Voronoi solid
// angles of the grid points. Throws UndefinedMetric if the target is zero.
double Nre(const SphericalField& target, const SphericalField& predicted);

// Same metric on raw vectors with explicit quadrature weights.
double WeightedNre(const std::vector<double>& target, const std::vector<double>& predicted,
                   const std::vector<double>& weights);

struct FitErrorPoint {
  int order = 0;
  // sqrt(nre): solid-angle weighted L2 ratio ||p - fit|| / ||p||.
  double relative_error = 0.0;
  // Solid-angle weighted NRE of the fit against the samples.
  double nre = 0.0;
};

std::vector<FitErrorPoint> FitErrorCurve(const SphericalField& field, int max_order);

void WriteFitErrorCsv(const std::vector<FitErrorPoint>& curve, double frequency, std::ostream& out);

nlohmann::json ToJson(const SHCoefficients& c);
SHCoefficients ShCoefficientsFromJson(const nlohmann::json& j);

}  // namespace asf

#endif  // ASF_SHFIELD_H_
