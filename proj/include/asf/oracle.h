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

#ifndef ASF_ORACLE_H_
#define ASF_ORACLE_H_

#include <complex>
#include <iosfwd>
#include <vector>

#include "asf/shfield.h"
#include "asf/sphgeom.h"

namespace asf {

using Complex = std::complex<double>;

inline constexpr double kSoundSpeed = 343.0;     // m/s
inline constexpr double kReferenceRadius = 5.0;  // m
inline constexpr double kAsfFrequencies[] = {125.0, 250.0, 500.0, 1000.0};

// Spherical Bessel j_l(x) and y_l(x) for l = 0..lmax. j uses upward
// recurrence when x > lmax and normalised downward recurrence otherwise;
// y always recurs upward. Requires x > 0.
void SphericalBessel(int lmax, double x, std::vector<double>* j, std::vector<double>* y);

// Legendre polynomials P_0..P_lmax at x.
void LegendreP(int lmax, double x, std::vector<double>* p);

// Sound-hard sphere of radius `radius` centred at `center`.
struct SphereScatterer {
  double radius = 0.75;
  Vec3 center = Vec3::Zero();
};

struct ScatterConfig {
  std::vector<SphereScatterer> scatterers;
  double frequency = 125.0;
  double sound_speed = kSoundSpeed;
  // Propagation direction of the unit plane wave; canonical is -x.
  Vec3 incoming = -Vec3::UnitX();

  void Validate() const;
  double wavenumber() const;
};

// Partial-wave solution for a unit plane wave on a rigid sphere:
//   p_s = -sum_l (2l+1) i^l [j_l'(ka) / h_l'(ka)] h_l(kr) P_l(cos gamma)
// with h_l = h_l^(1). gamma is measured from the propagation direction.
// Truncation starts at ceil(ka + 10 + 4 ka^(1/3)) and doubles until the sum
// changes by < 1e-9 relative.
class RigidSphereSeries {
 public:
  explicit RigidSphereSeries(double ka);

  // Throws InvalidArgument if kr <= ka; NumericalFailure if the series does
  // not settle within the truncation cap.
  Complex Scattered(double kr, double cos_gamma) const;
  // Incident + scattered. Allows kr == ka (the surface).
  Complex Total(double kr, double cos_gamma) const;

  double ka() const { return ka_; }
  int initial_order() const { return initial_order_; }

 private:
  Complex Sum(double kr, double cos_gamma, int order, bool with_incident,
              Complex* partial_half) const;

  double ka_;
  int initial_order_;
  std::vector<Complex> coef_;  // (2l+1) i^l j_l'(ka)/h_l'(ka)
};

// Convenience wrapper over RigidSphereSeries.
Complex SphereScatteredPressure(double ka, double kr, double gamma);

struct AsfResult {
  SphericalField field;
  int clip_count = 0;  // samples whose magnitude exceeded 1 before clipping
};

// |scattered pressure| on a sphere of radius r_ref about the origin for a unit
// plane wave, clipped to [0, 1]. Several spheres are superposed with the
// incident phase at each centre (single scattering).
AsfResult ComputeAsf(const ScatterConfig& cfg, std::shared_ptr<const FieldGrid> grid,
                     double r_ref = kReferenceRadius);

// Complex scattered pressure at an arbitrary exterior point.
Complex ScatteredPressureAt(const ScatterConfig& cfg, const Vec3& x);

struct FalloffRow {
  double direction_deg = 0.0;  // x-y plane angle from the propagation direction
  double radius = 0.0;
  double magnitude = 0.0;  // oracle |p|
  double fitted = 0.0;     // inverse-distance extrapolation from r_ref
  double relative_error = 0.0;
};

// Oracle magnitude along in-plane directions versus the r_ref/r law.
std::vector<FalloffRow> RadialFalloffStudy(const ScatterConfig& cfg,
                                           const std::vector<double>& directions_deg,
                                           const std::vector<double>& radii,
                                           double r_ref = kReferenceRadius);

std::vector<double> DefaultFalloffDirections();  // 0, 72, 144, 216, 288

void WriteFalloffCsv(const std::vector<FalloffRow>& rows, std::ostream& out);

}  // namespace asf

#endif  // ASF_ORACLE_H_
