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

#include "asf/oracle.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>

#include "asf/error.h"

namespace asf {

namespace {

constexpr double kConvergenceTol = 1e-9;
constexpr int kMaxDoublings = 3;

Complex IPow(int l) {
  switch (l & 3) {
    case 0:
      return {1.0, 0.0};
    case 1:
      return {0.0, 1.0};
    case 2:
      return {-1.0, 0.0};
    default:
      return {0.0, -1.0};
  }
}

bool IsFinite(const Complex& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

}  // namespace

void SphericalBessel(int lmax, double x, std::vector<double>* j, std::vector<double>* y) {
  if (!(x > 0.0)) throw InvalidArgument("spherical Bessel argument must be > 0");
  if (lmax < 0) throw InvalidArgument("negative Bessel order");
  const double s = std::sin(x);
  const double c = std::cos(x);

  if (y != nullptr) {
    y->assign(lmax + 1, 0.0);
    (*y)[0] = -c / x;
    if (lmax >= 1) (*y)[1] = -c / (x * x) - s / x;
    for (int l = 1; l < lmax; ++l) {
      (*y)[l + 1] = (2.0 * l + 1.0) / x * (*y)[l] - (*y)[l - 1];
    }
  }

  if (j == nullptr) return;
  j->assign(lmax + 1, 0.0);
  const double j0 = s / x;
  const double j1 = s / (x * x) - c / x;
  if (x > lmax) {
    (*j)[0] = j0;
    if (lmax >= 1) (*j)[1] = j1;
    for (int l = 1; l < lmax; ++l) {
      (*j)[l + 1] = (2.0 * l + 1.0) / x * (*j)[l] - (*j)[l - 1];
    }
    return;
  }

  // Miller's downward recurrence, normalised against j0 or j1.
  const int start = lmax + 16 + static_cast<int>(std::sqrt(40.0 * std::max(lmax, 1)));
  std::vector<double> tmp(start + 2, 0.0);
  tmp[start] = 1e-30;
  for (int l = start; l > 0; --l) {
    tmp[l - 1] = (2.0 * l + 1.0) / x * tmp[l] - tmp[l + 1];
    if (std::abs(tmp[l - 1]) > 1e250) {
      for (int q = l - 1; q <= start; ++q) tmp[q] *= 1e-250;
    }
  }
  double scale;
  if (lmax == 0) {
    scale = j0 / tmp[0];
  } else if (std::abs(j0) >= std::abs(j1)) {
    scale = j0 / tmp[0];
  } else {
    scale = j1 / tmp[1];
  }
  for (int l = 0; l <= lmax; ++l) (*j)[l] = tmp[l] * scale;
}

void LegendreP(int lmax, double x, std::vector<double>* p) {
  p->assign(lmax + 1, 0.0);
  (*p)[0] = 1.0;
  if (lmax >= 1) (*p)[1] = x;
  for (int l = 1; l < lmax; ++l) {
    (*p)[l + 1] = ((2.0 * l + 1.0) * x * (*p)[l] - l * (*p)[l - 1]) / (l + 1.0);
  }
}

void ScatterConfig::Validate() const {
  if (scatterers.empty()) throw InvalidArgument("scatter config has no scatterers");
  for (const auto& s : scatterers) {
    if (!(s.radius > 0.0) || !std::isfinite(s.radius)) {
      throw InvalidArgument("sphere radius must be positive");
    }
    if (!s.center.allFinite()) throw InvalidArgument("non-finite sphere centre");
  }
  const bool supported = std::find(std::begin(kAsfFrequencies), std::end(kAsfFrequencies),
                                   frequency) != std::end(kAsfFrequencies);
  if (!supported) {
    throw InvalidArgument("unsupported ASF frequency " + std::to_string(frequency));
  }
  if (!(sound_speed > 0.0)) throw InvalidArgument("sound speed must be positive");
  if (std::abs(incoming.norm() - 1.0) > 1e-9) {
    throw InvalidArgument("incoming direction must be a unit vector");
  }
}

double ScatterConfig::wavenumber() const {
  return 2.0 * std::numbers::pi * frequency / sound_speed;
}

RigidSphereSeries::RigidSphereSeries(double ka) : ka_(ka) {
  if (!(ka > 0.0) || !std::isfinite(ka)) {
    throw InvalidArgument("ka must be positive");
  }
  initial_order_ = static_cast<int>(std::ceil(ka + 10.0 + 4.0 * std::cbrt(ka)));
  const int cap = initial_order_ << (kMaxDoublings + 1);
  std::vector<double> j;
  std::vector<double> y;
  SphericalBessel(cap + 1, ka, &j, &y);
  coef_.assign(cap + 1, Complex{});
  for (int l = 0; l <= cap; ++l) {
    double jp;
    double yp;
    if (l == 0) {
      jp = -j[1];
      yp = -y[1];
    } else {
      jp = j[l - 1] - (l + 1.0) / ka * j[l];
      yp = y[l - 1] - (l + 1.0) / ka * y[l];
    }
    const Complex hp(jp, yp);
    if (!IsFinite(hp) || jp == 0.0) continue;  // term vanishes
    const Complex c = (2.0 * l + 1.0) * IPow(l) * (jp / hp);
    if (IsFinite(c)) coef_[l] = c;
  }
}

Complex RigidSphereSeries::Sum(double kr, double cos_gamma, int order, bool with_incident,
                               Complex* partial_half) const {
  std::vector<double> j;
  std::vector<double> y;
  SphericalBessel(order, kr, &j, &y);
  std::vector<double> p;
  LegendreP(order, std::clamp(cos_gamma, -1.0, 1.0), &p);
  Complex sum{};
  const int half = order / 2;
  for (int l = 0; l <= order; ++l) {
    if (coef_[l] != Complex{}) {
      const Complex h(j[l], y[l]);
      const Complex term = coef_[l] * h * p[l];
      if (IsFinite(term)) sum -= term;
    }
    if (l == half && partial_half != nullptr) *partial_half = sum;
  }
  if (with_incident) {
    const Complex inc = std::exp(Complex(0.0, kr * cos_gamma));
    sum += inc;
    if (partial_half != nullptr) *partial_half += inc;
  }
  return sum;
}

Complex RigidSphereSeries::Scattered(double kr, double cos_gamma) const {
  if (!(kr > ka_)) {
    throw InvalidArgument("field point must lie outside the sphere (kr > ka)");
  }
  int order = 2 * initial_order_;
  for (int attempt = 0; attempt <= kMaxDoublings; ++attempt) {
    Complex half{};
    const Complex full = Sum(kr, cos_gamma, order, false, &half);
    if (std::abs(full - half) <= kConvergenceTol * std::abs(full) || std::abs(full - half) == 0.0) {
      return full;
    }
    order *= 2;
  }
  throw NumericalFailure("rigid-sphere series did not converge (ka=" + std::to_string(ka_) +
                         ", kr=" + std::to_string(kr) + ")");
}

Complex RigidSphereSeries::Total(double kr, double cos_gamma) const {
  if (kr < ka_) throw InvalidArgument("total pressure requested inside sphere");
  int order = 2 * initial_order_;
  for (int attempt = 0; attempt <= kMaxDoublings; ++attempt) {
    Complex half{};
    const Complex full = Sum(kr, cos_gamma, order, true, &half);
    if (std::abs(full - half) <= kConvergenceTol * std::abs(full)) return full;
    order *= 2;
  }
  throw NumericalFailure("rigid-sphere series did not converge");
}

Complex SphereScatteredPressure(double ka, double kr, double gamma) {
  return RigidSphereSeries(ka).Scattered(kr, std::cos(gamma));
}

Complex ScatteredPressureAt(const ScatterConfig& cfg, const Vec3& x) {
  const double k = cfg.wavenumber();
  Complex total{};
  for (const auto& s : cfg.scatterers) {
    const Vec3 q = x - s.center;
    const double r = q.norm();
    if (!(r > s.radius)) {
      throw InvalidArgument("field point lies inside a scatterer");
    }
    const double cos_gamma = cfg.incoming.dot(q) / r;
    const Complex phase = std::exp(Complex(0.0, k * cfg.incoming.dot(s.center)));
    total += phase * RigidSphereSeries(k * s.radius).Scattered(k * r, cos_gamma);
  }
  return total;
}

AsfResult ComputeAsf(const ScatterConfig& cfg, std::shared_ptr<const FieldGrid> grid,
                     double r_ref) {
  cfg.Validate();
  if (!grid) throw InvalidArgument("ComputeAsf requires a grid");
  double extent = 0.0;
  for (const auto& s : cfg.scatterers) {
    extent = std::max(extent, s.center.norm() + s.radius);
  }
  if (!(r_ref > extent)) {
    throw InvalidArgument("reference radius " + std::to_string(r_ref) +
                          " m does not enclose the scatterers (extent " + std::to_string(extent) +
                          " m)");
  }

  const double k = cfg.wavenumber();
  std::vector<RigidSphereSeries> series;
  std::vector<Complex> phases;
  for (const auto& s : cfg.scatterers) {
    series.emplace_back(k * s.radius);
    phases.push_back(std::exp(Complex(0.0, k * cfg.incoming.dot(s.center))));
  }

  AsfResult out;
  out.field.grid = grid;
  out.field.frequency = cfg.frequency;
  out.field.reference_radius = r_ref;
  out.field.pressures.resize(grid->size());
  for (size_t i = 0; i < grid->size(); ++i) {
    const Vec3 x = r_ref * grid->points[i];
    Complex p{};
    for (size_t s = 0; s < series.size(); ++s) {
      const Vec3 q = x - cfg.scatterers[s].center;
      const double r = q.norm();
      p += phases[s] * series[s].Scattered(k * r, cfg.incoming.dot(q) / r);
    }
    double mag = std::abs(p);
    if (mag > 1.0) {
      ++out.clip_count;
      mag = 1.0;
    }
    out.field.pressures[i] = mag;
  }
  return out;
}

std::vector<double> DefaultFalloffDirections() { return {0.0, 72.0, 144.0, 216.0, 288.0}; }

std::vector<FalloffRow> RadialFalloffStudy(const ScatterConfig& cfg,
                                           const std::vector<double>& directions_deg,
                                           const std::vector<double>& radii, double r_ref) {
  cfg.Validate();
  std::vector<FalloffRow> rows;
  for (double deg : directions_deg) {
    const double a = deg * std::numbers::pi / 180.0;
    // Angle from the propagation direction (-x), in the x-y plane.
    const Vec3 u(-std::cos(a), -std::sin(a), 0.0);
    const double ref = std::abs(ScatteredPressureAt(cfg, r_ref * u));
    for (double r : radii) {
      FalloffRow row;
      row.direction_deg = deg;
      row.radius = r;
      row.magnitude = std::abs(ScatteredPressureAt(cfg, r * u));
      row.fitted = ref * r_ref / r;
      row.relative_error =
          row.magnitude > 0.0 ? std::abs(row.fitted - row.magnitude) / row.magnitude : 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

void WriteFalloffCsv(const std::vector<FalloffRow>& rows, std::ostream& out) {
  out << "direction_deg,radius,magnitude,fitted,relative_error\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.direction_deg << ',' << r.radius << ',' << r.magnitude << ',' << r.fitted << ','
        << r.relative_error << '\n';
  }
}

}  // namespace asf
