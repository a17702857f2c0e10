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

#include <cmath>
#include <numbers>
#include <ostream>
#include <string>

#include "Eigen/Dense"
#include "asf/error.h"

namespace asf {

namespace {

constexpr double kCondFallback = 1e8;

double NormalizationKDirect(int l, int m) {
  return std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi) *
                   std::exp(std::lgamma(l - m + 1.0) - std::lgamma(l + m + 1.0)));
}

constexpr int kTabulatedOrder = 32;

double NormalizationK(int l, int m) {
  static const std::vector<double> table = [] {
    std::vector<double> t((kTabulatedOrder + 1) * (kTabulatedOrder + 1));
    for (int a = 0; a <= kTabulatedOrder; ++a) {
      for (int b = 0; b <= a; ++b) t[a * (kTabulatedOrder + 1) + b] = NormalizationKDirect(a, b);
    }
    return t;
  }();
  if (l > kTabulatedOrder) return NormalizationKDirect(l, m);
  return table[l * (kTabulatedOrder + 1) + m];
}

// Associated Legendre P_l^m(x), no Condon-Shortley phase, for all
// 0 <= m <= l <= order. Stored at [l * (order + 1) + m].
void AssociatedLegendre(int order, double x, std::vector<double>* out) {
  const int stride = order + 1;
  out->assign(static_cast<size_t>(stride * stride), 0.0);
  auto at = [&](int l, int m) -> double& { return (*out)[l * stride + m]; };
  const double s = std::sqrt(std::max(0.0, 1.0 - x * x));
  double pmm = 1.0;
  for (int m = 0; m <= order; ++m) {
    if (m > 0) pmm *= (2.0 * m - 1.0) * s;
    at(m, m) = pmm;
    if (m + 1 <= order) at(m + 1, m) = x * (2.0 * m + 1.0) * pmm;
    for (int l = m + 2; l <= order; ++l) {
      at(l, m) = ((2.0 * l - 1.0) * x * at(l - 1, m) - (l + m - 1.0) * at(l - 2, m)) / (l - m);
    }
  }
}

Eigen::MatrixXd DesignMatrix(const std::vector<Vec3>& dirs, int order) {
  const int ncoef = ShCoefficientCount(order);
  Eigen::MatrixXd a(static_cast<Eigen::Index>(dirs.size()), ncoef);
  std::vector<double> row(ncoef);
  for (size_t i = 0; i < dirs.size(); ++i) {
    ShBasisAll(order, dirs[i], row.data());
    for (int j = 0; j < ncoef; ++j) a(static_cast<Eigen::Index>(i), j) = row[j];
  }
  return a;
}

}  // namespace

void SHCoefficients::Validate() const {
  if (order < 0) throw InvalidArgument("SH order must be non-negative");
  if (static_cast<int>(coeffs.size()) != ShCoefficientCount(order)) {
    throw InvalidArgument("SH coefficient vector has length " + std::to_string(coeffs.size()) +
                          ", expected " + std::to_string(ShCoefficientCount(order)));
  }
  for (double c : coeffs) {
    if (!std::isfinite(c)) throw InvalidArgument("non-finite SH coefficient");
  }
}

void SphericalField::Validate() const {
  if (!grid) throw InvalidArgument("spherical field has no grid");
  if (pressures.size() != grid->size()) {
    throw InvalidArgument("pressure count does not match grid");
  }
  if (!(reference_radius > 0.0)) {
    throw InvalidArgument("reference radius must be positive");
  }
}

double ShBasis(int l, int m, const Direction& d) {
  if (l < 0 || m < -l || m > l) {
    throw InvalidArgument("invalid SH index (l=" + std::to_string(l) + ", m=" + std::to_string(m) +
                          ")");
  }
  std::vector<double> p;
  AssociatedLegendre(l, std::cos(d.theta), &p);
  const int am = std::abs(m);
  const double plm = p[l * (l + 1) + am];
  const double k = NormalizationK(l, am);
  if (m == 0) return k * plm;
  if (m > 0) return std::numbers::sqrt2 * k * plm * std::cos(am * d.phi);
  return std::numbers::sqrt2 * k * plm * std::sin(am * d.phi);
}

void ShBasisAll(int order, const Vec3& v, double* out) {
  const double z = std::clamp(v.z(), -1.0, 1.0);
  const double phi = std::atan2(v.y(), v.x());
  std::vector<double> p;
  AssociatedLegendre(order, z, &p);
  const int stride = order + 1;
  for (int l = 0; l <= order; ++l) {
    out[ShIndex(l, 0)] = NormalizationK(l, 0) * p[l * stride];
    for (int m = 1; m <= l; ++m) {
      const double base = std::numbers::sqrt2 * NormalizationK(l, m) * p[l * stride + m];
      out[ShIndex(l, m)] = base * std::cos(m * phi);
      out[ShIndex(l, -m)] = base * std::sin(m * phi);
    }
  }
}

std::vector<double> ShBasisAll(int order, const Vec3& v) {
  std::vector<double> out(ShCoefficientCount(order));
  ShBasisAll(order, v, out.data());
  return out;
}

std::vector<double> ProjectSamples(const std::vector<Vec3>& directions,
                                   const std::vector<double>& values, int order,
                                   const std::vector<double>& weights) {
  if (order < 0) throw InvalidArgument("SH order must be non-negative");
  if (directions.size() != values.size()) {
    throw InvalidArgument("direction and value counts differ");
  }
  if (!weights.empty() && weights.size() != values.size()) {
    throw InvalidArgument("weight and value counts differ");
  }
  const int ncoef = ShCoefficientCount(order);
  if (static_cast<int>(directions.size()) < ncoef) {
    throw InvalidArgument("underdetermined SH fit: " + std::to_string(directions.size()) +
                          " samples for " + std::to_string(ncoef) + " coefficients");
  }
  Eigen::MatrixXd a = DesignMatrix(directions, order);
  Eigen::VectorXd b =
      Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  if (!weights.empty()) {
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      if (!(weights[i] > 0.0)) throw InvalidArgument("quadrature weights must be positive");
      const double sw = std::sqrt(weights[i]);
      a.row(i) *= sw;
      b[i] *= sw;
    }
  }
  const Eigen::MatrixXd ata = a.transpose() * a;
  const Eigen::VectorXd atb = a.transpose() * b;

  // cond(A) = sqrt(cond(A^T A)).
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ata, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  const double cond = lmin > 0.0 ? std::sqrt(lmax / lmin) : std::numeric_limits<double>::infinity();

  Eigen::VectorXd x;
  if (cond <= kCondFallback) {
    x = ata.ldlt().solve(atb);
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < ncoef) {
      throw NumericalFailure("rank-deficient SH design matrix (rank " + std::to_string(qr.rank()) +
                             " of " + std::to_string(ncoef) + ", condition number " +
                             std::to_string(cond) + ")");
    }
    x = qr.solve(b);
  }
  return std::vector<double>(x.data(), x.data() + x.size());
}

SHCoefficients Project(const SphericalField& field, int order) {
  field.Validate();
  SHCoefficients c;
  c.order = order;
  c.frequency = field.frequency;
  c.coeffs =
      ProjectSamples(field.grid->points, field.pressures, order, VoronoiSolidAngles(*field.grid));
  return c;
}

double Evaluate(const SHCoefficients& c, const Vec3& v) {
  std::vector<double> y(c.coeffs.size());
  ShBasisAll(c.order, v, y.data());
  double s = 0.0;
  for (size_t i = 0; i < y.size(); ++i) s += c.coeffs[i] * y[i];
  return s;
}

double Evaluate(const SHCoefficients& c, const Direction& d) { return Evaluate(c, SphToCart(d)); }

std::vector<double> EvaluateOnGrid(const SHCoefficients& c, const FieldGrid& grid) {
  std::vector<double> out(grid.size());
  std::vector<double> y(c.coeffs.size());
  for (size_t i = 0; i < grid.size(); ++i) {
    ShBasisAll(c.order, grid.points[i], y.data());
    double s = 0.0;
    for (size_t j = 0; j < y.size(); ++j) s += c.coeffs[j] * y[j];
    out[i] = s;
  }
  return out;
}

double WeightedNre(const std::vector<double>& target, const std::vector<double>& predicted,
                   const std::vector<double>& weights) {
  if (target.size() != predicted.size() || target.size() != weights.size()) {
    throw InvalidArgument("NRE inputs differ in length");
  }
  double num = 0.0;
  double den = 0.0;
  for (size_t i = 0; i < target.size(); ++i) {
    const double d = target[i] - predicted[i];
    num += weights[i] * d * d;
    den += weights[i] * target[i] * target[i];
  }
  if (!(den > 0.0)) throw UndefinedMetric("NRE undefined for a zero target field");
  return num / den;
}

double Nre(const SphericalField& target, const SphericalField& predicted) {
  target.Validate();
  predicted.Validate();
  if (target.grid != predicted.grid && target.grid->points != predicted.grid->points) {
    throw InvalidArgument("NRE fields are sampled on different grids");
  }
  if (target.frequency != predicted.frequency) {
    throw InvalidArgument("NRE fields have different frequencies");
  }
  return WeightedNre(target.pressures, predicted.pressures, VoronoiSolidAngles(*target.grid));
}

std::vector<FitErrorPoint> FitErrorCurve(const SphericalField& field, int max_order) {
  if (max_order < 0) throw InvalidArgument("max_order must be non-negative");
  field.Validate();
  const std::vector<double> weights = VoronoiSolidAngles(*field.grid);
  double norm2 = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) {
    norm2 += weights[i] * field.pressures[i] * field.pressures[i];
  }

  std::vector<FitErrorPoint> curve;
  for (int order = 0; order <= max_order; ++order) {
    SHCoefficients c;
    c.order = order;
    c.coeffs = ProjectSamples(field.grid->points, field.pressures, order, weights);
    const std::vector<double> fit = EvaluateOnGrid(c, *field.grid);
    FitErrorPoint pt;
    pt.order = order;
    pt.nre = norm2 > 0.0 ? WeightedNre(field.pressures, fit, weights) : 0.0;
    pt.relative_error = std::sqrt(pt.nre);
    curve.push_back(pt);
  }
  return curve;
}

void WriteFitErrorCsv(const std::vector<FitErrorPoint>& curve, double frequency,
                      std::ostream& out) {
  out.precision(10);
  out << "freq,order,rel,nre\n";
  for (const auto& pt : curve) {
    out << frequency << ',' << pt.order << ',' << pt.relative_error << ',' << pt.nre << '\n';
  }
}

nlohmann::json ToJson(const SHCoefficients& c) {
  return nlohmann::json{{"frequency", c.frequency}, {"order", c.order}, {"coeffs", c.coeffs}};
}

SHCoefficients ShCoefficientsFromJson(const nlohmann::json& j) {
  SHCoefficients c;
  c.frequency = j.at("frequency").get<double>();
  c.order = j.at("order").get<int>();
  c.coeffs = j.at("coeffs").get<std::vector<double>>();
  c.Validate();
  return c;
}

}  // namespace asf
