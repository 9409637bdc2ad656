#include "tetherfem/material.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "tetherfem/errors.hpp"

namespace tetherfem {

double strain_energy(const DefGrad& F) {
  const double i1 = F.I1();
  const double j2 = F.J() * F.J();
  return (5.0 * i1 * i1 * i1 - 9.0 * i1 * i1 - 12.0 * i1 * j2 + 12.0 * j2 + 8.0) / 96.0;
}

Eigen::Matrix2d strain_energy_dF(const DefGrad& F) {
  const double i1 = F.I1();
  const double j = F.J();
  const double d_i1 = 15.0 * i1 * i1 - 18.0 * i1 - 12.0 * j * j;
  const double d_j = 24.0 * j * (1.0 - i1);
  return (d_i1 * 2.0 * F.F + d_j * F.cof()) / 96.0;
}

namespace {

double clamped_exp(double x, bool* overflow) {
  if (x > kMaxPenaltyExponent) {
    if (overflow) *overflow = true;
    x = kMaxPenaltyExponent;
  }
  return std::exp(x);
}

}  // namespace

double penalty(const MaterialModel& model, const DefGrad& F, bool* overflow) {
  switch (model.penalty) {
    case PenaltyKind::Exponential:
      return clamped_exp(model.exp_a * (model.exp_b - F.J()), overflow);
    case PenaltyKind::Polynomial:
      return model.poly_c0 * std::pow(F.I1(), model.poly_m0);
    case PenaltyKind::None:
      return 0.0;
  }
  return 0.0;
}

Eigen::Matrix2d penalty_dF(const MaterialModel& model, const DefGrad& F, bool* overflow) {
  switch (model.penalty) {
    case PenaltyKind::Exponential:
      return -model.exp_a * clamped_exp(model.exp_a * (model.exp_b - F.J()), overflow) * F.cof();
    case PenaltyKind::Polynomial: {
      const double i1 = F.I1();
      if (i1 == 0.0) return Eigen::Matrix2d::Zero();
      return model.poly_c0 * model.poly_m0 * std::pow(i1, model.poly_m0 - 1.0) * 2.0 * F.F;
    }
    case PenaltyKind::None:
      return Eigen::Matrix2d::Zero();
  }
  return Eigen::Matrix2d::Zero();
}

double fiber_energy(double stretch) {
  const double l2 = stretch * stretch;
  return l2 * l2 * l2 / 6.0 - l2 * l2 / 4.0 + 1.0 / 12.0;
}

double angular_average_energy(double lambda1, double lambda2, int n_theta) {
  if (n_theta < 8) throw InputError("angular average needs at least 8 orientations");
  double sum = 0.0;
  for (int k = 0; k < n_theta; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / n_theta;
    const double a = lambda1 * std::cos(theta);
    const double b = lambda2 * std::sin(theta);
    sum += fiber_energy(std::sqrt(a * a + b * b));
  }
  return sum / n_theta;
}

double coercivity_margin(const DefGrad& F) { return strain_energy(F) - (0.5 * F.I1() - 19.0 / 12.0); }

double literal_coercivity_margin(const DefGrad& F) { return strain_energy(F) - (F.I1() - 19.0 / 12.0); }

CoercivityScan coercivity_scan(int n_samples) {
  if (n_samples < 1) throw InputError("coercivity scan needs at least one sample");
  CoercivityScan scan;
  scan.worst_margin = std::numeric_limits<double>::infinity();
  const int n = std::max(n_samples, 2);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const double l1 = -4.0 + 8.0 * i / (n - 1);
      const double l2 = -4.0 + 8.0 * k / (n - 1);
      const double m = coercivity_margin(DefGrad(Eigen::Vector2d(l1, l2).asDiagonal()));
      if (m < scan.worst_margin) scan = {m, l1, l2};
    }
  return scan;
}

}  // namespace tetherfem
