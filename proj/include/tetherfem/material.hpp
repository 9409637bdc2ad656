#pragma once

#include <Eigen/Dense>

namespace tetherfem {

/// Deformation gradient F = 1 + grad u with its invariants.
struct DefGrad {
  Eigen::Matrix2d F;

  explicit DefGrad(const Eigen::Matrix2d& f) : F(f) {}
  static DefGrad from_displacement_gradient(const Eigen::Matrix2d& grad_u) {
    return DefGrad(Eigen::Matrix2d::Identity() + grad_u);
  }
  double I1() const { return F.squaredNorm(); }
  double J() const { return F.determinant(); }
  /// Cofactor matrix, dJ/dF.
  Eigen::Matrix2d cof() const {
    Eigen::Matrix2d c;
    c << F(1, 1), -F(1, 0), -F(0, 1), F(0, 0);
    return c;
  }
};

enum class PenaltyKind { Exponential, Polynomial, None };

struct MaterialModel {
  PenaltyKind penalty = PenaltyKind::Exponential;
  double exp_a = 60.0;   // Phi = exp(a (b - J))
  double exp_b = 0.21;
  double poly_c0 = 1.0;  // Phi = C0 |F|^(2 m0)
  double poly_m0 = 2.0;
  double poly_c1 = 0.0;  // growth-bound constant, reported only
  bool strain_energy = true;

  bool operator==(const MaterialModel&) const = default;
};

/// Exponents beyond this are clamped when evaluating the exponential penalty.
inline constexpr double kMaxPenaltyExponent = 700.0;

/// Multi-well strain energy (5 I1^3 - 9 I1^2 - 12 I1 J^2 + 12 J^2 + 8) / 96.
double strain_energy(const DefGrad& F);
Eigen::Matrix2d strain_energy_dF(const DefGrad& F);

/// Interpenetration penalty. `overflow` (optional) is set, never cleared, when the exponent was clamped.
double penalty(const MaterialModel& model, const DefGrad& F, bool* overflow = nullptr);
Eigen::Matrix2d penalty_dF(const MaterialModel& model, const DefGrad& F, bool* overflow = nullptr);

/// One-dimensional fiber law lambda^6/6 - lambda^4/4 + 1/12.
double fiber_energy(double stretch);
/// Trapezoidal average of fiber_energy over fiber orientations for principal stretches.
double angular_average_energy(double lambda1, double lambda2, int n_theta);

struct CoercivityScan {
  double worst_margin = 0.0;  // min of W(F) - (|F|^2 / 2 - 19/12)
  double worst_lambda1 = 0.0;
  double worst_lambda2 = 0.0;
};

/// Lower growth bound W(F) >= |F|^2 / 2 - 19/12, checked on an n x n grid of
/// F = diag(l1, l2) with l1, l2 in [-4, 4].
double coercivity_margin(const DefGrad& F);
/// The bound exactly as stated in the coercivity lemma, W(F) >= |F|^2 - 19/12.
double literal_coercivity_margin(const DefGrad& F);
CoercivityScan coercivity_scan(int n_samples);

}  // namespace tetherfem
