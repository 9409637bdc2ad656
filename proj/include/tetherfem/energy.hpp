#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "tetherfem/material.hpp"
#include "tetherfem/space.hpp"

namespace tetherfem {

/// Selectable energy contributions; used for per-term gradient checks.
enum Term : unsigned {
  kTermW = 1u << 0,
  kTermPhi = 1u << 1,
  kTermHess = 1u << 2,
  kTermConsistency = 1u << 3,
  kTermPenalty = 1u << 4,
  kTermsBulk = kTermW | kTermPhi,
  kTermsHigherOrder = kTermHess | kTermConsistency | kTermPenalty,
  kAllTerms = kTermsBulk | kTermsHigherOrder,
};

struct EnergyParams {
  double epsilon = 5e-3;  // higher-gradient length scale, units of r_c
  double alpha = 10.0;    // interior-penalty weight
  MaterialModel material;
  int cell_degree = 6;    // quadrature exactness for W and Phi
  int edge_degree = 0;    // 0 selects 2q
  int threads = 1;

  void validate() const;
};

/// Terms of the discrete energy. The higher-order terms are stored without the epsilon^2 factor.
struct EnergyBreakdown {
  double bulk_W = 0.0;
  double bulk_Phi = 0.0;
  double hess_term = 0.0;         // 1/2 sum_K int |grad grad u|^2
  double consistency_term = 0.0;  // - sum_e int {grad grad u} . [grad u (x) n]
  double penalty_term = 0.0;      // sum_e alpha/h_e int |[grad u]|^2
  double total = 0.0;
  int penalty_overflow = 0;       // quadrature points where the penalty exponent was clamped

  double higher_order() const { return hess_term + consistency_term + penalty_term; }
};

/// Precomputes basis data on every quadrature point of the mesh and evaluates the discrete
/// energy, its gradient with respect to the interleaved DOF vector, and the lifting operators.
/// Immutable after construction; safe to share between threads.
class EnergyAssembler {
 public:
  EnergyAssembler(std::shared_ptr<const Space> space, EnergyParams params);

  const Space& space() const { return *space_; }
  std::shared_ptr<const Space> space_ptr() const { return space_; }
  const EnergyParams& params() const { return params_; }

  EnergyBreakdown energy(const Eigen::VectorXd& u, unsigned terms = kAllTerms) const;
  /// Energy plus its exact gradient (overwrites `grad`).
  EnergyBreakdown energy_and_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad,
                                      unsigned terms = kAllTerms) const;

  /// Global lifting R_h(grad u) as a degree q-2 broken field with 8 components (index 4i+2j+k).
  BrokenField lifting(const Eigen::VectorXd& u) const;
  /// Lifting r_e(grad u) of a single interior edge.
  BrokenField lift_edge(const Eigen::VectorXd& u, int edge) const;
  /// Piecewise Hessian of u in the degree q-2 broken space (8 components).
  BrokenField piecewise_hessian(const Eigen::VectorXd& u) const;
  /// sum_e int_e {w} . [grad u (x) n_e] for a broken degree q-2 field w (one edge if edge >= 0).
  double edge_pairing(const Eigen::VectorXd& u, const BrokenField& w, int edge = -1) const;
  /// Gradient in u of edge_pairing(u, w), a fixed linear functional.
  Eigen::VectorXd edge_pairing_gradient(const BrokenField& w) const;
  /// sum_e h_e^{-1} int_e |[grad u]|^2 over interior edges.
  double jump_seminorm_squared(const Eigen::VectorXd& u) const;
  /// Half the gradient of jump_seminorm_squared, i.e. the induced symmetric operator applied to u.
  Eigen::VectorXd apply_jump_operator(const Eigen::VectorXd& u) const;
  /// Sparse matrix of u -> sum_e h_e^{-1} int_e |[grad u]|^2.
  Eigen::SparseMatrix<double> jump_matrix() const;
  /// Sparse matrix of u -> int |R_h(grad u)|^2.
  Eigen::SparseMatrix<double> lift_gram_matrix() const;

 private:
  struct EdgeSide {
    int element;
    std::vector<double> grads;   // per qp: n_loc x 2
    std::vector<double> hess;    // per qp: n_loc x 3
    std::vector<double> lift;    // per qp: n_k values of the P_{q-2} basis
  };
  struct EdgeData {
    Eigen::Vector2d normal;
    double h = 0.0;
    std::vector<double> weights;  // w * |e|
    EdgeSide plus, minus;
  };

  template <bool kGradient>
  EnergyBreakdown assemble(const Eigen::VectorXd& u, Eigen::VectorXd* grad, unsigned terms) const;
  void accumulate_edge_lift(const Eigen::VectorXd& u, int edge, BrokenField& out) const;

  std::shared_ptr<const Space> space_;
  EnergyParams params_;
  int n_loc_ = 0;
  int n_lift_ = 0;  // dim P_{q-2}
  int n_cell_qp_ = 0;
  int n_hess_qp_ = 0;
  std::vector<double> cell_grads_;    // (t, q): n_loc x 2
  std::vector<double> cell_weights_;  // (t, q)
  std::vector<double> hess_basis_;    // (t, q): n_loc x 3
  std::vector<double> hess_weights_;  // (t, q)
  std::vector<Eigen::MatrixXd> lift_mass_inverse_;  // per triangle, n_k x n_k
  std::vector<EdgeData> edges_;
};

EnergyBreakdown assemble_energy(const Field& u, const EnergyParams& params);
Eigen::VectorXd assemble_gradient(const Field& u, const EnergyParams& params);

BrokenField lifting(const Field& u);
/// G_h(grad u) = piecewise Hessian - R_h(grad u).
BrokenField discrete_gradient(const Field& u);
/// Higher-order energy written as 1/2 int |G_h|^2 - 1/2 int |R_h|^2 + sum_e alpha/h_e int |[grad u]|^2.
double psi_ho_discrete_gradient_form(const Field& u, double alpha);
/// Higher-order energy in its edge form (hess + consistency + penalty terms).
double psi_ho_edge_form(const Field& u, double alpha);
double broken_h2_seminorm(const Field& u);

struct CrEstimate {
  double value = 0.0;
  int iterations = 0;
  double last_change = 0.0;
};

/// Largest Rayleigh ratio int |R_h(grad u)|^2 / sum_e h_e^{-1} int |[grad u]|^2 by power iteration
/// on the generalized eigenproblem. The jump matrix is factored once with a tiny diagonal shift;
/// the shift only perturbs the iteration, the reported value is the exact Rayleigh quotient.
CrEstimate estimate_CR(std::shared_ptr<const Space> space, int iters = 300, std::uint64_t seed = 1);

}  // namespace tetherfem
