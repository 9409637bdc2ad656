#include "tetherfem/energy.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "tetherfem/errors.hpp"

namespace tetherfem {

namespace {

constexpr int tensor_index(int i, int j, int k) { return 4 * i + 2 * j + k; }

void append(std::vector<double>& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
}

// Runs `work(w)` for w in [0, workers) and returns once all are done.
template <class Work>
void run_workers(int workers, Work&& work) {
  if (workers <= 1) {
    work(0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back([&work, w] { work(w); });
  for (auto& t : pool) t.join();
}

std::pair<int, int> chunk(int n, int workers, int w) {
  return {static_cast<int>(static_cast<long long>(n) * w / workers),
          static_cast<int>(static_cast<long long>(n) * (w + 1) / workers)};
}

void gather(const Space& space, const Eigen::VectorXd& u, int t, std::vector<double>& out) {
  const auto nodes = space.element_nodes(t);
  out.resize(2 * nodes.size());
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    out[2 * a] = u[2 * nodes[a]];
    out[2 * a + 1] = u[2 * nodes[a] + 1];
  }
}

void scatter(const Space& space, int t, const std::vector<double>& local, Eigen::VectorXd& g) {
  const auto nodes = space.element_nodes(t);
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    g[2 * nodes[a]] += local[2 * a];
    g[2 * nodes[a] + 1] += local[2 * a + 1];
  }
}

// grad u (2x2) from local coefficients and n_loc x 2 physical basis gradients.
Eigen::Matrix2d local_gradient(const double* U, const double* G, int n) {
  Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
  for (int a = 0; a < n; ++a)
    for (int i = 0; i < 2; ++i) {
      g(i, 0) += U[2 * a + i] * G[2 * a];
      g(i, 1) += U[2 * a + i] * G[2 * a + 1];
    }
  return g;
}

// Hessians of both components as (xx, xy, yy) triples.
std::array<Eigen::Vector3d, 2> local_hessian(const double* U, const double* H, int n) {
  std::array<Eigen::Vector3d, 2> h{Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()};
  for (int a = 0; a < n; ++a)
    for (int i = 0; i < 2; ++i)
      for (int c = 0; c < 3; ++c) h[i][c] += U[2 * a + i] * H[3 * a + c];
  return h;
}

// (H n) as a 2x2 matrix: row i = hessian of component i applied to n.
Eigen::Matrix2d hessian_times_normal(const std::array<Eigen::Vector3d, 2>& h, const Eigen::Vector2d& n) {
  Eigen::Matrix2d out;
  for (int i = 0; i < 2; ++i) {
    out(i, 0) = h[i][0] * n[0] + h[i][1] * n[1];
    out(i, 1) = h[i][1] * n[0] + h[i][2] * n[1];
  }
  return out;
}

}  // namespace

void EnergyParams::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InputError("epsilon must be non-negative");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InputError("alpha must be positive");
  if (cell_degree < 0 || cell_degree > 20) throw InputError("cell quadrature degree must be in [0, 20]");
  if (edge_degree < 0 || edge_degree > 20) throw InputError("edge quadrature degree must be in [0, 20]");
  if (threads < 1) throw InputError("thread count must be positive");
}

EnergyAssembler::EnergyAssembler(std::shared_ptr<const Space> space, EnergyParams params)
    : space_(std::move(space)), params_(params) {
  params_.validate();
  const Space& S = *space_;
  const Mesh& mesh = S.mesh();
  const int q = S.degree();
  if (q < 2) throw InputError("the interior-penalty energy needs degree q >= 2");
  const LagrangeBasis& basis = S.basis();
  const LagrangeBasis lift_basis(q - 2);
  n_loc_ = basis.size();
  n_lift_ = lift_basis.size();

  const Quadrature cell = cell_rule(params_.cell_degree);
  const Quadrature hess = cell_rule(2 * (q - 2));
  const Quadrature edge = edge_rule(params_.edge_degree > 0 ? params_.edge_degree : 2 * q);
  n_cell_qp_ = cell.size();
  n_hess_qp_ = hess.size();

  std::vector<Eigen::MatrixXd> ref_grads, ref_hess;
  for (const auto& p : cell.points) ref_grads.push_back(basis.gradients(p));
  for (const auto& p : hess.points) ref_hess.push_back(basis.hessians(p));

  const int nt = mesh.num_triangles();
  cell_grads_.reserve(static_cast<std::size_t>(nt) * n_cell_qp_ * n_loc_ * 2);
  hess_basis_.reserve(static_cast<std::size_t>(nt) * n_hess_qp_ * n_loc_ * 3);
  lift_mass_inverse_.reserve(nt);
  for (int t = 0; t < nt; ++t) {
    const ElementMap& map = S.map(t);
    const double det = std::abs(map.det);
    for (int k = 0; k < n_cell_qp_; ++k) {
      append(cell_grads_, map.physical_gradients(ref_grads[k]));
      cell_weights_.push_back(cell.weights[k] * det);
    }
    for (int k = 0; k < n_hess_qp_; ++k) {
      append(hess_basis_, map.physical_hessians(ref_hess[k]));
      hess_weights_.push_back(hess.weights[k] * det);
    }
    Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(n_lift_, n_lift_);
    const Quadrature mq = cell_rule(2 * (q - 2));
    for (int k = 0; k < mq.size(); ++k) {
      const Eigen::VectorXd psi = lift_basis.values(mq.points[k]);
      mass += mq.weights[k] * det * psi * psi.transpose();
    }
    lift_mass_inverse_.push_back(mass.inverse());
  }

  edges_.reserve(S.edges().interior.size());
  for (const auto& e : S.edges().interior) {
    EdgeData d;
    d.normal = e.normal;
    d.h = e.length;
    d.plus.element = e.plus;
    d.minus.element = e.minus;
    const Point a = mesh.vertices[e.vertices[0]];
    const Point b = mesh.vertices[e.vertices[1]];
    for (int k = 0; k < edge.size(); ++k) {
      const Point x = a + edge.points[k].x() * (b - a);
      d.weights.push_back(edge.weights[k] * e.length);
      for (EdgeSide* side : {&d.plus, &d.minus}) {
        const ElementMap& map = S.map(side->element);
        const Point xi = map.to_reference(x);
        append(side->grads, map.physical_gradients(basis.gradients(xi)));
        append(side->hess, map.physical_hessians(basis.hessians(xi)));
        const Eigen::VectorXd psi = lift_basis.values(xi);
        side->lift.insert(side->lift.end(), psi.data(), psi.data() + psi.size());
      }
    }
    edges_.push_back(std::move(d));
  }
}

template <bool kGradient>
EnergyBreakdown EnergyAssembler::assemble(const Eigen::VectorXd& u, Eigen::VectorXd* grad,
                                          unsigned terms) const {
  const Space& S = *space_;
  if (u.size() != S.num_dofs()) throw InputError("DOF vector length does not match the space");
  const int nt = S.mesh().num_triangles();
  const int ne = static_cast<int>(edges_.size());
  const int workers = std::max(1, std::min(params_.threads, nt));
  const double eps2 = params_.epsilon * params_.epsilon;
  const double alpha = params_.alpha;
  const MaterialModel& material = params_.material;
  const int n = n_loc_;

  std::vector<EnergyBreakdown> partial(workers);
  std::vector<Eigen::VectorXd> partial_grad(kGradient ? workers : 0);

  auto work = [&](int w) {
    EnergyBreakdown& out = partial[w];
    Eigen::VectorXd* g = nullptr;
    if constexpr (kGradient) {
      partial_grad[w] = Eigen::VectorXd::Zero(S.num_dofs());
      g = &partial_grad[w];
    }
    std::vector<double> U, Um, R, Rm;
    const auto [t0, t1] = chunk(nt, workers, w);
    for (int t = t0; t < t1; ++t) {
      gather(S, u, t, U);
      if constexpr (kGradient) R.assign(2 * n, 0.0);
      if (terms & kTermsBulk) {
        for (int k = 0; k < n_cell_qp_; ++k) {
          const std::size_t id = static_cast<std::size_t>(t) * n_cell_qp_ + k;
          const double* G = &cell_grads_[id * n * 2];
          const double wq = cell_weights_[id];
          const DefGrad F = DefGrad::from_displacement_gradient(local_gradient(U.data(), G, n));
          Eigen::Matrix2d P = Eigen::Matrix2d::Zero();
          if ((terms & kTermW) && material.strain_energy) {
            out.bulk_W += wq * strain_energy(F);
            if constexpr (kGradient) P += strain_energy_dF(F);
          }
          if (terms & kTermPhi) {
            bool overflow = false;
            out.bulk_Phi += wq * penalty(material, F, &overflow);
            if constexpr (kGradient) P += penalty_dF(material, F);
            out.penalty_overflow += overflow;
          }
          if constexpr (kGradient) {
            for (int a = 0; a < n; ++a)
              for (int i = 0; i < 2; ++i) R[2 * a + i] += wq * (P(i, 0) * G[2 * a] + P(i, 1) * G[2 * a + 1]);
          }
        }
      }
      if (terms & kTermHess) {
        for (int k = 0; k < n_hess_qp_; ++k) {
          const std::size_t id = static_cast<std::size_t>(t) * n_hess_qp_ + k;
          const double* H = &hess_basis_[id * n * 3];
          const double wq = hess_weights_[id];
          const auto h = local_hessian(U.data(), H, n);
          double sq = 0.0;
          for (int i = 0; i < 2; ++i) sq += h[i][0] * h[i][0] + 2.0 * h[i][1] * h[i][1] + h[i][2] * h[i][2];
          out.hess_term += 0.5 * wq * sq;
          if constexpr (kGradient) {
            for (int a = 0; a < n; ++a)
              for (int i = 0; i < 2; ++i)
                R[2 * a + i] += eps2 * wq *
                                (H[3 * a] * h[i][0] + 2.0 * H[3 * a + 1] * h[i][1] + H[3 * a + 2] * h[i][2]);
          }
        }
      }
      if constexpr (kGradient) scatter(S, t, R, *g);
    }

    const bool cons = terms & kTermConsistency;
    const bool pen = terms & kTermPenalty;
    if (!cons && !pen) return;
    const auto [e0, e1] = chunk(ne, workers, w);
    for (int e = e0; e < e1; ++e) {
      const EdgeData& d = edges_[e];
      gather(S, u, d.plus.element, U);
      gather(S, u, d.minus.element, Um);
      if constexpr (kGradient) {
        R.assign(2 * n, 0.0);
        Rm.assign(2 * n, 0.0);
      }
      const Eigen::Vector2d& nrm = d.normal;
      for (std::size_t k = 0; k < d.weights.size(); ++k) {
        const double wq = d.weights[k];
        const double* Gp = &d.plus.grads[k * n * 2];
        const double* Gm = &d.minus.grads[k * n * 2];
        const double* Hp = &d.plus.hess[k * n * 3];
        const double* Hm = &d.minus.hess[k * n * 3];
        const Eigen::Matrix2d jump = local_gradient(U.data(), Gp, n) - local_gradient(Um.data(), Gm, n);
        const auto hp = local_hessian(U.data(), Hp, n);
        const auto hm = local_hessian(Um.data(), Hm, n);
        const std::array<Eigen::Vector3d, 2> avg{0.5 * (hp[0] + hm[0]), 0.5 * (hp[1] + hm[1])};
        const Eigen::Matrix2d hn = hessian_times_normal(avg, nrm);
        if (cons) out.consistency_term -= wq * (jump.array() * hn.array()).sum();
        if (pen) out.penalty_term += alpha / d.h * wq * jump.squaredNorm();
        if constexpr (kGradient) {
          const double pw = pen ? 2.0 * alpha / d.h * wq : 0.0;
          for (int a = 0; a < n; ++a) {
            // (H_a n) for the basis function a on each side.
            const double hpn0 = Hp[3 * a] * nrm[0] + Hp[3 * a + 1] * nrm[1];
            const double hpn1 = Hp[3 * a + 1] * nrm[0] + Hp[3 * a + 2] * nrm[1];
            const double hmn0 = Hm[3 * a] * nrm[0] + Hm[3 * a + 1] * nrm[1];
            const double hmn1 = Hm[3 * a + 1] * nrm[0] + Hm[3 * a + 2] * nrm[1];
            for (int i = 0; i < 2; ++i) {
              const double jp = jump(i, 0) * Gp[2 * a] + jump(i, 1) * Gp[2 * a + 1];
              const double jm = jump(i, 0) * Gm[2 * a] + jump(i, 1) * Gm[2 * a + 1];
              double rp = pw * jp;
              double rm = -pw * jm;
              if (cons) {
                rp -= wq * (hn(i, 0) * Gp[2 * a] + hn(i, 1) * Gp[2 * a + 1] +
                            0.5 * (hpn0 * jump(i, 0) + hpn1 * jump(i, 1)));
                rm -= wq * (-(hn(i, 0) * Gm[2 * a] + hn(i, 1) * Gm[2 * a + 1]) +
                            0.5 * (hmn0 * jump(i, 0) + hmn1 * jump(i, 1)));
              }
              R[2 * a + i] += eps2 * rp;
              Rm[2 * a + i] += eps2 * rm;
            }
          }
        }
      }
      if constexpr (kGradient) {
        scatter(S, d.plus.element, R, *g);
        scatter(S, d.minus.element, Rm, *g);
      }
    }
  };
  run_workers(workers, work);

  EnergyBreakdown sum;
  for (const auto& p : partial) {
    sum.bulk_W += p.bulk_W;
    sum.bulk_Phi += p.bulk_Phi;
    sum.hess_term += p.hess_term;
    sum.consistency_term += p.consistency_term;
    sum.penalty_term += p.penalty_term;
    sum.penalty_overflow += p.penalty_overflow;
  }
  sum.total = sum.bulk_W + sum.bulk_Phi + eps2 * sum.higher_order();
  if constexpr (kGradient) {
    *grad = partial_grad[0];
    for (int w = 1; w < workers; ++w) *grad += partial_grad[w];
  }
  return sum;
}

EnergyBreakdown EnergyAssembler::energy(const Eigen::VectorXd& u, unsigned terms) const {
  return assemble<false>(u, nullptr, terms);
}

EnergyBreakdown EnergyAssembler::energy_and_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad,
                                                     unsigned terms) const {
  return assemble<true>(u, &grad, terms);
}

void EnergyAssembler::accumulate_edge_lift(const Eigen::VectorXd& u, int edge, BrokenField& out) const {
  const EdgeData& d = edges_[edge];
  const int n = n_loc_;
  std::vector<double> Up, Um;
  gather(*space_, u, d.plus.element, Up);
  gather(*space_, u, d.minus.element, Um);
  Eigen::MatrixXd rhs_p = Eigen::MatrixXd::Zero(n_lift_, 8);
  Eigen::MatrixXd rhs_m = Eigen::MatrixXd::Zero(n_lift_, 8);
  for (std::size_t k = 0; k < d.weights.size(); ++k) {
    const Eigen::Matrix2d jump =
        local_gradient(Up.data(), &d.plus.grads[k * n * 2], n) - local_gradient(Um.data(), &d.minus.grads[k * n * 2], n);
    Eigen::Matrix<double, 1, 8> tensor;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int c = 0; c < 2; ++c) tensor[tensor_index(i, j, c)] = jump(i, j) * d.normal[c];
    const Eigen::Map<const Eigen::VectorXd> psi_p(&d.plus.lift[k * n_lift_], n_lift_);
    const Eigen::Map<const Eigen::VectorXd> psi_m(&d.minus.lift[k * n_lift_], n_lift_);
    rhs_p += 0.5 * d.weights[k] * psi_p * tensor;
    rhs_m += 0.5 * d.weights[k] * psi_m * tensor;
  }
  out.block(d.plus.element) += lift_mass_inverse_[d.plus.element] * rhs_p;
  out.block(d.minus.element) += lift_mass_inverse_[d.minus.element] * rhs_m;
}

BrokenField EnergyAssembler::lifting(const Eigen::VectorXd& u) const {
  BrokenField out(space_->mesh_ptr(), space_->degree() - 2, 8);
  for (int e = 0; e < static_cast<int>(edges_.size()); ++e) accumulate_edge_lift(u, e, out);
  return out;
}

BrokenField EnergyAssembler::lift_edge(const Eigen::VectorXd& u, int edge) const {
  if (edge < 0 || edge >= static_cast<int>(edges_.size())) throw InputError("no such interior edge");
  BrokenField out(space_->mesh_ptr(), space_->degree() - 2, 8);
  accumulate_edge_lift(u, edge, out);
  return out;
}

BrokenField EnergyAssembler::piecewise_hessian(const Eigen::VectorXd& u) const {
  const Space& S = *space_;
  const LagrangeBasis lift_basis(S.degree() - 2);
  BrokenField out(S.mesh_ptr(), S.degree() - 2, 8);
  std::vector<Eigen::MatrixXd> ref;
  for (const auto& p : lift_basis.nodes()) ref.push_back(S.basis().hessians(p));
  std::vector<double> U;
  for (int t = 0; t < S.mesh().num_triangles(); ++t) {
    gather(S, u, t, U);
    for (int a = 0; a < lift_basis.size(); ++a) {
      const Eigen::MatrixXd H = S.map(t).physical_hessians(ref[a]);
      for (int i = 0; i < 2; ++i) {
        double xx = 0, xy = 0, yy = 0;
        for (int b = 0; b < n_loc_; ++b) {
          xx += U[2 * b + i] * H(b, 0);
          xy += U[2 * b + i] * H(b, 1);
          yy += U[2 * b + i] * H(b, 2);
        }
        auto row = out.block(t).row(a);
        row[tensor_index(i, 0, 0)] = xx;
        row[tensor_index(i, 0, 1)] = xy;
        row[tensor_index(i, 1, 0)] = xy;
        row[tensor_index(i, 1, 1)] = yy;
      }
    }
  }
  return out;
}

double EnergyAssembler::edge_pairing(const Eigen::VectorXd& u, const BrokenField& w, int edge) const {
  const int n = n_loc_;
  std::vector<double> Up, Um;
  double sum = 0.0;
  const int first = edge >= 0 ? edge : 0;
  const int last = edge >= 0 ? edge + 1 : static_cast<int>(edges_.size());
  for (int e = first; e < last; ++e) {
    const EdgeData& d = edges_[e];
    gather(*space_, u, d.plus.element, Up);
    gather(*space_, u, d.minus.element, Um);
    for (std::size_t k = 0; k < d.weights.size(); ++k) {
      const Eigen::Matrix2d jump =
          local_gradient(Up.data(), &d.plus.grads[k * n * 2], n) - local_gradient(Um.data(), &d.minus.grads[k * n * 2], n);
      const Eigen::Map<const Eigen::VectorXd> psi_p(&d.plus.lift[k * n_lift_], n_lift_);
      const Eigen::Map<const Eigen::VectorXd> psi_m(&d.minus.lift[k * n_lift_], n_lift_);
      const Eigen::VectorXd avg = 0.5 * (w.block(d.plus.element).transpose() * psi_p +
                                         w.block(d.minus.element).transpose() * psi_m);
      double s = 0.0;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          for (int c = 0; c < 2; ++c) s += avg[tensor_index(i, j, c)] * jump(i, j) * d.normal[c];
      sum += d.weights[k] * s;
    }
  }
  return sum;
}

Eigen::VectorXd EnergyAssembler::edge_pairing_gradient(const BrokenField& w) const {
  const int n = n_loc_;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(space_->num_dofs());
  std::vector<double> Rp(2 * n), Rm(2 * n);
  for (const EdgeData& d : edges_) {
    std::fill(Rp.begin(), Rp.end(), 0.0);
    std::fill(Rm.begin(), Rm.end(), 0.0);
    for (std::size_t k = 0; k < d.weights.size(); ++k) {
      const Eigen::Map<const Eigen::VectorXd> psi_p(&d.plus.lift[k * n_lift_], n_lift_);
      const Eigen::Map<const Eigen::VectorXd> psi_m(&d.minus.lift[k * n_lift_], n_lift_);
      const Eigen::VectorXd avg = 0.5 * (w.block(d.plus.element).transpose() * psi_p +
                                         w.block(d.minus.element).transpose() * psi_m);
      Eigen::Matrix2d wn;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          wn(i, j) = avg[tensor_index(i, j, 0)] * d.normal[0] + avg[tensor_index(i, j, 1)] * d.normal[1];
      const double* Gp = &d.plus.grads[k * n * 2];
      const double* Gm = &d.minus.grads[k * n * 2];
      for (int a = 0; a < n; ++a)
        for (int i = 0; i < 2; ++i) {
          Rp[2 * a + i] += d.weights[k] * (wn(i, 0) * Gp[2 * a] + wn(i, 1) * Gp[2 * a + 1]);
          Rm[2 * a + i] -= d.weights[k] * (wn(i, 0) * Gm[2 * a] + wn(i, 1) * Gm[2 * a + 1]);
        }
    }
    scatter(*space_, d.plus.element, Rp, g);
    scatter(*space_, d.minus.element, Rm, g);
  }
  return g;
}

double EnergyAssembler::jump_seminorm_squared(const Eigen::VectorXd& u) const {
  const int n = n_loc_;
  std::vector<double> Up, Um;
  double sum = 0.0;
  for (const EdgeData& d : edges_) {
    gather(*space_, u, d.plus.element, Up);
    gather(*space_, u, d.minus.element, Um);
    for (std::size_t k = 0; k < d.weights.size(); ++k) {
      const Eigen::Matrix2d jump =
          local_gradient(Up.data(), &d.plus.grads[k * n * 2], n) - local_gradient(Um.data(), &d.minus.grads[k * n * 2], n);
      sum += d.weights[k] / d.h * jump.squaredNorm();
    }
  }
  return sum;
}

Eigen::VectorXd EnergyAssembler::apply_jump_operator(const Eigen::VectorXd& u) const {
  const int n = n_loc_;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(space_->num_dofs());
  std::vector<double> Up, Um, Rp(2 * n), Rm(2 * n);
  for (const EdgeData& d : edges_) {
    gather(*space_, u, d.plus.element, Up);
    gather(*space_, u, d.minus.element, Um);
    std::fill(Rp.begin(), Rp.end(), 0.0);
    std::fill(Rm.begin(), Rm.end(), 0.0);
    for (std::size_t k = 0; k < d.weights.size(); ++k) {
      const double* Gp = &d.plus.grads[k * n * 2];
      const double* Gm = &d.minus.grads[k * n * 2];
      const Eigen::Matrix2d jump = local_gradient(Up.data(), Gp, n) - local_gradient(Um.data(), Gm, n);
      const double s = d.weights[k] / d.h;
      for (int a = 0; a < n; ++a)
        for (int i = 0; i < 2; ++i) {
          Rp[2 * a + i] += s * (jump(i, 0) * Gp[2 * a] + jump(i, 1) * Gp[2 * a + 1]);
          Rm[2 * a + i] -= s * (jump(i, 0) * Gm[2 * a] + jump(i, 1) * Gm[2 * a + 1]);
        }
    }
    scatter(*space_, d.plus.element, Rp, g);
    scatter(*space_, d.minus.element, Rm, g);
  }
  return g;
}

namespace {

// Global DOF indices of triangle t, interleaved like gather().
void element_dofs(const Space& space, int t, std::vector<int>& out) {
  const auto nodes = space.element_nodes(t);
  out.resize(2 * nodes.size());
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    out[2 * a] = 2 * nodes[a];
    out[2 * a + 1] = 2 * nodes[a] + 1;
  }
}

}  // namespace

Eigen::SparseMatrix<double> EnergyAssembler::jump_matrix() const {
  const int n = n_loc_;
  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<int> dp, dm;
  Eigen::MatrixXd local(4 * n, 4 * n);
  Eigen::VectorXd row(4 * n);
  for (const EdgeData& d : edges_) {
    element_dofs(*space_, d.plus.element, dp);
    element_dofs(*space_, d.minus.element, dm);
    local.setZero();
    for (std::size_t k = 0; k < d.weights.size(); ++k) {
      const double* Gp = &d.plus.grads[k * n * 2];
      const double* Gm = &d.minus.grads[k * n * 2];
      const double s = d.weights[k] / d.h;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          row.setZero();
          for (int a = 0; a < n; ++a) {
            row[2 * a + i] = Gp[2 * a + j];
            row[2 * n + 2 * a + i] = -Gm[2 * a + j];
          }
          local += s * row * row.transpose();
        }
    }
    for (int r = 0; r < 4 * n; ++r)
      for (int c = 0; c < 4 * n; ++c) {
        const int gr = r < 2 * n ? dp[r] : dm[r - 2 * n];
        const int gc = c < 2 * n ? dp[c] : dm[c - 2 * n];
        triplets.emplace_back(gr, gc, local(r, c));
      }
  }
  Eigen::SparseMatrix<double> B(space_->num_dofs(), space_->num_dofs());
  B.setFromTriplets(triplets.begin(), triplets.end());
  return B;
}

Eigen::SparseMatrix<double> EnergyAssembler::lift_gram_matrix() const {
  // Rows of E hold the edge moments int_e 1/2 psi_m [grad u (x) n] per (triangle, m, component);
  // the lifting coefficients are M_K^{-1} E u, so int |R|^2 = (E u)^T blockdiag(M_K^{-1}) (E u).
  const int n = n_loc_;
  const int nt = space_->mesh().num_triangles();
  const int block = n_lift_ * 8;
  std::vector<Eigen::Triplet<double>> moments, inverse;
  std::vector<int> dp, dm;
  for (const EdgeData& d : edges_) {
    element_dofs(*space_, d.plus.element, dp);
    element_dofs(*space_, d.minus.element, dm);
    for (const EdgeSide* side : {&d.plus, &d.minus}) {
      const int base = side->element * block;
      for (std::size_t k = 0; k < d.weights.size(); ++k) {
        const double* Gp = &d.plus.grads[k * n * 2];
        const double* Gm = &d.minus.grads[k * n * 2];
        for (int m = 0; m < n_lift_; ++m) {
          const double s = 0.5 * d.weights[k] * side->lift[k * n_lift_ + m];
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
              for (int c = 0; c < 2; ++c) {
                const int r = base + m * 8 + tensor_index(i, j, c);
                const double f = s * d.normal[c];
                for (int a = 0; a < n; ++a) {
                  moments.emplace_back(r, dp[2 * a + i], f * Gp[2 * a + j]);
                  moments.emplace_back(r, dm[2 * a + i], -f * Gm[2 * a + j]);
                }
              }
        }
      }
    }
  }
  for (int t = 0; t < nt; ++t)
    for (int m = 0; m < n_lift_; ++m)
      for (int l = 0; l < n_lift_; ++l)
        for (int comp = 0; comp < 8; ++comp)
          inverse.emplace_back(t * block + m * 8 + comp, t * block + l * 8 + comp, lift_mass_inverse_[t](m, l));
  Eigen::SparseMatrix<double> E(static_cast<Eigen::Index>(nt) * block, space_->num_dofs());
  E.setFromTriplets(moments.begin(), moments.end());
  Eigen::SparseMatrix<double> Minv(E.rows(), E.rows());
  Minv.setFromTriplets(inverse.begin(), inverse.end());
  Eigen::SparseMatrix<double> A = E.transpose() * (Minv * E);
  return A;
}

EnergyBreakdown assemble_energy(const Field& u, const EnergyParams& params) {
  return EnergyAssembler(u.space, params).energy(u.coeffs);
}

Eigen::VectorXd assemble_gradient(const Field& u, const EnergyParams& params) {
  Eigen::VectorXd g;
  EnergyAssembler(u.space, params).energy_and_gradient(u.coeffs, g);
  return g;
}

namespace {

EnergyParams geometry_only(double alpha = 1.0) {
  EnergyParams p;
  p.alpha = alpha;
  p.material.penalty = PenaltyKind::None;
  p.material.strain_energy = false;
  return p;
}

}  // namespace

BrokenField lifting(const Field& u) { return EnergyAssembler(u.space, geometry_only()).lifting(u.coeffs); }

BrokenField discrete_gradient(const Field& u) {
  const EnergyAssembler assembler(u.space, geometry_only());
  BrokenField g = assembler.piecewise_hessian(u.coeffs);
  g.coeffs -= assembler.lifting(u.coeffs).coeffs;
  return g;
}

double psi_ho_discrete_gradient_form(const Field& u, double alpha) {
  const EnergyAssembler assembler(u.space, geometry_only(alpha));
  const BrokenField lift = assembler.lifting(u.coeffs);
  BrokenField g = assembler.piecewise_hessian(u.coeffs);
  g.coeffs -= lift.coeffs;
  return 0.5 * broken_inner(g, g) - 0.5 * broken_inner(lift, lift) +
         alpha * assembler.jump_seminorm_squared(u.coeffs);
}

double psi_ho_edge_form(const Field& u, double alpha) {
  return EnergyAssembler(u.space, geometry_only(alpha)).energy(u.coeffs, kTermsHigherOrder).higher_order();
}

double broken_h2_seminorm(const Field& u) {
  const EnergyAssembler assembler(u.space, geometry_only());
  const double hess = 2.0 * assembler.energy(u.coeffs, kTermHess).hess_term;
  return std::sqrt(hess + assembler.jump_seminorm_squared(u.coeffs));
}

CrEstimate estimate_CR(std::shared_ptr<const Space> space, int iters, std::uint64_t seed) {
  if (space->edges().interior.empty()) throw InputError("C_R estimate needs at least one interior edge");
  if (iters < 1) throw InputError("C_R estimate needs at least one iteration");
  const EnergyAssembler assembler(std::move(space), geometry_only());
  const Eigen::SparseMatrix<double> A = assembler.lift_gram_matrix();
  const Eigen::SparseMatrix<double> B = assembler.jump_matrix();
  const Eigen::Index n = B.rows();

  const double shift = 1e-10 * B.diagonal().cwiseAbs().maxCoeff();
  Eigen::SparseMatrix<double> shifted = B;
  for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += shift;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(shifted);
  if (solver.info() != Eigen::Success) throw std::runtime_error("factorization of the jump matrix failed");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Eigen::VectorXd x(n);
  for (auto& v : x) v = dist(rng);

  auto rayleigh = [&](const Eigen::VectorXd& v) {
    const double den = v.dot(B * v);
    return den > 0.0 ? v.dot(A * v) / den : 0.0;
  };
  CrEstimate est;
  est.value = rayleigh(x);
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd y = solver.solve(A * x);
    const double norm = y.norm();
    if (!(norm > 0.0)) break;
    x = y / norm;
    const double value = rayleigh(x);
    est.last_change = std::abs(value - est.value) / value;
    est.value = value;
    est.iterations = it + 1;
    if (est.last_change < 1e-14) break;
  }
  return est;
}

}  // namespace tetherfem
