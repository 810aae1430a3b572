#pragma once

#include "csbrm/core.hpp"

#include <string>
#include <vector>

namespace csbrm {

enum class ModelKind { DoubleIntegrator2D, FixedWing };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Discrete-time stochastic model x_{k+1} = f(x_k, u_k) + G w_k.
///
/// DoubleIntegrator2D: x = (px, py, vx, vy), u = (ax, ay).
/// FixedWing:          x = (x, y, z, psi), u = (V, gamma, phi), kinematic
///                     coordinated-turn model with gravity g.
struct NonlinearModel {
  ModelKind kind = ModelKind::DoubleIntegrator2D;
  double dt = 0.2;
  Vec noise_gains;  // g_i, one per noise channel (n_w == n_x)
  double gravity = 9.81;

  static NonlinearModel double_integrator_2d(double dt = 0.2, double gain = 0.1);
  static NonlinearModel fixed_wing(double dt = 0.2, double gain = 0.1);

  int state_dim() const { return 4; }
  int control_dim() const { return kind == ModelKind::DoubleIntegrator2D ? 2 : 3; }
  int noise_dim() const { return 4; }
  /// Number of leading state components that are a Cartesian position.
  int position_dim() const { return kind == ModelKind::DoubleIntegrator2D ? 2 : 3; }

  void validate() const;
};

/// Landmark range-dependent sensing. Every landmark returns a noisy copy of the
/// observed state components with standard deviation proportional to range.
struct Sensing {
  std::vector<Vec> landmarks;
  double eta_p = 0.1;  // double integrator position noise intensity
  double eta_v = 0.2;  // double integrator velocity noise intensity
  double eta = 0.05;   // fixed-wing noise intensity
};

int measurement_dim(const NonlinearModel& model, const Sensing& sensing);

struct NominalTrajectory {
  std::vector<Vec> states;    // N + 1 entries
  std::vector<Vec> controls;  // N entries

  int horizon() const { return static_cast<int>(controls.size()); }
  void validate(const NonlinearModel& model) const;
};

/// Time-varying linear-Gaussian model along a nominal trajectory:
///   x_{k+1} = A_k x_k + B_k u_k + h_k + G_k w_k,   k = 0..N-1
///   y_k     = C_k x_k + D_k v_k,                   k = 0..N
struct LinearizedSystem {
  std::vector<Mat> A, B, G;
  std::vector<Vec> h;
  std::vector<Mat> C, D;

  int horizon() const { return static_cast<int>(A.size()); }
  int state_dim() const { return A.empty() ? 0 : static_cast<int>(A.front().rows()); }
  int control_dim() const { return B.empty() ? 0 : static_cast<int>(B.front().cols()); }
  int noise_dim() const { return G.empty() ? 0 : static_cast<int>(G.front().cols()); }
  int measurement_dim() const { return C.empty() ? 0 : static_cast<int>(C.front().rows()); }

  /// Checks sizes and, unless disabled, D_k D_k^T > 0.
  void validate(bool require_noise_rank = true) const;
};

Vec step(const NonlinearModel& model, const Vec& x, const Vec& u, const Vec& w);
Vec step(const NonlinearModel& model, const Vec& x, const Vec& u);

Vec measure(const NonlinearModel& model, const Sensing& sensing, const Vec& x, const Vec& v);

/// Analytic Jacobians of the deterministic step.
Mat state_jacobian(const NonlinearModel& model, const Vec& x, const Vec& u);
Mat control_jacobian(const NonlinearModel& model, const Vec& x, const Vec& u);
Mat noise_jacobian(const NonlinearModel& model);

/// Observation matrix C (selection of observed components, stacked per landmark).
Mat observation_matrix(const NonlinearModel& model, const Sensing& sensing);
/// Noise gain D evaluated at x, i.e. range scaling frozen at x.
Mat observation_noise_matrix(const NonlinearModel& model, const Sensing& sensing, const Vec& x);

LinearizedSystem linearize(const NonlinearModel& model, const Sensing& sensing,
                           const NominalTrajectory& nom);

}  // namespace csbrm
