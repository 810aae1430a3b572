#include "csbrm/sysmodels.hpp"

#include <cmath>

namespace csbrm {

namespace {

void require_size(const Vec& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(n) +
                         ", got " + std::to_string(v.size()));
  }
}

void require_airspeed(const NonlinearModel& model, const Vec& u) {
  if (model.kind == ModelKind::FixedWing && !(u(0) > 0.0)) {
    throw ValidationError("fixed-wing airspeed must be positive, got V = " +
                          std::to_string(u(0)));
  }
}

int observed_per_landmark(const NonlinearModel& model) {
  return model.kind == ModelKind::DoubleIntegrator2D ? 2 : 4;
}

}  // namespace

std::string to_string(ModelKind kind) {
  return kind == ModelKind::DoubleIntegrator2D ? "double_integrator_2d" : "fixed_wing";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "double_integrator_2d") return ModelKind::DoubleIntegrator2D;
  if (name == "fixed_wing") return ModelKind::FixedWing;
  throw ValidationError("unknown model kind '" + name + "'");
}

NonlinearModel NonlinearModel::double_integrator_2d(double dt, double gain) {
  NonlinearModel m;
  m.kind = ModelKind::DoubleIntegrator2D;
  m.dt = dt;
  m.noise_gains = Vec::Constant(4, gain);
  return m;
}

NonlinearModel NonlinearModel::fixed_wing(double dt, double gain) {
  NonlinearModel m;
  m.kind = ModelKind::FixedWing;
  m.dt = dt;
  m.noise_gains = Vec::Constant(4, gain);
  return m;
}

void NonlinearModel::validate() const {
  if (!(dt > 0.0)) throw ValidationError("model.dt must be positive");
  if (noise_gains.size() != noise_dim()) {
    throw ValidationError("model.noise_gains must have " + std::to_string(noise_dim()) +
                          " entries");
  }
  if ((noise_gains.array() < 0.0).any()) {
    throw ValidationError("model.noise_gains must be nonnegative");
  }
  if (kind == ModelKind::FixedWing && !(gravity > 0.0)) {
    throw ValidationError("model.gravity must be positive");
  }
}

int measurement_dim(const NonlinearModel& model, const Sensing& sensing) {
  const int l = static_cast<int>(sensing.landmarks.size());
  return model.kind == ModelKind::DoubleIntegrator2D ? 2 * l + 2 : 4 * l;
}

void NominalTrajectory::validate(const NonlinearModel& model) const {
  if (states.size() != controls.size() + 1) {
    throw DimensionError("nominal trajectory needs N+1 states for N controls");
  }
  for (const auto& x : states) require_size(x, model.state_dim(), "nominal state");
  for (const auto& u : controls) require_size(u, model.control_dim(), "nominal control");
}

void LinearizedSystem::validate(bool require_noise_rank) const {
  const int n = horizon();
  if (n < 1) throw DimensionError("linearized system: horizon must be >= 1");
  if (B.size() != A.size() || G.size() != A.size() || h.size() != A.size()) {
    throw DimensionError("linearized system: dynamics sequences differ in length");
  }
  if (C.size() != A.size() + 1 || D.size() != A.size() + 1) {
    throw DimensionError("linearized system: observation sequences must have N+1 entries");
  }
  const auto nx = state_dim(), nu = control_dim(), nw = noise_dim(), ny = measurement_dim();
  for (int k = 0; k < n; ++k) {
    if (A[k].rows() != nx || A[k].cols() != nx || B[k].rows() != nx || B[k].cols() != nu ||
        G[k].rows() != nx || G[k].cols() != nw || h[k].size() != nx) {
      throw DimensionError("linearized system: inconsistent dynamics block at k=" +
                           std::to_string(k));
    }
  }
  for (int k = 0; k <= n; ++k) {
    if (C[k].rows() != ny || C[k].cols() != nx || D[k].rows() != ny || D[k].cols() != ny) {
      throw DimensionError("linearized system: inconsistent observation block at k=" +
                           std::to_string(k));
    }
    if (!require_noise_rank) continue;
    Eigen::LLT<Mat> llt(D[k] * D[k].transpose());
    if (llt.info() != Eigen::Success) {
      throw ValidationError("linearized system: D D^T is singular at k=" + std::to_string(k));
    }
  }
}

Vec step(const NonlinearModel& model, const Vec& x, const Vec& u, const Vec& w) {
  require_size(x, model.state_dim(), "step: state");
  require_size(u, model.control_dim(), "step: control");
  require_size(w, model.noise_dim(), "step: noise");
  const double dt = model.dt;
  Vec next(4);
  if (model.kind == ModelKind::DoubleIntegrator2D) {
    next(0) = x(0) + dt * x(2) + 0.5 * dt * dt * u(0);
    next(1) = x(1) + dt * x(3) + 0.5 * dt * dt * u(1);
    next(2) = x(2) + dt * u(0);
    next(3) = x(3) + dt * u(1);
  } else {
    require_airspeed(model, u);
    const double v = u(0), gamma = u(1), phi = u(2), psi = x(3);
    next(0) = x(0) + v * std::cos(psi) * std::cos(gamma) * dt;
    next(1) = x(1) + v * std::sin(psi) * std::cos(gamma) * dt;
    next(2) = x(2) + v * std::sin(gamma) * dt;
    next(3) = psi + model.gravity / v * std::tan(phi) * dt;
  }
  return next + model.noise_gains.cwiseProduct(w);
}

Vec step(const NonlinearModel& model, const Vec& x, const Vec& u) {
  return step(model, x, u, Vec::Zero(model.noise_dim()));
}

Vec measure(const NonlinearModel& model, const Sensing& sensing, const Vec& x, const Vec& v) {
  require_size(x, model.state_dim(), "measure: state");
  if (sensing.landmarks.empty()) throw ValidationError("measure: no landmarks");
  const int ny = measurement_dim(model, sensing);
  require_size(v, ny, "measure: noise");
  const int pdim = model.position_dim();
  const int per = observed_per_landmark(model);
  Vec y(ny);
  int row = 0;
  for (const auto& lm : sensing.landmarks) {
    require_size(lm, pdim, "measure: landmark");
    const double d = (x.head(pdim) - lm).norm();
    const double scale = model.kind == ModelKind::DoubleIntegrator2D ? sensing.eta_p : sensing.eta;
    y.segment(row, per) = x.head(per) + scale * d * v.segment(row, per);
    row += per;
  }
  if (model.kind == ModelKind::DoubleIntegrator2D) {
    y.segment(row, 2) = x.segment(2, 2) + sensing.eta_v * v.segment(row, 2);
  }
  return y;
}

Mat state_jacobian(const NonlinearModel& model, const Vec& x, const Vec& u) {
  require_size(x, model.state_dim(), "state_jacobian: state");
  require_size(u, model.control_dim(), "state_jacobian: control");
  const double dt = model.dt;
  Mat a = Mat::Identity(4, 4);
  if (model.kind == ModelKind::DoubleIntegrator2D) {
    a(0, 2) = dt;
    a(1, 3) = dt;
  } else {
    require_airspeed(model, u);
    const double v = u(0), gamma = u(1), psi = x(3);
    a(0, 3) = -v * std::sin(psi) * std::cos(gamma) * dt;
    a(1, 3) = v * std::cos(psi) * std::cos(gamma) * dt;
  }
  return a;
}

Mat control_jacobian(const NonlinearModel& model, const Vec& x, const Vec& u) {
  require_size(x, model.state_dim(), "control_jacobian: state");
  require_size(u, model.control_dim(), "control_jacobian: control");
  const double dt = model.dt;
  if (model.kind == ModelKind::DoubleIntegrator2D) {
    Mat b = Mat::Zero(4, 2);
    b(0, 0) = b(1, 1) = 0.5 * dt * dt;
    b(2, 0) = b(3, 1) = dt;
    return b;
  }
  require_airspeed(model, u);
  const double v = u(0), gamma = u(1), phi = u(2), psi = x(3);
  const double cpsi = std::cos(psi), spsi = std::sin(psi);
  const double cg = std::cos(gamma), sg = std::sin(gamma);
  const double cphi = std::cos(phi);
  Mat b = Mat::Zero(4, 3);
  b(0, 0) = cpsi * cg * dt;
  b(0, 1) = -v * cpsi * sg * dt;
  b(1, 0) = spsi * cg * dt;
  b(1, 1) = -v * spsi * sg * dt;
  b(2, 0) = sg * dt;
  b(2, 1) = v * cg * dt;
  b(3, 0) = -model.gravity / (v * v) * std::tan(phi) * dt;
  b(3, 2) = model.gravity / v / (cphi * cphi) * dt;
  return b;
}

Mat noise_jacobian(const NonlinearModel& model) { return model.noise_gains.asDiagonal(); }

Mat observation_matrix(const NonlinearModel& model, const Sensing& sensing) {
  const int ny = measurement_dim(model, sensing);
  const int per = observed_per_landmark(model);
  Mat c = Mat::Zero(ny, model.state_dim());
  int row = 0;
  for (std::size_t j = 0; j < sensing.landmarks.size(); ++j) {
    c.block(row, 0, per, per).setIdentity();
    row += per;
  }
  if (model.kind == ModelKind::DoubleIntegrator2D) c.block(row, 2, 2, 2).setIdentity();
  return c;
}

Mat observation_noise_matrix(const NonlinearModel& model, const Sensing& sensing, const Vec& x) {
  require_size(x, model.state_dim(), "observation_noise_matrix: state");
  const int ny = measurement_dim(model, sensing);
  const int per = observed_per_landmark(model);
  const int pdim = model.position_dim();
  const double scale = model.kind == ModelKind::DoubleIntegrator2D ? sensing.eta_p : sensing.eta;
  Vec diag(ny);
  int row = 0;
  for (const auto& lm : sensing.landmarks) {
    diag.segment(row, per).setConstant(scale * (x.head(pdim) - lm).norm());
    row += per;
  }
  if (model.kind == ModelKind::DoubleIntegrator2D) diag.segment(row, 2).setConstant(sensing.eta_v);
  return diag.asDiagonal();
}

LinearizedSystem linearize(const NonlinearModel& model, const Sensing& sensing,
                           const NominalTrajectory& nom) {
  model.validate();
  nom.validate(model);
  if (sensing.landmarks.empty()) throw ValidationError("linearize: no landmarks");
  const int n = nom.horizon();
  LinearizedSystem sys;
  sys.A.reserve(n);
  sys.B.reserve(n);
  sys.G.reserve(n);
  sys.h.reserve(n);
  const Mat g = noise_jacobian(model);
  for (int k = 0; k < n; ++k) {
    const Vec& x = nom.states[k];
    const Vec& u = nom.controls[k];
    Mat a = state_jacobian(model, x, u);
    Mat b = control_jacobian(model, x, u);
    Vec h = step(model, x, u) - a * x - b * u;
    if (!a.allFinite() || !b.allFinite() || !h.allFinite()) {
      throw SolverError("linearize: non-finite Jacobian at k=" + std::to_string(k));
    }
    sys.A.push_back(std::move(a));
    sys.B.push_back(std::move(b));
    sys.G.push_back(g);
    sys.h.push_back(std::move(h));
  }
  const Mat c = observation_matrix(model, sensing);
  sys.C.assign(n + 1, c);
  sys.D.reserve(n + 1);
  for (int k = 0; k <= n; ++k) sys.D.push_back(observation_noise_matrix(model, sensing, nom.states[k]));
  return sys;
}

}  // namespace csbrm
