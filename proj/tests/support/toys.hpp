#pragma once

// Small control problems with closed-form behavior, shared across tests.

#include "stomax/state.hpp"

namespace toys {

using namespace stomax;

inline Box sym_box(double half_width, int dim = 1) {
  Box b;
  b.lo.assign(dim, -half_width);
  b.hi.assign(dim, half_width);
  return b;
}

inline ControlPolicy constant_policy(std::vector<double> theta, Box box) {
  ControlPolicy p;
  p.kind = ControlPolicy::Kind::Constant;
  p.theta = std::move(theta);
  p.control_box = std::move(box);
  return p;
}

/// dX = u dt + c_jump dmu, J = E[-X_T^2]. With constant control theta and
/// X_0 = 0 the best constant is 0.
inline ControlledSDESpec lq_drift_sde(double x0, double c_jump) {
  ControlledSDESpec s;
  s.x0 = x0;
  s.n_ctrl = 1;
  s.drift = [](const CoeffArgs& a) { return a.u[0]; };
  s.drift_dx = [](const CoeffArgs&) { return 0.0; };
  s.drift_du = [](const CoeffArgs&, std::span<double> g) { g[0] = 1.0; };
  s.jump = [c_jump](int, const CoeffArgs&) { return c_jump; };
  s.jump_dx = [](int, const CoeffArgs&) { return 0.0; };
  s.jump_du = [](int, const CoeffArgs&, std::span<double> g) { g[0] = 0.0; };
  return s;
}

/// dX = u dmu (control in the jump coefficient), J = E[-X_T^2].
inline ControlledSDESpec jump_control_sde(double x0) {
  ControlledSDESpec s;
  s.x0 = x0;
  s.n_ctrl = 1;
  s.drift = [](const CoeffArgs&) { return 0.0; };
  s.drift_dx = [](const CoeffArgs&) { return 0.0; };
  s.drift_du = [](const CoeffArgs&, std::span<double> g) { g[0] = 0.0; };
  s.jump = [](int, const CoeffArgs& a) { return a.u[0]; };
  s.jump_dx = [](int, const CoeffArgs&) { return 0.0; };
  s.jump_du = [](int, const CoeffArgs&, std::span<double> g) { g[0] = 1.0; };
  return s;
}

/// dX = c X dt: deterministic exponential growth, no control effect.
inline ControlledSDESpec exp_growth_sde(double x0, double c) {
  ControlledSDESpec s;
  s.x0 = x0;
  s.n_ctrl = 1;
  s.drift = [c](const CoeffArgs& a) { return c * a.x; };
  s.drift_dx = [c](const CoeffArgs&) { return c; };
  s.drift_du = [](const CoeffArgs&, std::span<double> g) { g[0] = 0.0; };
  s.jump = [](int, const CoeffArgs&) { return 0.0; };
  s.jump_dx = [](int, const CoeffArgs&) { return 0.0; };
  s.jump_du = [](int, const CoeffArgs&, std::span<double> g) { g[0] = 0.0; };
  return s;
}

inline CostSpec quadratic_terminal_cost() {
  CostSpec c;
  c.terminal = [](double x) { return -x * x; };
  c.terminal_dx = [](double x) { return -2.0 * x; };
  return c;
}

inline CostSpec linear_terminal_cost() {
  CostSpec c;
  c.terminal = [](double x) { return x; };
  c.terminal_dx = [](double) { return 1.0; };
  return c;
}

/// f = -(x^2 + u^2)/2, g = -x^2: exercises the running-cost path.
inline CostSpec quadratic_running_cost() {
  CostSpec c;
  c.running = [](const CoeffArgs& a) { return -0.5 * (a.x * a.x + a.u[0] * a.u[0]); };
  c.running_dx = [](const CoeffArgs& a) { return -a.x; };
  c.running_du = [](const CoeffArgs& a, std::span<double> g) { g[0] = -a.u[0]; };
  c.terminal = [](double x) { return -x * x; };
  c.terminal_dx = [](double x) { return -2.0 * x; };
  return c;
}

}  // namespace toys
