#pragma once

#include <iosfwd>
#include <optional>

#include <Eigen/Core>

#include "polyfb/control_system.hpp"
#include "polyfb/crank_nicolson.hpp"
#include "polyfb/model.hpp"

namespace polyfb {

/// Samples of one solution on the uniform grid t_k = k h, k = 0..K.
///
/// When the run escaped at step k, only the columns 0..k-1 are stored and
/// `escape_index` holds k.
struct Trajectory {
  double step = 0.0;
  int planned_steps = 0;
  Eigen::MatrixXd states;    // d x (stored samples)
  Eigen::MatrixXd controls;  // m x (stored samples), empty when not recorded
  std::optional<int> escape_index;

  bool escaped() const { return escape_index.has_value(); }
  int samples() const { return static_cast<int>(states.cols()); }
  double time(int k) const { return step * k; }
  double horizon() const { return step * planned_steps; }
};

/// f(y) - (1/beta) B B^T grad v(y).
Eigen::VectorXd closed_loop_rhs(const ControlSystem& sys, const PolynomialModel& model,
                                const Eigen::Ref<const Eigen::VectorXd>& y);

/// Crank-Nicolson on the closed-loop system, recording the feedback control
/// u = -(1/beta) B^T grad v(y) at every sample. Stops at the first step whose
/// state leaves the escape bound, is non-finite, or whose implicit solve fails.
Trajectory integrate_closed_loop(const ControlSystem& sys, const PolynomialModel& model,
                                 const Eigen::Ref<const Eigen::VectorXd>& y0, double horizon,
                                 double step, const NewtonOptions& opts = {});

/// Crank-Nicolson on y' = A y, one LU factorization for the whole run.
Trajectory integrate_linear(const Eigen::Ref<const Eigen::MatrixXd>& A,
                            const Eigen::Ref<const Eigen::VectorXd>& y0, double horizon, double step);

/// CSV with header "t,y1..yd[,u1..um]".
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

/// Composite trapezoid weights on K+1 uniform samples.
Eigen::VectorXd trapezoid_weights(int steps, double step);

}  // namespace polyfb
