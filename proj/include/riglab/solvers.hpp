// Dense Levenberg-Marquardt with a numeric Jacobian, shared by the
// calibration solvers. Steps are only accepted when they reduce the cost, so
// the accepted-cost sequence is non-increasing by construction.
#pragma once

#include <Eigen/Core>
#include <functional>

namespace riglab {

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LmOptions {
  int max_iterations = 100;
  double relative_tolerance = 1e-10;  // stop on relative cost decrease below this
  double initial_lambda = 1e-3;
  double lambda_growth = 10.0;
  double lambda_shrink = 3.0;
  int max_retries = 12;       // damping increases tried per iteration
  double jacobian_step = 1e-6;  // relative central-difference step
};

struct LmResult {
  Eigen::VectorXd params;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  // False only when no damped step could reduce the cost while the gradient
  // was still clearly nonzero (a stall, reported to the caller).
  bool converged = false;
};

LmResult levenberg_marquardt(const ResidualFn& residual_fn, const Eigen::VectorXd& x0,
                             const LmOptions& options = {});

}  // namespace riglab
