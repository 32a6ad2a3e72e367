#pragma once

#include <Eigen/Dense>

#include "mixborrow/rng.hpp"

namespace mixborrow {

/// Sine/cosine cascade: m-1 angles in [-pi/2, pi/2] to a unit m-vector with non-negative last entry.
Eigen::VectorXd polar_to_unit(const Eigen::VectorXd& phi);

/// Inverse cascade. The sign of the last coordinate is dropped (its absolute value is used).
Eigen::VectorXd unit_to_polar(const Eigen::VectorXd& theta);

/// log of the surface-measure Jacobian, sum_l (m-1-l) log|cos phi_l| over 1-based l.
double polar_log_jacobian(const Eigen::VectorXd& phi);

/** \brief Exact draw from the density proportional to exp(tau 1^T x - x^T A x) on the unit sphere.
 *
 * Uses an angular central Gaussian envelope for the quadratic part and a second
 * accept step for the linear part. With `fold_sign` the result is reflected onto
 * the half sphere with non-negative last coordinate (valid only when tau = 0).
 */
Eigen::VectorXd sample_bingham(const Eigen::MatrixXd& A, double tau, Rng& rng, bool fold_sign = false);

/** \brief Saddlepoint approximation of log C(gamma, A) = log of the integral of exp(gamma^T x - x^T A x)
 * over the unit sphere under surface measure. Third-order corrected.
 */
double fb_log_normconst(const Eigen::VectorXd& gamma, const Eigen::MatrixXd& A);

/// Same with gamma = 0.
double bingham_log_normconst(const Eigen::MatrixXd& A);

/// log of the surface area of the unit sphere in R^m.
double log_sphere_area(int m);

} // namespace mixborrow
