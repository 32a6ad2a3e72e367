#pragma once

#include <memory>

#include <Eigen/Dense>

#include "mixborrow/model.hpp"
#include "mixborrow/sampler.hpp"

namespace mixborrow {

/** \brief Collapsed tensor-product row for one exposure history.
 *
 * `dose_design` is the L x d dose basis evaluated at the L lagged values and `lag_basis`
 * the L x m lag basis. Entry a*m + b equals sum_l dose_design(l, a) * lag_basis(l, b).
 */
Eigen::VectorXd tensor_design(const Eigen::MatrixXd& dose_design, const Eigen::MatrixXd& lag_basis);

/// Kronecker sum dose_penalty (x) I_m + I_d (x) lag_penalty, both given as precision (penalty) matrices.
Eigen::MatrixXd tensor_penalty(const Eigen::MatrixXd& dose_penalty, const Eigen::MatrixXd& lag_penalty);

/// P exposures over L lags, a d-dimensional centered dose basis and an m-dimensional lag basis.
ModelSpec build_nonseparable_spec(int n_exposures, int n_lags, int lag_basis_dim, int n_outcomes = 1);

/// Context with the collapsed n x (d'm) design per exposure and the tensor penalty.
std::shared_ptr<ModelContext> prepare_nonseparable(const ModelSpec& spec, const Eigen::MatrixXd& Xstar,
                                                   const Eigen::MatrixXd& Z);

/// Surface h(x, l) = sum_{a,b} R_a(x) Psi_b(l) beta_{a m + b} on a dose grid at one lag (0-based).
Eigen::VectorXd surface_at_lag(const ModelContext& ctx, const Eigen::VectorXd& beta, const Eigen::VectorXd& dose,
                               int lag);

ChainOutput run_nonseparable_chain(const ModelSpec& spec, const Dataset& data, const ChainControl& control,
                                   SamplerOptions options = {});

} // namespace mixborrow
