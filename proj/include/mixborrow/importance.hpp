#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mixborrow/posterior.hpp"

namespace mixborrow {

/// Evaluates f at every row of an exposure matrix.
using SurfaceFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

enum class ConditionalKind { kernel, regression_plugin };

/** \brief How E[f(x_p, x_-p) | x_-p] is estimated.
 *
 * kernel: Nadaraya-Watson over the observed x_p values with a Gaussian product kernel on x_-p.
 * Empty `bandwidth` selects the multivariate Silverman rule per dimension.
 * regression_plugin: x_p | x_-p ~ N(plugin_mean_i, plugin_sd^2) with caller-supplied fitted means,
 * integrated by Gauss-Hermite quadrature. Only single exposures are supported in this mode.
 */
struct ConditionalModel {
	ConditionalKind kind = ConditionalKind::kernel;
	Eigen::VectorXd bandwidth;
	Eigen::VectorXd plugin_mean;
	double plugin_sd = -1.0;      // < 0: residual SD of x_p around plugin_mean
	int hermite_nodes = 20;
};

struct ImportanceValue {
	double phi = 0.0;
	double raw = 0.0;          // before clipping to [0, 1]
	bool clipped = false;
	bool missing = false;      // zero total variance
};

struct ImportanceSummary {
	double mean = 0.0;
	double lower = 0.0;
	double upper = 0.0;
	int excursions = 0;        // draws clipped to [0, 1]
	int missing = 0;
	int n_draws = 0;
};

/// Silverman bandwidths for the given columns: sd_d * (4 / ((d + 2) n))^(1 / (d + 4)).
Eigen::VectorXd silverman_bandwidth(const Eigen::MatrixXd& cols);

/// Gauss-Hermite nodes and weights for integrals against exp(-x^2) (Golub-Welsch).
std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite(int n);

/** \brief Estimated E[f | x_-group] at each query row.
 *
 * `group` lists the exposure columns being marginalized; `queries` are full exposure rows
 * whose complement entries set the conditioning value.
 */
Eigen::VectorXd kernel_conditional_mean(const SurfaceFn& f, const Eigen::MatrixXd& X, const std::vector<int>& group,
                                        const Eigen::MatrixXd& queries, const Eigen::VectorXd& bandwidth = {});

ImportanceValue group_importance(const SurfaceFn& f, const Eigen::MatrixXd& X, const std::vector<int>& group,
                                 const ConditionalModel& cond = {});
ImportanceValue exposure_importance(const SurfaceFn& f, const Eigen::MatrixXd& X, int p,
                                    const ConditionalModel& cond = {});

/// Importance of `group` for outcome k over (at most max_draws evenly spaced) posterior draws.
ImportanceSummary importance_from_chain(const ChainOutput& chain, int k, const std::vector<int>& group,
                                        const ConditionalModel& cond = {}, int max_draws = 200);

} // namespace mixborrow
