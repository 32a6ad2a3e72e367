#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixborrow/sampler.hpp"

namespace mixborrow {

/** \brief Pointwise posterior mean and equal-tailed 95% band on a grid. */
struct CurveSummary {
	Eigen::VectorXd grid;
	Eigen::VectorXd mean;
	Eigen::VectorXd lower;
	Eigen::VectorXd upper;
};

struct ScalarSummary {
	double mean = 0.0;
	double lower = 0.0;
	double upper = 0.0;
};

/** \brief Pairwise co-clustering frequencies over (k, j) pairs, row-major in k. */
struct ClusterHeatmap {
	std::vector<std::string> labels;     // "k<k>_j<j>", 1-based
	Eigen::MatrixXd prob_beta;
	Eigen::MatrixXd prob_theta;
};

struct Waic {
	double waic = 0.0;
	double lppd = 0.0;
	double p_waic = 0.0;
};

/// Sample quantile with linear interpolation between order statistics (R type 7).
double quantile(std::vector<double> values, double prob);

/// Columnwise mean and 2.5/97.5% quantiles of a draws x points matrix.
CurveSummary summarize_columns(const Eigen::MatrixXd& draws, const Eigen::VectorXd& grid);
ScalarSummary summarize_scalar(const std::vector<double>& draws);

/// Concatenates draws of several chains on the same context.
ChainOutput merge_chains(const std::vector<ChainOutput>& chains);

/** \brief Flips unit-vector draws onto one hemisphere.
 *
 * Draws that already share the sign of their last coordinate are left alone. Otherwise each
 * draw is oriented along the leading eigenvector of the second-moment matrix, and the whole
 * set is then flipped so that the coordinate with the largest mean magnitude is positive.
 */
std::vector<Eigen::VectorXd> align_signs(const std::vector<Eigen::VectorXd>& draws);

/// f_kj evaluated at arbitrary exposure rows (n x M) for one draw's (beta, theta).
Eigen::VectorXd evaluate_component(const ModelContext& ctx, int j, const Eigen::VectorXd& beta,
                                   const Eigen::VectorXd& theta, const Eigen::MatrixXd& Xrows);

/// sum_j f_kj at exposure rows for one draw.
Eigen::VectorXd evaluate_mixture(const ModelContext& ctx, const ParamState& draw, int k, const Eigen::MatrixXd& Xrows);

/** \brief Exposure-response curve of pair (k, j).
 *
 * A grid value a stands for every exposure entry of the row set to a. Each draw contributes
 * f_kj(a) - f_kj(reference), with the reference the column means of the exposures.
 */
CurveSummary erf_summary(const ChainOutput& chain, int k, int j, const Eigen::VectorXd& grid);

/// Symmetric grid over `fraction` of the admissible range of erf_summary for index j.
Eigen::VectorXd default_erf_grid(const ModelContext& ctx, int j, int points, double fraction = 0.6);

/// Per-draw curve values behind erf_summary (draws x grid).
Eigen::MatrixXd erf_draws(const ChainOutput& chain, int k, int j, const Eigen::VectorXd& grid);

/// All exposures at their empirical q-quantiles minus all at the median.
CurveSummary overall_mixture_effect(const ChainOutput& chain, int k, const Eigen::VectorXd& quantiles);

/** \brief Contrast of exposure p at lag l from mean + lo*SD to mean + hi*SD, other entries at their means.
 *
 * p and l are 0-based. Only distributed-lag kinds have lagged entries.
 */
ScalarSummary lagged_contrast(const ChainOutput& chain, int k, int p, int l, double lo = -1.0, double hi = 1.0);
std::vector<double> lagged_contrast_draws(const ChainOutput& chain, int k, int p, int l, double lo = -1.0,
                                          double hi = 1.0);

ClusterHeatmap pairwise_clustering(const ChainOutput& chain);
ClusterHeatmap pairwise_clustering(const std::vector<ParamState>& draws);

/// Lag-weight profiles omega = Psi theta of pair (k, j) per draw, sign-aligned.
std::vector<Eigen::VectorXd> omega_draws(const ChainOutput& chain, int k, int j);
/// Mean of aligned omega draws rescaled to unit length.
Eigen::VectorXd omega_estimate(const ChainOutput& chain, int k, int j);

Waic compute_waic(const std::vector<Eigen::MatrixXd>& loglik);
inline Waic compute_waic(const ChainOutput& chain) { return compute_waic(chain.loglik); }

} // namespace mixborrow
