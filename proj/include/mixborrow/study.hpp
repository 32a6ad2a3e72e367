#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mixborrow/posterior.hpp"
#include "mixborrow/simulate.hpp"

namespace mixborrow {

/** \brief Settings of a replication study.
 *
 * Estimators: clustered, dimension_reduction, no_clustering, separate, truth.
 * For the index-model scenarios (simB*) clustered / separate are the MIM fits across and
 * within outcomes. `cache_dir` (optional) keeps one JSON per replication and estimator so
 * an interrupted study resumes without refitting.
 */
struct StudyConfig {
	std::string scenario = "simA";
	int n = 500;
	int P = 0;                     // 0: scenario default
	int L = 0;
	int n_reps = 10;
	std::vector<std::string> estimators{"clustered", "no_clustering"};
	long n_iter = 5000;
	long burn_in = 2500;
	long thin = 5;
	std::uint64_t master_seed = 1;
	int truncation = 10;
	int reduced_dim = 6;
	int mim_indices = 2;
	bool orthogonalize = false;
	int threads = 1;
	int grid_points = 21;
	std::string cache_dir;
};

struct RepMetrics {
	int rep = 0;
	std::string estimator;
	std::uint64_t seed = 0;
	bool ok = true;
	std::string error;
	double mse_f = 0.0;              // exposure-response curves against truth
	double mse_omega = 0.0;          // lag / index weight profiles
	double coverage_f = 0.0;
	double mse_surface = 0.0;        // centered mixture surface at the observed exposures
	double coverage_surface = 0.0;
	double cocluster_beta_same = 0.0;    // mean P(z_beta equal) over pairs with the same true curve
	double cocluster_beta_diff = 0.0;
	double cocluster_theta_same = 0.0;
	double cocluster_theta_diff = 0.0;
	long n_draws = 0;
};

struct EstimatorSummary {
	std::string estimator;
	int n_ok = 0;
	int n_failed = 0;
	RepMetrics mean;                 // metric fields averaged over successful replications
};

struct StudyResult {
	std::vector<RepMetrics> reps;
	std::vector<EstimatorSummary> summary;
};

/// Catalogue order of estimators (fixes their seed streams).
const std::vector<std::string>& estimator_catalogue();

/// Per-replication seed derived from the master seed.
std::uint64_t replication_seed(std::uint64_t master, int rep);

/// Fits one estimator to one simulated dataset and scores it against the truth.
RepMetrics score_estimator(const StudyConfig& cfg, const SimResult& sim, const std::string& estimator, std::uint64_t seed);

/// Runs every replication (in parallel over cfg.threads) and aggregates. Throws if more than 10% of fits fail.
StudyResult run_replication_study(const StudyConfig& cfg);

void write_study_csv(const std::string& path, const StudyResult& result);
void write_study_summary_csv(const std::string& path, const StudyResult& result);

} // namespace mixborrow
