#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixborrow/splines.hpp"

namespace mixborrow {

enum class ModelKind { dlnm, mim, additive, biomarker, nonseparable_dlnm };
enum class ThetaMethod { polar, fisher_bingham_projection };
enum class StickUpdate { mh, grid };

std::string to_string(ModelKind kind);
std::string to_string(ThetaMethod method);
std::string to_string(StickUpdate method);
ModelKind parse_model_kind(const std::string& s);
ThetaMethod parse_theta_method(const std::string& s);
StickUpdate parse_stick_update(const std::string& s);

/** \brief Prior hyperparameters. Gamma pairs are (shape, rate); inverse-gamma pairs are (shape, scale). */
struct HyperParams {
	double a_beta = 1.0, b_beta = 1.0;                 // alpha_beta concentration
	double a_theta = 1.0, b_theta = 1.0;               // alpha_theta concentration
	double a_rho = 1.0, b_rho = 1.0;
	double a_lambda_beta = 1.0, b_lambda_beta = 1.0;
	double a_lambda_theta = 1.0, b_lambda_theta = 0.001;
	double a_xi = 0.01, b_xi = 0.01;
	double a_sigma = 0.01, b_sigma = 0.01;
	double tau_theta = 0.0;
	double rw_sd = 1.0;
	int gridsize = 10;

	double null_ridge = 1e-6;           // epsilon*I added to the beta prior precision
	double angle_proposal_shape = 20.0; // concentration of the scaled-Beta angle proposal

	void validate() const;
};

/** \brief Structural description of the index model and its sampler settings. */
struct ModelSpec {
	ModelKind kind = ModelKind::dlnm;
	int n_outcomes = 1;                       // K
	int n_indices = 1;                        // J
	int exposure_dim = 1;                     // M
	std::vector<Eigen::MatrixXd> index_designs;   // J matrices A_j, r x M
	Eigen::MatrixXd reduction_basis;          // Psi, r x m
	SplineConfig spline;                      // lo/hi are overwritten from the data at fit time
	int truncation = 1;                       // C
	HyperParams hyper;
	ThetaMethod theta_method = ThetaMethod::polar;
	StickUpdate stick_update = StickUpdate::mh;
	bool orthogonalize_random_effects = false;
	bool clustering = true;                   // false: every pair keeps its own atoms
	int difference_order = 2;

	// kind-specific shape information
	int n_exposures = 0;                      // P
	int n_lags = 0;                           // L (dlnm, nonseparable)
	int lag_basis_dim = 0;                    // m for the nonseparable lag basis

	int r() const { return static_cast<int>(reduction_basis.rows()); }
	int m() const { return static_cast<int>(reduction_basis.cols()); }
	bool has_theta() const { return kind != ModelKind::additive && kind != ModelKind::nonseparable_dlnm; }
	int pairs() const { return n_outcomes * n_indices; }

	void validate() const;
	/// Resets the truncation to K*J, the recommended default.
	void set_default_truncation() { truncation = n_outcomes * n_indices; }
};

/// FNV-1a hash over every structural field and hyperparameter, printed in hex.
std::string spec_hash(const ModelSpec& spec);

/// Orthonormal m-column lag basis: natural cubic spline over lags 1..L, QR-orthonormalized.
Eigen::MatrixXd lag_reduction_basis(int n_lags, int m);

ModelSpec build_dlnm_spec(int n_exposures, int n_lags, int m = 0, int n_outcomes = 1);
ModelSpec build_mim_spec(int n_exposures, int n_indices, int n_outcomes = 1);
ModelSpec build_additive_spec(int n_exposures, int n_outcomes = 1);
/// P exposures at B biomarkers; block selectors as in the DLNM but with a ridge prior on the weights.
ModelSpec build_biomarker_spec(int n_exposures, int n_biomarkers, int n_outcomes = 1);

/** \brief Observed data. Y is n x K, Xstar n x M, Z n x q (q may be 0). */
struct Dataset {
	Eigen::MatrixXd Y;
	Eigen::MatrixXd Xstar;
	Eigen::MatrixXd Z;
	std::vector<std::string> outcome_names;
	std::vector<std::string> exposure_names;
	std::vector<std::string> covariate_names;

	Eigen::Index n() const { return Y.rows(); }
	void validate() const;
};

/// Column names expected in the exposure block for a spec ("x<p>_l<l>" or "x<p>").
std::vector<std::string> expected_exposure_columns(const ModelSpec& spec);

/// Reads a CSV with header; picks y1..yK, the spec's exposure columns and every z* column.
Dataset read_dataset_csv(const std::string& path, const ModelSpec& spec);
void write_dataset_csv(const std::string& path, const Dataset& data);

/// Per-index inputs: element j is the n x m matrix with rows Psi^T A_j x*_i.
std::vector<Eigen::MatrixXd> compute_index_inputs(const ModelSpec& spec, const Eigen::MatrixXd& Xstar);

/// Starting weight vector: Psi^T 1 normalized, flipped so its last entry is non-negative.
Eigen::VectorXd flat_theta(const ModelSpec& spec);

} // namespace mixborrow
