#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "mixborrow/model.hpp"
#include "mixborrow/rng.hpp"

namespace mixborrow {

enum class Which { beta, theta };

/** \brief Truncated co-clustering state. Indicators are 0-based atom indices. */
struct ClusterState {
	Eigen::MatrixXi z_beta;    // K x J
	Eigen::MatrixXi z_theta;   // K x J
	Eigen::VectorXd v_beta;    // length C, last entry 1
	Eigen::VectorXd v_theta;
	double alpha_beta = 1.0;
	double alpha_theta = 1.0;
	double rho = 1.0;
	std::vector<Eigen::VectorXd> beta_atoms;
	std::vector<Eigen::VectorXd> theta_atoms;

	int truncation() const { return static_cast<int>(v_beta.size()); }
	const Eigen::MatrixXi& indicators(Which w) const { return w == Which::beta ? z_beta : z_theta; }
	Eigen::MatrixXi& indicators(Which w) { return w == Which::beta ? z_beta : z_theta; }
	const Eigen::VectorXd& sticks(Which w) const { return w == Which::beta ? v_beta : v_theta; }
	Eigen::VectorXd& sticks(Which w) { return w == Which::beta ? v_beta : v_theta; }
	double alpha(Which w) const { return w == Which::beta ? alpha_beta : alpha_theta; }

	/// Throws if a stick, weight or atom invariant is violated.
	void check_invariants(double tol = 1e-10) const;
};

/// Sticks with V_c = 1/(C-c+1) (1-based c), so the implied weights are uniform.
Eigen::VectorXd uniform_sticks(int C);

/// pi_c = V_c prod_{j<c} (1 - V_j).
Eigen::VectorXd stick_weights(const Eigen::VectorXd& V);

/// Normalized C x C table proportional to (1+rho)^{I(a=b)} pi_beta[a] pi_theta[b].
Eigen::MatrixXd joint_indicator_pmf(const Eigen::VectorXd& pi_beta, const Eigen::VectorXd& pi_theta, double rho);

/// Sum over (k,j) of log pi*_{Z^beta_kj, Z^theta_kj}.
double log_indicator_prob(const Eigen::MatrixXi& z_beta, const Eigen::MatrixXi& z_theta, const Eigen::VectorXd& pi_beta,
                          const Eigen::VectorXd& pi_theta, double rho);

/// Returns the log-likelihood of all C candidate atoms for pair (k, j).
using CandidateLoglik = std::function<Eigen::VectorXd(int k, int j, Which which)>;
/// Called after an indicator changes so the caller can refresh cached fits.
using IndicatorChanged = std::function<void(int k, int j, Which which)>;

/** \brief One row-major scan over (k, j): Z^beta_kj then Z^theta_kj, each from its full conditional. */
void gibbs_update_indicators(ClusterState& state, const CandidateLoglik& loglik, Rng& rng,
                             const IndicatorChanged& on_change = {}, bool update_beta = true, bool update_theta = true);

/// Counts n_c of pairs per atom.
Eigen::VectorXi cluster_counts(const Eigen::MatrixXi& z, int C);

/** \brief Update V_c, c < C, for one indicator family. Returns the number of accepted MH moves. */
int update_stick_weights(ClusterState& state, Which which, const HyperParams& hyper, StickUpdate method, Rng& rng);

/// Shape and rate of the concentration full conditional.
std::pair<double, double> concentration_conditional(const Eigen::VectorXd& V, double a, double b);

void update_concentrations(ClusterState& state, const HyperParams& hyper, Rng& rng, bool update_theta = true);

/// Log full-conditional density of log(rho), up to a constant (includes the Jacobian).
double log_rho_target(const ClusterState& state, const HyperParams& hyper, double rho);

/// Random-walk MH on log(rho). Returns true when the proposal was accepted.
bool update_rho(ClusterState& state, const HyperParams& hyper, Rng& rng);

} // namespace mixborrow
