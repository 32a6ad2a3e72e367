#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixborrow/clustering.hpp"
#include "mixborrow/model.hpp"
#include "mixborrow/rng.hpp"
#include "mixborrow/splines.hpp"

namespace mixborrow {

/** \brief Everything about a fit that depends on the spec and the exposures but not on Y.
 *
 * Built once per chain (or shared between chains on the same data). The f-basis
 * knot range and centering transform are fixed here.
 */
struct ModelContext {
	ModelSpec spec;                            // spline lo/hi resolved from the data
	std::vector<Eigen::MatrixXd> x_tilde;      // per index: n x m inputs (n x 1 for additive)
	CenteredBasis basis;                       // f basis (dose basis for the nonseparable kind)
	Eigen::MatrixXd beta_penalty;              // Sigma_0 (or the tensor penalty), d' x d'
	Eigen::VectorXd beta_penalty_eigs;
	int beta_penalty_rank = 0;
	Eigen::MatrixXd theta_precision;           // Sigma_theta, m x m
	std::vector<Eigen::MatrixXd> fixed_designs;   // kinds without weights: n x d' per index
	Eigen::MatrixXd Z;
	Eigen::VectorXd theta_init;
	double index_range = 1.0;                  // R
	Eigen::MatrixXd lag_basis;                 // nonseparable: L x m lag basis
	Eigen::MatrixXd Xstar;                     // kept for posterior summaries

	Eigen::Index n() const { return Z.rows(); }
	int beta_dim() const { return static_cast<int>(beta_penalty.rows()); }
	int theta_dim() const { return static_cast<int>(theta_precision.rows()); }
	/// Design of pair inputs for index j under weights theta (ignored for fixed-design kinds).
	Eigen::MatrixXd design(int j, const Eigen::VectorXd& theta) const;
	/// f values for index j under (beta, theta).
	Eigen::VectorXd curve(int j, const Eigen::VectorXd& beta, const Eigen::VectorXd& theta) const;
};

/// Resolves the knot range, centering, penalties and cached inputs.
std::shared_ptr<const ModelContext> prepare_model(const ModelSpec& spec, const Eigen::MatrixXd& Xstar,
                                                  const Eigen::MatrixXd& Z);

/** \brief Full parameter state of one chain. */
struct ParamState {
	ClusterState cluster;
	Eigen::VectorXd beta0;     // K
	Eigen::MatrixXd betaZ;     // K x q
	Eigen::VectorXd u;         // n
	double xi = 1.0;
	Eigen::VectorXd sigma2;    // K
	double lambda_beta = 1.0;
	double lambda_theta = 1.0;
};

/// Blocks that can be held fixed (used for degenerate fits and sampler tests).
struct FreezeMask {
	bool indicators = false;
	bool sticks = false;
	bool beta_atoms = false;
	bool theta_atoms = false;
	bool concentrations = false;
	bool rho = false;
	bool lambda_beta = false;
	bool lambda_theta = false;
	bool random_effects = false;
	bool xi = false;
	bool sigma2 = false;
	bool fixed_effects = false;
};

struct SamplerOptions {
	FreezeMask freeze;
	bool check_invariants = true;      // sphere/sign/stick checks after every sweep
};

struct AcceptanceCounter {
	long proposed = 0;
	long accepted = 0;
	double rate() const { return proposed > 0 ? static_cast<double>(accepted) / proposed : 0.0; }
};

struct ChainMeta {
	std::uint64_t seed = 0;
	long n_iter = 0;
	long burn_in = 0;
	long thin = 1;
	std::string spec_hash;
};

/** \brief Thinned draws plus pointwise log densities. */
struct ChainOutput {
	std::shared_ptr<const ModelContext> context;
	std::vector<ParamState> draws;
	std::vector<Eigen::MatrixXd> loglik;      // n x K per draw
	std::vector<double> log_posterior;
	std::map<std::string, AcceptanceCounter> acceptance;
	ChainMeta meta;
};

/// Shape and rate of the independence proposal for lambda_beta (exact conditional when the null ridge is 0).
std::pair<double, double> lambda_beta_conditional(const std::vector<Eigen::VectorXd>& atoms,
                                                  const Eigen::MatrixXd& penalty, int rank, const HyperParams& hyper);

/// Rank of a symmetric PSD matrix from its eigenvalues.
int psd_rank(const Eigen::VectorXd& eigenvalues);

class ChainSampler {
public:
	ChainSampler(std::shared_ptr<const ModelContext> ctx, const Eigen::MatrixXd& Y, std::uint64_t seed,
	             SamplerOptions options = {});

	/// One pass over all twelve update steps in order.
	void sweep();

	void step_indicators();
	void step_sticks();
	void step_beta_atoms();
	void step_theta_atoms();
	void step_concentrations();
	void step_rho();
	void step_lambda_beta();
	void step_lambda_theta();
	void step_random_effects();
	void step_xi();
	void step_sigma2();
	void step_fixed_effects();

	const ParamState& state() const { return state_; }
	/// Replace the state and rebuild every cached fit.
	void set_state(const ParamState& s);
	void set_outcomes(const Eigen::MatrixXd& Y);
	const Eigen::MatrixXd& outcomes() const { return Y_; }
	/// Draw Y from the likelihood at the current state.
	Eigen::MatrixXd simulate_outcomes();

	Eigen::MatrixXd pointwise_loglik() const;
	double log_posterior() const;
	/// max |B~^T u| over the fixed-effect columns [1 | designs | Z] at the current state.
	double kriging_residual() const;
	/// Current f_kj values (n-vector).
	Eigen::VectorXd component(int k, int j) const { return F_.col(k * J_ + j); }

	const std::map<std::string, AcceptanceCounter>& acceptance() const { return acc_; }
	long theta_update_calls() const { return theta_calls_; }
	const ModelContext& context() const { return *ctx_; }
	Rng& rng() { return rng_; }
	void check_invariants() const;

private:
	std::shared_ptr<const ModelContext> ctx_;
	SamplerOptions opt_;
	Rng rng_;
	Eigen::MatrixXd Y_;
	ParamState state_;
	int K_ = 1;
	int J_ = 1;
	int C_ = 1;
	Eigen::MatrixXd F_;        // n x (K*J) component fits
	Eigen::MatrixXd E_;        // n x K residuals y - fixed - random effect - sum f
	Eigen::LDLT<Eigen::MatrixXd> ztz_;
	Eigen::MatrixXd ztz_inv_llt_;   // Cholesky factor of (Z^T Z)^{-1}
	double log_c0_ = 0.0;           // cached log normalizer at the current lambda_theta
	std::map<std::string, AcceptanceCounter> acc_;
	long theta_calls_ = 0;

	bool has_theta() const { return ctx_->spec.has_theta(); }
	bool polar() const { return ctx_->spec.theta_method == ThetaMethod::polar; }
	int col(int k, int j) const { return k * J_ + j; }
	void initialize();
	void rebuild_fits();
	Eigen::VectorXd fixed_part(int k) const;
	Eigen::VectorXd pair_curve(int k, int j) const;
	void set_pair_curve(int k, int j, const Eigen::VectorXd& f);
	double theta_log_prior(const Eigen::VectorXd& theta) const;
	double log_normconst(double lambda_theta) const;
	double theta_member_loglik(const std::vector<std::pair<int, int>>& members, const Eigen::VectorXd& theta,
	                           const std::vector<Eigen::VectorXd>& partial) const;
	Eigen::VectorXd draw_theta_prior();
	void update_theta_polar(int c, const std::vector<std::pair<int, int>>& members);
	void update_theta_fb(int c, const std::vector<std::pair<int, int>>& members);
	Eigen::MatrixXd fixed_effect_columns() const;
	void count(const std::string& name, bool accepted);
};

struct ChainControl {
	long n_iter = 1000;
	long burn_in = 500;
	long thin = 1;
	std::uint64_t seed = 1;
	bool keep_random_effects = true;
};

/// Runs burn-in plus sampling and keeps every thin-th post-burn-in sweep.
ChainOutput run_chain(std::shared_ptr<const ModelContext> ctx, const Eigen::MatrixXd& Y, const ChainControl& control,
                      SamplerOptions options = {});

/// Convenience: prepare the model and run one chain.
ChainOutput run_chain(const ModelSpec& spec, const Dataset& data, const ChainControl& control,
                      SamplerOptions options = {});

} // namespace mixborrow
