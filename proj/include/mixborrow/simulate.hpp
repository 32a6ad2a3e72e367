#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mixborrow/model.hpp"

namespace mixborrow {

/// Noise-free outcome means (rows x K) at arbitrary exposure rows.
using TruthSurface = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

/** \brief Ground truth that travels with a simulated dataset.
 *
 * f_id (K x P, 0-based) labels which pairs share an exposure-response shape; index scenarios
 * also fill omega_id and the profile table. Every scenario provides `surface`.
 */
struct SimTruth {
	std::string scenario;
	int K = 0;
	int P = 0;
	int L = 0;
	Eigen::MatrixXi f_id;
	Eigen::MatrixXi omega_id;
	std::vector<Eigen::VectorXd> omegas;
	std::function<double(int, double)> f;       // f(id, index value)
	TruthSurface surface;
	Eigen::VectorXd noise_sd;
	nlohmann::json meta;

	bool has_index_truth() const { return !omegas.empty(); }
	/// f_kp(index at x) for exposure rows; only for index scenarios.
	Eigen::VectorXd component(int k, int p, const Eigen::MatrixXd& Xrows) const;
};

struct SimResult {
	Dataset data;
	SimTruth truth;
};

/// VAR(1) exposures: x_1 ~ N(0, S), x_l = 0.85 x_{l-1} + e_l, S_pp' = corr^|p-p'|. Columns ordered p*L + l.
Eigen::MatrixXd gen_var_exposures(int n, int P, int L, std::uint64_t seed, double cross_corr = 0.6, double persistence = 0.85);

/// Unit-norm lag profiles: 0 flat, 1 decreasing ramp (L..1), 2 increasing ramp (1..L).
Eigen::VectorXd lag_profile(int id, int L);

/// Curves of the distributed-lag scenario, id 0..3 for f1..f4.
double sim_a_curve(int id, double a);

/// Distributed-lag scenario with K = 4; P <= 5 keeps the first P columns of the mean display.
SimResult gen_sim_a(int n, std::uint64_t seed, int P = 5, int L = 52);

/// Index-model scenarios 1..3 with P = 10 AR(0.5) exposures and K = 4.
SimResult gen_sim_b(int scenario, int n, std::uint64_t seed);

/// Dose curves of the non-separable scenario, id 0..2 for f1..f3.
double nonsep_curve(int id, double x);

/// Non-separable distributed-lag scenario (K = 4, P = 5).
SimResult gen_nonsep(int n, std::uint64_t seed, int P = 5, int L = 52);

/// Every exposure-outcome pair uses curve f2 and the decreasing profile.
SimResult gen_identifiability(int n, std::uint64_t seed, int P = 5, int L = 52);

/// Dispatch by scenario name: simA, simB1, simB2, simB3, nonsep, identifiability.
SimResult simulate_scenario(const std::string& scenario, int n, std::uint64_t seed, int P = 0, int L = 0);

/// Writes the truth sidecar: scenario metadata, noise SDs, curve/profile ids and profiles.
void write_truth_json(const std::string& path, const SimTruth& truth);

} // namespace mixborrow
