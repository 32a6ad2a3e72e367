#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace mixborrow {

/// SplitMix64 step; used to derive independent stream seeds from one master seed.
std::uint64_t splitmix64(std::uint64_t& state);

/// Seed for stream `stream` of a master seed. Pure function of its inputs.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/** \brief Random source owned by exactly one chain or replication.
 *
 * Wraps a 64-bit Mersenne twister with Boost.Random distributions, whose
 * algorithms are fixed across platforms, so a seed fully determines every draw.
 */
class Rng {
public:
	explicit Rng(std::uint64_t seed);

	double uniform();                                  // open interval (0,1)
	double normal();
	double normal(double mean, double sd);
	double gamma(double shape, double rate);
	double beta(double a, double b);
	double inv_gamma(double shape, double scale);      // 1/Gamma(shape, rate = scale)
	Eigen::VectorXd normal_vector(Eigen::Index n);

	/// Index drawn with probability proportional to exp(log_weights); log-sum-exp stabilized.
	Eigen::Index categorical_log(const Eigen::Ref<const Eigen::VectorXd>& log_weights);

	std::mt19937_64& engine() { return engine_; }

private:
	std::mt19937_64 engine_;
};

/** \brief Draw from N(P^{-1} b, P^{-1}) given the precision P and linear term b.
 *
 * Falls back to P + jitter*I (with a logged warning) when the Cholesky factorization fails.
 */
Eigen::VectorXd draw_gaussian_canonical(const Eigen::MatrixXd& precision, const Eigen::VectorXd& linear, Rng& rng,
                                        double jitter = 1e-8);

/// Mean P^{-1} b of the canonical-form Gaussian, with the same jitter fallback.
Eigen::VectorXd canonical_mean(const Eigen::MatrixXd& precision, const Eigen::VectorXd& linear, double jitter = 1e-8);

} // namespace mixborrow
