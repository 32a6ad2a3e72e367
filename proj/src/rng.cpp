#include "mixborrow/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/random/beta_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <spdlog/spdlog.h>

namespace mixborrow {

std::uint64_t splitmix64(std::uint64_t& state) {
	std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
	z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
	z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
	return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
	std::uint64_t state = master;
	std::uint64_t a = splitmix64(state);
	state = a ^ (stream * 0xD1B54A32D192ED03ULL);
	return splitmix64(state);
}

Rng::Rng(std::uint64_t seed) {
	std::uint64_t state = seed;
	std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(state)), static_cast<std::uint32_t>(splitmix64(state)),
	                  static_cast<std::uint32_t>(splitmix64(state)), static_cast<std::uint32_t>(splitmix64(state))};
	engine_.seed(seq);
}

double Rng::uniform() {
	boost::random::uniform_01<double> dist;
	double u = 0.0;
	while (u <= 0.0) {
		u = dist(engine_);
	}
	return u;
}

double Rng::normal() {
	boost::random::normal_distribution<double> dist(0.0, 1.0);
	return dist(engine_);
}

double Rng::normal(double mean, double sd) { return mean + sd * normal(); }

double Rng::gamma(double shape, double rate) {
	if (!(shape > 0.0) || !(rate > 0.0)) {
		throw std::invalid_argument("gamma: shape and rate must be positive");
	}
	boost::random::gamma_distribution<double> dist(shape, 1.0 / rate);
	return dist(engine_);
}

double Rng::beta(double a, double b) {
	if (!(a > 0.0) || !(b > 0.0)) {
		throw std::invalid_argument("beta: parameters must be positive");
	}
	boost::random::beta_distribution<double> dist(a, b);
	return dist(engine_);
}

double Rng::inv_gamma(double shape, double scale) { return 1.0 / gamma(shape, scale); }

Eigen::VectorXd Rng::normal_vector(Eigen::Index n) {
	Eigen::VectorXd z(n);
	for (Eigen::Index i = 0; i < n; ++i) {
		z(i) = normal();
	}
	return z;
}

Eigen::Index Rng::categorical_log(const Eigen::Ref<const Eigen::VectorXd>& log_weights) {
	const Eigen::Index n = log_weights.size();
	if (n == 0) {
		throw std::invalid_argument("categorical_log: empty weight vector");
	}
	const double top = log_weights.maxCoeff();
	if (!std::isfinite(top)) {
		throw std::runtime_error("categorical_log: no finite log weight");
	}
	Eigen::VectorXd cum(n);
	double total = 0.0;
	for (Eigen::Index i = 0; i < n; ++i) {
		total += std::exp(log_weights(i) - top);
		cum(i) = total;
	}
	const double target = uniform() * total;
	for (Eigen::Index i = 0; i < n; ++i) {
		if (target < cum(i)) {
			return i;
		}
	}
	return n - 1;
}

namespace {

Eigen::LLT<Eigen::MatrixXd> factor_with_jitter(const Eigen::MatrixXd& precision, double jitter) {
	Eigen::LLT<Eigen::MatrixXd> llt(precision);
	if (llt.info() == Eigen::Success) {
		return llt;
	}
	spdlog::warn("precision matrix not positive definite; adding ridge jitter {}", jitter);
	Eigen::MatrixXd adj = precision;
	double eps = jitter;
	for (int attempt = 0; attempt < 12; ++attempt) {
		adj.diagonal() = precision.diagonal().array() + eps;
		llt.compute(adj);
		if (llt.info() == Eigen::Success) {
			return llt;
		}
		eps *= 10.0;
	}
	throw std::runtime_error("precision matrix could not be factorized even with jitter");
}

} // namespace

Eigen::VectorXd draw_gaussian_canonical(const Eigen::MatrixXd& precision, const Eigen::VectorXd& linear, Rng& rng,
                                        double jitter) {
	const auto llt = factor_with_jitter(precision, jitter);
	Eigen::VectorXd w = llt.matrixL().solve(linear);
	w += rng.normal_vector(linear.size());
	return llt.matrixU().solve(w);
}

Eigen::VectorXd canonical_mean(const Eigen::MatrixXd& precision, const Eigen::VectorXd& linear, double jitter) {
	return factor_with_jitter(precision, jitter).solve(linear);
}

} // namespace mixborrow
