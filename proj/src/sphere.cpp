#include "mixborrow/sphere.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/math/tools/roots.hpp>
#include <spdlog/spdlog.h>

namespace mixborrow {

Eigen::VectorXd polar_to_unit(const Eigen::VectorXd& phi) {
	const Eigen::Index m = phi.size() + 1;
	Eigen::VectorXd theta(m);
	double run = 1.0;
	for (Eigen::Index l = 0; l < m - 1; ++l) {
		theta(l) = run * std::sin(phi(l));
		run *= std::cos(phi(l));
	}
	theta(m - 1) = run;
	return theta;
}

Eigen::VectorXd unit_to_polar(const Eigen::VectorXd& theta) {
	const Eigen::Index m = theta.size();
	if (m < 1) {
		throw std::invalid_argument("unit_to_polar: empty vector");
	}
	Eigen::VectorXd phi(m - 1);
	double tail2 = 0.0;
	Eigen::VectorXd tails(m);
	for (Eigen::Index l = m - 1; l >= 0; --l) {
		tails(l) = tail2;   // sum of squares strictly after l
		tail2 += theta(l) * theta(l);
	}
	for (Eigen::Index l = 0; l < m - 1; ++l) {
		phi(l) = std::atan2(theta(l), std::sqrt(tails(l)));
	}
	return phi;
}

double polar_log_jacobian(const Eigen::VectorXd& phi) {
	const Eigen::Index m = phi.size() + 1;
	double out = 0.0;
	for (Eigen::Index l = 0; l + 2 < m; ++l) {
		out += static_cast<double>(m - 2 - l) * std::log(std::abs(std::cos(phi(l))));
	}
	return out;
}

double log_sphere_area(int m) {
	return std::log(2.0) + 0.5 * m * std::log(std::numbers::pi) - std::lgamma(0.5 * m);
}

Eigen::VectorXd sample_bingham(const Eigen::MatrixXd& A, double tau, Rng& rng, bool fold_sign) {
	const Eigen::Index q = A.rows();
	if (A.cols() != q || q < 1) {
		throw std::invalid_argument("sample_bingham: A must be square");
	}
	if (q == 1) {
		// the sphere is {-1, +1}; P(-1) = 1 / (1 + exp(2 tau))
		Eigen::VectorXd x(1);
		x(0) = (!fold_sign && rng.uniform() < 1.0 / (1.0 + std::exp(2.0 * tau))) ? -1.0 : 1.0;
		return x;
	}
	Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (A + A.transpose()));
	Eigen::VectorXd lam = eig.eigenvalues().array() - eig.eigenvalues().minCoeff();
	const Eigen::MatrixXd V = eig.eigenvectors();
	const double qd = static_cast<double>(q);

	// b solves sum 1/(b + 2 lam_i) = 1 on (0, q]
	double b = qd;
	if (lam.maxCoeff() > 0.0) {
		auto g = [&](double bb) { return (1.0 / (bb + 2.0 * lam.array())).sum() - 1.0; };
		boost::math::tools::eps_tolerance<double> tol(52);
		std::uintmax_t iters = 200;
		const auto bracket = boost::math::tools::bisect(g, 1e-12, qd, tol, iters);
		b = 0.5 * (bracket.first + bracket.second);
	}
	const Eigen::VectorXd omega = 1.0 + 2.0 * lam.array() / b;
	const double log_m = 0.5 * (qd - b) + 0.5 * qd * std::log(b / qd);
	const double linear_bound = std::abs(tau) * std::sqrt(qd);
	for (long attempt = 0; attempt < 10000000; ++attempt) {
		Eigen::VectorXd y(q);
		for (Eigen::Index i = 0; i < q; ++i) {
			y(i) = rng.normal() / std::sqrt(omega(i));
		}
		const Eigen::VectorXd x = y / y.norm();
		const double quad = (lam.array() * x.array().square()).sum();
		const double acg = (omega.array() * x.array().square()).sum();
		const double log_acc = -quad + 0.5 * qd * std::log(acg) + log_m;
		if (std::log(rng.uniform()) >= log_acc) {
			continue;
		}
		Eigen::VectorXd out = V * x;
		if (tau != 0.0) {
			if (std::log(rng.uniform()) >= tau * out.sum() - linear_bound) {
				continue;
			}
		}
		if (fold_sign && out(q - 1) < 0.0) {
			if (tau != 0.0) {
				continue;   // the linear term breaks the +-x symmetry, so restrict instead of folding
			}
			out = -out;
		}
		return out;
	}
	throw std::runtime_error("sample_bingham: rejection sampler did not terminate");
}

double fb_log_normconst(const Eigen::VectorXd& gamma, const Eigen::MatrixXd& A) {
	const Eigen::Index p = A.rows();
	if (A.cols() != p || gamma.size() != p) {
		throw std::invalid_argument("fb_log_normconst: shape mismatch");
	}
	Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (A + A.transpose()));
	const double shift = 1.0 - eig.eigenvalues().minCoeff();
	const Eigen::ArrayXd lam = eig.eigenvalues().array() + shift;
	const Eigen::ArrayXd g2 = (eig.eigenvectors().transpose() * gamma).array().square();

	auto deriv = [&](int order, double t) {
		// order-th derivative of the cumulant generating function of sum_i x_i^2
		const Eigen::ArrayXd d = lam - t;
		double fact = 1.0;
		for (int i = 2; i < order; ++i) fact *= i;            // (order-1)!
		const double fact_next = fact * order;                 // order!
		return (0.5 * fact / d.pow(order) + 0.25 * g2 * fact_next / d.pow(order + 1)).sum();
	};
	auto cgf = [&](double t) {
		return (-0.5 * (1.0 - t / lam).log() + g2 * t / (4.0 * lam * (lam - t))).sum();
	};

	// K'(t) = 1 for t below the smallest eigenvalue; K' increases from 0 to infinity there
	const double upper = lam.minCoeff();
	double lo = upper - 1.0;
	while (deriv(1, lo) > 1.0) {
		lo = upper - 2.0 * (upper - lo);
	}
	double hi = upper;
	double t = lo;
	for (int it = 0; it < 300; ++it) {
		t = 0.5 * (lo + hi);
		if (t >= upper) {
			t = std::nextafter(upper, -1e300);
		}
		const double f = deriv(1, t) - 1.0;
		if (f > 0.0) hi = t; else lo = t;
		if (hi - lo < 1e-15 * std::max(1.0, std::abs(t))) break;
	}
	const double k2 = deriv(2, t);
	const double k3 = deriv(3, t);
	const double k4 = deriv(4, t);
	if (!(k2 > 0.0) || !std::isfinite(k2)) {
		throw std::runtime_error("saddlepoint approximation failed");
	}
	const double rho3 = k3 / std::pow(k2, 1.5);
	const double rho4 = k4 / (k2 * k2);
	const double T = rho4 / 8.0 - 5.0 * rho3 * rho3 / 24.0;
	const double log_f = -0.5 * std::log(2.0 * std::numbers::pi * k2) + cgf(t) - t + T;
	const double log_c = std::log(2.0) + 0.5 * static_cast<double>(p) * std::log(std::numbers::pi) -
	                     0.5 * lam.log().sum() + (g2 / (4.0 * lam)).sum() + log_f;
	return log_c + shift;
}

double bingham_log_normconst(const Eigen::MatrixXd& A) {
	return fb_log_normconst(Eigen::VectorXd::Zero(A.rows()), A);
}

} // namespace mixborrow
