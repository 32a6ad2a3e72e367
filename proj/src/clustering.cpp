#include "mixborrow/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace mixborrow {

namespace {

constexpr double kStickMax = 1.0 - 1e-12;
constexpr double kStickMin = 1e-300;

} // namespace

void ClusterState::check_invariants(double tol) const {
	const int C = truncation();
	if (v_theta.size() != C || static_cast<int>(beta_atoms.size()) != C || static_cast<int>(theta_atoms.size()) != C) {
		throw std::logic_error("cluster state sizes disagree with the truncation");
	}
	if (v_beta(C - 1) != 1.0 || v_theta(C - 1) != 1.0) {
		throw std::logic_error("last stick must equal 1");
	}
	for (const Eigen::VectorXd* v : {&v_beta, &v_theta}) {
		if ((v->array() <= 0.0).any() || (v->array() > 1.0).any()) {
			throw std::logic_error("stick outside (0, 1]");
		}
		if (std::abs(stick_weights(*v).sum() - 1.0) > 1e-12) {
			throw std::logic_error("stick weights do not sum to 1");
		}
	}
	for (const auto& t : theta_atoms) {
		if (t.size() > 0 && std::abs(t.norm() - 1.0) > tol) {
			throw std::logic_error(fmt::format("theta atom off the sphere (norm {})", t.norm()));
		}
	}
	if (z_beta.size() > 0 && (z_beta.minCoeff() < 0 || z_beta.maxCoeff() >= C)) {
		throw std::logic_error("beta indicator out of range");
	}
	if (z_theta.size() > 0 && (z_theta.minCoeff() < 0 || z_theta.maxCoeff() >= C)) {
		throw std::logic_error("theta indicator out of range");
	}
}

Eigen::VectorXd uniform_sticks(int C) {
	Eigen::VectorXd v(C);
	for (int c = 0; c < C; ++c) {
		v(c) = 1.0 / static_cast<double>(C - c);
	}
	return v;
}

Eigen::VectorXd stick_weights(const Eigen::VectorXd& V) {
	if (V.size() == 0) {
		throw std::invalid_argument("stick_weights: empty stick vector");
	}
	if (V(V.size() - 1) != 1.0) {
		throw std::invalid_argument("stick_weights: last stick must equal 1");
	}
	Eigen::VectorXd pi(V.size());
	double rest = 1.0;
	for (Eigen::Index c = 0; c < V.size(); ++c) {
		pi(c) = V(c) * rest;
		rest *= (1.0 - V(c));
	}
	return pi;
}

Eigen::MatrixXd joint_indicator_pmf(const Eigen::VectorXd& pi_beta, const Eigen::VectorXd& pi_theta, double rho) {
	if (rho < 0.0) {
		throw std::invalid_argument("joint_indicator_pmf: rho must be non-negative");
	}
	if (pi_beta.size() != pi_theta.size()) {
		throw std::invalid_argument("joint_indicator_pmf: weight vectors differ in length");
	}
	Eigen::MatrixXd tab = pi_beta * pi_theta.transpose();
	tab.diagonal() *= (1.0 + rho);
	return tab / tab.sum();
}

double log_indicator_prob(const Eigen::MatrixXi& z_beta, const Eigen::MatrixXi& z_theta, const Eigen::VectorXd& pi_beta,
                          const Eigen::VectorXd& pi_theta, double rho) {
	const double norm = 1.0 + rho * pi_beta.dot(pi_theta);
	const double log1p_rho = std::log1p(rho);
	double total = 0.0;
	for (Eigen::Index k = 0; k < z_beta.rows(); ++k) {
		for (Eigen::Index j = 0; j < z_beta.cols(); ++j) {
			const int a = z_beta(k, j);
			const int b = z_theta(k, j);
			total += std::log(pi_beta(a)) + std::log(pi_theta(b)) + (a == b ? log1p_rho : 0.0);
		}
	}
	return total - static_cast<double>(z_beta.size()) * std::log(norm);
}

void gibbs_update_indicators(ClusterState& state, const CandidateLoglik& loglik, Rng& rng,
                             const IndicatorChanged& on_change, bool update_beta, bool update_theta) {
	const int C = state.truncation();
	const Eigen::VectorXd log_pi_b = stick_weights(state.v_beta).array().log();
	const Eigen::VectorXd log_pi_t = stick_weights(state.v_theta).array().log();
	const double log1p_rho = std::log1p(state.rho);
	for (int k = 0; k < state.z_beta.rows(); ++k) {
		for (int j = 0; j < state.z_beta.cols(); ++j) {
			for (Which w : {Which::beta, Which::theta}) {
				if ((w == Which::beta && !update_beta) || (w == Which::theta && !update_theta)) {
					continue;
				}
				const Eigen::VectorXd ll = loglik(k, j, w);
				if (ll.size() != C) {
					throw std::logic_error("candidate log-likelihood has the wrong length");
				}
				if (!ll.allFinite()) {
					throw std::runtime_error(fmt::format("non-finite log-likelihood for pair ({}, {})", k + 1, j + 1));
				}
				const int partner = (w == Which::beta) ? state.z_theta(k, j) : state.z_beta(k, j);
				Eigen::VectorXd lw = ll + ((w == Which::beta) ? log_pi_b : log_pi_t);
				lw(partner) += log1p_rho;
				const int draw = static_cast<int>(rng.categorical_log(lw));
				int& z = state.indicators(w)(k, j);
				if (draw != z) {
					z = draw;
					if (on_change) {
						on_change(k, j, w);
					}
				}
			}
		}
	}
}

Eigen::VectorXi cluster_counts(const Eigen::MatrixXi& z, int C) {
	Eigen::VectorXi n = Eigen::VectorXi::Zero(C);
	for (Eigen::Index i = 0; i < z.size(); ++i) {
		++n(z.data()[i]);
	}
	return n;
}

namespace {

double log_stick_target(ClusterState& state, Which which, int c, double v) {
	Eigen::VectorXd& sticks = state.sticks(which);
	const double old = sticks(c);
	sticks(c) = v;
	const Eigen::VectorXd pb = stick_weights(state.v_beta);
	const Eigen::VectorXd pt = stick_weights(state.v_theta);
	const double lp = log_indicator_prob(state.z_beta, state.z_theta, pb, pt, state.rho);
	sticks(c) = old;
	return (state.alpha(which) - 1.0) * std::log1p(-v) + lp;
}

double clamp_stick(double v) { return std::clamp(v, kStickMin, kStickMax); }

} // namespace

int update_stick_weights(ClusterState& state, Which which, const HyperParams& hyper, StickUpdate method, Rng& rng) {
	const int C = state.truncation();
	const Eigen::VectorXi n = cluster_counts(state.indicators(which), C);
	Eigen::VectorXd& sticks = state.sticks(which);
	const double alpha = state.alpha(which);
	int accepted = 0;
	int tail = n.sum();
	for (int c = 0; c < C - 1; ++c) {
		tail -= n(c);
		if (method == StickUpdate::mh) {
			const double a = 1.0 + n(c);
			const double b = alpha + tail;
			const double prop = clamp_stick(rng.beta(a, b));
			const double cur = sticks(c);
			auto log_q = [&](double v) { return (a - 1.0) * std::log(v) + (b - 1.0) * std::log1p(-v); };
			const double log_ratio = log_stick_target(state, which, c, prop) - log_stick_target(state, which, c, cur) -
			                         log_q(prop) + log_q(cur);
			if (std::log(rng.uniform()) < log_ratio) {
				sticks(c) = prop;
				++accepted;
			}
		} else {
			const int G = hyper.gridsize;
			const double jitter = rng.uniform();
			Eigen::VectorXd nodes(G);
			Eigen::VectorXd lw(G);
			for (int g = 0; g < G; ++g) {
				nodes(g) = clamp_stick((g + jitter) / G);
				lw(g) = log_stick_target(state, which, c, nodes(g));
			}
			sticks(c) = nodes(rng.categorical_log(lw));
			++accepted;
		}
	}
	return accepted;
}

std::pair<double, double> concentration_conditional(const Eigen::VectorXd& V, double a, double b) {
	const Eigen::Index C = V.size();
	double rate = b;
	for (Eigen::Index c = 0; c + 1 < C; ++c) {
		rate -= std::log1p(-std::min(V(c), kStickMax));
	}
	return {a + static_cast<double>(C - 1), rate};
}

void update_concentrations(ClusterState& state, const HyperParams& hyper, Rng& rng, bool update_theta) {
	auto [sb, rb] = concentration_conditional(state.v_beta, hyper.a_beta, hyper.b_beta);
	state.alpha_beta = rng.gamma(sb, rb);
	if (update_theta) {
		auto [st, rt] = concentration_conditional(state.v_theta, hyper.a_theta, hyper.b_theta);
		state.alpha_theta = rng.gamma(st, rt);
	}
}

double log_rho_target(const ClusterState& state, const HyperParams& hyper, double rho) {
	const Eigen::VectorXd pb = stick_weights(state.v_beta);
	const Eigen::VectorXd pt = stick_weights(state.v_theta);
	return hyper.a_rho * std::log(rho) - hyper.b_rho * rho + log_indicator_prob(state.z_beta, state.z_theta, pb, pt, rho);
}

bool update_rho(ClusterState& state, const HyperParams& hyper, Rng& rng) {
	const double prop = std::exp(std::log(state.rho) + hyper.rw_sd * rng.normal());
	if (!(prop > 0.0) || !std::isfinite(prop)) {
		return false;
	}
	const double log_ratio = log_rho_target(state, hyper, prop) - log_rho_target(state, hyper, state.rho);
	if (std::log(rng.uniform()) < log_ratio) {
		state.rho = prop;
		return true;
	}
	return false;
}

} // namespace mixborrow
