#include "mixborrow/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "mixborrow/nonseparable.hpp"

namespace mixborrow {

double quantile(std::vector<double> values, double prob) {
	if (values.empty()) {
		throw std::invalid_argument("quantile of an empty sample");
	}
	std::sort(values.begin(), values.end());
	const double h = (static_cast<double>(values.size()) - 1.0) * prob;
	const auto lo = static_cast<std::size_t>(std::floor(h));
	const std::size_t hi = std::min(lo + 1, values.size() - 1);
	return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

CurveSummary summarize_columns(const Eigen::MatrixXd& draws, const Eigen::VectorXd& grid) {
	if (draws.rows() == 0) {
		throw std::invalid_argument("no draws");
	}
	CurveSummary out;
	out.grid = grid;
	out.mean = draws.colwise().mean().transpose();
	out.lower.resize(draws.cols());
	out.upper.resize(draws.cols());
	std::vector<double> col(static_cast<std::size_t>(draws.rows()));
	for (Eigen::Index g = 0; g < draws.cols(); ++g) {
		for (Eigen::Index d = 0; d < draws.rows(); ++d) {
			col[static_cast<std::size_t>(d)] = draws(d, g);
		}
		out.lower(g) = quantile(col, 0.025);
		out.upper(g) = quantile(col, 0.975);
	}
	return out;
}

ScalarSummary summarize_scalar(const std::vector<double>& draws) {
	if (draws.empty()) {
		throw std::invalid_argument("no draws");
	}
	ScalarSummary s;
	for (double v : draws) {
		s.mean += v;
	}
	s.mean /= static_cast<double>(draws.size());
	s.lower = quantile(draws, 0.025);
	s.upper = quantile(draws, 0.975);
	return s;
}

ChainOutput merge_chains(const std::vector<ChainOutput>& chains) {
	if (chains.empty()) {
		throw std::invalid_argument("merge_chains: no chains");
	}
	ChainOutput out;
	out.context = chains.front().context;
	out.meta = chains.front().meta;
	for (const auto& c : chains) {
		out.draws.insert(out.draws.end(), c.draws.begin(), c.draws.end());
		out.loglik.insert(out.loglik.end(), c.loglik.begin(), c.loglik.end());
		out.log_posterior.insert(out.log_posterior.end(), c.log_posterior.begin(), c.log_posterior.end());
		for (const auto& [name, acc] : c.acceptance) {
			out.acceptance[name].proposed += acc.proposed;
			out.acceptance[name].accepted += acc.accepted;
		}
	}
	return out;
}

std::vector<Eigen::VectorXd> align_signs(const std::vector<Eigen::VectorXd>& draws) {
	if (draws.empty()) {
		return {};
	}
	const Eigen::Index m = draws.front().size();
	const bool all_pos = std::all_of(draws.begin(), draws.end(), [&](const auto& t) { return t(m - 1) >= 0.0; });
	const bool all_neg = std::all_of(draws.begin(), draws.end(), [&](const auto& t) { return t(m - 1) <= 0.0; });
	if (all_pos || all_neg) {
		return draws;
	}
	Eigen::MatrixXd second = Eigen::MatrixXd::Zero(m, m);
	for (const auto& t : draws) {
		second.noalias() += t * t.transpose();
	}
	Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(second);
	const Eigen::VectorXd lead = eig.eigenvectors().col(m - 1);
	std::vector<Eigen::VectorXd> out;
	out.reserve(draws.size());
	Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
	for (const auto& t : draws) {
		out.push_back(t.dot(lead) < 0.0 ? Eigen::VectorXd(-t) : t);
		mean += out.back();
	}
	Eigen::Index top = 0;
	mean.cwiseAbs().maxCoeff(&top);
	if (mean(top) < 0.0) {
		for (auto& t : out) {
			t = -t;
		}
	}
	return out;
}

Eigen::VectorXd evaluate_component(const ModelContext& ctx, int j, const Eigen::VectorXd& beta,
                                   const Eigen::VectorXd& theta, const Eigen::MatrixXd& Xrows) {
	const Eigen::MatrixXd xt = compute_index_inputs(ctx.spec, Xrows)[j];
	switch (ctx.spec.kind) {
	case ModelKind::nonseparable_dlnm: {
		Eigen::VectorXd out(Xrows.rows());
		for (Eigen::Index i = 0; i < Xrows.rows(); ++i) {
			const Eigen::MatrixXd r = ctx.basis.design(xt.row(i).transpose());
			out(i) = tensor_design(r, ctx.lag_basis).dot(beta);
		}
		return out;
	}
	case ModelKind::additive:
		return ctx.basis.curve(xt.col(0), beta);
	default:
		return ctx.basis.curve(xt * theta, beta);
	}
}

Eigen::VectorXd evaluate_mixture(const ModelContext& ctx, const ParamState& draw, int k, const Eigen::MatrixXd& Xrows) {
	const ClusterState& cl = draw.cluster;
	Eigen::VectorXd out = Eigen::VectorXd::Zero(Xrows.rows());
	for (int j = 0; j < ctx.spec.n_indices; ++j) {
		out += evaluate_component(ctx, j, cl.beta_atoms[cl.z_beta(k, j)], cl.theta_atoms[cl.z_theta(k, j)], Xrows);
	}
	return out;
}

namespace {

void check_pair(const ChainOutput& chain, int k, int j) {
	if (chain.draws.empty()) {
		throw std::invalid_argument("no draws");
	}
	const ModelSpec& spec = chain.context->spec;
	if (k < 0 || k >= spec.n_outcomes || j < 0 || j >= spec.n_indices) {
		throw std::out_of_range(fmt::format("pair (k={}, j={}) out of range", k + 1, j + 1));
	}
}

Eigen::RowVectorXd column_means(const Eigen::MatrixXd& X) { return X.colwise().mean(); }

} // namespace

Eigen::VectorXd default_erf_grid(const ModelContext& ctx, int j, int points, double fraction) {
	if (points < 2) {
		throw std::invalid_argument("an erf grid needs at least 2 points");
	}
	if (ctx.spec.kind == ModelKind::nonseparable_dlnm) {
		const double mid = 0.5 * (ctx.spec.spline.lo + ctx.spec.spline.hi);
		const double half = 0.5 * (ctx.spec.spline.hi - ctx.spec.spline.lo) * fraction;
		return Eigen::VectorXd::LinSpaced(points, mid - half, mid + half);
	}
	const Eigen::MatrixXd unit = compute_index_inputs(ctx.spec, Eigen::RowVectorXd::Ones(ctx.Xstar.cols()))[j];
	const double a = fraction * ctx.index_range / unit.row(0).norm();
	return Eigen::VectorXd::LinSpaced(points, -a, a);
}

Eigen::MatrixXd erf_draws(const ChainOutput& chain, int k, int j, const Eigen::VectorXd& grid) {
	check_pair(chain, k, j);
	const ModelContext& ctx = *chain.context;
	const Eigen::Index M = ctx.Xstar.cols();
	if (ctx.spec.kind == ModelKind::nonseparable_dlnm) {
		if (grid.size() > 0 && (grid.minCoeff() < ctx.spec.spline.lo || grid.maxCoeff() > ctx.spec.spline.hi)) {
			throw std::out_of_range("grid outside the dose-basis range");
		}
	} else {
		const Eigen::MatrixXd unit = compute_index_inputs(ctx.spec, Eigen::RowVectorXd::Ones(M))[j];
		const double scale = unit.row(0).norm();
		if (grid.size() > 0 && grid.cwiseAbs().maxCoeff() * scale > ctx.index_range * (1.0 + 1e-12)) {
			throw std::out_of_range(fmt::format("grid outside the index range (|a| <= {:.4g})", ctx.index_range / scale));
		}
	}
	Eigen::MatrixXd rows(grid.size() + 1, M);
	for (Eigen::Index g = 0; g < grid.size(); ++g) {
		rows.row(g).setConstant(grid(g));
	}
	rows.row(grid.size()) = column_means(ctx.Xstar);
	Eigen::MatrixXd out(static_cast<Eigen::Index>(chain.draws.size()), grid.size());
	for (std::size_t d = 0; d < chain.draws.size(); ++d) {
		const ClusterState& cl = chain.draws[d].cluster;
		const Eigen::VectorXd f =
			evaluate_component(ctx, j, cl.beta_atoms[cl.z_beta(k, j)], cl.theta_atoms[cl.z_theta(k, j)], rows);
		out.row(static_cast<Eigen::Index>(d)) = (f.head(grid.size()).array() - f(grid.size())).transpose();
	}
	return out;
}

CurveSummary erf_summary(const ChainOutput& chain, int k, int j, const Eigen::VectorXd& grid) {
	return summarize_columns(erf_draws(chain, k, j, grid), grid);
}

CurveSummary overall_mixture_effect(const ChainOutput& chain, int k, const Eigen::VectorXd& quantiles) {
	check_pair(chain, k, 0);
	const ModelContext& ctx = *chain.context;
	const Eigen::MatrixXd& X = ctx.Xstar;
	Eigen::MatrixXd rows(quantiles.size() + 1, X.cols());
	for (Eigen::Index c = 0; c < X.cols(); ++c) {
		std::vector<double> col(X.col(c).data(), X.col(c).data() + X.rows());
		for (Eigen::Index q = 0; q < quantiles.size(); ++q) {
			rows(q, c) = quantile(col, quantiles(q));
		}
		rows(quantiles.size(), c) = quantile(col, 0.5);
	}
	Eigen::MatrixXd out(static_cast<Eigen::Index>(chain.draws.size()), quantiles.size());
	for (std::size_t d = 0; d < chain.draws.size(); ++d) {
		const Eigen::VectorXd f = evaluate_mixture(ctx, chain.draws[d], k, rows);
		out.row(static_cast<Eigen::Index>(d)) = (f.head(quantiles.size()).array() - f(quantiles.size())).transpose();
	}
	return summarize_columns(out, quantiles);
}

std::vector<double> lagged_contrast_draws(const ChainOutput& chain, int k, int p, int l, double lo, double hi) {
	check_pair(chain, k, 0);
	const ModelContext& ctx = *chain.context;
	const ModelSpec& spec = ctx.spec;
	if (spec.kind != ModelKind::dlnm && spec.kind != ModelKind::nonseparable_dlnm) {
		throw std::invalid_argument("lagged contrasts need a distributed-lag model");
	}
	if (p < 0 || p >= spec.n_exposures || l < 0 || l >= spec.n_lags) {
		throw std::out_of_range("exposure or lag out of range");
	}
	const Eigen::MatrixXd& X = ctx.Xstar;
	const Eigen::Index c = static_cast<Eigen::Index>(p) * spec.n_lags + l;
	const double mean = X.col(c).mean();
	const double sd = std::sqrt((X.col(c).array() - mean).square().sum() / static_cast<double>(X.rows() - 1));
	Eigen::MatrixXd rows(2, X.cols());
	rows.row(0) = column_means(X);
	rows.row(1) = rows.row(0);
	rows(0, c) = mean + hi * sd;
	rows(1, c) = mean + lo * sd;
	std::vector<double> out;
	out.reserve(chain.draws.size());
	for (const auto& draw : chain.draws) {
		const ClusterState& cl = draw.cluster;
		const Eigen::VectorXd f =
			evaluate_component(ctx, p, cl.beta_atoms[cl.z_beta(k, p)], cl.theta_atoms[cl.z_theta(k, p)], rows);
		out.push_back(f(0) - f(1));
	}
	return out;
}

ScalarSummary lagged_contrast(const ChainOutput& chain, int k, int p, int l, double lo, double hi) {
	return summarize_scalar(lagged_contrast_draws(chain, k, p, l, lo, hi));
}

ClusterHeatmap pairwise_clustering(const std::vector<ParamState>& draws) {
	if (draws.empty()) {
		throw std::invalid_argument("no draws");
	}
	const Eigen::MatrixXi& z0 = draws.front().cluster.z_beta;
	const int K = static_cast<int>(z0.rows());
	const int J = static_cast<int>(z0.cols());
	const int np = K * J;
	ClusterHeatmap h;
	for (int k = 0; k < K; ++k) {
		for (int j = 0; j < J; ++j) {
			h.labels.push_back(fmt::format("k{}_j{}", k + 1, j + 1));
		}
	}
	h.prob_beta = Eigen::MatrixXd::Zero(np, np);
	h.prob_theta = Eigen::MatrixXd::Zero(np, np);
	for (const auto& d : draws) {
		const Eigen::MatrixXi& zb = d.cluster.z_beta;
		const Eigen::MatrixXi& zt = d.cluster.z_theta;
		for (int a = 0; a < np; ++a) {
			for (int b = 0; b < np; ++b) {
				h.prob_beta(a, b) += zb(a / J, a % J) == zb(b / J, b % J);
				h.prob_theta(a, b) += zt(a / J, a % J) == zt(b / J, b % J);
			}
		}
	}
	h.prob_beta /= static_cast<double>(draws.size());
	h.prob_theta /= static_cast<double>(draws.size());
	return h;
}

ClusterHeatmap pairwise_clustering(const ChainOutput& chain) { return pairwise_clustering(chain.draws); }

std::vector<Eigen::VectorXd> omega_draws(const ChainOutput& chain, int k, int j) {
	check_pair(chain, k, j);
	const ModelContext& ctx = *chain.context;
	if (!ctx.spec.has_theta()) {
		throw std::invalid_argument("this model kind has no index weights");
	}
	std::vector<Eigen::VectorXd> out;
	out.reserve(chain.draws.size());
	for (const auto& d : chain.draws) {
		const ClusterState& cl = d.cluster;
		out.push_back(ctx.spec.reduction_basis * cl.theta_atoms[cl.z_theta(k, j)]);
	}
	return align_signs(out);
}

Eigen::VectorXd omega_estimate(const ChainOutput& chain, int k, int j) {
	const auto draws = omega_draws(chain, k, j);
	Eigen::VectorXd mean = Eigen::VectorXd::Zero(draws.front().size());
	for (const auto& w : draws) {
		mean += w;
	}
	const double norm = mean.norm();
	return norm > 0.0 ? Eigen::VectorXd(mean / norm) : mean;
}

Waic compute_waic(const std::vector<Eigen::MatrixXd>& loglik) {
	const std::size_t S = loglik.size();
	if (S < 2) {
		throw std::invalid_argument("WAIC needs at least two draws");
	}
	const Eigen::Index n = loglik.front().rows();
	const Eigen::Index K = loglik.front().cols();
	Waic w;
	for (Eigen::Index i = 0; i < n; ++i) {
		for (Eigen::Index k = 0; k < K; ++k) {
			double top = -std::numeric_limits<double>::infinity();
			double mean = 0.0;
			for (const auto& ll : loglik) {
				top = std::max(top, ll(i, k));
				mean += ll(i, k);
			}
			mean /= static_cast<double>(S);
			double acc = 0.0;
			double ss = 0.0;
			for (const auto& ll : loglik) {
				acc += std::exp(ll(i, k) - top);
				ss += (ll(i, k) - mean) * (ll(i, k) - mean);
			}
			w.lppd += top + std::log(acc / static_cast<double>(S));
			w.p_waic += ss / static_cast<double>(S - 1);
		}
	}
	w.waic = -2.0 * (w.lppd - w.p_waic);
	return w;
}

} // namespace mixborrow
