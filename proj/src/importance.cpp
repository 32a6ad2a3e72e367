#include "mixborrow/importance.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace mixborrow {

Eigen::VectorXd silverman_bandwidth(const Eigen::MatrixXd& cols) {
	const double n = static_cast<double>(cols.rows());
	const double d = static_cast<double>(cols.cols());
	const double factor = std::pow(4.0 / ((d + 2.0) * n), 1.0 / (d + 4.0));
	Eigen::VectorXd h(cols.cols());
	for (Eigen::Index c = 0; c < cols.cols(); ++c) {
		const double mean = cols.col(c).mean();
		const double sd = n > 1 ? std::sqrt((cols.col(c).array() - mean).square().sum() / (n - 1.0)) : 0.0;
		h(c) = sd > 0.0 ? sd * factor : 1.0;
	}
	return h;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite(int n) {
	if (n < 1) {
		throw std::invalid_argument("gauss_hermite: need at least one node");
	}
	Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
	for (int i = 1; i < n; ++i) {
		J(i, i - 1) = J(i - 1, i) = std::sqrt(0.5 * i);
	}
	Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
	const Eigen::VectorXd w = std::sqrt(std::numbers::pi) * eig.eigenvectors().row(0).transpose().array().square();
	return {eig.eigenvalues(), w};
}

namespace {

std::vector<int> complement(const std::vector<int>& group, int M) {
	std::vector<int> rest;
	for (int c = 0; c < M; ++c) {
		if (std::find(group.begin(), group.end(), c) == group.end()) {
			rest.push_back(c);
		}
	}
	return rest;
}

void check_group(const std::vector<int>& group, int M) {
	if (group.empty()) {
		throw std::invalid_argument("importance group is empty");
	}
	for (int c : group) {
		if (c < 0 || c >= M) {
			throw std::out_of_range("importance group refers to a missing exposure column");
		}
	}
	if (static_cast<int>(complement(group, M).size()) == 0) {
		throw std::invalid_argument("importance group covers every exposure; the complement is empty");
	}
}

double biased_variance(const Eigen::VectorXd& v) { return (v.array() - v.mean()).square().mean(); }

} // namespace

Eigen::VectorXd kernel_conditional_mean(const SurfaceFn& f, const Eigen::MatrixXd& X, const std::vector<int>& group,
                                        const Eigen::MatrixXd& queries, const Eigen::VectorXd& bandwidth) {
	const Eigen::Index n = X.rows();
	const int M = static_cast<int>(X.cols());
	if (n < 1) {
		throw std::invalid_argument("kernel_conditional_mean: no observations");
	}
	check_group(group, M);
	const std::vector<int> rest = complement(group, M);
	Eigen::MatrixXd Xrest(n, static_cast<Eigen::Index>(rest.size()));
	for (std::size_t c = 0; c < rest.size(); ++c) {
		Xrest.col(static_cast<Eigen::Index>(c)) = X.col(rest[c]);
	}
	const Eigen::VectorXd h = bandwidth.size() > 0 ? bandwidth : silverman_bandwidth(Xrest);
	if (h.size() != Xrest.cols() || (h.array() <= 0.0).any()) {
		throw std::invalid_argument("bandwidth must be positive with one entry per conditioning column");
	}
	Eigen::VectorXd out(queries.rows());
	Eigen::MatrixXd combo = X;
	Eigen::VectorXd logw(n);
	for (Eigen::Index q = 0; q < queries.rows(); ++q) {
		for (int c : rest) {
			combo.col(c).setConstant(queries(q, c));
		}
		for (Eigen::Index i = 0; i < n; ++i) {
			double s = 0.0;
			for (std::size_t c = 0; c < rest.size(); ++c) {
				const double z = (Xrest(i, static_cast<Eigen::Index>(c)) - queries(q, rest[c])) / h(static_cast<Eigen::Index>(c));
				s += z * z;
			}
			logw(i) = -0.5 * s;
		}
		const Eigen::VectorXd fv = f(combo);
		const double top = logw.maxCoeff();
		if (top < std::log(DBL_MIN)) {
			spdlog::warn("kernel weights underflow at query {}; using the 5 nearest neighbours", q + 1);
			std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
			for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
			const std::size_t kk = std::min<std::size_t>(5, idx.size());
			std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(kk), idx.end(),
			                  [&](Eigen::Index a, Eigen::Index b) { return logw(a) > logw(b); });
			double acc = 0.0;
			for (std::size_t t = 0; t < kk; ++t) acc += fv(idx[t]);
			out(q) = acc / static_cast<double>(kk);
			continue;
		}
		const Eigen::ArrayXd w = (logw.array() - top).exp();
		out(q) = (w * fv.array()).sum() / w.sum();
	}
	return out;
}

namespace {

Eigen::VectorXd plugin_conditional_mean(const SurfaceFn& f, const Eigen::MatrixXd& X, int p, const ConditionalModel& cond) {
	const Eigen::Index n = X.rows();
	if (cond.plugin_mean.size() != n) {
		throw std::invalid_argument("regression plugin needs one fitted mean per observation");
	}
	double sd = cond.plugin_sd;
	if (sd < 0.0) {
		sd = std::sqrt((X.col(p) - cond.plugin_mean).squaredNorm() / static_cast<double>(n));
	}
	const auto [nodes, weights] = gauss_hermite(cond.hermite_nodes);
	Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
	Eigen::MatrixXd shifted = X;
	for (Eigen::Index g = 0; g < nodes.size(); ++g) {
		shifted.col(p) = cond.plugin_mean.array() + std::sqrt(2.0) * sd * nodes(g);
		out += weights(g) / std::sqrt(std::numbers::pi) * f(shifted);
	}
	return out;
}

} // namespace

ImportanceValue group_importance(const SurfaceFn& f, const Eigen::MatrixXd& X, const std::vector<int>& group,
                                 const ConditionalModel& cond) {
	check_group(group, static_cast<int>(X.cols()));
	const Eigen::VectorXd fx = f(X);
	ImportanceValue v;
	const double total = biased_variance(fx);
	if (!(total > 1e-300)) {
		v.missing = true;
		return v;
	}
	Eigen::VectorXd cm;
	if (cond.kind == ConditionalKind::regression_plugin) {
		if (group.size() != 1) {
			throw std::invalid_argument("the regression plugin handles one exposure at a time");
		}
		cm = plugin_conditional_mean(f, X, group.front(), cond);
	} else {
		cm = kernel_conditional_mean(f, X, group, X, cond.bandwidth);
	}
	v.raw = 1.0 - biased_variance(cm) / total;
	v.phi = std::clamp(v.raw, 0.0, 1.0);
	v.clipped = v.phi != v.raw;
	if (v.clipped) {
		spdlog::info("importance estimate {:.4f} clipped to [0, 1]", v.raw);
	}
	return v;
}

ImportanceValue exposure_importance(const SurfaceFn& f, const Eigen::MatrixXd& X, int p, const ConditionalModel& cond) {
	return group_importance(f, X, {p}, cond);
}

ImportanceSummary importance_from_chain(const ChainOutput& chain, int k, const std::vector<int>& group,
                                        const ConditionalModel& cond, int max_draws) {
	if (chain.draws.empty()) {
		throw std::invalid_argument("no draws");
	}
	const ModelContext& ctx = *chain.context;
	const std::size_t S = chain.draws.size();
	const std::size_t use = max_draws > 0 ? std::min<std::size_t>(S, static_cast<std::size_t>(max_draws)) : S;
	std::vector<double> phis;
	ImportanceSummary out;
	for (std::size_t t = 0; t < use; ++t) {
		const std::size_t d = use == S ? t : (t * S) / use;
		const ParamState& draw = chain.draws[d];
		SurfaceFn f = [&](const Eigen::MatrixXd& rows) { return evaluate_mixture(ctx, draw, k, rows); };
		const ImportanceValue v = group_importance(f, ctx.Xstar, group, cond);
		++out.n_draws;
		if (v.missing) {
			++out.missing;
			continue;
		}
		out.excursions += v.clipped;
		phis.push_back(v.phi);
	}
	if (!phis.empty()) {
		const ScalarSummary s = summarize_scalar(phis);
		out.mean = s.mean;
		out.lower = s.lower;
		out.upper = s.upper;
	} else {
		out.mean = out.lower = out.upper = std::numeric_limits<double>::quiet_NaN();
	}
	return out;
}

} // namespace mixborrow
