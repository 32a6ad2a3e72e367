#include "mixborrow/nonseparable.hpp"

#include <stdexcept>

#include <unsupported/Eigen/KroneckerProduct>

namespace mixborrow {

Eigen::VectorXd tensor_design(const Eigen::MatrixXd& dose_design, const Eigen::MatrixXd& lag_basis) {
	if (dose_design.rows() != lag_basis.rows()) {
		throw std::invalid_argument("tensor_design: dose and lag bases need the same number of lags");
	}
	const Eigen::MatrixXd cross = dose_design.transpose() * lag_basis;   // d x m
	Eigen::VectorXd out(cross.size());
	for (Eigen::Index a = 0; a < cross.rows(); ++a) {
		out.segment(a * cross.cols(), cross.cols()) = cross.row(a).transpose();
	}
	return out;
}

Eigen::MatrixXd tensor_penalty(const Eigen::MatrixXd& dose_penalty, const Eigen::MatrixXd& lag_penalty) {
	const Eigen::Index d = dose_penalty.rows();
	const Eigen::Index m = lag_penalty.rows();
	const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
	const Eigen::MatrixXd im = Eigen::MatrixXd::Identity(m, m);
	Eigen::MatrixXd p = Eigen::kroneckerProduct(dose_penalty, im).eval() + Eigen::kroneckerProduct(id, lag_penalty).eval();
	return 0.5 * (p + p.transpose());
}

ModelSpec build_nonseparable_spec(int n_exposures, int n_lags, int lag_basis_dim, int n_outcomes) {
	if (n_exposures < 1 || n_outcomes < 1) {
		throw std::invalid_argument("nonseparable model needs P >= 1 and K >= 1");
	}
	if (n_lags < 2) {
		throw std::invalid_argument("nonseparable model needs L >= 2");
	}
	if (lag_basis_dim < 1 || lag_basis_dim > n_lags) {
		throw std::invalid_argument("lag basis dimension must be in 1..L");
	}
	ModelSpec spec = build_dlnm_spec(n_exposures, n_lags, 0, n_outcomes);
	spec.kind = ModelKind::nonseparable_dlnm;
	spec.lag_basis_dim = lag_basis_dim;
	spec.spline.n_basis = 5;
	spec.theta_method = ThetaMethod::polar;
	return spec;
}

std::shared_ptr<ModelContext> prepare_nonseparable(const ModelSpec& spec_in, const Eigen::MatrixXd& Xstar,
                                                   const Eigen::MatrixXd& Z) {
	if (spec_in.kind != ModelKind::nonseparable_dlnm) {
		throw std::invalid_argument("prepare_nonseparable needs a nonseparable spec");
	}
	auto ctx = std::make_shared<ModelContext>();
	ctx->spec = spec_in;
	ModelSpec& spec = ctx->spec;
	const int L = spec.n_lags;
	const Eigen::Index n = Xstar.rows();
	ctx->x_tilde = compute_index_inputs(spec, Xstar);     // n x L lag histories per exposure

	// one pooled dose range over every exposure and lag
	double lo = Xstar.minCoeff();
	double hi = Xstar.maxCoeff();
	if (!(hi > lo)) {
		throw std::invalid_argument("nonseparable model: exposures have no spread");
	}
	spec.spline.lo = lo;
	spec.spline.hi = hi;
	ctx->index_range = std::max(std::abs(lo), std::abs(hi));
	Eigen::VectorXd pooled(Xstar.size());
	Eigen::Map<const Eigen::VectorXd> flat(Xstar.data(), Xstar.size());
	pooled = flat;
	ctx->basis = CenteredBasis::from_reference(spec.spline, pooled);
	ctx->lag_basis = lag_reduction_basis(L, spec.lag_basis_dim);

	const int d = ctx->basis.dim();
	const int m = spec.lag_basis_dim;
	const Eigen::MatrixXd lag_pen = lag_precision(L, spec.difference_order, ctx->lag_basis);
	ctx->beta_penalty = tensor_penalty(ctx->basis.penalty(), lag_pen);
	Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ctx->beta_penalty);
	ctx->beta_penalty_eigs = eig.eigenvalues().cwiseMax(0.0);
	ctx->beta_penalty_rank = psd_rank(eig.eigenvalues());
	ctx->theta_precision = Eigen::MatrixXd::Identity(1, 1);
	ctx->theta_init = Eigen::VectorXd::Ones(1);

	ctx->fixed_designs.reserve(spec.n_indices);
	for (int j = 0; j < spec.n_indices; ++j) {
		Eigen::MatrixXd design(n, d * m);
		const Eigen::MatrixXd& hist = ctx->x_tilde[j];
		for (Eigen::Index i = 0; i < n; ++i) {
			const Eigen::MatrixXd r = ctx->basis.design(hist.row(i).transpose());
			design.row(i) = tensor_design(r, ctx->lag_basis).transpose();
		}
		ctx->fixed_designs.push_back(std::move(design));
	}
	ctx->Z = Z.rows() == n ? Z : Eigen::MatrixXd(n, 0);
	ctx->Xstar = Xstar;
	return ctx;
}

Eigen::VectorXd surface_at_lag(const ModelContext& ctx, const Eigen::VectorXd& beta, const Eigen::VectorXd& dose,
                               int lag) {
	const int m = static_cast<int>(ctx.lag_basis.cols());
	const Eigen::MatrixXd r = ctx.basis.design(dose);
	const Eigen::RowVectorXd psi = ctx.lag_basis.row(lag);
	Eigen::VectorXd out = Eigen::VectorXd::Zero(dose.size());
	for (Eigen::Index a = 0; a < r.cols(); ++a) {
		const double w = psi.dot(beta.segment(a * m, m));
		out += w * r.col(a);
	}
	return out;
}

ChainOutput run_nonseparable_chain(const ModelSpec& spec, const Dataset& data, const ChainControl& control,
                                   SamplerOptions options) {
	if (spec.kind != ModelKind::nonseparable_dlnm) {
		throw std::invalid_argument("run_nonseparable_chain needs a nonseparable spec");
	}
	return run_chain(spec, data, control, options);
}

} // namespace mixborrow
