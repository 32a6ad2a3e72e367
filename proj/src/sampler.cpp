#include "mixborrow/sampler.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mixborrow/nonseparable.hpp"
#include "mixborrow/sphere.hpp"

namespace mixborrow {

int psd_rank(const Eigen::VectorXd& eigenvalues) {
	if (eigenvalues.size() == 0) {
		return 0;
	}
	const double top = std::max(1.0, eigenvalues.cwiseAbs().maxCoeff());
	int rank = 0;
	for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
		if (eigenvalues(i) > 1e-9 * top) {
			++rank;
		}
	}
	return rank;
}

Eigen::MatrixXd ModelContext::design(int j, const Eigen::VectorXd& theta) const {
	if (spec.has_theta()) {
		return basis.design(x_tilde[j] * theta);
	}
	return fixed_designs[j];
}

Eigen::VectorXd ModelContext::curve(int j, const Eigen::VectorXd& beta, const Eigen::VectorXd& theta) const {
	if (spec.has_theta()) {
		return basis.curve(x_tilde[j] * theta, beta);
	}
	return fixed_designs[j] * beta;
}

std::shared_ptr<const ModelContext> prepare_model(const ModelSpec& spec_in, const Eigen::MatrixXd& Xstar,
                                                  const Eigen::MatrixXd& Z) {
	spec_in.validate();
	if (Z.size() > 0 && Z.rows() != Xstar.rows()) {
		throw std::invalid_argument("covariates and exposures differ in row count");
	}
	if (spec_in.kind == ModelKind::nonseparable_dlnm) {
		return prepare_nonseparable(spec_in, Xstar, Z);
	}
	auto ctx = std::make_shared<ModelContext>();
	ctx->spec = spec_in;
	ModelSpec& spec = ctx->spec;
	const Eigen::Index n = Xstar.rows();
	ctx->x_tilde = compute_index_inputs(spec, Xstar);

	double R = 0.0;
	for (const auto& xt : ctx->x_tilde) {
		R = std::max(R, xt.rowwise().norm().maxCoeff());
	}
	if (!(R > 0.0)) {
		throw std::invalid_argument("exposures are identically zero; the index range is empty");
	}
	ctx->index_range = R;
	spec.spline.lo = -R;
	spec.spline.hi = R;

	ctx->theta_init = spec.has_theta() ? flat_theta(spec) : Eigen::VectorXd::Ones(1);
	Eigen::VectorXd pooled(n * spec.n_indices);
	for (int j = 0; j < spec.n_indices; ++j) {
		pooled.segment(j * n, n) = ctx->x_tilde[j] * ctx->theta_init;
	}
	ctx->basis = CenteredBasis::from_reference(spec.spline, pooled);
	ctx->beta_penalty = ctx->basis.penalty();
	Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ctx->beta_penalty);
	ctx->beta_penalty_eigs = eig.eigenvalues().cwiseMax(0.0);
	ctx->beta_penalty_rank = psd_rank(eig.eigenvalues());

	switch (spec.kind) {
	case ModelKind::dlnm:
		ctx->theta_precision = lag_precision(spec.n_lags, spec.difference_order, spec.reduction_basis);
		break;
	case ModelKind::mim:
	case ModelKind::biomarker:
		ctx->theta_precision = Eigen::MatrixXd::Identity(spec.m(), spec.m());
		break;
	default:
		ctx->theta_precision = Eigen::MatrixXd::Identity(1, 1);
		break;
	}
	if (!spec.has_theta()) {
		for (int j = 0; j < spec.n_indices; ++j) {
			ctx->fixed_designs.push_back(ctx->basis.design(ctx->x_tilde[j].col(0)));
		}
	}
	ctx->Z = Z.rows() == n ? Z : Eigen::MatrixXd(n, 0);
	ctx->Xstar = Xstar;
	return ctx;
}

std::pair<double, double> lambda_beta_conditional(const std::vector<Eigen::VectorXd>& atoms,
                                                  const Eigen::MatrixXd& penalty, int rank, const HyperParams& hyper) {
	double quad = 0.0;
	for (const auto& b : atoms) {
		quad += b.dot(penalty * b);
	}
	return {hyper.a_lambda_beta + 0.5 * static_cast<double>(atoms.size()) * rank, hyper.b_lambda_beta + 0.5 * quad};
}

ChainSampler::ChainSampler(std::shared_ptr<const ModelContext> ctx, const Eigen::MatrixXd& Y, std::uint64_t seed,
                           SamplerOptions options)
	: ctx_(std::move(ctx)), opt_(options), rng_(seed), Y_(Y) {
	const ModelSpec& spec = ctx_->spec;
	K_ = spec.n_outcomes;
	J_ = spec.n_indices;
	C_ = spec.truncation;
	if (Y_.rows() != ctx_->n() || Y_.cols() != K_) {
		throw std::invalid_argument(fmt::format("outcome matrix must be {} x {}", ctx_->n(), K_));
	}
	if (!Y_.allFinite()) {
		throw std::invalid_argument("outcomes contain non-finite values");
	}
	const Eigen::MatrixXd& Z = ctx_->Z;
	if (Z.cols() > 0) {
		const Eigen::MatrixXd ztz = Z.transpose() * Z;
		Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
		if (qr.rank() < Z.cols()) {
			throw std::invalid_argument("covariates are collinear (Z^T Z is singular)");
		}
		ztz_.compute(ztz);
		Eigen::LLT<Eigen::MatrixXd> llt(ztz.inverse());
		ztz_inv_llt_ = llt.matrixL();
	}
	initialize();
}

void ChainSampler::initialize() {
	const ModelSpec& spec = ctx_->spec;
	ClusterState& cl = state_.cluster;
	cl.z_beta.resize(K_, J_);
	cl.z_theta.resize(K_, J_);
	for (int k = 0; k < K_; ++k) {
		for (int j = 0; j < J_; ++j) {
			cl.z_beta(k, j) = col(k, j) % C_;
			cl.z_theta(k, j) = has_theta() ? col(k, j) % C_ : 0;
		}
	}
	cl.v_beta = uniform_sticks(C_);
	cl.v_theta = uniform_sticks(C_);
	cl.alpha_beta = 1.0;
	cl.alpha_theta = 1.0;
	cl.rho = (has_theta() && spec.clustering) ? 1.0 : 0.0;
	cl.beta_atoms.assign(C_, Eigen::VectorXd::Zero(ctx_->beta_dim()));
	Eigen::VectorXd t0 = ctx_->theta_init;
	if (has_theta() && polar() && t0.size() > 1) {
		Eigen::VectorXd phi = unit_to_polar(t0);
		const double edge = 0.5 * std::numbers::pi - 1e-3;
		phi = phi.cwiseMax(-edge).cwiseMin(edge);
		t0 = polar_to_unit(phi);
	}
	cl.theta_atoms.assign(C_, t0);

	const Eigen::Index n = ctx_->n();
	state_.beta0 = Y_.colwise().mean().transpose();
	state_.betaZ = Eigen::MatrixXd::Zero(K_, ctx_->Z.cols());
	state_.u = Eigen::VectorXd::Zero(n);
	state_.xi = 1.0;
	state_.sigma2.resize(K_);
	for (int k = 0; k < K_; ++k) {
		const double var = (Y_.col(k).array() - Y_.col(k).mean()).square().sum() / static_cast<double>(n - 1);
		state_.sigma2(k) = var > 1e-8 ? var : 1.0;
	}
	state_.lambda_beta = 1.0;
	state_.lambda_theta = 1.0;
	if (has_theta()) {
		log_c0_ = log_normconst(state_.lambda_theta);
	}
	rebuild_fits();
}

void ChainSampler::set_state(const ParamState& s) {
	if (s.cluster.truncation() != C_ || s.beta0.size() != K_ || s.sigma2.size() != K_ || s.u.size() != ctx_->n()) {
		throw std::invalid_argument("set_state: state does not match the model dimensions");
	}
	state_ = s;
	if (has_theta()) {
		log_c0_ = log_normconst(state_.lambda_theta);
	}
	rebuild_fits();
}

void ChainSampler::set_outcomes(const Eigen::MatrixXd& Y) {
	if (Y.rows() != Y_.rows() || Y.cols() != Y_.cols()) {
		throw std::invalid_argument("set_outcomes: shape mismatch");
	}
	Y_ = Y;
	rebuild_fits();
}

Eigen::VectorXd ChainSampler::fixed_part(int k) const {
	Eigen::VectorXd out = Eigen::VectorXd::Constant(ctx_->n(), state_.beta0(k));
	if (ctx_->Z.cols() > 0) {
		out.noalias() += ctx_->Z * state_.betaZ.row(k).transpose();
	}
	return out;
}

Eigen::VectorXd ChainSampler::pair_curve(int k, int j) const {
	const ClusterState& cl = state_.cluster;
	return ctx_->curve(j, cl.beta_atoms[cl.z_beta(k, j)], cl.theta_atoms[cl.z_theta(k, j)]);
}

void ChainSampler::set_pair_curve(int k, int j, const Eigen::VectorXd& f) {
	E_.col(k) += F_.col(col(k, j)) - f;
	F_.col(col(k, j)) = f;
}

void ChainSampler::rebuild_fits() {
	const Eigen::Index n = ctx_->n();
	F_.resize(n, K_ * J_);
	E_.resize(n, K_);
	for (int k = 0; k < K_; ++k) {
		Eigen::VectorXd e = Y_.col(k) - fixed_part(k) - state_.xi * std::sqrt(state_.sigma2(k)) * state_.u;
		for (int j = 0; j < J_; ++j) {
			F_.col(col(k, j)) = pair_curve(k, j);
			e -= F_.col(col(k, j));
		}
		E_.col(k) = e;
	}
}

void ChainSampler::count(const std::string& name, bool accepted) {
	auto& c = acc_[name];
	++c.proposed;
	if (accepted) {
		++c.accepted;
	}
}

void ChainSampler::sweep() {
	step_indicators();
	step_sticks();
	step_beta_atoms();
	step_theta_atoms();
	step_concentrations();
	step_rho();
	step_lambda_beta();
	step_lambda_theta();
	step_random_effects();
	step_xi();
	step_sigma2();
	step_fixed_effects();
	if (opt_.check_invariants) {
		check_invariants();
	}
}

void ChainSampler::step_indicators() {
	if (opt_.freeze.indicators || !ctx_->spec.clustering) {
		return;
	}
	const ClusterState& cl = state_.cluster;
	Eigen::MatrixXd atoms(ctx_->beta_dim(), C_);
	auto loglik = [&](int k, int j, Which w) {
		const Eigen::VectorXd r = E_.col(k) + F_.col(col(k, j));
		const double scale = -0.5 / state_.sigma2(k);
		Eigen::VectorXd ll(C_);
		if (w == Which::beta) {
			for (int c = 0; c < C_; ++c) {
				atoms.col(c) = cl.beta_atoms[c];
			}
			const Eigen::MatrixXd fits = ctx_->design(j, cl.theta_atoms[cl.z_theta(k, j)]) * atoms;
			for (int c = 0; c < C_; ++c) {
				ll(c) = scale * (r - fits.col(c)).squaredNorm();
			}
		} else {
			const Eigen::VectorXd& beta = cl.beta_atoms[cl.z_beta(k, j)];
			for (int c = 0; c < C_; ++c) {
				ll(c) = scale * (r - ctx_->curve(j, beta, cl.theta_atoms[c])).squaredNorm();
			}
		}
		return ll;
	};
	auto changed = [&](int k, int j, Which) { set_pair_curve(k, j, pair_curve(k, j)); };
	gibbs_update_indicators(state_.cluster, loglik, rng_, changed, true, has_theta());
}

void ChainSampler::step_sticks() {
	if (opt_.freeze.sticks || !ctx_->spec.clustering) {
		return;
	}
	const ModelSpec& spec = ctx_->spec;
	const int nb = update_stick_weights(state_.cluster, Which::beta, spec.hyper, spec.stick_update, rng_);
	auto& cb = acc_["v_beta"];
	cb.proposed += C_ - 1;
	cb.accepted += nb;
	if (has_theta()) {
		const int nt = update_stick_weights(state_.cluster, Which::theta, spec.hyper, spec.stick_update, rng_);
		auto& ct = acc_["v_theta"];
		ct.proposed += C_ - 1;
		ct.accepted += nt;
	}
}

void ChainSampler::step_beta_atoms() {
	if (opt_.freeze.beta_atoms) {
		return;
	}
	ClusterState& cl = state_.cluster;
	const HyperParams& hp = ctx_->spec.hyper;
	const int d = ctx_->beta_dim();
	Eigen::MatrixXd prior_prec = state_.lambda_beta * ctx_->beta_penalty;
	prior_prec.diagonal().array() += hp.null_ridge;
	for (int c = 0; c < C_; ++c) {
		Eigen::MatrixXd prec = prior_prec;
		Eigen::VectorXd lin = Eigen::VectorXd::Zero(d);
		bool any = false;
		for (int k = 0; k < K_; ++k) {
			Eigen::MatrixXd G;
			Eigen::VectorXd r;
			for (int j = 0; j < J_; ++j) {
				if (cl.z_beta(k, j) != c) {
					continue;
				}
				const Eigen::MatrixXd D = ctx_->design(j, cl.theta_atoms[cl.z_theta(k, j)]);
				if (G.size() == 0) {
					G = D;
					r = E_.col(k);
				} else {
					G += D;
				}
				r += F_.col(col(k, j));
			}
			if (G.size() == 0) {
				continue;
			}
			any = true;
			const double w = 1.0 / state_.sigma2(k);
			prec.noalias() += w * (G.transpose() * G);
			lin.noalias() += w * (G.transpose() * r);
		}
		if (!any) {
			cl.beta_atoms[c] = draw_gaussian_canonical(prior_prec, Eigen::VectorXd::Zero(d), rng_);
			continue;
		}
		cl.beta_atoms[c] = draw_gaussian_canonical(prec, lin, rng_);
		for (int k = 0; k < K_; ++k) {
			for (int j = 0; j < J_; ++j) {
				if (cl.z_beta(k, j) == c) {
					set_pair_curve(k, j, pair_curve(k, j));
				}
			}
		}
	}
}

double ChainSampler::theta_log_prior(const Eigen::VectorXd& theta) const {
	const double tau = ctx_->spec.hyper.tau_theta;
	return tau * theta.sum() - 0.5 * state_.lambda_theta * theta.dot(ctx_->theta_precision * theta);
}

double ChainSampler::log_normconst(double lambda_theta) const {
	const Eigen::Index m = ctx_->theta_dim();
	const Eigen::VectorXd gamma = Eigen::VectorXd::Constant(m, ctx_->spec.hyper.tau_theta);
	return fb_log_normconst(gamma, 0.5 * lambda_theta * ctx_->theta_precision);
}

Eigen::VectorXd ChainSampler::draw_theta_prior() {
	return sample_bingham(0.5 * state_.lambda_theta * ctx_->theta_precision, ctx_->spec.hyper.tau_theta, rng_, polar());
}

double ChainSampler::theta_member_loglik(const std::vector<std::pair<int, int>>& members, const Eigen::VectorXd& theta,
                                         const std::vector<Eigen::VectorXd>& partial) const {
	const ClusterState& cl = state_.cluster;
	double total = 0.0;
	std::vector<Eigen::VectorXd> fit(K_);
	for (const auto& [k, j] : members) {
		const Eigen::VectorXd f = ctx_->curve(j, cl.beta_atoms[cl.z_beta(k, j)], theta);
		if (fit[k].size() == 0) {
			fit[k] = f;
		} else {
			fit[k] += f;
		}
	}
	for (int k = 0; k < K_; ++k) {
		if (fit[k].size() > 0) {
			total += -0.5 / state_.sigma2(k) * (partial[k] - fit[k]).squaredNorm();
		}
	}
	return total;
}

void ChainSampler::update_theta_polar(int c, const std::vector<std::pair<int, int>>& members) {
	ClusterState& cl = state_.cluster;
	const HyperParams& hp = ctx_->spec.hyper;
	std::vector<Eigen::VectorXd> partial(K_);
	for (const auto& [k, j] : members) {
		if (partial[k].size() == 0) {
			partial[k] = E_.col(k);
		}
		partial[k] += F_.col(col(k, j));
	}
	const Eigen::Index m = cl.theta_atoms[c].size();
	if (m == 1) {
		cl.theta_atoms[c] = Eigen::VectorXd::Ones(1);
		return;
	}
	const double edge = 0.5 * std::numbers::pi - 1e-12;
	Eigen::VectorXd phi = unit_to_polar(cl.theta_atoms[c]).cwiseMax(-edge).cwiseMin(edge);
	auto log_target = [&](const Eigen::VectorXd& ph) {
		const Eigen::VectorXd th = polar_to_unit(ph);
		return theta_log_prior(th) + theta_member_loglik(members, th, partial) + polar_log_jacobian(ph);
	};
	double current = log_target(phi);
	const double a = hp.angle_proposal_shape;
	auto to_unit = [](double p) { return std::clamp((p + 0.5 * std::numbers::pi) / std::numbers::pi, 1e-12, 1.0 - 1e-12); };
	auto shape_b = [a](double s) { return ((1.0 - s) * a + 2.0 * s - 1.0) / s; };
	auto log_q = [a](double s_to, double b) {
		return (a - 1.0) * std::log(s_to) + (b - 1.0) * std::log1p(-s_to) - (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
	};
	for (Eigen::Index l = 0; l < m - 1; ++l) {
		if (ctx_->spec.stick_update == StickUpdate::grid) {
			const int G = hp.gridsize;
			const double jitter = rng_.uniform();
			Eigen::VectorXd nodes(G);
			Eigen::VectorXd lw(G);
			Eigen::VectorXd trial = phi;
			for (int g = 0; g < G; ++g) {
				nodes(g) = std::clamp(-0.5 * std::numbers::pi + std::numbers::pi * (g + jitter) / G, -edge, edge);
				trial(l) = nodes(g);
				lw(g) = log_target(trial);
			}
			const Eigen::Index pick = rng_.categorical_log(lw);
			phi(l) = nodes(pick);
			current = lw(pick);
			count("theta_angle", true);
			continue;
		}
		const double s = to_unit(phi(l));
		const double b_fwd = shape_b(s);
		const double s_new = std::clamp(rng_.beta(a, b_fwd), 1e-12, 1.0 - 1e-12);
		const double b_rev = shape_b(s_new);
		Eigen::VectorXd trial = phi;
		trial(l) = std::clamp(std::numbers::pi * s_new - 0.5 * std::numbers::pi, -edge, edge);
		const double proposed = log_target(trial);
		const double log_ratio = proposed - current + log_q(s, b_rev) - log_q(s_new, b_fwd);
		const bool ok = std::log(rng_.uniform()) < log_ratio;
		if (ok) {
			phi = trial;
			current = proposed;
		}
		count("theta_angle", ok);
	}
	cl.theta_atoms[c] = polar_to_unit(phi);
}

void ChainSampler::update_theta_fb(int c, const std::vector<std::pair<int, int>>& members) {
	ClusterState& cl = state_.cluster;
	const HyperParams& hp = ctx_->spec.hyper;
	const Eigen::VectorXd& base = cl.theta_atoms[c];
	const Eigen::Index m = base.size();
	const Eigen::Index n = ctx_->n();
	std::vector<Eigen::VectorXd> yhat(K_);
	std::vector<Eigen::MatrixXd> xhat(K_);
	for (const auto& [k, j] : members) {
		if (yhat[k].size() == 0) {
			yhat[k] = E_.col(k);
			xhat[k] = Eigen::MatrixXd::Zero(n, m);
		}
		const Eigen::VectorXd u = ctx_->x_tilde[j] * base;
		const Eigen::VectorXd& beta = cl.beta_atoms[cl.z_beta(k, j)];
		const Eigen::VectorXd f = ctx_->basis.curve(u, beta);
		const Eigen::VectorXd df = ctx_->basis.curve_derivative(u, beta);
		yhat[k] += F_.col(col(k, j)) - f + df.cwiseProduct(u);
		xhat[k].noalias() += df.asDiagonal() * ctx_->x_tilde[j];
	}
	Eigen::MatrixXd prec = state_.lambda_theta * ctx_->theta_precision;
	Eigen::VectorXd eta = Eigen::VectorXd::Constant(m, hp.tau_theta);
	for (int k = 0; k < K_; ++k) {
		if (yhat[k].size() == 0) {
			continue;
		}
		const double w = 1.0 / state_.sigma2(k);
		prec.noalias() += w * (xhat[k].transpose() * xhat[k]);
		eta.noalias() += w * (xhat[k].transpose() * yhat[k]);
	}
	Eigen::VectorXd draw = draw_gaussian_canonical(prec, eta, rng_);
	const double norm = draw.norm();
	if (!(norm > 0.0) || !std::isfinite(norm)) {
		spdlog::warn("theta projection produced a degenerate draw; keeping the current value");
		return;
	}
	cl.theta_atoms[c] = draw / norm;
}

void ChainSampler::step_theta_atoms() {
	if (opt_.freeze.theta_atoms || !has_theta()) {
		return;
	}
	ClusterState& cl = state_.cluster;
	for (int c = 0; c < C_; ++c) {
		++theta_calls_;
		std::vector<std::pair<int, int>> members;
		for (int k = 0; k < K_; ++k) {
			for (int j = 0; j < J_; ++j) {
				if (cl.z_theta(k, j) == c) {
					members.emplace_back(k, j);
				}
			}
		}
		if (members.empty()) {
			cl.theta_atoms[c] = draw_theta_prior();
			continue;
		}
		if (polar()) {
			update_theta_polar(c, members);
		} else {
			update_theta_fb(c, members);
		}
		for (const auto& [k, j] : members) {
			set_pair_curve(k, j, pair_curve(k, j));
		}
	}
}

void ChainSampler::step_concentrations() {
	if (opt_.freeze.concentrations || !ctx_->spec.clustering) {
		return;
	}
	update_concentrations(state_.cluster, ctx_->spec.hyper, rng_, has_theta());
}

void ChainSampler::step_rho() {
	if (opt_.freeze.rho || !ctx_->spec.clustering || !has_theta()) {
		return;
	}
	count("rho", update_rho(state_.cluster, ctx_->spec.hyper, rng_));
}

void ChainSampler::step_lambda_beta() {
	if (opt_.freeze.lambda_beta) {
		return;
	}
	const HyperParams& hp = ctx_->spec.hyper;
	const int rank = ctx_->beta_penalty_rank;
	auto [shape, rate] = lambda_beta_conditional(state_.cluster.beta_atoms, ctx_->beta_penalty, rank, hp);
	const double prop = rng_.gamma(shape, rate);
	const double eps = hp.null_ridge;
	auto w = [&](double lam) {
		if (eps == 0.0) {
			return 0.0;
		}
		const double logdet = (lam * ctx_->beta_penalty_eigs.array() + eps).log().sum();
		return 0.5 * C_ * (logdet - rank * std::log(lam));
	};
	const bool ok = !(prop > 0.0) ? false : std::log(rng_.uniform()) < w(prop) - w(state_.lambda_beta);
	if (ok) {
		state_.lambda_beta = prop;
	}
	count("lambda_beta", ok);
}

void ChainSampler::step_lambda_theta() {
	if (opt_.freeze.lambda_theta || !has_theta()) {
		return;
	}
	const HyperParams& hp = ctx_->spec.hyper;
	double quad = 0.0;
	for (const auto& t : state_.cluster.theta_atoms) {
		quad += t.dot(ctx_->theta_precision * t);
	}
	auto log_target = [&](double lam, double log_c0) {
		return hp.a_lambda_theta * std::log(lam) - hp.b_lambda_theta * lam - C_ * log_c0 - 0.5 * lam * quad;
	};
	const double prop = state_.lambda_theta * std::exp(hp.rw_sd * rng_.normal());
	double log_c0_prop = 0.0;
	try {
		log_c0_prop = log_normconst(prop);
	} catch (const std::exception& ex) {
		spdlog::warn("normalizing-constant approximation failed at lambda_theta={}: {}", prop, ex.what());
		count("lambda_theta", false);
		return;
	}
	const bool ok = std::isfinite(log_c0_prop) &&
	                std::log(rng_.uniform()) < log_target(prop, log_c0_prop) - log_target(state_.lambda_theta, log_c0_);
	if (ok) {
		state_.lambda_theta = prop;
		log_c0_ = log_c0_prop;
	}
	count("lambda_theta", ok);
}

Eigen::MatrixXd ChainSampler::fixed_effect_columns() const {
	const ClusterState& cl = state_.cluster;
	std::vector<Eigen::MatrixXd> blocks;
	Eigen::Index width = 1 + ctx_->Z.cols();
	if (has_theta()) {
		std::vector<std::pair<int, int>> seen;
		for (int k = 0; k < K_; ++k) {
			for (int j = 0; j < J_; ++j) {
				const std::pair<int, int> key{j, cl.z_theta(k, j)};
				if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
					continue;
				}
				seen.push_back(key);
				blocks.push_back(ctx_->design(j, cl.theta_atoms[key.second]));
				width += blocks.back().cols();
			}
		}
	} else {
		for (int j = 0; j < J_; ++j) {
			blocks.push_back(ctx_->fixed_designs[j]);
			width += blocks.back().cols();
		}
	}
	Eigen::MatrixXd M(ctx_->n(), width);
	M.col(0).setOnes();
	Eigen::Index at = 1;
	for (const auto& b : blocks) {
		M.middleCols(at, b.cols()) = b;
		at += b.cols();
	}
	if (ctx_->Z.cols() > 0) {
		M.rightCols(ctx_->Z.cols()) = ctx_->Z;
	}
	return M;
}

double ChainSampler::kriging_residual() const {
	return (fixed_effect_columns().transpose() * state_.u).cwiseAbs().maxCoeff();
}

void ChainSampler::step_random_effects() {
	if (opt_.freeze.random_effects) {
		return;
	}
	const Eigen::Index n = ctx_->n();
	const double xi = state_.xi;
	const double v = 1.0 / (1.0 + K_ * xi * xi);
	Eigen::VectorXd lin = Eigen::VectorXd::Zero(n);
	for (int k = 0; k < K_; ++k) {
		const double sd = std::sqrt(state_.sigma2(k));
		const Eigen::VectorXd r = E_.col(k) + xi * sd * state_.u;
		lin += (xi / sd) * r;
	}
	Eigen::VectorXd u = v * lin + std::sqrt(v) * rng_.normal_vector(n);
	if (ctx_->spec.orthogonalize_random_effects) {
		const Eigen::MatrixXd M = fixed_effect_columns();
		Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
		const Eigen::Index rank = qr.rank();
		const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, rank);
		u -= Q * (Q.transpose() * u);
	}
	for (int k = 0; k < K_; ++k) {
		const double sd = std::sqrt(state_.sigma2(k));
		E_.col(k) += xi * sd * (state_.u - u);
	}
	state_.u = u;
}

void ChainSampler::step_xi() {
	if (opt_.freeze.xi) {
		return;
	}
	const HyperParams& hp = ctx_->spec.hyper;
	std::vector<Eigen::VectorXd> base(K_);
	for (int k = 0; k < K_; ++k) {
		base[k] = E_.col(k) + state_.xi * std::sqrt(state_.sigma2(k)) * state_.u;
	}
	auto log_target = [&](double xi) {
		double ll = 0.0;
		for (int k = 0; k < K_; ++k) {
			ll += -0.5 / state_.sigma2(k) * (base[k] - xi * std::sqrt(state_.sigma2(k)) * state_.u).squaredNorm();
		}
		return ll - (hp.a_xi + 1.0) * std::log(xi) - hp.b_xi / xi + std::log(xi);
	};
	const double prop = state_.xi * std::exp(hp.rw_sd * rng_.normal());
	const bool ok = prop > 0.0 && std::isfinite(prop) &&
	                std::log(rng_.uniform()) < log_target(prop) - log_target(state_.xi);
	if (ok) {
		state_.xi = prop;
		for (int k = 0; k < K_; ++k) {
			E_.col(k) = base[k] - prop * std::sqrt(state_.sigma2(k)) * state_.u;
		}
	}
	count("xi", ok);
}

void ChainSampler::step_sigma2() {
	if (opt_.freeze.sigma2) {
		return;
	}
	const HyperParams& hp = ctx_->spec.hyper;
	const double n = static_cast<double>(ctx_->n());
	for (int k = 0; k < K_; ++k) {
		const Eigen::VectorXd base = E_.col(k) + state_.xi * std::sqrt(state_.sigma2(k)) * state_.u;
		auto log_target = [&](double s2) {
			const double ssr = (base - state_.xi * std::sqrt(s2) * state_.u).squaredNorm();
			return -(hp.a_sigma + 1.0) * std::log(s2) - hp.b_sigma / s2 - 0.5 * n * std::log(s2) - 0.5 * ssr / s2 +
			       std::log(s2);
		};
		const double cur = state_.sigma2(k);
		const double prop = cur * std::exp(hp.rw_sd * rng_.normal());
		const bool ok = prop > 0.0 && std::isfinite(prop) && std::log(rng_.uniform()) < log_target(prop) - log_target(cur);
		if (ok) {
			state_.sigma2(k) = prop;
			E_.col(k) = base - state_.xi * std::sqrt(prop) * state_.u;
		}
		count("sigma2", ok);
	}
}

void ChainSampler::step_fixed_effects() {
	if (opt_.freeze.fixed_effects) {
		return;
	}
	const Eigen::Index n = ctx_->n();
	const Eigen::MatrixXd& Z = ctx_->Z;
	for (int k = 0; k < K_; ++k) {
		const double sd = std::sqrt(state_.sigma2(k));
		// residual with the intercept added back
		Eigen::VectorXd r = E_.col(k).array() + state_.beta0(k);
		const double b0 = r.mean() + sd / std::sqrt(static_cast<double>(n)) * rng_.normal();
		E_.col(k) = r.array() - b0;
		state_.beta0(k) = b0;
		if (Z.cols() > 0) {
			Eigen::VectorXd rz = E_.col(k) + Z * state_.betaZ.row(k).transpose();
			const Eigen::VectorXd mean = ztz_.solve(Z.transpose() * rz);
			const Eigen::VectorXd draw = mean + sd * (ztz_inv_llt_ * rng_.normal_vector(Z.cols()));
			state_.betaZ.row(k) = draw.transpose();
			E_.col(k) = rz - Z * draw;
		}
	}
}

Eigen::MatrixXd ChainSampler::simulate_outcomes() {
	const Eigen::Index n = ctx_->n();
	Eigen::MatrixXd Y(n, K_);
	for (int k = 0; k < K_; ++k) {
		const double sd = std::sqrt(state_.sigma2(k));
		Eigen::VectorXd mean = fixed_part(k) + state_.xi * sd * state_.u;
		for (int j = 0; j < J_; ++j) {
			mean += F_.col(col(k, j));
		}
		Y.col(k) = mean + sd * rng_.normal_vector(n);
	}
	return Y;
}

Eigen::MatrixXd ChainSampler::pointwise_loglik() const {
	Eigen::MatrixXd ll(ctx_->n(), K_);
	for (int k = 0; k < K_; ++k) {
		const double s2 = state_.sigma2(k);
		ll.col(k) = -0.5 * std::log(2.0 * std::numbers::pi * s2) - E_.col(k).array().square() / (2.0 * s2);
	}
	return ll;
}

double ChainSampler::log_posterior() const {
	const HyperParams& hp = ctx_->spec.hyper;
	const ClusterState& cl = state_.cluster;
	double lp = pointwise_loglik().sum();
	auto log_gamma = [](double x, double a, double b) { return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(x) - b * x; };
	auto log_invgamma = [](double x, double a, double b) {
		return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
	};
	if (ctx_->spec.clustering) {
		for (Which w : {Which::beta, Which::theta}) {
			if (w == Which::theta && !has_theta()) {
				continue;
			}
			const Eigen::VectorXd& v = cl.sticks(w);
			const double alpha = cl.alpha(w);
			for (int c = 0; c + 1 < C_; ++c) {
				lp += std::log(alpha) + (alpha - 1.0) * std::log1p(-std::min(v(c), 1.0 - 1e-12));
			}
		}
		lp += log_gamma(cl.alpha_beta, hp.a_beta, hp.b_beta);
		if (has_theta()) {
			lp += log_gamma(cl.alpha_theta, hp.a_theta, hp.b_theta);
			lp += log_gamma(cl.rho, hp.a_rho, hp.b_rho);
		}
		lp += log_indicator_prob(cl.z_beta, cl.z_theta, stick_weights(cl.v_beta), stick_weights(cl.v_theta), cl.rho);
	}
	Eigen::MatrixXd prec = state_.lambda_beta * ctx_->beta_penalty;
	prec.diagonal().array() += hp.null_ridge;
	const double logdet = (state_.lambda_beta * ctx_->beta_penalty_eigs.array() + hp.null_ridge).log().sum();
	for (const auto& b : cl.beta_atoms) {
		lp += 0.5 * logdet - 0.5 * b.dot(prec * b) - 0.5 * b.size() * std::log(2.0 * std::numbers::pi);
	}
	lp += log_gamma(state_.lambda_beta, hp.a_lambda_beta, hp.b_lambda_beta);
	if (has_theta()) {
		for (const auto& t : cl.theta_atoms) {
			lp += theta_log_prior(t) - log_c0_;
		}
		lp += log_gamma(state_.lambda_theta, hp.a_lambda_theta, hp.b_lambda_theta);
	}
	lp += -0.5 * state_.u.squaredNorm() - 0.5 * state_.u.size() * std::log(2.0 * std::numbers::pi);
	lp += log_invgamma(state_.xi, hp.a_xi, hp.b_xi);
	for (int k = 0; k < K_; ++k) {
		lp += log_invgamma(state_.sigma2(k), hp.a_sigma, hp.b_sigma);
	}
	return lp;
}

void ChainSampler::check_invariants() const {
	state_.cluster.check_invariants(1e-10);
	if (has_theta() && polar()) {
		for (const auto& t : state_.cluster.theta_atoms) {
			if (t(t.size() - 1) < 0.0) {
				throw std::logic_error("polar sign invariant violated");
			}
		}
	}
	if ((state_.sigma2.array() <= 0.0).any() || !(state_.xi > 0.0) || !(state_.lambda_beta > 0.0) ||
	    !(state_.lambda_theta > 0.0)) {
		throw std::logic_error("variance or penalty parameter left the positive half-line");
	}
}

ChainOutput run_chain(std::shared_ptr<const ModelContext> ctx, const Eigen::MatrixXd& Y, const ChainControl& control,
                      SamplerOptions options) {
	if (control.n_iter < 0 || control.burn_in < 0 || control.burn_in > control.n_iter || control.thin < 1) {
		throw std::invalid_argument("need 0 <= burn_in <= n_iter and thin >= 1");
	}
	ChainOutput out;
	out.context = ctx;
	out.meta = {control.seed, control.n_iter, control.burn_in, control.thin, spec_hash(ctx->spec)};
	ChainSampler sampler(ctx, Y, control.seed, options);
	const long keep = (control.n_iter - control.burn_in) / control.thin;
	out.draws.reserve(static_cast<std::size_t>(keep));
	for (long it = 0; it < control.n_iter; ++it) {
		try {
			sampler.sweep();
		} catch (const std::exception& ex) {
			const ParamState& s = sampler.state();
			spdlog::error("sweep {} failed: {} (lambda_beta={}, lambda_theta={}, xi={}, rho={})", it + 1, ex.what(),
			              s.lambda_beta, s.lambda_theta, s.xi, s.cluster.rho);
			throw;
		}
		const long after = it - control.burn_in + 1;
		if (after > 0 && after % control.thin == 0) {
			ParamState snap = sampler.state();
			if (!control.keep_random_effects) {
				snap.u.resize(0);
			}
			out.draws.push_back(std::move(snap));
			out.loglik.push_back(sampler.pointwise_loglik());
			out.log_posterior.push_back(sampler.log_posterior());
		}
	}
	out.acceptance = sampler.acceptance();
	return out;
}

ChainOutput run_chain(const ModelSpec& spec, const Dataset& data, const ChainControl& control, SamplerOptions options) {
	data.validate();
	if (data.Y.cols() != spec.n_outcomes) {
		throw std::invalid_argument("dataset outcome count differs from the spec");
	}
	return run_chain(prepare_model(spec, data.Xstar, data.Z), data.Y, control, options);
}

} // namespace mixborrow
