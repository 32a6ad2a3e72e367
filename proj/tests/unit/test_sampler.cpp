#include <doctest.h>

#include <random>

#include "mixborrow/sampler.hpp"
#include "mixborrow/simulate.hpp"
#include "mixborrow/splines.hpp"
#include "stats.hpp"

using namespace mixborrow;

namespace {

struct Fixture {
	ModelSpec spec;
	Dataset data;
	std::shared_ptr<const ModelContext> ctx;
};

Fixture small_dlnm(int K, int P, int L, int n, std::uint64_t seed, int C = 0) {
	Fixture f;
	SimResult sim = gen_sim_a(n, seed, P, L);
	f.data = sim.data;
	f.data.Y = sim.data.Y.leftCols(K).eval();
	f.data.outcome_names.resize(K);
	f.spec = build_dlnm_spec(P, L, 0, K);
	if (C > 0) f.spec.truncation = C;
	f.ctx = prepare_model(f.spec, f.data.Xstar, f.data.Z);
	return f;
}

FreezeMask freeze_all() {
	FreezeMask m;
	m.indicators = m.sticks = m.beta_atoms = m.theta_atoms = m.concentrations = m.rho = true;
	m.lambda_beta = m.lambda_theta = m.random_effects = m.xi = m.sigma2 = m.fixed_effects = true;
	return m;
}

Eigen::VectorXd fitted_curves(const ChainSampler& s, int k) {
	Eigen::VectorXd f = Eigen::VectorXd::Zero(s.context().n());
	for (int j = 0; j < s.context().spec.n_indices; ++j) f += s.component(k, j);
	return f;
}

} // namespace

TEST_SUITE("sampler") {

TEST_CASE("lambda_beta conditional") {
	HyperParams h;
	const std::vector<Eigen::VectorXd> zero(3, Eigen::VectorXd::Zero(4));
	auto [s0, r0] = lambda_beta_conditional(zero, Eigen::MatrixXd::Identity(4, 4), 4, h);
	CHECK(s0 == 1.0 + 3.0 * 4.0 / 2.0);
	CHECK(r0 == 1.0);
	const std::vector<Eigen::VectorXd> one{Eigen::VectorXd::Ones(2)};
	auto [s1, r1] = lambda_beta_conditional(one, Eigen::MatrixXd::Identity(2, 2), 2, h);
	CHECK(s1 == 2.0);
	CHECK(r1 == 2.0);

	Eigen::VectorXd eig(4);
	eig << -1e-14, 1e-13, 0.5, 3.0;
	CHECK(psd_rank(eig) == 2);
}

TEST_CASE("empty cluster atoms are prior draws") {
	Fixture f = small_dlnm(1, 2, 4, 40, 3, 3);
	SamplerOptions opt;
	opt.freeze = freeze_all();
	opt.freeze.beta_atoms = false;
	ChainSampler s(f.ctx, f.data.Y, 5, opt);
	REQUIRE(s.state().cluster.z_beta(0, 0) == 0);
	REQUIRE(s.state().cluster.z_beta(0, 1) == 1);
	ParamState st = s.state();
	st.lambda_beta = 2.5;
	s.set_state(st);

	Eigen::MatrixXd prec = 2.5 * f.ctx->beta_penalty;
	prec.diagonal().array() += f.spec.hyper.null_ridge;
	const Eigen::MatrixXd U = Eigen::LLT<Eigen::MatrixXd>(prec).matrixU();
	const int d = f.ctx->beta_dim();
	const int draws = 20000;
	std::vector<std::vector<double>> w(d);
	std::vector<double> cross;
	for (int r = 0; r < draws; ++r) {
		s.step_beta_atoms();
		const Eigen::VectorXd z = U * s.state().cluster.beta_atoms[2];
		for (int a = 0; a < d; ++a) w[a].push_back(z(a));
		cross.push_back(z(0) * z(d - 1));
	}
	for (int a = 0; a < d; ++a) {
		CHECK(std::abs(testing::mean(w[a])) < 3.0 * testing::iid_se(w[a]));
		const auto sq = testing::squares(w[a]);
		CHECK(std::abs(testing::mean(sq) - 1.0) < 3.0 * testing::iid_se(sq));
	}
	CHECK(std::abs(testing::mean(cross)) < 3.0 * testing::iid_se(cross));
}

TEST_CASE("single cluster beta update matches the conjugate posterior") {
	Fixture f = small_dlnm(1, 1, 4, 100, 4, 1);
	SamplerOptions opt;
	opt.freeze = freeze_all();
	opt.freeze.beta_atoms = false;
	ChainSampler s(f.ctx, f.data.Y, 6, opt);
	ParamState st = s.state();
	st.xi = 0.0;
	st.sigma2(0) = 0.8;
	st.lambda_beta = 3.0;
	s.set_state(st);

	const Eigen::MatrixXd B = f.ctx->design(0, st.cluster.theta_atoms[0]);
	const Eigen::VectorXd r = f.data.Y.col(0).array() - st.beta0(0);
	Eigen::MatrixXd P = 3.0 * f.ctx->beta_penalty + B.transpose() * B / 0.8;
	P.diagonal().array() += f.spec.hyper.null_ridge;
	const Eigen::VectorXd mean = P.ldlt().solve(B.transpose() * r / 0.8);
	const Eigen::MatrixXd cov = P.inverse();

	const int d = f.ctx->beta_dim();
	const int draws = 20000;
	Eigen::MatrixXd sample(draws, d);
	for (int i = 0; i < draws; ++i) {
		s.step_beta_atoms();
		sample.row(i) = s.state().cluster.beta_atoms[0].transpose();
	}
	const Eigen::VectorXd m = sample.colwise().mean();
	for (int a = 0; a < d; ++a) CHECK(std::abs(m(a) - mean(a)) < 4.0 * std::sqrt(cov(a, a) / draws));
	const Eigen::MatrixXd centered = sample.rowwise() - m.transpose();
	const Eigen::MatrixXd scov = centered.transpose() * centered / (draws - 1.0);
	CHECK((scov - cov).norm() / cov.norm() < 0.05);
}

TEST_CASE("random effects") {
	Fixture f = small_dlnm(1, 2, 4, 30, 5);
	SamplerOptions opt;
	opt.freeze = freeze_all();
	opt.freeze.random_effects = false;
	SUBCASE("no coupling gives the standard normal prior") {
		ChainSampler s(f.ctx, f.data.Y, 7, opt);
		ParamState st = s.state();
		st.xi = 0.0;
		s.set_state(st);
		std::vector<double> u0;
		for (int r = 0; r < 20000; ++r) {
			s.step_random_effects();
			u0.push_back(s.state().u(3));
		}
		CHECK(std::abs(testing::mean(u0)) < 3.0 * testing::iid_se(u0));
		const auto sq = testing::squares(u0);
		CHECK(std::abs(testing::mean(sq) - 1.0) < 3.0 * testing::iid_se(sq));
	}
	SUBCASE("scalar conjugate update") {
		ChainSampler s(f.ctx, f.data.Y, 8, opt);
		ParamState st = s.state();
		st.xi = 1.0;
		st.sigma2(0) = 1.0;
		s.set_state(st);
		const Eigen::VectorXd r = f.data.Y.col(0).array() - st.beta0(0) - fitted_curves(s, 0).array();
		std::vector<double> u;
		for (int i = 0; i < 20000; ++i) {
			s.step_random_effects();
			u.push_back(s.state().u(0));
		}
		CHECK(std::abs(testing::mean(u) - r(0) / 2.0) < 3.0 * testing::iid_se(u));
		CHECK(testing::variance(u) == doctest::Approx(0.5).epsilon(0.04));
	}
	SUBCASE("orthogonalized draws") {
		Fixture g = f;
		g.spec.orthogonalize_random_effects = true;
		g.ctx = prepare_model(g.spec, g.data.Xstar, g.data.Z);
		ChainSampler s(g.ctx, g.data.Y, 9);
		for (int r = 0; r < 50; ++r) {
			s.sweep();
			CHECK(s.kriging_residual() < 1e-10);
		}
	}
}

TEST_CASE("xi samples its prior when the random effects vanish") {
	Fixture f = small_dlnm(2, 2, 4, 30, 6);
	f.spec.hyper.a_xi = 6.0;
	f.spec.hyper.b_xi = 5.0;
	f.ctx = prepare_model(f.spec, f.data.Xstar, f.data.Z);
	SamplerOptions opt;
	opt.freeze = freeze_all();
	opt.freeze.xi = false;
	ChainSampler s(f.ctx, f.data.Y, 10, opt);
	std::vector<double> xi;
	for (int r = 0; r < 100000; ++r) {
		s.step_xi();
		xi.push_back(s.state().xi);
	}
	CHECK(std::abs(testing::mean(xi) - 1.0) < 3.0 * testing::batch_se(xi));
	const auto sq = testing::squares(xi);
	CHECK(std::abs(testing::mean(sq) - 1.25) < 3.0 * testing::batch_se(sq));
	const double rate = s.acceptance().at("xi").rate();
	CHECK(rate > 0.1);
	CHECK(rate < 0.9);
}

TEST_CASE("sigma2 matches the conjugate inverse gamma without coupling") {
	Fixture f = small_dlnm(1, 2, 4, 40, 7);
	f.spec.hyper.a_sigma = 3.0;
	f.spec.hyper.b_sigma = 2.0;
	f.ctx = prepare_model(f.spec, f.data.Xstar, f.data.Z);
	SamplerOptions opt;
	opt.freeze = freeze_all();
	opt.freeze.sigma2 = false;
	ChainSampler s(f.ctx, f.data.Y, 11, opt);
	ParamState st = s.state();
	st.xi = 0.0;
	s.set_state(st);
	const double ssr = (f.data.Y.col(0).array() - st.beta0(0) - fitted_curves(s, 0).array()).square().sum();
	const double a = 3.0 + 20.0, b = 2.0 + 0.5 * ssr;
	std::vector<double> s2;
	for (int r = 0; r < 100000; ++r) {
		s.step_sigma2();
		s2.push_back(s.state().sigma2(0));
	}
	const double mean = b / (a - 1.0);
	const double second = b * b / ((a - 1.0) * (a - 2.0));
	CHECK(std::abs(testing::mean(s2) - mean) < 3.0 * testing::batch_se(s2));
	const auto sq = testing::squares(s2);
	CHECK(std::abs(testing::mean(sq) - second) < 3.0 * testing::batch_se(sq));
}

TEST_CASE("fixed effects") {
	SUBCASE("intercept only with zero residuals") {
		Fixture f = small_dlnm(1, 2, 4, 25, 8);
		SamplerOptions opt;
		opt.freeze = freeze_all();
		opt.freeze.fixed_effects = false;
		ChainSampler s(f.ctx, f.data.Y, 12, opt);
		ParamState st = s.state();
		st.xi = 0.0;
		st.sigma2(0) = 2.0;
		s.set_state(st);
		s.set_outcomes(fitted_curves(s, 0));
		std::vector<double> b0;
		for (int r = 0; r < 20000; ++r) {
			s.step_fixed_effects();
			b0.push_back(s.state().beta0(0));
		}
		CHECK(std::abs(testing::mean(b0)) < 3.0 * testing::iid_se(b0));
		CHECK(testing::variance(b0) == doctest::Approx(2.0 / 25.0).epsilon(0.04));
	}
	SUBCASE("least squares oracle for covariates") {
		Fixture f = small_dlnm(1, 2, 4, 50, 9);
		std::mt19937_64 gen(1);
		std::normal_distribution<double> N;
		Eigen::MatrixXd Z(50, 3);
		for (auto& v : Z.reshaped()) v = N(gen);
		Z = Z.rowwise() - Z.colwise().mean();
		auto ctx = prepare_model(f.spec, f.data.Xstar, Z);
		SamplerOptions opt;
		opt.freeze = freeze_all();
		opt.freeze.fixed_effects = false;
		ChainSampler s(ctx, f.data.Y, 13, opt);
		ParamState st = s.state();
		st.xi = 0.0;
		st.sigma2(0) = 1e-24;
		s.set_state(st);
		s.step_fixed_effects();
		const Eigen::VectorXd target = f.data.Y.col(0) - fitted_curves(s, 0);
		Eigen::MatrixXd D(50, 4);
		D.col(0).setOnes();
		D.rightCols(3) = Z;
		const Eigen::VectorXd ls = D.colPivHouseholderQr().solve(target);
		CHECK(std::abs(s.state().beta0(0) - ls(0)) < 1e-10);
		CHECK((s.state().betaZ.row(0).transpose() - ls.tail(3)).cwiseAbs().maxCoeff() < 1e-10);

		Eigen::MatrixXd coll = Z;
		coll.col(2) = 2.0 * Z.col(0);
		CHECK_THROWS_AS(ChainSampler(prepare_model(f.spec, f.data.Xstar, coll), f.data.Y, 1), std::invalid_argument);
	}
}

TEST_CASE("lambda updates") {
	SUBCASE("lambda_beta long-run mean without the null ridge") {
		Fixture f = small_dlnm(1, 2, 4, 30, 10, 2);
		f.spec.hyper.null_ridge = 0.0;
		f.ctx = prepare_model(f.spec, f.data.Xstar, f.data.Z);
		SamplerOptions opt;
		opt.freeze = freeze_all();
		opt.freeze.lambda_beta = false;
		ChainSampler s(f.ctx, f.data.Y, 14, opt);
		ParamState st = s.state();
		for (auto& b : st.cluster.beta_atoms) b = Eigen::VectorXd::LinSpaced(b.size(), -0.5, 0.8);
		s.set_state(st);
		double quad = 0.0;
		for (const auto& b : st.cluster.beta_atoms) quad += b.dot(f.ctx->beta_penalty * b);
		const double shape = 1.0 + 0.5 * 2.0 * f.ctx->beta_penalty_rank;
		const double rate = 1.0 + 0.5 * quad;
		std::vector<double> lam;
		for (int r = 0; r < 30000; ++r) {
			s.step_lambda_beta();
			lam.push_back(s.state().lambda_beta);
		}
		CHECK(std::abs(testing::mean(lam) - shape / rate) < 3.0 * testing::iid_se(lam));
		CHECK(s.acceptance().at("lambda_beta").rate() == 1.0);
	}
	SUBCASE("lambda_theta samples its prior under a null lag precision") {
		Fixture f = small_dlnm(1, 2, 4, 30, 11);
		f.spec.hyper.a_lambda_theta = 3.0;
		f.spec.hyper.b_lambda_theta = 2.0;
		auto ctx = std::make_shared<ModelContext>(*prepare_model(f.spec, f.data.Xstar, f.data.Z));
		ctx->theta_precision.setZero();
		SamplerOptions opt;
		opt.freeze = freeze_all();
		opt.freeze.lambda_theta = false;
		ChainSampler s(ctx, f.data.Y, 15, opt);
		std::vector<double> lam;
		for (int r = 0; r < 100000; ++r) {
			s.step_lambda_theta();
			lam.push_back(s.state().lambda_theta);
		}
		CHECK(std::abs(testing::mean(lam) - 1.5) < 3.0 * testing::batch_se(lam));
		const auto sq = testing::squares(lam);
		CHECK(std::abs(testing::mean(sq) - 3.0) < 3.0 * testing::batch_se(sq));
	}
}

TEST_CASE("projection update concentrates on smooth profiles without signal") {
	Fixture f = small_dlnm(1, 1, 6, 60, 12, 1);
	f.spec.theta_method = ThetaMethod::fisher_bingham_projection;
	f.ctx = prepare_model(f.spec, f.data.Xstar, f.data.Z);
	std::mt19937_64 gen(2);
	std::normal_distribution<double> N;
	Eigen::MatrixXd Y(60, 1);
	for (auto& v : Y.reshaped()) v = N(gen);
	SamplerOptions opt;
	opt.freeze = freeze_all();
	opt.freeze.theta_atoms = false;
	ChainSampler s(f.ctx, Y, 16, opt);
	ParamState st = s.state();
	st.lambda_theta = 1e4;
	s.set_state(st);
	const Eigen::MatrixXd D = difference_matrix(6, 2);
	std::vector<double> rough;
	for (int r = 0; r < 500; ++r) {
		s.step_theta_atoms();
		const Eigen::VectorXd& t = s.state().cluster.theta_atoms[0];
		CHECK(std::abs(t.norm() - 1.0) < 1e-10);
		rough.push_back((D * t).norm());
	}
	CHECK(testing::mean(rough) < 0.1);
	CHECK(s.theta_update_calls() > 0);
}

TEST_CASE("chains") {
	Fixture f = small_dlnm(2, 2, 4, 40, 13);
	SUBCASE("burn-in only gives an empty draw set") {
		const ChainOutput out = run_chain(f.ctx, f.data.Y, ChainControl{5, 5, 1, 3, true});
		CHECK(out.draws.empty());
		CHECK(out.meta.n_iter == 5);
		CHECK(out.meta.spec_hash == spec_hash(f.ctx->spec));
	}
	SUBCASE("draw count and thinning") {
		const ChainOutput out = run_chain(f.ctx, f.data.Y, ChainControl{40, 10, 3, 3, true});
		CHECK(out.draws.size() == 10);
		CHECK(out.loglik.size() == 10);
		for (double lp : out.log_posterior) CHECK(std::isfinite(lp));
	}
	SUBCASE("identical seeds give identical output") {
		const ChainOutput a = run_chain(f.ctx, f.data.Y, ChainControl{60, 20, 2, 21, true});
		const ChainOutput b = run_chain(f.ctx, f.data.Y, ChainControl{60, 20, 2, 21, true});
		REQUIRE(a.draws.size() == b.draws.size());
		CHECK(a.log_posterior == b.log_posterior);
		for (std::size_t i = 0; i < a.draws.size(); ++i) {
			CHECK(a.draws[i].u == b.draws[i].u);
			CHECK(a.draws[i].cluster.beta_atoms == b.draws[i].cluster.beta_atoms);
			CHECK(a.loglik[i] == b.loglik[i]);
		}
		const ChainOutput c = run_chain(f.ctx, f.data.Y, ChainControl{60, 20, 2, 22, true});
		CHECK(a.log_posterior != c.log_posterior);
	}
	SUBCASE("sphere and sign invariants in both weight updates") {
		for (ThetaMethod method : {ThetaMethod::polar, ThetaMethod::fisher_bingham_projection}) {
			ModelSpec spec = f.spec;
			spec.theta_method = method;
			ChainSampler s(prepare_model(spec, f.data.Xstar, f.data.Z), f.data.Y, 17);
			for (int r = 0; r < 200; ++r) {
				s.sweep();
				for (const auto& t : s.state().cluster.theta_atoms) {
					CHECK(std::abs(t.norm() - 1.0) < 1e-10);
					if (method == ThetaMethod::polar) CHECK(t(t.size() - 1) >= 0.0);
				}
				CHECK(std::isfinite(s.log_posterior()));
			}
		}
	}
}

}
