#include <doctest.h>

#include <algorithm>
#include <random>

#include "mixborrow/posterior.hpp"
#include "mixborrow/simulate.hpp"

using namespace mixborrow;

namespace {

ParamState single_draw(const Eigen::VectorXd& beta, const Eigen::VectorXd& theta) {
	ParamState s;
	s.cluster.z_beta = Eigen::MatrixXi::Zero(1, 1);
	s.cluster.z_theta = Eigen::MatrixXi::Zero(1, 1);
	s.cluster.v_beta = Eigen::VectorXd::Ones(1);
	s.cluster.v_theta = Eigen::VectorXd::Ones(1);
	s.cluster.beta_atoms = {beta};
	s.cluster.theta_atoms = {theta};
	s.beta0 = Eigen::VectorXd::Zero(1);
	s.sigma2 = Eigen::VectorXd::Ones(1);
	return s;
}

// Coefficients whose centered spline reproduces u minus a constant.
Eigen::VectorXd linear_coefficients(const ModelContext& ctx) {
	const double R = ctx.index_range;
	const Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(200, -R, R);
	const Eigen::MatrixXd D(ctx.basis.design(u));
	Eigen::MatrixXd A(200, D.cols() + 1);
	A << D, Eigen::VectorXd::Ones(200);
	return A.colPivHouseholderQr().solve(u).head(D.cols());
}

// Single index fit to y = 0.5 x1 + 0.5 x2 + small noise.
const ChainOutput& linear_fit() {
	static const ChainOutput out = [] {
		std::mt19937_64 gen(21);
		std::normal_distribution<double> N;
		const int n = 300;
		Dataset d;
		d.Xstar.resize(n, 2);
		d.Y.resize(n, 1);
		for (int i = 0; i < n; ++i) {
			d.Xstar(i, 0) = N(gen);
			d.Xstar(i, 1) = N(gen);
			d.Y(i, 0) = 0.5 * d.Xstar(i, 0) + 0.5 * d.Xstar(i, 1) + 0.05 * N(gen);
		}
		d.Z.resize(n, 0);
		return run_chain(build_mim_spec(2, 1, 1), d, ChainControl{2000, 1000, 2, 5, false});
	}();
	return out;
}

} // namespace

TEST_SUITE("posterior") {

TEST_CASE("quantiles use linear interpolation") {
	CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 0.5) == 2.5);
	CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 0.0) == 1.0);
	CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 1.0) == 4.0);
	CHECK(quantile({0.0, 10.0}, 0.025) == doctest::Approx(0.25));
	CHECK_THROWS_AS(quantile({}, 0.5), std::invalid_argument);

	std::mt19937_64 gen(1);
	std::normal_distribution<double> N;
	Eigen::MatrixXd draws(300, 7);
	for (auto& v : draws.reshaped()) v = N(gen);
	const CurveSummary s = summarize_columns(draws, Eigen::VectorXd::LinSpaced(7, 0, 1));
	CHECK((s.lower.array() <= s.mean.array()).all());
	CHECK((s.mean.array() <= s.upper.array()).all());
	CHECK_THROWS_AS(summarize_columns(Eigen::MatrixXd(0, 3), Eigen::VectorXd(3)), std::invalid_argument);
}

TEST_CASE("sign alignment") {
	std::vector<Eigen::VectorXd> pos{Eigen::Vector3d(0.6, 0.0, 0.8), Eigen::Vector3d(0.0, 0.6, 0.8)};
	const auto same = align_signs(pos);
	CHECK(same[0] == pos[0]);
	CHECK(same[1] == pos[1]);

	const Eigen::Vector3d v = Eigen::Vector3d(1.0, 2.0, -0.5).normalized();
	std::vector<Eigen::VectorXd> split;
	for (int i = 0; i < 10; ++i) split.push_back(i % 2 ? Eigen::VectorXd(v) : Eigen::VectorXd(-v));
	Eigen::VectorXd raw_mean = Eigen::VectorXd::Zero(3);
	for (const auto& t : split) raw_mean += t / 10.0;
	CHECK(raw_mean.norm() < 1e-12);
	const auto aligned = align_signs(split);
	Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
	for (const auto& t : aligned) mean += t / 10.0;
	CHECK(mean.norm() == doctest::Approx(1.0));
	CHECK(mean(1) > 0.0);
}

TEST_CASE("clustering heatmaps") {
	std::mt19937_64 gen(2);
	std::uniform_int_distribution<int> U(0, 2);
	std::vector<ParamState> draws(100);
	for (auto& d : draws) {
		d.cluster.z_beta.resize(2, 3);
		d.cluster.z_theta.resize(2, 3);
		for (auto& z : d.cluster.z_beta.reshaped()) z = U(gen);
		for (auto& z : d.cluster.z_theta.reshaped()) z = U(gen);
		d.cluster.z_beta(1, 2) = 5;   // never shares an atom
	}
	const ClusterHeatmap h = pairwise_clustering(draws);
	CHECK(h.labels.front() == "k1_j1");
	CHECK(h.labels.back() == "k2_j3");
	CHECK((h.prob_beta.diagonal().array() == 1.0).all());
	CHECK((h.prob_beta - h.prob_beta.transpose()).cwiseAbs().maxCoeff() == 0.0);
	CHECK(h.prob_beta(5, 0) == 0.0);
	for (int a = 0; a < 6; ++a)
		for (int b = 0; b < 6; ++b) {
			int same = 0, same_t = 0;
			for (const auto& d : draws) {
				same += d.cluster.z_beta(a / 3, a % 3) == d.cluster.z_beta(b / 3, b % 3);
				same_t += d.cluster.z_theta(a / 3, a % 3) == d.cluster.z_theta(b / 3, b % 3);
			}
			CHECK(h.prob_beta(a, b) == doctest::Approx(same / 100.0));
			CHECK(h.prob_theta(a, b) == doctest::Approx(same_t / 100.0));
		}
	CHECK_THROWS_AS(pairwise_clustering(std::vector<ParamState>{}), std::invalid_argument);
}

TEST_CASE("WAIC") {
	SUBCASE("identical draws") {
		Eigen::MatrixXd ll(3, 2);
		ll << -1.0, -2.0, -0.5, -0.1, -3.0, -1.5;
		const Waic w = compute_waic({ll, ll, ll});
		CHECK(w.p_waic == doctest::Approx(0.0));
		CHECK(w.waic == doctest::Approx(-2.0 * ll.sum()));
	}
	SUBCASE("zero log densities") {
		const Waic w = compute_waic({Eigen::MatrixXd::Zero(4, 1), Eigen::MatrixXd::Zero(4, 1)});
		CHECK(w.lppd == 0.0);
		CHECK(w.waic == 0.0);
	}
	SUBCASE("reference recomputation and draw order") {
		std::mt19937_64 gen(3);
		std::normal_distribution<double> N(-1.0, 0.7);
		std::vector<Eigen::MatrixXd> ll(50, Eigen::MatrixXd(20, 2));
		for (auto& m : ll)
			for (auto& v : m.reshaped()) v = N(gen);
		double lppd = 0.0, pw = 0.0;
		for (int i = 0; i < 20; ++i)
			for (int k = 0; k < 2; ++k) {
				long double s = 0.0L, m = 0.0L;
				for (const auto& x : ll) {
					s += std::exp(static_cast<long double>(x(i, k)));
					m += x(i, k);
				}
				m /= 50.0L;
				long double v = 0.0L;
				for (const auto& x : ll) v += (x(i, k) - m) * (x(i, k) - m);
				lppd += static_cast<double>(std::log(s / 50.0L));
				pw += static_cast<double>(v / 49.0L);
			}
		const Waic w = compute_waic(ll);
		CHECK(std::abs(w.lppd - lppd) < 1e-10);
		CHECK(std::abs(w.p_waic - pw) < 1e-10);
		CHECK(std::abs(w.waic + 2.0 * (lppd - pw)) < 1e-10);
		std::reverse(ll.begin(), ll.end());
		std::swap(ll[3], ll[17]);
		const Waic r = compute_waic(ll);
		CHECK(std::abs(r.waic - w.waic) < 1e-10);
	}
	CHECK_THROWS_AS(compute_waic({Eigen::MatrixXd::Zero(2, 1)}), std::invalid_argument);
}

TEST_CASE("hand-built distributed lag draw") {
	const int L = 4;
	Dataset d;
	d.Xstar = gen_var_exposures(400, 1, L, 4);
	auto ctx = prepare_model(build_dlnm_spec(1, L, 0, 1), d.Xstar, Eigen::MatrixXd(400, 0));
	ChainOutput chain;
	chain.context = ctx;
	const Eigen::VectorXd theta = Eigen::VectorXd::Constant(L, 1.0 / std::sqrt(double(L)));
	chain.draws = {single_draw(linear_coefficients(*ctx), theta)};

	SUBCASE("lagged contrast of a linear curve with flat weights") {
		for (int l = 0; l < L; ++l) {
			const Eigen::VectorXd col = d.Xstar.col(l);
			const double sd = std::sqrt((col.array() - col.mean()).square().sum() / (col.size() - 1.0));
			const ScalarSummary c = lagged_contrast(chain, 0, 0, l);
			CHECK(c.mean == doctest::Approx(2.0 * sd / std::sqrt(double(L))).epsilon(1e-6));
			CHECK(lagged_contrast(chain, 0, 0, l, 0.3, 0.3).mean == 0.0);
		}
		CHECK_THROWS_AS(lagged_contrast(chain, 0, 1, 0), std::out_of_range);
	}
	SUBCASE("exposure-response curve is zero at the reference") {
		const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(3, -0.5, 0.5);
		const Eigen::MatrixXd e = erf_draws(chain, 0, 0, grid);
		// a row of constant a has index a * sqrt(L); the curve is linear with unit slope
		const double ref = d.Xstar.colwise().mean().sum() / std::sqrt(double(L));
		for (int g = 0; g < 3; ++g) CHECK(e(0, g) == doctest::Approx(grid(g) * std::sqrt(double(L)) - ref).epsilon(1e-6));
		const Eigen::VectorXd too_far = Eigen::VectorXd::Constant(1, 10.0 * ctx->index_range);
		CHECK_THROWS_AS(erf_draws(chain, 0, 0, too_far), std::out_of_range);
		const Eigen::VectorXd g = default_erf_grid(*ctx, 0, 11);
		CHECK(g.size() == 11);
		CHECK_NOTHROW(erf_draws(chain, 0, 0, g));
	}
	SUBCASE("overall effect at the median") {
		Eigen::VectorXd q(3);
		q << 0.25, 0.5, 0.75;
		const CurveSummary s = overall_mixture_effect(chain, 0, q);
		CHECK(s.mean(1) == 0.0);
		CHECK(s.mean(0) < 0.0);
		CHECK(s.mean(2) > 0.0);
	}
	SUBCASE("omega profiles") {
		const Eigen::VectorXd w = omega_estimate(chain, 0, 0);
		CHECK((w - theta).cwiseAbs().maxCoeff() < 1e-15);
	}
	SUBCASE("empty chains") {
		ChainOutput empty;
		empty.context = ctx;
		CHECK_THROWS_AS(erf_summary(empty, 0, 0, Eigen::VectorXd::Zero(2)), std::invalid_argument);
		CHECK_THROWS_AS(lagged_contrast(empty, 0, 0, 0), std::invalid_argument);
	}
}

TEST_CASE("single index fit to a linear truth") {
	const ChainOutput& chain = linear_fit();
	const Eigen::VectorXd grid = default_erf_grid(*chain.context, 0, 21);
	const CurveSummary s = erf_summary(chain, 0, 0, grid);
	CHECK((s.lower.array() <= s.mean.array() + 1e-15).all());
	CHECK((s.mean.array() <= s.upper.array() + 1e-15).all());
	// truth: f(a, a) - f(mean) = a - mean(x1 + x2) / 2
	const Eigen::VectorXd centered = grid.array() - grid.mean();
	const double slope = centered.dot(s.mean) / centered.squaredNorm();
	CHECK(slope == doctest::Approx(1.0).epsilon(0.05));
	const Eigen::VectorXd width = s.upper - s.lower;
	CHECK(width(0) > width(10));
	CHECK(width(20) > width(10));

	const Eigen::MatrixXd before = erf_draws(chain, 0, 0, grid);
	omega_draws(chain, 0, 0);
	CHECK(erf_draws(chain, 0, 0, grid) == before);

	Eigen::VectorXd q(5);
	q << 0.1, 0.3, 0.5, 0.7, 0.9;
	const CurveSummary o = overall_mixture_effect(chain, 0, q);
	for (int i = 0; i + 1 < 5; ++i) CHECK(o.mean(i) < o.mean(i + 1));
	CHECK(o.mean(2) == 0.0);

	const ChainOutput merged = merge_chains({chain, chain});
	CHECK(merged.draws.size() == 2 * chain.draws.size());
	CHECK_THROWS_AS(lagged_contrast(chain, 0, 0, 0), std::invalid_argument);
}

}
