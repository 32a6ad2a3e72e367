#include <doctest.h>

#include <numbers>
#include <random>

#include "mixborrow/importance.hpp"

using namespace mixborrow;

namespace {

Eigen::MatrixXd normals(int n, int P, std::uint64_t seed) {
	std::mt19937_64 gen(seed);
	std::normal_distribution<double> N;
	Eigen::MatrixXd X(n, P);
	for (auto& v : X.reshaped()) v = N(gen);
	return X;
}

SurfaceFn linear(const Eigen::VectorXd& alpha) {
	return [alpha](const Eigen::MatrixXd& rows) -> Eigen::VectorXd { return rows * alpha; };
}

double pop_var(const Eigen::VectorXd& v) { return (v.array() - v.mean()).square().mean(); }

} // namespace

TEST_SUITE("importance") {

TEST_CASE("Gauss-Hermite rule") {
	const auto [x, w] = gauss_hermite(20);
	CHECK(w.sum() == doctest::Approx(std::sqrt(std::numbers::pi)));
	CHECK((w.array() * x.array().square()).sum() == doctest::Approx(std::sqrt(std::numbers::pi) / 2.0));
	CHECK((w.array() * x.array().pow(4)).sum() == doctest::Approx(3.0 * std::sqrt(std::numbers::pi) / 4.0));
	CHECK_THROWS_AS(gauss_hermite(0), std::invalid_argument);
}

TEST_CASE("Silverman bandwidths") {
	const Eigen::MatrixXd X = normals(500, 2, 1);
	const Eigen::VectorXd h = silverman_bandwidth(X);
	for (int c = 0; c < 2; ++c) {
		const Eigen::VectorXd col = X.col(c);
		const double sd = std::sqrt((col.array() - col.mean()).square().sum() / 499.0);
		CHECK(h(c) == doctest::Approx(sd * std::pow(4.0 / (4.0 * 500.0), 1.0 / 6.0)));
	}
}

TEST_CASE("kernel conditional mean") {
	SUBCASE("single observation") {
		Eigen::MatrixXd X(1, 2);
		X << 0.7, -1.2;
		Eigen::MatrixXd q(3, 2);
		q << 5, 1, -3, 2, 0, 9;
		auto f = [](const Eigen::MatrixXd& r) -> Eigen::VectorXd { return 2.0 * r.col(0); };
		const Eigen::VectorXd m = kernel_conditional_mean(f, X, {0}, q);
		CHECK((m.array() - 1.4).abs().maxCoeff() < 1e-15);
	}
	SUBCASE("constant surface") {
		const Eigen::MatrixXd X = normals(50, 3, 2);
		auto f = [](const Eigen::MatrixXd& r) -> Eigen::VectorXd { return Eigen::VectorXd::Constant(r.rows(), 3.25); };
		CHECK((kernel_conditional_mean(f, X, {1}, X).array() - 3.25).abs().maxCoeff() < 1e-12);
	}
	SUBCASE("independent coordinate averages out") {
		const Eigen::MatrixXd X = normals(5000, 2, 3);
		auto f = [](const Eigen::MatrixXd& r) -> Eigen::VectorXd { return r.col(0); };
		const Eigen::MatrixXd q = normals(100, 2, 4);
		const Eigen::VectorXd m = kernel_conditional_mean(f, X, {0}, q);
		// each query is a weighted mean of independent unit normals; bound it by 4 SE of that mean
		const double h = silverman_bandwidth(X.rightCols(1))(0);
		for (int i = 0; i < 100; ++i) {
			const Eigen::ArrayXd w = (-0.5 * ((X.col(1).array() - q(i, 1)) / h).square()).exp();
			const double se = std::sqrt(w.square().sum()) / w.sum();
			CHECK(std::abs(m(i)) < 4.0 * se);
		}
	}
	SUBCASE("huge bandwidth gives the sample mean") {
		const Eigen::MatrixXd X = normals(80, 3, 5);
		auto f = [](const Eigen::MatrixXd& r) -> Eigen::VectorXd { return r.col(0).array().square() + r.col(1).array(); };
		const Eigen::MatrixXd q = normals(4, 3, 6);
		const Eigen::VectorXd m = kernel_conditional_mean(f, X, {0}, q, Eigen::VectorXd::Constant(2, 1e6));
		for (int i = 0; i < 4; ++i) {
			const double expected = X.col(0).array().square().mean() + q(i, 1);
			CHECK(m(i) == doctest::Approx(expected).epsilon(1e-6));
		}
	}
	SUBCASE("errors") {
		const Eigen::MatrixXd X = normals(10, 2, 7);
		auto f = linear(Eigen::Vector2d(1, 1));
		CHECK_THROWS_AS(kernel_conditional_mean(f, X, {0, 1}, X), std::invalid_argument);
		CHECK_THROWS_AS(kernel_conditional_mean(f, X, {2}, X), std::out_of_range);
		CHECK_THROWS_AS(kernel_conditional_mean(f, X, {0}, X, Eigen::VectorXd::Constant(1, -1.0)), std::invalid_argument);
	}
}

TEST_CASE("exposure importance") {
	SUBCASE("unused exposure") {
		const Eigen::MatrixXd X = normals(300, 3, 8);
		auto f = [](const Eigen::MatrixXd& r) -> Eigen::VectorXd { return r.col(0).array().sin() + r.col(1).array(); };
		const ImportanceValue v = exposure_importance(f, X, 2);
		CHECK(v.raw == doctest::Approx(0.0).epsilon(1e-12));
		CHECK(v.phi == doctest::Approx(0.0));
	}
	SUBCASE("linear surface on independent normals") {
		Eigen::VectorXd alpha(3);
		alpha << 1.0, 0.5, 0.0;
		const Eigen::MatrixXd X = normals(2000, 3, 9);
		const double total = alpha.squaredNorm();
		for (int p = 0; p < 3; ++p) {
			const ImportanceValue v = exposure_importance(linear(alpha), X, p);
			CHECK(std::abs(v.phi - alpha(p) * alpha(p) / total) < 0.05);
		}
	}
	SUBCASE("constant surface is missing") {
		const Eigen::MatrixXd X = normals(20, 2, 10);
		auto f = [](const Eigen::MatrixXd& r) -> Eigen::VectorXd { return Eigen::VectorXd::Ones(r.rows()); };
		CHECK(exposure_importance(f, X, 0).missing);
	}
	SUBCASE("affine rescaling") {
		const Eigen::MatrixXd X = normals(400, 2, 11);
		auto f = [](const Eigen::MatrixXd& r) -> Eigen::VectorXd { return r.col(0).array() * r.col(1).array() + r.col(0).array(); };
		auto g = [&](const Eigen::MatrixXd& r) -> Eigen::VectorXd { return (-3.0 * f(r)).array() + 7.0; };
		CHECK(exposure_importance(f, X, 0).raw == doctest::Approx(exposure_importance(g, X, 0).raw).epsilon(1e-10));
	}
	SUBCASE("plugin with the exact conditional law") {
		Eigen::VectorXd alpha(3);
		alpha << 0.8, -0.4, 0.3;
		const Eigen::MatrixXd X = normals(500, 3, 12);
		ConditionalModel cond;
		cond.kind = ConditionalKind::regression_plugin;
		cond.plugin_mean = Eigen::VectorXd::Zero(500);
		cond.plugin_sd = 1.0;
		for (int p = 0; p < 3; ++p) {
			Eigen::VectorXd a = alpha;
			a(p) = 0.0;
			const double oracle = 1.0 - pop_var(X * a) / pop_var(X * alpha);
			CHECK(exposure_importance(linear(alpha), X, p, cond).raw == doctest::Approx(oracle).epsilon(1e-10));
		}
		CHECK_THROWS_AS(group_importance(linear(alpha), X, {0, 1}, cond), std::invalid_argument);
	}
}

TEST_CASE("group importance") {
	Eigen::VectorXd alpha(4);
	alpha << 1.0, 0.6, 0.5, 0.3;
	const Eigen::MatrixXd X = normals(2000, 4, 13);
	const double single = exposure_importance(linear(alpha), X, 1).raw;
	CHECK(group_importance(linear(alpha), X, {1}).raw == single);

	const double rest = group_importance(linear(alpha), X, {0, 2, 3}).phi;
	const double excluded = exposure_importance(linear(alpha), X, 1).phi;
	CHECK(std::abs(rest - (1.0 - excluded)) < 0.05);

	Eigen::VectorXd blocks(4);
	blocks << 1.0, 0.7, 0.0, 0.0;
	Eigen::MatrixXd Y = X;
	auto two_block = [](const Eigen::MatrixXd& r) -> Eigen::VectorXd {
		return r.col(0).array() * 0.8 + r.col(1).array().square() * 0.5 + r.col(2).array() - 0.4 * r.col(3).array();
	};
	const double g1 = group_importance(two_block, Y, {0, 1}).phi;
	const double g2 = group_importance(two_block, Y, {2, 3}).phi;
	CHECK(std::abs(g1 + g2 - 1.0) < 0.05);
	CHECK_THROWS_AS(group_importance(linear(alpha), X, {0, 1, 2, 3}), std::invalid_argument);
	CHECK_THROWS_AS(group_importance(linear(alpha), X, {}), std::invalid_argument);
}

}
