#include "mixborrow/simulate.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

#include "mixborrow/rng.hpp"

namespace mixborrow {

namespace {

const int kSimAF[4][5] = {{0, 1, 1, 1, 0}, {1, 0, 0, 0, 1}, {2, 2, 3, 3, 3}, {3, 3, 2, 2, 2}};
const int kSimAOmega[5] = {0, 1, 2, 0, 0};
const int kNonsepG[4][5] = {{0, 1, 2, 0, 0}, {0, 1, 2, 0, 0}, {2, 2, 2, 2, 2}, {2, 2, 2, 2, 2}};

const double kAlpha1[10] = {0.1, 0.1, 0.2, 0.2, 0.25, 0.1, 0.05, 0.08, 0.3, 0.1};
const double kAlpha2[10] = {0.3, 0.05, 0.1, 0.2, 0.1, 0.2, -0.2, -0.2, 0.1, 0.2};
const double kDelta[5] = {0.2118881, 0.1406585, -0.0982663, 0.0153671, -0.0006265};

double normal_pdf(double x, double mu, double sigma) {
	const double z = (x - mu) / sigma;
	return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

void check_dims(int n, int P, int L, int maxP) {
	if (n < 2) {
		throw std::invalid_argument("simulated datasets need n >= 2");
	}
	if (P < 1 || P > maxP) {
		throw std::invalid_argument(fmt::format("this scenario supports 1..{} exposures", maxP));
	}
	if (L < 2) {
		throw std::invalid_argument("this scenario needs L >= 2");
	}
}

Dataset finish_dataset(const Eigen::MatrixXd& X, const Eigen::MatrixXd& mean, const Eigen::VectorXd& noise_sd, Rng& rng,
                       const std::vector<std::string>& exposure_names) {
	Dataset d;
	d.Xstar = X;
	d.Y = mean;
	for (Eigen::Index k = 0; k < mean.cols(); ++k) {
		for (Eigen::Index i = 0; i < mean.rows(); ++i) {
			d.Y(i, k) += noise_sd(k) * rng.normal();
		}
		d.outcome_names.push_back(fmt::format("y{}", k + 1));
	}
	d.Z = Eigen::MatrixXd(X.rows(), 0);
	d.exposure_names = exposure_names;
	return d;
}

std::vector<std::string> lag_names(int P, int L) {
	std::vector<std::string> names;
	for (int p = 0; p < P; ++p) {
		for (int l = 0; l < L; ++l) {
			names.push_back(fmt::format("x{}_l{}", p + 1, l + 1));
		}
	}
	return names;
}

SimResult index_scenario(const std::string& name, int n, std::uint64_t seed, int P, int L, const Eigen::MatrixXi& f_id,
                         const Eigen::MatrixXi& omega_id) {
	SimResult r;
	SimTruth& t = r.truth;
	t.scenario = name;
	t.K = static_cast<int>(f_id.rows());
	t.P = P;
	t.L = L;
	t.f_id = f_id;
	t.omega_id = omega_id;
	for (int id = 0; id < 3; ++id) {
		t.omegas.push_back(lag_profile(id, L));
	}
	t.f = sim_a_curve;
	t.noise_sd = Eigen::VectorXd::Ones(t.K);
	const std::vector<Eigen::VectorXd> omegas = t.omegas;
	t.surface = [f_id, omega_id, omegas, P, L](const Eigen::MatrixXd& X) {
		Eigen::MatrixXd m = Eigen::MatrixXd::Zero(X.rows(), f_id.rows());
		for (Eigen::Index k = 0; k < f_id.rows(); ++k) {
			for (int p = 0; p < P; ++p) {
				const Eigen::VectorXd a = X.middleCols(static_cast<Eigen::Index>(p) * L, L) * omegas[omega_id(k, p)];
				for (Eigen::Index i = 0; i < X.rows(); ++i) {
					m(i, k) += sim_a_curve(f_id(k, p), a(i));
				}
			}
		}
		return m;
	};
	t.meta = {{"scenario", name}, {"n", n}, {"K", t.K}, {"P", P}, {"L", L}, {"seed", seed},
	          {"noise_sd", std::vector<double>(t.K, 1.0)},
	          {"profiles", "0 flat, 1 decreasing linear ramp, 2 increasing linear ramp; unit norm"}};
	const Eigen::MatrixXd X = gen_var_exposures(n, P, L, derive_seed(seed, 0));
	Rng rng(derive_seed(seed, 1));
	r.data = finish_dataset(X, t.surface(X), t.noise_sd, rng, lag_names(P, L));
	return r;
}

} // namespace

Eigen::VectorXd SimTruth::component(int k, int p, const Eigen::MatrixXd& Xrows) const {
	if (!has_index_truth()) {
		throw std::invalid_argument("scenario has no index-model truth");
	}
	const Eigen::VectorXd a = Xrows.middleCols(static_cast<Eigen::Index>(p) * L, L) * omegas[omega_id(k, p)];
	Eigen::VectorXd out(a.size());
	for (Eigen::Index i = 0; i < a.size(); ++i) {
		out(i) = f(f_id(k, p), a(i));
	}
	return out;
}

double nonsep_curve(int id, double x) {
	switch (id) {
	case 0:
		return 0.04 * (x - 2.0);
	case 1: {
		double s = 0.0;
		for (int p = 0; p < 5; ++p) {
			s += 0.3 * kDelta[p] * (std::pow(x, p) - std::pow(5.0, p));
		}
		return s;
	}
	default:
		return 0.4 * (normal_pdf(x, 1.5, 2.0) + normal_pdf(x, 7.5, 1.0)) -
		       0.4 * (normal_pdf(5.0, 1.5, 2.0) + normal_pdf(5.0, 7.5, 1.0));
	}
}

Eigen::MatrixXd gen_var_exposures(int n, int P, int L, std::uint64_t seed, double cross_corr, double persistence) {
	if (n < 1 || P < 1 || L < 1) {
		throw std::invalid_argument("gen_var_exposures needs n, P, L >= 1");
	}
	Eigen::MatrixXd S(P, P);
	for (int p = 0; p < P; ++p) {
		for (int q = 0; q < P; ++q) {
			S(p, q) = std::pow(cross_corr, std::abs(p - q));
		}
	}
	const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(S).matrixL();
	Rng rng(seed);
	Eigen::MatrixXd X(n, static_cast<Eigen::Index>(P) * L);
	Eigen::VectorXd x(P);
	for (int i = 0; i < n; ++i) {
		x = chol * rng.normal_vector(P);
		for (int l = 0; l < L; ++l) {
			if (l > 0) {
				x = persistence * x + chol * rng.normal_vector(P);
			}
			for (int p = 0; p < P; ++p) {
				X(i, static_cast<Eigen::Index>(p) * L + l) = x(p);
			}
		}
	}
	return X;
}

Eigen::VectorXd lag_profile(int id, int L) {
	Eigen::VectorXd w(L);
	for (int l = 0; l < L; ++l) {
		switch (id) {
		case 0: w(l) = 1.0; break;
		case 1: w(l) = static_cast<double>(L - l); break;
		case 2: w(l) = static_cast<double>(l + 1); break;
		default: throw std::out_of_range("lag profile id must be 0, 1 or 2");
		}
	}
	return w / w.norm();
}

double sim_a_curve(int id, double a) {
	switch (id) {
	case 0: return 0.04 * a;
	case 1: return 0.24 * (0.3 * a) * (0.3 * a);
	case 2: return 0.09 * a;
	case 3: return 2.0 * std::sin(0.2 * a);
	default: throw std::out_of_range("curve id must be 0..3");
	}
}

SimResult gen_sim_a(int n, std::uint64_t seed, int P, int L) {
	check_dims(n, P, L, 5);
	Eigen::MatrixXi f_id(4, P);
	Eigen::MatrixXi omega_id(4, P);
	for (int k = 0; k < 4; ++k) {
		for (int p = 0; p < P; ++p) {
			f_id(k, p) = kSimAF[k][p];
			omega_id(k, p) = kSimAOmega[p];
		}
	}
	return index_scenario("simA", n, seed, P, L, f_id, omega_id);
}

SimResult gen_identifiability(int n, std::uint64_t seed, int P, int L) {
	check_dims(n, P, L, 1000);
	return index_scenario("identifiability", n, seed, P, L, Eigen::MatrixXi::Constant(4, P, 1),
	                      Eigen::MatrixXi::Constant(4, P, 1));
}

SimResult gen_sim_b(int scenario, int n, std::uint64_t seed) {
	if (scenario < 1 || scenario > 3) {
		throw std::invalid_argument("Simulation B scenario must be 1, 2 or 3");
	}
	if (n < 2) {
		throw std::invalid_argument("simulated datasets need n >= 2");
	}
	const int P = 10;
	const Eigen::MatrixXd X = gen_var_exposures(n, P, 1, derive_seed(seed, 0), 0.5, 0.0);
	Eigen::VectorXd a1(P);
	Eigen::VectorXd a2(P);
	for (int p = 0; p < P; ++p) {
		a1(p) = kAlpha1[p];
		a2(p) = kAlpha2[p];
	}
	SimResult r;
	SimTruth& t = r.truth;
	t.scenario = fmt::format("simB{}", scenario);
	t.K = 4;
	t.P = P;
	t.L = 1;
	t.noise_sd = Eigen::VectorXd::Ones(4);
	t.surface = [scenario, a1, a2](const Eigen::MatrixXd& Xr) {
		Eigen::MatrixXd m(Xr.rows(), 4);
		const Eigen::ArrayXd l1 = (Xr * a1).array();
		const Eigen::ArrayXd l2 = (Xr * a2).array();
		if (scenario == 1) {
			const Eigen::ArrayXd f1 = l1;
			const Eigen::ArrayXd f2 = l1 + l2.square();
			m.col(0) = 0.5 * f1;
			m.col(1) = 0.5 * f1;
			m.col(2) = 0.5 * f2;
			m.col(3) = 0.3 * f2;
		} else if (scenario == 2) {
			const Eigen::ArrayXd e2 = (1.2 * Xr.col(1).array()).exp();
			const Eigen::ArrayXd f1 = (0.5 * Xr.col(0).array()).exp() + 1.5 * e2 / (1.0 + e2) - 0.5 * Xr.col(2).array().square();
			const Eigen::ArrayXd f2 = Xr.col(8).array() - 0.75 * Xr.col(9).array().square();
			m.col(0) = 0.25 * f1;
			m.col(1) = 0.25 * f1;
			m.col(2) = 0.3 * f2;
			m.col(3) = 0.3 * f2;
		} else {
			const Eigen::ArrayXd f1 = l1 * l2;
			m.col(0) = f1;
			m.col(1) = f1;
			m.col(2) = std::sqrt(0.5) * f1;
			m.col(3) = std::sqrt(0.5) * f1;
		}
		return m;
	};
	// per-outcome signal variance over unit noise, from the generating distribution
	const double snr[3][4] = {{0.157, 0.157, 0.236, 0.085}, {0.073, 0.073, 0.191, 0.191}, {0.358, 0.358, 0.179, 0.179}};
	t.meta = {{"scenario", t.scenario}, {"n", n}, {"K", 4}, {"P", P}, {"seed", seed},
	          {"exposure_correlation", "0.5^|p-p'|"}, {"noise_sd", std::vector<double>(4, 1.0)},
	          {"population_snr", std::vector<double>(snr[scenario - 1], snr[scenario - 1] + 4)}};
	std::vector<std::string> names;
	for (int p = 0; p < P; ++p) {
		names.push_back(fmt::format("x{}", p + 1));
	}
	Rng rng(derive_seed(seed, 1));
	r.data = finish_dataset(X, t.surface(X), t.noise_sd, rng, names);
	return r;
}

SimResult gen_nonsep(int n, std::uint64_t seed, int P, int L) {
	check_dims(n, P, L, 5);
	SimResult r;
	SimTruth& t = r.truth;
	t.scenario = "nonsep";
	t.K = 4;
	t.P = P;
	t.L = L;
	t.f_id.resize(4, P);
	for (int k = 0; k < 4; ++k) {
		for (int p = 0; p < P; ++p) {
			t.f_id(k, p) = kNonsepG[k][p];
		}
	}
	t.noise_sd = Eigen::VectorXd::Ones(4);
	const Eigen::VectorXd w1 = lag_profile(0, L);
	const Eigen::VectorXd w2 = lag_profile(1, L);
	const Eigen::VectorXd w3 = lag_profile(2, L);
	const Eigen::MatrixXi g = t.f_id;
	t.surface = [g, w1, w2, w3, P, L](const Eigen::MatrixXd& X) {
		Eigen::MatrixXd m = Eigen::MatrixXd::Zero(X.rows(), 4);
		for (Eigen::Index i = 0; i < X.rows(); ++i) {
			for (int p = 0; p < P; ++p) {
				double gv[3] = {0.0, 0.0, 0.0};
				for (int l = 0; l < L; ++l) {
					const double x = X(i, static_cast<Eigen::Index>(p) * L + l);
					gv[0] += 0.1 * nonsep_curve(0, x) * w1(l);
					gv[1] += nonsep_curve(1, x) * w2(l);
					gv[2] += nonsep_curve(2, x) * (x >= 0.0 ? w1(l) : w3(l));
				}
				for (int k = 0; k < 4; ++k) {
					m(i, k) += gv[g(k, p)];
				}
			}
		}
		return m;
	};
	t.meta = {{"scenario", "nonsep"}, {"n", n}, {"K", 4}, {"P", P}, {"L", L}, {"seed", seed},
	          {"noise_sd", std::vector<double>(4, 1.0)},
	          {"exposures", "5 + VAR(1) with persistence 0.85 and independent exposures"},
	          {"weights", "w1 flat, w2 decreasing ramp, w3 increasing ramp; unit norm"}};
	const Eigen::MatrixXd X = gen_var_exposures(n, P, L, derive_seed(seed, 0), 0.0, 0.85).array() + 5.0;
	Rng rng(derive_seed(seed, 1));
	r.data = finish_dataset(X, t.surface(X), t.noise_sd, rng, lag_names(P, L));
	return r;
}

SimResult simulate_scenario(const std::string& scenario, int n, std::uint64_t seed, int P, int L) {
	if (scenario == "simA") {
		return gen_sim_a(n, seed, P > 0 ? P : 5, L > 0 ? L : 52);
	}
	if (scenario == "identifiability") {
		return gen_identifiability(n, seed, P > 0 ? P : 5, L > 0 ? L : 52);
	}
	if (scenario == "nonsep") {
		return gen_nonsep(n, seed, P > 0 ? P : 5, L > 0 ? L : 52);
	}
	if (scenario == "simB1" || scenario == "simB2" || scenario == "simB3") {
		return gen_sim_b(scenario.back() - '0', n, seed);
	}
	throw std::invalid_argument(fmt::format("unknown scenario '{}'", scenario));
}

void write_truth_json(const std::string& path, const SimTruth& truth) {
	nlohmann::json j = truth.meta;
	if (truth.f_id.size() > 0) {
		std::vector<std::vector<int>> ids(truth.f_id.rows());
		for (Eigen::Index k = 0; k < truth.f_id.rows(); ++k) {
			for (Eigen::Index p = 0; p < truth.f_id.cols(); ++p) {
				ids[k].push_back(truth.f_id(k, p) + 1);
			}
		}
		j["curve_id"] = ids;
	}
	if (truth.has_index_truth()) {
		std::vector<std::vector<int>> ids(truth.omega_id.rows());
		for (Eigen::Index k = 0; k < truth.omega_id.rows(); ++k) {
			for (Eigen::Index p = 0; p < truth.omega_id.cols(); ++p) {
				ids[k].push_back(truth.omega_id(k, p) + 1);
			}
		}
		j["profile_id"] = ids;
		std::vector<std::vector<double>> prof;
		for (const auto& w : truth.omegas) {
			prof.emplace_back(w.data(), w.data() + w.size());
		}
		j["profiles"] = prof;
	}
	std::ofstream out(path);
	if (!out) {
		throw std::runtime_error(fmt::format("cannot write {}", path));
	}
	out << j.dump(2) << '\n';
}

} // namespace mixborrow
