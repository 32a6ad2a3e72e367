#include "mixborrow/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>
#include <fmt/os.h>
#include <spdlog/spdlog.h>

#include "mixborrow/io.hpp"
#include "mixborrow/nonseparable.hpp"
#include "mixborrow/rng.hpp"

namespace mixborrow {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Fit {
	std::shared_ptr<const ChainOutput> chain;
	int outcome = 0;        // outcome index inside the chain
};

bool is_mim_scenario(const std::string& s) { return s.rfind("simB", 0) == 0; }

ModelSpec base_spec(const StudyConfig& cfg, const SimTruth& truth, int K, int m) {
	if (is_mim_scenario(truth.scenario)) {
		return build_mim_spec(truth.P, cfg.mim_indices, K);
	}
	if (truth.scenario == "nonsep") {
		return build_nonseparable_spec(truth.P, truth.L, std::min(cfg.reduced_dim, truth.L), K);
	}
	return build_dlnm_spec(truth.P, truth.L, m, K);
}

std::vector<Fit> fit_estimator(const StudyConfig& cfg, const SimResult& sim, const std::string& estimator,
                               std::uint64_t seed) {
	const SimTruth& truth = sim.truth;
	const int K = truth.K;
	ChainControl control;
	control.n_iter = cfg.n_iter;
	control.burn_in = cfg.burn_in;
	control.thin = cfg.thin;
	control.seed = seed;
	control.keep_random_effects = false;
	std::vector<Fit> fits;
	auto finish = [&](ModelSpec spec, const Eigen::MatrixXd& Y) {
		spec.orthogonalize_random_effects = cfg.orthogonalize;
		return run_chain(prepare_model(spec, sim.data.Xstar, sim.data.Z), Y, control);
	};
	if (estimator == "clustered" || estimator == "dimension_reduction" || estimator == "no_clustering") {
		int m = 0;
		if (estimator == "dimension_reduction") {
			if (is_mim_scenario(truth.scenario) || truth.scenario == "nonsep") {
				throw std::invalid_argument(fmt::format("estimator '{}' is only defined for index distributed-lag scenarios", estimator));
			}
			m = std::min(cfg.reduced_dim, truth.L);
		}
		ModelSpec spec = base_spec(cfg, truth, K, m);
		if (estimator == "no_clustering") {
			spec.clustering = false;
			spec.truncation = spec.pairs();
		} else {
			spec.truncation = std::min(cfg.truncation, spec.pairs());
		}
		auto chain = std::make_shared<const ChainOutput>(finish(spec, sim.data.Y));
		for (int k = 0; k < K; ++k) {
			fits.push_back({chain, k});
		}
		return fits;
	}
	if (estimator == "separate") {
		for (int k = 0; k < K; ++k) {
			ModelSpec spec = base_spec(cfg, truth, 1, 0);
			spec.truncation = std::min(cfg.truncation, spec.pairs());
			control.seed = derive_seed(seed, static_cast<std::uint64_t>(k));
			fits.push_back({std::make_shared<const ChainOutput>(finish(spec, sim.data.Y.col(k))), 0});
		}
		return fits;
	}
	throw std::invalid_argument(fmt::format("unknown estimator '{}'", estimator));
}

double mean_of(const std::vector<double>& v) {
	if (v.empty()) return kNaN;
	double s = 0.0;
	for (double x : v) s += x;
	return s / static_cast<double>(v.size());
}

Eigen::VectorXd erf_grid(const StudyConfig& cfg, const SimTruth& truth, const Eigen::MatrixXd& X) {
	const int L = truth.L;
	const int m = std::min(cfg.reduced_dim, L);
	const Eigen::MatrixXd psi = m < L ? lag_reduction_basis(L, m) : Eigen::MatrixXd::Identity(L, L);
	double R = 0.0;
	for (int p = 0; p < truth.P; ++p) {
		R = std::max(R, (X.middleCols(static_cast<Eigen::Index>(p) * L, L) * psi).rowwise().norm().maxCoeff());
	}
	const double a_max = 0.6 * R / std::sqrt(static_cast<double>(L));
	return Eigen::VectorXd::LinSpaced(cfg.grid_points, -a_max, a_max);
}

void score_curves(const StudyConfig& cfg, const SimResult& sim, const std::vector<Fit>* fits, RepMetrics& r) {
	const SimTruth& truth = sim.truth;
	const Eigen::MatrixXd& X = sim.data.Xstar;
	const Eigen::VectorXd grid = erf_grid(cfg, truth, X);
	Eigen::MatrixXd rows(grid.size() + 1, X.cols());
	for (Eigen::Index g = 0; g < grid.size(); ++g) rows.row(g).setConstant(grid(g));
	rows.row(grid.size()) = X.colwise().mean();
	std::vector<double> sq_f, cover, sq_w;
	for (int k = 0; k < truth.K; ++k) {
		for (int p = 0; p < truth.P; ++p) {
			const Eigen::VectorXd tv = truth.component(k, p, rows);
			const Eigen::VectorXd target = tv.head(grid.size()).array() - tv(grid.size());
			const Eigen::VectorXd& w_true = truth.omegas[truth.omega_id(k, p)];
			if (!fits) {
				for (Eigen::Index g = 0; g < grid.size(); ++g) {
					sq_f.push_back(0.0);
					cover.push_back(1.0);
				}
				sq_w.push_back(0.0);
				continue;
			}
			const Fit& fit = (*fits)[k];
			const CurveSummary s = erf_summary(*fit.chain, fit.outcome, p, grid);
			for (Eigen::Index g = 0; g < grid.size(); ++g) {
				sq_f.push_back((s.mean(g) - target(g)) * (s.mean(g) - target(g)));
				cover.push_back(target(g) >= s.lower(g) && target(g) <= s.upper(g) ? 1.0 : 0.0);
			}
			Eigen::VectorXd w = omega_estimate(*fit.chain, fit.outcome, p);
			if (w.sum() < 0.0) w = -w;
			sq_w.push_back((w - w_true).squaredNorm() / static_cast<double>(w.size()));
		}
	}
	r.mse_f = mean_of(sq_f);
	r.coverage_f = mean_of(cover);
	r.mse_omega = mean_of(sq_w);
}

void score_surface(const SimResult& sim, const std::vector<Fit>* fits, RepMetrics& r) {
	const SimTruth& truth = sim.truth;
	const Eigen::MatrixXd& X = sim.data.Xstar;
	const Eigen::MatrixXd tm = truth.surface(X);
	if (!fits) {
		r.mse_surface = 0.0;
		r.coverage_surface = 1.0;
		return;
	}
	std::vector<double> sq, cover;
	for (int k = 0; k < truth.K; ++k) {
		const Fit& fit = (*fits)[k];
		const auto& draws = fit.chain->draws;
		const std::size_t S = draws.size();
		const std::size_t use = std::min<std::size_t>(S, 200);
		Eigen::MatrixXd g(static_cast<Eigen::Index>(use), X.rows());
		for (std::size_t t = 0; t < use; ++t) {
			const Eigen::VectorXd v = evaluate_mixture(*fit.chain->context, draws[use == S ? t : (t * S) / use], fit.outcome, X);
			g.row(static_cast<Eigen::Index>(t)) = (v.array() - v.mean()).transpose();
		}
		const CurveSummary s = summarize_columns(g, Eigen::VectorXd::Zero(X.rows()));
		const Eigen::VectorXd target = tm.col(k).array() - tm.col(k).mean();
		for (Eigen::Index i = 0; i < X.rows(); ++i) {
			sq.push_back((s.mean(i) - target(i)) * (s.mean(i) - target(i)));
			cover.push_back(target(i) >= s.lower(i) && target(i) <= s.upper(i) ? 1.0 : 0.0);
		}
	}
	r.mse_surface = mean_of(sq);
	r.coverage_surface = mean_of(cover);
}

void score_clustering(const SimResult& sim, const std::vector<Fit>& fits, RepMetrics& r) {
	const SimTruth& truth = sim.truth;
	const ChainOutput& chain = *fits.front().chain;
	if (truth.f_id.size() == 0 || chain.context->spec.n_outcomes != truth.K || !chain.context->spec.clustering) {
		return;
	}
	const ClusterHeatmap h = pairwise_clustering(chain);
	const int J = truth.P;
	const int np = truth.K * J;
	std::vector<double> bs, bd, ts, td;
	for (int a = 0; a < np; ++a) {
		for (int b = a + 1; b < np; ++b) {
			const bool same_f = truth.f_id(a / J, a % J) == truth.f_id(b / J, b % J);
			(same_f ? bs : bd).push_back(h.prob_beta(a, b));
			if (truth.has_index_truth()) {
				const bool same_w = truth.omega_id(a / J, a % J) == truth.omega_id(b / J, b % J);
				(same_w ? ts : td).push_back(h.prob_theta(a, b));
			}
		}
	}
	r.cocluster_beta_same = mean_of(bs);
	r.cocluster_beta_diff = mean_of(bd);
	r.cocluster_theta_same = mean_of(ts);
	r.cocluster_theta_diff = mean_of(td);
}

nlohmann::json to_json(const RepMetrics& r) {
	auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(exact(v)); };
	return {{"rep", r.rep}, {"estimator", r.estimator}, {"seed", r.seed}, {"ok", r.ok}, {"error", r.error},
	        {"mse_f", num(r.mse_f)}, {"mse_omega", num(r.mse_omega)}, {"coverage_f", num(r.coverage_f)},
	        {"mse_surface", num(r.mse_surface)}, {"coverage_surface", num(r.coverage_surface)},
	        {"cocluster_beta_same", num(r.cocluster_beta_same)}, {"cocluster_beta_diff", num(r.cocluster_beta_diff)},
	        {"cocluster_theta_same", num(r.cocluster_theta_same)}, {"cocluster_theta_diff", num(r.cocluster_theta_diff)},
	        {"n_draws", r.n_draws}};
}

RepMetrics from_json(const nlohmann::json& j) {
	auto num = [&](const char* key) { return j.at(key).is_null() ? kNaN : std::stod(j.at(key).get<std::string>()); };
	RepMetrics r;
	r.rep = j.at("rep").get<int>();
	r.estimator = j.at("estimator").get<std::string>();
	r.seed = j.at("seed").get<std::uint64_t>();
	r.ok = j.at("ok").get<bool>();
	r.error = j.at("error").get<std::string>();
	r.mse_f = num("mse_f");
	r.mse_omega = num("mse_omega");
	r.coverage_f = num("coverage_f");
	r.mse_surface = num("mse_surface");
	r.coverage_surface = num("coverage_surface");
	r.cocluster_beta_same = num("cocluster_beta_same");
	r.cocluster_beta_diff = num("cocluster_beta_diff");
	r.cocluster_theta_same = num("cocluster_theta_same");
	r.cocluster_theta_diff = num("cocluster_theta_diff");
	r.n_draws = j.at("n_draws").get<long>();
	return r;
}

std::string study_fingerprint(const StudyConfig& c) {
	return fmt::format("{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}", c.scenario, c.n, c.P, c.L, c.n_iter, c.burn_in, c.thin,
	                   c.truncation, c.reduced_dim, c.mim_indices, c.orthogonalize, c.grid_points);
}

} // namespace

const std::vector<std::string>& estimator_catalogue() {
	static const std::vector<std::string> names{"clustered", "dimension_reduction", "no_clustering", "separate", "truth"};
	return names;
}

std::uint64_t replication_seed(std::uint64_t master, int rep) { return derive_seed(master, static_cast<std::uint64_t>(rep)); }

RepMetrics score_estimator(const StudyConfig& cfg, const SimResult& sim, const std::string& estimator, std::uint64_t seed) {
	RepMetrics r;
	r.estimator = estimator;
	r.seed = seed;
	r.mse_f = r.mse_omega = r.coverage_f = kNaN;
	r.cocluster_beta_same = r.cocluster_beta_diff = r.cocluster_theta_same = r.cocluster_theta_diff = kNaN;
	std::vector<Fit> fits;
	const bool oracle = estimator == "truth";
	if (!oracle) {
		fits = fit_estimator(cfg, sim, estimator, seed);
		r.n_draws = static_cast<long>(fits.front().chain->draws.size());
		if (r.n_draws == 0) {
			throw std::invalid_argument("no draws kept; increase n_iter or lower burn_in/thin");
		}
	}
	if (sim.truth.has_index_truth()) {
		score_curves(cfg, sim, oracle ? nullptr : &fits, r);
	}
	score_surface(sim, oracle ? nullptr : &fits, r);
	if (!oracle) {
		score_clustering(sim, fits, r);
	}
	return r;
}

StudyResult run_replication_study(const StudyConfig& cfg) {
	if (cfg.n_reps < 1) {
		throw std::invalid_argument("study needs at least one replication");
	}
	const auto& catalogue = estimator_catalogue();
	for (const auto& e : cfg.estimators) {
		if (std::find(catalogue.begin(), catalogue.end(), e) == catalogue.end()) {
			throw std::invalid_argument(fmt::format("unknown estimator '{}'", e));
		}
	}
	if (!cfg.cache_dir.empty()) {
		std::filesystem::create_directories(cfg.cache_dir);
	}
	const std::string fingerprint = study_fingerprint(cfg);
	const int n_est = static_cast<int>(cfg.estimators.size());
	const int n_tasks = cfg.n_reps * n_est;
	std::vector<RepMetrics> results(static_cast<std::size_t>(n_tasks));
	std::atomic<int> next{0};
	std::mutex log_mutex;
	auto worker = [&]() {
		for (int task = next++; task < n_tasks; task = next++) {
			const int rep = task / n_est;
			const std::string& est = cfg.estimators[static_cast<std::size_t>(task % n_est)];
			const std::uint64_t rseed = replication_seed(cfg.master_seed, rep);
			const auto stream = static_cast<std::uint64_t>(
				1 + std::distance(catalogue.begin(), std::find(catalogue.begin(), catalogue.end(), est)));
			const std::uint64_t fit_seed = derive_seed(rseed, stream);
			const std::string cache = cfg.cache_dir.empty()
			                              ? std::string()
			                              : (std::filesystem::path(cfg.cache_dir) / fmt::format("rep{}_{}.json", rep + 1, est)).string();
			RepMetrics r;
			bool cached = false;
			if (!cache.empty() && std::filesystem::exists(cache)) {
				try {
					const nlohmann::json j = read_json(cache);
					r = from_json(j);
					cached = r.seed == fit_seed && j.value("settings", std::string()) == fingerprint;
				} catch (const std::exception&) {
					cached = false;
				}
			}
			if (!cached) {
				try {
					const SimResult sim = simulate_scenario(cfg.scenario, cfg.n, derive_seed(rseed, 0), cfg.P, cfg.L);
					r = score_estimator(cfg, sim, est, fit_seed);
				} catch (const std::exception& ex) {
					r = RepMetrics{};
					r.estimator = est;
					r.seed = fit_seed;
					r.ok = false;
					r.error = ex.what();
				}
				r.rep = rep + 1;
				if (!cache.empty()) {
					nlohmann::json j = to_json(r);
					j["settings"] = fingerprint;
					write_json(cache, j);
				}
			}
			{
				std::lock_guard<std::mutex> lock(log_mutex);
				spdlog::info("replication {}/{} {}: {}{}", rep + 1, cfg.n_reps, est, r.ok ? "ok" : "failed: " + r.error,
				             cached ? " (cached)" : "");
			}
			results[static_cast<std::size_t>(task)] = r;
		}
	};
	const int threads = std::max(1, std::min(cfg.threads, n_tasks));
	if (threads == 1) {
		worker();
	} else {
		std::vector<std::thread> pool;
		for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
		for (auto& t : pool) t.join();
	}

	StudyResult out;
	out.reps = results;
	int failed = 0;
	for (const auto& est : cfg.estimators) {
		EstimatorSummary s;
		s.estimator = est;
		std::vector<const RepMetrics*> ok;
		for (const auto& r : results) {
			if (r.estimator != est) continue;
			if (r.ok) ok.push_back(&r); else ++s.n_failed;
		}
		s.n_ok = static_cast<int>(ok.size());
		failed += s.n_failed;
		auto avg = [&](double RepMetrics::*field) {
			if (ok.empty()) return kNaN;
			double t = 0.0;
			for (const auto* r : ok) t += r->*field;
			return t / static_cast<double>(ok.size());
		};
		s.mean.estimator = est;
		s.mean.mse_f = avg(&RepMetrics::mse_f);
		s.mean.mse_omega = avg(&RepMetrics::mse_omega);
		s.mean.coverage_f = avg(&RepMetrics::coverage_f);
		s.mean.mse_surface = avg(&RepMetrics::mse_surface);
		s.mean.coverage_surface = avg(&RepMetrics::coverage_surface);
		s.mean.cocluster_beta_same = avg(&RepMetrics::cocluster_beta_same);
		s.mean.cocluster_beta_diff = avg(&RepMetrics::cocluster_beta_diff);
		s.mean.cocluster_theta_same = avg(&RepMetrics::cocluster_theta_same);
		s.mean.cocluster_theta_diff = avg(&RepMetrics::cocluster_theta_diff);
		out.summary.push_back(s);
	}
	if (static_cast<double>(failed) > 0.1 * n_tasks) {
		std::string first;
		for (const auto& r : results) {
			if (!r.ok) { first = r.error; break; }
		}
		throw std::runtime_error(fmt::format("{} of {} fits failed (first error: {})", failed, n_tasks, first));
	}
	return out;
}

namespace {

const char* kMetricHeader =
	"mse_f,mse_omega,coverage_f,mse_surface,coverage_surface,cocluster_beta_same,cocluster_beta_diff,"
	"cocluster_theta_same,cocluster_theta_diff";

std::string metric_cells(const RepMetrics& r) {
	return fmt::format("{},{},{},{},{},{},{},{},{}", exact(r.mse_f), exact(r.mse_omega), exact(r.coverage_f),
	                   exact(r.mse_surface), exact(r.coverage_surface), exact(r.cocluster_beta_same),
	                   exact(r.cocluster_beta_diff), exact(r.cocluster_theta_same), exact(r.cocluster_theta_diff));
}

std::string csv_text(std::string s) {
	std::replace(s.begin(), s.end(), ',', ';');
	std::replace(s.begin(), s.end(), '\n', ' ');
	return s;
}

} // namespace

void write_study_csv(const std::string& path, const StudyResult& result) {
	auto out = fmt::output_file(path);
	out.print("rep,estimator,seed,ok,n_draws,{},error\n", kMetricHeader);
	for (const auto& r : result.reps) {
		out.print("{},{},{},{},{},{},{}\n", r.rep, r.estimator, r.seed, r.ok ? 1 : 0, r.n_draws, metric_cells(r),
		          csv_text(r.error));
	}
}

void write_study_summary_csv(const std::string& path, const StudyResult& result) {
	auto out = fmt::output_file(path);
	out.print("estimator,n_ok,n_failed,{}\n", kMetricHeader);
	for (const auto& s : result.summary) {
		out.print("{},{},{},{}\n", s.estimator, s.n_ok, s.n_failed, metric_cells(s.mean));
	}
}

} // namespace mixborrow
