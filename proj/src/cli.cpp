#include "mixborrow/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <boost/property_tree/ptree.hpp>
#include <boost/version.hpp>
#include <fmt/format.h>
#include <fmt/os.h>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "mixborrow/config.hpp"
#include "mixborrow/importance.hpp"
#include "mixborrow/io.hpp"
#include "mixborrow/posterior.hpp"
#include "mixborrow/rng.hpp"
#include "mixborrow/sampler.hpp"
#include "mixborrow/simulate.hpp"
#include "mixborrow/study.hpp"

namespace mixborrow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
	std::string config;
	std::string out;
	std::optional<std::uint64_t> seed;
	std::optional<int> threads;
};

int resolve_threads(const CommonArgs& args) {
	if (args.threads) {
		if (*args.threads < 1) throw std::invalid_argument("--threads must be positive");
		return *args.threads;
	}
	if (const char* env = std::getenv("MIXBORROW_THREADS"); env && *env) {
		try {
			std::size_t used = 0;
			const int t = std::stoi(env, &used);
			if (used == std::string(env).size() && t >= 1) return t;
		} catch (const std::exception&) {
		}
		throw std::invalid_argument(fmt::format("MIXBORROW_THREADS='{}' is not a positive integer", env));
	}
	return 1;
}

/// Runs task(i) for i in [0, n) on up to `threads` workers.
void parallel_for(int n, int threads, const std::function<void(int)>& task) {
	threads = std::max(1, std::min(threads, n));
	if (threads == 1) {
		for (int i = 0; i < n; ++i) task(i);
		return;
	}
	std::atomic<int> next{0};
	std::exception_ptr error;
	std::mutex error_mutex;
	std::vector<std::thread> pool;
	for (int t = 0; t < threads; ++t) {
		pool.emplace_back([&]() {
			for (int i = next++; i < n; i = next++) {
				try {
					task(i);
				} catch (...) {
					std::lock_guard<std::mutex> lock(error_mutex);
					if (!error) error = std::current_exception();
				}
			}
		});
	}
	for (auto& t : pool) t.join();
	if (error) std::rethrow_exception(error);
}

std::string fnv1a_file(const std::string& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) throw std::invalid_argument(fmt::format("cannot open {}", path));
	std::uint64_t h = 1469598103934665603ULL;
	char buf[65536];
	while (in.read(buf, sizeof buf) || in.gcount() > 0) {
		for (std::streamsize i = 0; i < in.gcount(); ++i) {
			h ^= static_cast<unsigned char>(buf[i]);
			h *= 1099511628211ULL;
		}
	}
	return fmt::format("{:016x}", h);
}

std::string resolve_path(const Config& cfg, const std::string& p) {
	fs::path path(p);
	if (path.is_relative()) path = fs::path(cfg.source_dir()) / path;
	return fs::weakly_canonical(path).string();
}

json versions() {
	return {{"mixborrow", kVersion},
	        {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
	        {"boost", fmt::format("{}.{}.{}", BOOST_VERSION / 100000, BOOST_VERSION / 100 % 1000, BOOST_VERSION % 100)},
	        {"fmt", FMT_VERSION},
	        {"compiler", __VERSION__}};
}

/// Writes the resolved config and a manifest listing the artifacts present in `out`.
void write_manifest(const fs::path& out, const std::string& command, const Config& cfg, json extra) {
	const std::string ini = cfg.resolved_ini();
	{
		std::ofstream f(out / "config.ini");
		f << ini;
	}
	std::vector<std::string> artifacts;
	for (const auto& e : fs::directory_iterator(out)) {
		if (e.is_regular_file() && e.path().filename() != "manifest.json") artifacts.push_back(e.path().filename().string());
	}
	std::sort(artifacts.begin(), artifacts.end());
	json m = {{"command", command},
	          {"config_file", "config.ini"},
	          {"config", ini},
	          {"rerun", fmt::format("mixborrow {} --config config.ini --out <dir>", command)},
	          {"versions", versions()},
	          {"artifacts", artifacts}};
	m.update(extra);
	write_json((out / "manifest.json").string(), m);
}

// ---- posterior summaries shared by fit and summarize ----

struct SummaryRequest {
	std::set<std::string> requests;
	int grid_points = 21;
	double grid_fraction = 0.6;
	Eigen::VectorXd quantiles;
	std::vector<std::pair<int, int>> contrasts;    // 0-based (p, l)
	double contrast_lo = -1.0;
	double contrast_hi = 1.0;
};

const std::vector<std::string>& known_requests() {
	static const std::vector<std::string> r{"erf", "overall", "contrast", "heatmap", "omega", "waic"};
	return r;
}

SummaryRequest summary_request_from_config(Config& cfg, const ModelSpec& spec) {
	const bool lagged = spec.kind == ModelKind::dlnm || spec.kind == ModelKind::nonseparable_dlnm;
	std::string def = "erf,overall,heatmap,waic";
	if (spec.has_theta()) def += ",omega";
	if (lagged) def += ",contrast";
	SummaryRequest s;
	for (const auto& r : split_list(cfg.get_string("summarize", "requests", def))) {
		if (std::find(known_requests().begin(), known_requests().end(), r) == known_requests().end()) {
			throw std::invalid_argument(fmt::format("unknown summarize request '{}'", r));
		}
		s.requests.insert(r);
	}
	if (s.requests.count("omega") && !spec.has_theta()) {
		throw std::invalid_argument(fmt::format("request 'omega' needs index weights; model kind {} has none",
		                                        to_string(spec.kind)));
	}
	if (s.requests.count("contrast") && !lagged) {
		throw std::invalid_argument("request 'contrast' needs a distributed-lag model");
	}
	s.grid_points = cfg.get_int("summarize", "grid_points", s.grid_points);
	s.grid_fraction = cfg.get_double("summarize", "grid_fraction", s.grid_fraction);
	if (s.grid_points < 2 || !(s.grid_fraction > 0.0 && s.grid_fraction <= 1.0)) {
		throw std::invalid_argument("[summarize] needs grid_points >= 2 and 0 < grid_fraction <= 1");
	}
	std::vector<double> q;
	for (const auto& t : split_list(cfg.get_string("summarize", "quantiles", "0.1,0.2,0.3,0.4,0.6,0.7,0.8,0.9"))) {
		const double v = std::stod(t);
		if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("[summarize] quantiles must lie in (0, 1)");
		q.push_back(v);
	}
	s.quantiles = Eigen::Map<Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(q.size()));
	const std::string contrasts = cfg.get_string("summarize", "contrasts", "all");
	if (lagged) {
		if (contrasts == "all") {
			for (int p = 0; p < spec.n_exposures; ++p) {
				for (int l = 0; l < spec.n_lags; ++l) s.contrasts.emplace_back(p, l);
			}
		} else {
			for (const auto& item : split_list(contrasts)) {
				const auto parts = split_list(item, ':');
				if (parts.size() != 2) throw std::invalid_argument(fmt::format("contrast '{}' is not <p>:<lag>", item));
				const int p = std::stoi(parts[0]) - 1, l = std::stoi(parts[1]) - 1;
				if (p < 0 || p >= spec.n_exposures || l < 0 || l >= spec.n_lags) {
					throw std::invalid_argument(fmt::format("contrast '{}' out of range", item));
				}
				s.contrasts.emplace_back(p, l);
			}
		}
	}
	s.contrast_lo = cfg.get_double("summarize", "contrast_lo", s.contrast_lo);
	s.contrast_hi = cfg.get_double("summarize", "contrast_hi", s.contrast_hi);
	return s;
}

void write_summaries(const fs::path& out, const ChainOutput& merged, const std::vector<ChainOutput>& chains,
                     const SummaryRequest& req, int threads) {
	if (merged.draws.empty()) {
		throw std::invalid_argument("no draws");
	}
	const ModelContext& ctx = *merged.context;
	const ModelSpec& spec = ctx.spec;
	const int K = spec.n_outcomes, J = spec.n_indices;
	std::vector<std::function<void()>> jobs;
	if (req.requests.count("erf")) {
		for (int k = 0; k < K; ++k) {
			for (int j = 0; j < J; ++j) {
				jobs.emplace_back([&, k, j]() {
					const Eigen::VectorXd grid = default_erf_grid(ctx, j, req.grid_points, req.grid_fraction);
					write_curve_csv((out / fmt::format("erf_k{}_j{}.csv", k + 1, j + 1)).string(),
					                erf_summary(merged, k, j, grid), "exposure");
				});
			}
		}
	}
	if (req.requests.count("overall")) {
		for (int k = 0; k < K; ++k) {
			jobs.emplace_back([&, k]() {
				write_curve_csv((out / fmt::format("overall_k{}.csv", k + 1)).string(),
				                overall_mixture_effect(merged, k, req.quantiles), "quantile");
			});
		}
	}
	if (req.requests.count("contrast")) {
		for (int k = 0; k < K; ++k) {
			jobs.emplace_back([&, k]() {
				auto f = fmt::output_file((out / fmt::format("contrast_k{}.csv", k + 1)).string());
				f.print("exposure,lag,mean,lower,upper\n");
				for (const auto& [p, l] : req.contrasts) {
					const ScalarSummary s = lagged_contrast(merged, k, p, l, req.contrast_lo, req.contrast_hi);
					f.print("{},{},{},{},{}\n", p + 1, l + 1, exact(s.mean), exact(s.lower), exact(s.upper));
				}
			});
		}
	}
	if (req.requests.count("omega")) {
		for (int k = 0; k < K; ++k) {
			for (int j = 0; j < J; ++j) {
				jobs.emplace_back([&, k, j]() {
					const auto w = omega_draws(merged, k, j);
					Eigen::MatrixXd m(static_cast<Eigen::Index>(w.size()), w.front().size());
					for (std::size_t d = 0; d < w.size(); ++d) m.row(static_cast<Eigen::Index>(d)) = w[d].transpose();
					const CurveSummary s = summarize_columns(m, Eigen::VectorXd::LinSpaced(m.cols(), 1, m.cols()));
					const Eigen::VectorXd est = omega_estimate(merged, k, j);
					auto f = fmt::output_file((out / fmt::format("omega_k{}_j{}.csv", k + 1, j + 1)).string());
					f.print("component,mean,lower,upper,estimate\n");
					for (Eigen::Index i = 0; i < m.cols(); ++i) {
						f.print("{},{},{},{},{}\n", i + 1, exact(s.mean(i)), exact(s.lower(i)), exact(s.upper(i)),
						        exact(est(i)));
					}
				});
			}
		}
	}
	if (req.requests.count("heatmap")) {
		jobs.emplace_back([&]() {
			const ClusterHeatmap h = pairwise_clustering(merged);
			write_matrix_csv((out / "heatmap_beta.csv").string(), h.prob_beta, h.labels);
			write_matrix_csv((out / "heatmap_theta.csv").string(), h.prob_theta, h.labels);
		});
	}
	if (req.requests.count("waic")) {
		jobs.emplace_back([&]() {
			auto to_j = [](const Waic& w, std::size_t draws) {
				return json{{"waic", exact(w.waic)}, {"lppd", exact(w.lppd)}, {"p_waic", exact(w.p_waic)}, {"n_draws", draws}};
			};
			if (merged.loglik.size() != merged.draws.size()) {
				throw std::invalid_argument("pointwise log-likelihoods missing for WAIC");
			}
			json j = to_j(compute_waic(merged), merged.draws.size());
			json per = json::array();
			for (const auto& c : chains) per.push_back(to_j(compute_waic(c), c.draws.size()));
			j["per_chain"] = per;
			write_json((out / "waic.json").string(), j);
		});
	}
	parallel_for(static_cast<int>(jobs.size()), threads, [&](int i) { jobs[static_cast<std::size_t>(i)](); });
}

// ---- loading a finished fit ----

struct LoadedFit {
	ModelSpec spec;
	std::vector<ChainOutput> chains;
	ChainOutput merged;
	std::string data_path;
};

LoadedFit load_fit(const std::string& dir) {
	const fs::path d(dir);
	if (!fs::exists(d / "config.ini") || !fs::exists(d / "manifest.json")) {
		throw std::invalid_argument(fmt::format("{} is not a fit directory (config.ini/manifest.json missing)", dir));
	}
	const json manifest = read_json((d / "manifest.json").string());
	if (manifest.value("command", std::string()) != "fit") {
		throw std::invalid_argument(fmt::format("{} was not written by 'fit'", dir));
	}
	Config cfg = Config::load((d / "config.ini").string());
	LoadedFit f;
	f.spec = model_spec_from_config(cfg);
	if (spec_hash(f.spec) != manifest.value("spec_hash", std::string())) {
		throw std::invalid_argument(fmt::format("{}: spec hash does not match the manifest", dir));
	}
	const ChainSettings cs = chain_settings_from_config(cfg);
	f.data_path = cfg.require("data", "path");
	const Dataset data = read_dataset_csv(f.data_path, f.spec);
	const auto ctx = prepare_model(f.spec, data.Xstar, data.Z);
	for (int c = 1; c <= cs.n_chains; ++c) {
		ChainOutput ch;
		ch.context = ctx;
		ch.draws = read_chain_csv((d / fmt::format("chain_{}.csv", c)).string(), *ctx, &ch.log_posterior);
		const fs::path ll = d / fmt::format("loglik_{}.bin", c);
		if (fs::exists(ll)) ch.loglik = read_loglik_bin(ll.string());
		ch.meta.seed = derive_seed(cs.control.seed, static_cast<std::uint64_t>(c - 1));
		ch.meta.n_iter = cs.control.n_iter;
		ch.meta.burn_in = cs.control.burn_in;
		ch.meta.thin = cs.control.thin;
		ch.meta.spec_hash = spec_hash(f.spec);
		f.chains.push_back(std::move(ch));
	}
	f.merged = merge_chains(f.chains);
	return f;
}

// ---- subcommands ----

int cmd_fit(const CommonArgs& args) {
	Config cfg = Config::load(args.config);
	if (args.seed) cfg.set("chain", "seed", std::to_string(*args.seed));
	const ModelSpec spec = model_spec_from_config(cfg);
	const ChainSettings cs = chain_settings_from_config(cfg);
	const std::string data_path = resolve_path(cfg, cfg.require("data", "path"));
	cfg.set("data", "path", data_path);
	const SummaryRequest req = summary_request_from_config(cfg, spec);
	cfg.check_unknown();
	const int threads = resolve_threads(args);

	const Dataset data = read_dataset_csv(data_path, spec);
	const fs::path out(args.out);
	fs::create_directories(out);
	const auto ctx = prepare_model(spec, data.Xstar, data.Z);
	spdlog::info("fit: kind={} K={} J={} C={} n={} chains={} sweeps={}", to_string(spec.kind), spec.n_outcomes,
	             spec.n_indices, spec.truncation, data.n(), cs.n_chains, cs.control.n_iter);

	std::vector<ChainOutput> chains(static_cast<std::size_t>(cs.n_chains));
	parallel_for(cs.n_chains, threads, [&](int c) {
		ChainControl control = cs.control;
		control.seed = derive_seed(cs.control.seed, static_cast<std::uint64_t>(c));
		chains[static_cast<std::size_t>(c)] = run_chain(ctx, data.Y, control);
		spdlog::info("chain {} done: {} draws", c + 1, chains[static_cast<std::size_t>(c)].draws.size());
	});
	{
		auto acc = fmt::output_file((out / "acceptance.csv").string());
		acc.print("chain,step,proposed,accepted,rate\n");
		for (int c = 0; c < cs.n_chains; ++c) {
			const ChainOutput& ch = chains[static_cast<std::size_t>(c)];
			write_chain_csv((out / fmt::format("chain_{}.csv", c + 1)).string(), ch);
			write_loglik_bin((out / fmt::format("loglik_{}.bin", c + 1)).string(), ch.loglik);
			for (const auto& [name, a] : ch.acceptance) {
				acc.print("{},{},{},{},{}\n", c + 1, name, a.proposed, a.accepted, exact(a.rate()));
			}
		}
	}
	const ChainOutput merged = merge_chains(chains);
	write_summaries(out, merged, chains, req, threads);
	write_manifest(out, "fit", cfg,
	               {{"seed", cs.control.seed},
	                {"chain_seeds", [&]() {
		                 json s = json::array();
		                 for (const auto& c : chains) s.push_back(c.meta.seed);
		                 return s;
	                 }()},
	                {"spec_hash", spec_hash(spec)},
	                {"data", {{"path", data_path}, {"fnv1a", fnv1a_file(data_path)}, {"n", data.n()}}},
	                {"notes",
	                 {{"indices", "1-based in every artifact"},
	                  {"omega", "estimate = mean of sign-aligned draws rescaled to unit length"},
	                  {"erf", "f(a) - f(reference) with every exposure entry set to a; reference = exposure means"},
	                  {"intervals", "pointwise equal-tailed 95%"}}}});
	return 0;
}

int cmd_summarize(const CommonArgs& args) {
	Config cfg = Config::load(args.config);
	const std::string fit_dir = resolve_path(cfg, cfg.require("summarize", "fit_dir"));
	cfg.set("summarize", "fit_dir", fit_dir);
	const LoadedFit fit = load_fit(fit_dir);
	const SummaryRequest req = summary_request_from_config(cfg, fit.spec);
	cfg.check_unknown();
	const int threads = resolve_threads(args);
	const fs::path out(args.out);
	fs::create_directories(out);
	write_summaries(out, fit.merged, fit.chains, req, threads);
	write_manifest(out, "summarize", cfg, {{"spec_hash", spec_hash(fit.spec)}, {"fit_dir", fit_dir}});
	return 0;
}

int cmd_importance(const CommonArgs& args) {
	Config cfg = Config::load(args.config);
	const std::string fit_dir = resolve_path(cfg, cfg.require("importance", "fit_dir"));
	cfg.set("importance", "fit_dir", fit_dir);
	const LoadedFit fit = load_fit(fit_dir);
	const ModelSpec& spec = fit.spec;
	const int P = spec.n_exposures;
	const int width = spec.exposure_dim / P;

	std::string def;
	for (int p = 1; p <= P; ++p) def += fmt::format("{}{}", p > 1 ? ";" : "", p);
	std::vector<std::vector<int>> groups;     // exposure ids, 0-based
	for (const auto& g : split_list(cfg.get_string("importance", "groups", def), ';')) {
		std::vector<int> ids;
		for (const auto& t : split_list(g)) {
			const int p = std::stoi(t) - 1;
			if (p < 0 || p >= P) throw std::invalid_argument(fmt::format("importance group '{}' names no exposure", g));
			ids.push_back(p);
		}
		std::sort(ids.begin(), ids.end());
		ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
		if (ids.empty() || static_cast<int>(ids.size()) == P) {
			throw std::invalid_argument(fmt::format("importance group '{}' must be a nonempty proper subset", g));
		}
		groups.push_back(ids);
	}
	std::vector<int> outcomes;
	std::string all_k;
	for (int k = 1; k <= spec.n_outcomes; ++k) all_k += fmt::format("{}{}", k > 1 ? "," : "", k);
	for (const auto& t : split_list(cfg.get_string("importance", "outcomes", all_k))) {
		const int k = std::stoi(t) - 1;
		if (k < 0 || k >= spec.n_outcomes) throw std::invalid_argument(fmt::format("importance outcome {} out of range", t));
		outcomes.push_back(k);
	}
	const int max_draws = cfg.get_int("importance", "max_draws", 200);
	const std::string bw = cfg.get_string("importance", "bandwidth", "silverman");
	cfg.check_unknown();
	const int threads = resolve_threads(args);
	if (max_draws < 1) throw std::invalid_argument("[importance] max_draws must be positive");
	if (fit.merged.draws.empty()) throw std::invalid_argument("no draws");

	const int n_tasks = static_cast<int>(outcomes.size() * groups.size());
	std::vector<ImportanceSummary> results(static_cast<std::size_t>(n_tasks));
	parallel_for(n_tasks, threads, [&](int t) {
		const int k = outcomes[static_cast<std::size_t>(t) / groups.size()];
		const auto& g = groups[static_cast<std::size_t>(t) % groups.size()];
		std::vector<int> cols;
		for (int p : g) for (int l = 0; l < width; ++l) cols.push_back(p * width + l);
		ConditionalModel cond;
		if (bw != "silverman") {
			const double h = std::stod(bw);
			if (!(h > 0.0)) throw std::invalid_argument("[importance] bandwidth must be positive or 'silverman'");
			cond.bandwidth = Eigen::VectorXd::Constant(spec.exposure_dim - static_cast<int>(cols.size()), h);
		}
		results[static_cast<std::size_t>(t)] = importance_from_chain(fit.merged, k, cols, cond, max_draws);
	});
	const fs::path out(args.out);
	fs::create_directories(out);
	{
		auto f = fmt::output_file((out / "importance.csv").string());
		f.print("outcome,group,mean,lower,upper,excursions,missing,n_draws\n");
		for (int t = 0; t < n_tasks; ++t) {
			const int k = outcomes[static_cast<std::size_t>(t) / groups.size()];
			const auto& g = groups[static_cast<std::size_t>(t) % groups.size()];
			std::string label;
			for (int p : g) label += fmt::format("{}x{}", label.empty() ? "" : "+", p + 1);
			const ImportanceSummary& s = results[static_cast<std::size_t>(t)];
			f.print("{},{},{},{},{},{},{},{}\n", k + 1, label, exact(s.mean), exact(s.lower), exact(s.upper),
			        s.excursions, s.missing, s.n_draws);
		}
	}
	write_manifest(out, "importance", cfg, {{"spec_hash", spec_hash(spec)}, {"fit_dir", fit_dir}});
	return 0;
}

int cmd_simulate(const CommonArgs& args) {
	Config cfg = Config::load(args.config);
	if (args.seed) cfg.set("simulate", "seed", std::to_string(*args.seed));
	const std::string scenario = cfg.require("simulate", "scenario");
	const int n = cfg.get_int("simulate", "n", 500);
	const int P = cfg.get_int("simulate", "P", 0);
	const int L = cfg.get_int("simulate", "L", 0);
	const std::uint64_t seed = cfg.get_seed("simulate", "seed", 1);
	cfg.check_unknown();
	resolve_threads(args);
	if (n < 2) throw std::invalid_argument("[simulate] n must be at least 2");
	const SimResult sim = simulate_scenario(scenario, n, seed, P, L);
	const fs::path out(args.out);
	fs::create_directories(out);
	write_dataset_csv((out / "data.csv").string(), sim.data);
	write_truth_json((out / "truth.json").string(), sim.truth);
	write_manifest(out, "simulate", cfg, {{"seed", seed}, {"scenario", scenario}});
	return 0;
}

int cmd_study(const CommonArgs& args) {
	Config cfg = Config::load(args.config);
	if (args.seed) cfg.set("study", "seed", std::to_string(*args.seed));
	StudyConfig sc = study_config_from_config(cfg);
	cfg.check_unknown();
	sc.threads = resolve_threads(args);
	const fs::path out(args.out);
	fs::create_directories(out);
	sc.cache_dir = (out / "cache").string();
	const StudyResult r = run_replication_study(sc);
	write_study_csv((out / "study.csv").string(), r);
	write_study_summary_csv((out / "study_summary.csv").string(), r);
	json seeds = json::array();
	for (int rep = 0; rep < sc.n_reps; ++rep) seeds.push_back(replication_seed(sc.master_seed, rep));
	write_manifest(out, "study", cfg, {{"seed", sc.master_seed}, {"replication_seeds", seeds}});
	return 0;
}

void emit_error(int code, const std::string& message) {
	const json j = {{"error", {{"code", code}, {"kind", code == 1 ? "validation" : "runtime"}, {"message", message}}}};
	std::cerr << j.dump() << std::endl;
}

void setup_logging() {
	if (!spdlog::get("mixborrow")) {
		auto logger = spdlog::stderr_logger_mt("mixborrow");
		spdlog::set_default_logger(logger);
	}
}

} // namespace

int run_cli(int argc, const char* const* argv) {
	setup_logging();
	CLI::App app{"Bayesian multivariate index models with co-clustering"};
	app.require_subcommand(1);
	app.set_version_flag("--version", kVersion);
	CommonArgs args;
	std::string level = "info";
	app.add_option("--log-level", level, "trace, debug, info, warn, error or off")
	    ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

	struct Sub {
		const char* name;
		const char* help;
		int (*fn)(const CommonArgs&);
		bool seed;
	};
	const std::vector<Sub> subs{{"fit", "run the sampler on a dataset", cmd_fit, true},
	                            {"simulate", "generate a simulated dataset with its truth", cmd_simulate, true},
	                            {"study", "run a replication study", cmd_study, true},
	                            {"summarize", "posterior summaries of a finished fit", cmd_summarize, false},
	                            {"importance", "exposure importance of a finished fit", cmd_importance, false}};
	std::vector<CLI::App*> apps;
	for (const auto& s : subs) {
		CLI::App* sub = app.add_subcommand(s.name, s.help);
		sub->add_option("--config", args.config, "INI configuration file")->required()->check(CLI::ExistingFile);
		sub->add_option("--out", args.out, "output directory")->required();
		if (s.seed) sub->add_option("--seed", args.seed, "overrides the config seed");
		sub->add_option("--threads", args.threads, "worker threads (default: MIXBORROW_THREADS or 1)");
		apps.push_back(sub);
	}
	try {
		app.parse(argc, argv);
	} catch (const CLI::CallForHelp& e) {
		return app.exit(e);
	} catch (const CLI::CallForAllHelp& e) {
		return app.exit(e);
	} catch (const CLI::CallForVersion& e) {
		return app.exit(e);
	} catch (const CLI::ParseError& e) {
		emit_error(1, e.what());
		return 1;
	}
	spdlog::set_level(spdlog::level::from_str(level));
	try {
		for (std::size_t i = 0; i < subs.size(); ++i) {
			if (apps[i]->parsed()) return subs[i].fn(args);
		}
		throw std::logic_error("no subcommand");
	} catch (const std::invalid_argument& e) {
		emit_error(1, e.what());
		return 1;
	} catch (const std::out_of_range& e) {
		emit_error(1, e.what());
		return 1;
	} catch (const boost::property_tree::ptree_error& e) {
		emit_error(1, e.what());
		return 1;
	} catch (const std::exception& e) {
		emit_error(2, e.what());
		return 2;
	}
}

int run_cli(const std::vector<std::string>& args) {
	std::vector<const char*> argv;
	argv.reserve(args.size() + 1);
	argv.push_back("mixborrow");
	for (const auto& a : args) argv.push_back(a.c_str());
	return run_cli(static_cast<int>(argv.size()), argv.data());
}

} // namespace mixborrow
