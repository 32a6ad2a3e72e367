#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <cstdlib>

#include "mixborrow/config.hpp"
#include "mixborrow/io.hpp"
#include "mixborrow/simulate.hpp"

using namespace mixborrow;
namespace fs = std::filesystem;

namespace {

struct TempDir {
	fs::path path;
	explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
		fs::remove_all(path);
		fs::create_directories(path);
	}
	~TempDir() { fs::remove_all(path); }
	std::string file(const std::string& f) const { return (path / f).string(); }
};

std::string slurp(const std::string& path) {
	std::ifstream in(path, std::ios::binary);
	std::stringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

void check_same_state(const ParamState& a, const ParamState& b, bool with_u) {
	CHECK(a.cluster.z_beta == b.cluster.z_beta);
	CHECK(a.cluster.z_theta == b.cluster.z_theta);
	CHECK(a.cluster.v_beta == b.cluster.v_beta);
	CHECK(a.cluster.v_theta == b.cluster.v_theta);
	CHECK(a.cluster.alpha_beta == b.cluster.alpha_beta);
	CHECK(a.cluster.alpha_theta == b.cluster.alpha_theta);
	CHECK(a.cluster.rho == b.cluster.rho);
	REQUIRE(a.cluster.beta_atoms.size() == b.cluster.beta_atoms.size());
	for (std::size_t c = 0; c < a.cluster.beta_atoms.size(); ++c) CHECK(a.cluster.beta_atoms[c] == b.cluster.beta_atoms[c]);
	REQUIRE(a.cluster.theta_atoms.size() == b.cluster.theta_atoms.size());
	for (std::size_t c = 0; c < a.cluster.theta_atoms.size(); ++c) CHECK(a.cluster.theta_atoms[c] == b.cluster.theta_atoms[c]);
	CHECK(a.beta0 == b.beta0);
	CHECK(a.xi == b.xi);
	CHECK(a.sigma2 == b.sigma2);
	CHECK(a.lambda_beta == b.lambda_beta);
	CHECK(a.lambda_theta == b.lambda_theta);
	if (with_u) CHECK(a.u == b.u);
}

} // namespace

TEST_SUITE("io_config") {

TEST_CASE("exact number formatting") {
	for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 1e-320}) CHECK(std::strtod(exact(v).c_str(), nullptr) == v);
}

TEST_CASE("dataset round trip") {
	TempDir dir("mixborrow_io_dataset");
	const SimResult sim = gen_sim_a(30, 2, 2, 4);
	write_dataset_csv(dir.file("data.csv"), sim.data);
	const ModelSpec spec = build_dlnm_spec(2, 4, 0, 4);
	const Dataset back = read_dataset_csv(dir.file("data.csv"), spec);
	CHECK(back.Y == sim.data.Y);
	CHECK(back.Xstar == sim.data.Xstar);
	CHECK(back.Z.cols() == 0);

	// a spec asking for a fifth outcome names the missing column
	try {
		read_dataset_csv(dir.file("data.csv"), build_dlnm_spec(2, 4, 0, 5));
		FAIL("expected a missing-column error");
	} catch (const std::invalid_argument& e) {
		CHECK(std::string(e.what()).find("'y5'") != std::string::npos);
	}
	CHECK_THROWS_AS(read_dataset_csv(dir.file("absent.csv"), spec), std::invalid_argument);
}

TEST_CASE("chain dump round trip") {
	TempDir dir("mixborrow_io_chain");
	const SimResult sim = gen_sim_a(40, 3, 2, 4);
	Dataset d = sim.data;
	d.Y = d.Y.leftCols(2).eval();
	d.outcome_names.resize(2);
	const ModelSpec spec = build_dlnm_spec(2, 4, 0, 2);
	for (bool keep_u : {false, true}) {
		const ChainOutput ch = run_chain(spec, d, ChainControl{30, 10, 4, 7, keep_u});
		write_chain_csv(dir.file("chain.csv"), ch);
		std::vector<double> lp;
		const auto back = read_chain_csv(dir.file("chain.csv"), *ch.context, &lp);
		REQUIRE(back.size() == ch.draws.size());
		for (std::size_t s = 0; s < back.size(); ++s) check_same_state(back[s], ch.draws[s], keep_u);
		CHECK(lp == ch.log_posterior);
		const auto cols = chain_columns(*ch.context, keep_u);
		CHECK(std::find(cols.begin(), cols.end(), "z_beta.1.1") != cols.end());
		for (const auto& c : cols) CHECK(c.find(',') == std::string::npos);
		// writing the reloaded draws again reproduces the file byte for byte
		ChainOutput again = ch;
		again.draws = back;
		write_chain_csv(dir.file("chain2.csv"), again);
		CHECK(slurp(dir.file("chain.csv")) == slurp(dir.file("chain2.csv")));
	}
	const ChainOutput other = run_chain(build_dlnm_spec(2, 4, 0, 1), [&] {
		Dataset one = d;
		one.Y = d.Y.leftCols(1).eval();
		one.outcome_names.resize(1);
		return one;
	}(), ChainControl{4, 2, 1, 1, false});
	CHECK_THROWS_AS(read_chain_csv(dir.file("chain.csv"), *other.context), std::invalid_argument);
}

TEST_CASE("pointwise log-likelihood file") {
	TempDir dir("mixborrow_io_loglik");
	std::vector<Eigen::MatrixXd> ll{Eigen::MatrixXd::Random(5, 2), Eigen::MatrixXd::Random(5, 2)};
	write_loglik_bin(dir.file("ll.bin"), ll);
	const auto back = read_loglik_bin(dir.file("ll.bin"));
	REQUIRE(back.size() == 2);
	CHECK(back[0] == ll[0]);
	CHECK(back[1] == ll[1]);
	CHECK(slurp(dir.file("ll.bin")).substr(0, 4) == "MBLL");
	{
		std::ofstream f(dir.file("bad.bin"), std::ios::binary);
		f << "nope";
	}
	CHECK_THROWS_AS(read_loglik_bin(dir.file("bad.bin")), std::invalid_argument);
	const std::string full = slurp(dir.file("ll.bin"));
	{
		std::ofstream f(dir.file("short.bin"), std::ios::binary);
		f << full.substr(0, full.size() - 8);
	}
	CHECK_THROWS_AS(read_loglik_bin(dir.file("short.bin")), std::invalid_argument);
}

TEST_CASE("config parsing") {
	Config cfg = Config::parse("[model]\nkind = mim\nn_exposures = 3\nn_outcomes = 2\n[chain]\nn_iter = 100\nseed = 9\n");
	const ModelSpec spec = model_spec_from_config(cfg);
	CHECK(spec.kind == ModelKind::mim);
	CHECK(spec.n_exposures == 3);
	CHECK(spec.n_outcomes == 2);
	const ChainSettings cs = chain_settings_from_config(cfg);
	CHECK(cs.control.n_iter == 100);
	CHECK(cs.control.burn_in == 50);
	CHECK(cs.control.seed == 9);
	CHECK_NOTHROW(cfg.check_unknown());

	// the resolved document records defaults and parses back to the same spec
	Config again = Config::parse(cfg.resolved_ini());
	CHECK(spec_hash(model_spec_from_config(again)) == spec_hash(spec));

	Config typo = Config::parse("[model]\nkind = mim\nn_exposures = 2\nn_outcoms = 2\n");
	model_spec_from_config(typo);
	CHECK_THROWS_AS(typo.check_unknown(), std::invalid_argument);

	Config bad_int = Config::parse("[chain]\nn_iter = 10x\n");
	CHECK_THROWS_AS(chain_settings_from_config(bad_int), std::invalid_argument);
	Config bad_seed = Config::parse("[chain]\nseed = -3\n");
	CHECK_THROWS_AS(chain_settings_from_config(bad_seed), std::invalid_argument);
	Config bad_burn = Config::parse("[chain]\nn_iter = 10\nburn_in = 10\n");
	CHECK_THROWS_AS(chain_settings_from_config(bad_burn), std::invalid_argument);
	Config bad_bool = Config::parse("[model]\nclustering = maybe\n");
	CHECK_THROWS_AS(model_spec_from_config(bad_bool), std::invalid_argument);
	CHECK_THROWS_AS(Config::parse("loose = 1\n"), std::invalid_argument);
	Config empty;
	CHECK_THROWS_AS(empty.require("data", "path"), std::invalid_argument);
}

TEST_CASE("study settings") {
	Config cfg = Config::parse("[study]\nscenario = simB1\nn_reps = 3\nestimators = clustered, separate\n");
	const StudyConfig s = study_config_from_config(cfg);
	CHECK(s.scenario == "simB1");
	CHECK(s.n_reps == 3);
	CHECK(s.estimators == std::vector<std::string>{"clustered", "separate"});
	Config bad = Config::parse("[study]\nestimators = oracle\n");
	CHECK_THROWS_AS(study_config_from_config(bad), std::invalid_argument);
	CHECK(split_list(" a, b ,,c ") == std::vector<std::string>{"a", "b", "c"});
	CHECK(split_list("1;2,3", ';') == std::vector<std::string>{"1", "2,3"});
}

}
