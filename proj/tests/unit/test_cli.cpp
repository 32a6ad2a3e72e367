#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mixborrow/cli.hpp"

using namespace mixborrow;
namespace fs = std::filesystem;

namespace {

struct Workspace {
	fs::path root;
	Workspace() : root(fs::temp_directory_path() / "mixborrow_cli_test") {
		fs::remove_all(root);
		fs::create_directories(root);
	}
	~Workspace() { fs::remove_all(root); }
	std::string write(const std::string& name, const std::string& text) const {
		std::ofstream(root / name) << text;
		return (root / name).string();
	}
	std::string dir(const std::string& name) const { return (root / name).string(); }
};

std::string slurp(const fs::path& p) {
	std::ifstream in(p, std::ios::binary);
	std::stringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

struct Run {
	int code;
	std::string err;
};

Run cli(const std::vector<std::string>& args) {
	std::ostringstream capture;
	auto* old = std::cerr.rdbuf(capture.rdbuf());
	const int code = run_cli(args);
	std::cerr.rdbuf(old);
	return {code, capture.str()};
}

std::set<std::string> listing(const fs::path& d) {
	std::set<std::string> names;
	for (const auto& e : fs::directory_iterator(d)) names.insert(e.path().filename().string());
	return names;
}

const char* kSim = "[simulate]\nscenario = simA\nn = 60\nP = 2\nL = 4\nseed = 5\n";

std::string fit_config(const std::string& extra = "", int K = 4) {
	return "[data]\npath = sim/data.csv\n[model]\nkind = dlnm\nn_outcomes = " + std::to_string(K) +
	       "\nn_exposures = 2\nn_lags = 4\ntruncation = 4\n[chain]\nn_iter = 40\nburn_in = 20\nthin = 2\nn_chains = 2\nseed = 3\n" +
	       extra;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("end to end") {
	Workspace ws;
	REQUIRE(cli({"simulate", "--config", ws.write("sim.ini", kSim), "--out", ws.dir("sim")}).code == 0);
	for (const char* f : {"data.csv", "truth.json", "manifest.json", "config.ini"}) CHECK(fs::exists(ws.root / "sim" / f));

	const std::string cfg = ws.write("fit.ini", fit_config());
	REQUIRE(cli({"fit", "--config", cfg, "--out", ws.dir("fit1")}).code == 0);
	const std::set<std::string> arts = listing(ws.root / "fit1");
	for (const char* f : {"chain_1.csv", "chain_2.csv", "loglik_1.bin", "acceptance.csv", "erf_k1_j1.csv", "erf_k4_j2.csv",
	                      "overall_k1.csv", "contrast_k1.csv", "omega_k1_j1.csv", "heatmap_beta.csv", "heatmap_theta.csv",
	                      "waic.json", "manifest.json", "config.ini"}) {
		CHECK_MESSAGE(arts.count(f) == 1, f);
	}
	const nlohmann::json manifest = nlohmann::json::parse(slurp(ws.root / "fit1" / "manifest.json"));
	CHECK(manifest["command"] == "fit");
	CHECK(manifest["seed"] == 3);
	CHECK(manifest.contains("spec_hash"));
	CHECK(manifest["versions"].contains("mixborrow"));

	SUBCASE("rerun from the manifest config is bit-identical") {
		REQUIRE(cli({"fit", "--config", (ws.root / "fit1" / "config.ini").string(), "--out", ws.dir("fit2"), "--threads",
		             "2"})
		            .code == 0);
		for (const auto& f : arts) {
			if (f == "manifest.json") continue;
			CHECK_MESSAGE(slurp(ws.root / "fit1" / f) == slurp(ws.root / "fit2" / f), f);
		}
	}
	SUBCASE("seed override changes the chain") {
		REQUIRE(cli({"fit", "--config", cfg, "--out", ws.dir("fit3"), "--seed", "4"}).code == 0);
		CHECK(slurp(ws.root / "fit1" / "chain_1.csv") != slurp(ws.root / "fit3" / "chain_1.csv"));
	}
	SUBCASE("summarize reproduces the fit summaries") {
		const std::string s = ws.write("sum.ini", "[summarize]\nfit_dir = fit1\n");
		REQUIRE(cli({"summarize", "--config", s, "--out", ws.dir("sum")}).code == 0);
		for (const char* f : {"erf_k2_j1.csv", "overall_k3.csv", "heatmap_beta.csv", "waic.json"}) {
			CHECK_MESSAGE(slurp(ws.root / "fit1" / f) == slurp(ws.root / "sum" / f), f);
		}
	}
	SUBCASE("heatmap request gives two labelled matrices") {
		const std::string s = ws.write("hm.ini", "[summarize]\nfit_dir = fit1\nrequests = heatmap\n");
		REQUIRE(cli({"summarize", "--config", s, "--out", ws.dir("hm")}).code == 0);
		const std::set<std::string> got = listing(ws.root / "hm");
		CHECK(got == std::set<std::string>{"heatmap_beta.csv", "heatmap_theta.csv", "manifest.json", "config.ini"});
		std::ifstream in(ws.root / "hm" / "heatmap_beta.csv");
		std::string header;
		std::getline(in, header);
		CHECK(header.rfind("pair,k1_j1,k1_j2,", 0) == 0);
		int rows = 0;
		for (std::string line; std::getline(in, line);) {
			++rows;
			CHECK(std::count(line.begin(), line.end(), ',') == 8);
		}
		CHECK(rows == 8);
	}
	SUBCASE("unknown summarize request") {
		const std::string s = ws.write("bad.ini", "[summarize]\nfit_dir = fit1\nrequests = erf,bogus\n");
		const Run r = cli({"summarize", "--config", s, "--out", ws.dir("bad")});
		CHECK(r.code == 1);
		CHECK(r.err.find("bogus") != std::string::npos);
		CHECK(!fs::exists(ws.root / "bad"));
	}
	SUBCASE("importance") {
		const std::string s = ws.write("imp.ini", "[importance]\nfit_dir = fit1\nmax_draws = 5\noutcomes = 1\n");
		REQUIRE(cli({"importance", "--config", s, "--out", ws.dir("imp")}).code == 0);
		std::ifstream in(ws.root / "imp" / "importance.csv");
		std::string header;
		std::getline(in, header);
		CHECK(header == "outcome,group,mean,lower,upper,excursions,missing,n_draws");
		int rows = 0;
		for (std::string line; std::getline(in, line);) ++rows;
		CHECK(rows == 2);
		const std::string g = ws.write("imp2.ini", "[importance]\nfit_dir = fit1\ngroups = 1,2\n");
		CHECK(cli({"importance", "--config", g, "--out", ws.dir("imp2")}).code == 1);
	}
	// nothing is written next to the configs besides the requested output directories
	for (const auto& name : listing(ws.root)) {
		CHECK_MESSAGE((fs::is_directory(ws.root / name) || name.ends_with(".ini")), name);
	}
}

TEST_CASE("validation errors exit with 1") {
	Workspace ws;
	REQUIRE(cli({"simulate", "--config", ws.write("sim.ini", kSim), "--out", ws.dir("sim")}).code == 0);

	const Run missing = cli({"fit", "--config", ws.write("k5.ini", fit_config("", 5)), "--out", ws.dir("k5")});
	CHECK(missing.code == 1);
	CHECK(missing.err.find("'y5'") != std::string::npos);
	const nlohmann::json err = nlohmann::json::parse(missing.err);
	CHECK(err["error"]["kind"] == "validation");

	const Run none = cli({"fit", "--config", ws.write("nd.ini", fit_config("[summarize]\nrequests = erf\n")), "--out",
	                      ws.dir("nd")});
	CHECK(none.code == 0);
	const std::string thin = "[data]\npath = sim/data.csv\n[model]\nkind = dlnm\nn_outcomes = 1\nn_exposures = 2\nn_lags = 4\n"
	                         "[chain]\nn_iter = 10\nburn_in = 5\nthin = 100\n";
	const Run empty = cli({"fit", "--config", ws.write("empty.ini", thin), "--out", ws.dir("empty")});
	CHECK(empty.code == 1);
	CHECK(empty.err.find("no draws") != std::string::npos);

	CHECK(cli({"fit", "--config", ws.write("typo.ini", fit_config("[chain]\n")), "--out", ws.dir("t")}).code == 1);
	CHECK(cli({"fit", "--config", ws.write("u.ini", fit_config() + "n_iters = 3\n"), "--out", ws.dir("u")}).code == 1);
	CHECK(cli({"fit", "--config", ws.dir("absent.ini"), "--out", ws.dir("a")}).code == 1);
	CHECK(cli({"fit", "--out", ws.dir("a")}).code == 1);
	CHECK(cli({"frobnicate"}).code == 1);
	CHECK(cli({"fit", "--config", ws.write("f.ini", fit_config()), "--out", ws.dir("th"), "--threads", "0"}).code == 1);
	CHECK(cli({"simulate", "--config", ws.write("s2.ini", "[simulate]\nscenario = simZ\n"), "--out", ws.dir("z")}).code ==
	      1);

	::setenv("MIXBORROW_THREADS", "lots", 1);
	CHECK(cli({"simulate", "--config", ws.write("s3.ini", kSim), "--out", ws.dir("env")}).code == 1);
	::setenv("MIXBORROW_THREADS", "2", 1);
	CHECK(cli({"simulate", "--config", ws.write("s4.ini", kSim), "--out", ws.dir("env2")}).code == 0);
	::unsetenv("MIXBORROW_THREADS");
}

TEST_CASE("study command") {
	Workspace ws;
	const std::string cfg = ws.write("study.ini",
	                                 "[study]\nscenario = simA\nn = 40\nP = 2\nL = 4\nn_reps = 2\nestimators = truth\n"
	                                 "n_iter = 20\nburn_in = 10\nseed = 8\n");
	REQUIRE(cli({"study", "--config", cfg, "--out", ws.dir("st")}).code == 0);
	for (const char* f : {"study.csv", "study_summary.csv", "manifest.json", "config.ini"}) CHECK(fs::exists(ws.root / "st" / f));
	CHECK(fs::exists(ws.root / "st" / "cache" / "rep2_truth.json"));
	const nlohmann::json m = nlohmann::json::parse(slurp(ws.root / "st" / "manifest.json"));
	CHECK(m["replication_seeds"].size() == 2);
	const std::string before = slurp(ws.root / "st" / "study.csv");
	REQUIRE(cli({"study", "--config", cfg, "--out", ws.dir("st")}).code == 0);
	CHECK(slurp(ws.root / "st" / "study.csv") == before);
}

}
