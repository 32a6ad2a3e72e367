#include <memory>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mixborrow/cli.hpp"
#include "mixborrow/clustering.hpp"
#include "mixborrow/config.hpp"
#include "mixborrow/importance.hpp"
#include "mixborrow/posterior.hpp"
#include "mixborrow/sampler.hpp"
#include "mixborrow/simulate.hpp"

namespace py = pybind11;
using namespace mixborrow;

namespace {

struct PyFit {
	ChainOutput chain;
	std::string resolved;

	int n_draws() const { return static_cast<int>(chain.draws.size()); }

	py::dict erf(int k, int j, const Eigen::VectorXd& grid) const {
		const CurveSummary s = erf_summary(chain, k - 1, j - 1, grid);
		py::dict d;
		d["grid"] = s.grid;
		d["mean"] = s.mean;
		d["lower"] = s.lower;
		d["upper"] = s.upper;
		return d;
	}

	Eigen::VectorXd default_grid(int j, int points) const { return default_erf_grid(*chain.context, j - 1, points); }

	py::tuple heatmap() const {
		const ClusterHeatmap h = pairwise_clustering(chain);
		return py::make_tuple(h.prob_beta, h.prob_theta, h.labels);
	}

	py::dict waic() const {
		const Waic w = compute_waic(chain);
		py::dict d;
		d["waic"] = w.waic;
		d["lppd"] = w.lppd;
		d["p_waic"] = w.p_waic;
		return d;
	}

	Eigen::VectorXd omega(int k, int j) const { return omega_estimate(chain, k - 1, j - 1); }

	py::tuple importance(int k, const std::vector<int>& columns, int max_draws) const {
		std::vector<int> cols;
		for (int c : columns) cols.push_back(c - 1);
		const ImportanceSummary s = importance_from_chain(chain, k - 1, cols, {}, max_draws);
		return py::make_tuple(s.mean, s.lower, s.upper);
	}

	std::vector<double> log_posterior() const { return chain.log_posterior; }
};

std::unique_ptr<PyFit> fit(const std::string& config, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X,
                           const std::optional<Eigen::MatrixXd>& Z) {
	Config cfg = Config::parse(config);
	const ModelSpec spec = model_spec_from_config(cfg);
	const ChainSettings cs = chain_settings_from_config(cfg);
	cfg.check_unknown();
	if (cs.n_chains != 1) {
		throw std::invalid_argument("the python interface runs a single chain");
	}
	const Eigen::MatrixXd z = Z ? *Z : Eigen::MatrixXd(Y.rows(), 0);
	auto out = std::make_unique<PyFit>();
	{
		py::gil_scoped_release release;
		out->chain = run_chain(prepare_model(spec, X, z), Y, cs.control);
	}
	out->resolved = cfg.resolved_ini();
	return out;
}

py::dict simulate(const std::string& scenario, int n, std::uint64_t seed, int P, int L) {
	const SimResult r = simulate_scenario(scenario, n, seed, P, L);
	py::dict d;
	d["Y"] = r.data.Y;
	d["X"] = r.data.Xstar;
	d["outcome_names"] = r.data.outcome_names;
	d["exposure_names"] = r.data.exposure_names;
	d["f_id"] = r.truth.f_id;
	d["omega_id"] = r.truth.omega_id;
	d["omegas"] = r.truth.omegas;
	d["noise_sd"] = r.truth.noise_sd;
	const auto surface = r.truth.surface;
	d["surface"] = py::cpp_function([surface](const Eigen::MatrixXd& rows) { return surface(rows); });
	return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
	m.doc() = "Bayesian multivariate index models with co-clustering";
	m.attr("__version__") = kVersion;

	py::register_exception<std::invalid_argument>(m, "ValidationError", PyExc_ValueError);

	m.def("run_cli", py::overload_cast<const std::vector<std::string>&>(&run_cli), py::arg("args"),
	      py::call_guard<py::gil_scoped_release>(), "Runs the command-line front end; returns the exit code.");
	m.def("simulate", &simulate, py::arg("scenario"), py::arg("n"), py::arg("seed"), py::arg("P") = 0, py::arg("L") = 0);
	m.def("fit", &fit, py::arg("config"), py::arg("Y"), py::arg("X"), py::arg("Z") = py::none(),
	      "Runs one chain; `config` is INI text with [model], [hyper] and [chain] sections.");
	m.def("joint_indicator_pmf", &joint_indicator_pmf, py::arg("pi_beta"), py::arg("pi_theta"), py::arg("rho"));
	m.def("stick_weights", &stick_weights, py::arg("V"));
	m.def("lag_profile", &lag_profile, py::arg("id"), py::arg("L"));
	m.def("silverman_bandwidth", &silverman_bandwidth, py::arg("cols"));
	m.def(
	    "exposure_importance",
	    [](const std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>& f, const Eigen::MatrixXd& X, int p) {
		    const ImportanceValue v = exposure_importance(f, X, p - 1);
		    return py::make_tuple(v.phi, v.raw);
	    },
	    py::arg("f"), py::arg("X"), py::arg("p"), "Importance of column p (1-based); returns (phi, unclipped).");

	py::class_<PyFit>(m, "Fit")
	    .def_property_readonly("n_draws", &PyFit::n_draws)
	    .def_property_readonly("config", [](const PyFit& f) { return f.resolved; })
	    .def_property_readonly("log_posterior", &PyFit::log_posterior)
	    .def("erf", &PyFit::erf, py::arg("k"), py::arg("j"), py::arg("grid"))
	    .def("default_grid", &PyFit::default_grid, py::arg("j"), py::arg("points") = 21)
	    .def("heatmap", &PyFit::heatmap)
	    .def("waic", &PyFit::waic)
	    .def("omega", &PyFit::omega, py::arg("k"), py::arg("j"))
	    .def("importance", &PyFit::importance, py::arg("k"), py::arg("columns"), py::arg("max_draws") = 200);
}
