#include "mixborrow/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>

namespace mixborrow {

std::string to_string(ModelKind kind) {
	switch (kind) {
	case ModelKind::dlnm: return "dlnm";
	case ModelKind::mim: return "mim";
	case ModelKind::additive: return "additive";
	case ModelKind::biomarker: return "biomarker";
	case ModelKind::nonseparable_dlnm: return "nonseparable_dlnm";
	}
	return "unknown";
}

std::string to_string(ThetaMethod method) {
	return method == ThetaMethod::polar ? "polar" : "fisher_bingham_projection";
}

std::string to_string(StickUpdate method) { return method == StickUpdate::mh ? "mh" : "grid"; }

ModelKind parse_model_kind(const std::string& s) {
	if (s == "dlnm") return ModelKind::dlnm;
	if (s == "mim") return ModelKind::mim;
	if (s == "additive") return ModelKind::additive;
	if (s == "biomarker") return ModelKind::biomarker;
	if (s == "nonseparable_dlnm" || s == "nonseparable") return ModelKind::nonseparable_dlnm;
	throw std::invalid_argument("unknown model kind '" + s + "'");
}

ThetaMethod parse_theta_method(const std::string& s) {
	if (s == "polar") return ThetaMethod::polar;
	if (s == "fisher_bingham_projection" || s == "fb") return ThetaMethod::fisher_bingham_projection;
	throw std::invalid_argument("unknown theta update method '" + s + "'");
}

StickUpdate parse_stick_update(const std::string& s) {
	if (s == "mh") return StickUpdate::mh;
	if (s == "grid") return StickUpdate::grid;
	throw std::invalid_argument("unknown stick update '" + s + "'");
}

void HyperParams::validate() const {
	const double pos[] = {a_beta, b_beta, a_theta, b_theta, a_rho, b_rho, a_lambda_beta, b_lambda_beta,
	                      a_lambda_theta, b_lambda_theta, a_xi, b_xi, a_sigma, b_sigma, rw_sd, angle_proposal_shape};
	for (double v : pos) {
		if (!(v > 0.0) || !std::isfinite(v)) {
			throw std::invalid_argument("hyperparameters must be positive and finite");
		}
	}
	if (gridsize < 2) {
		throw std::invalid_argument("gridsize must be at least 2");
	}
	if (!(null_ridge >= 0.0)) {
		throw std::invalid_argument("null_ridge must be non-negative");
	}
	if (angle_proposal_shape < 2.0) {
		throw std::invalid_argument("angle_proposal_shape must be >= 2");
	}
}

void ModelSpec::validate() const {
	if (n_outcomes < 1 || n_indices < 1 || exposure_dim < 1) {
		throw std::invalid_argument("K, J and M must be positive");
	}
	if (static_cast<int>(index_designs.size()) != n_indices) {
		throw std::invalid_argument("need exactly J index designs");
	}
	const Eigen::Index rows = reduction_basis.rows();
	for (const auto& a : index_designs) {
		if (a.rows() != rows || a.cols() != exposure_dim) {
			throw std::invalid_argument(fmt::format("index design must be {} x {} (got {} x {})", rows, exposure_dim,
			                                        a.rows(), a.cols()));
		}
	}
	if (reduction_basis.cols() < 1 || reduction_basis.cols() > rows) {
		throw std::invalid_argument("reduction basis must have 1..r columns");
	}
	const Eigen::MatrixXd gram = reduction_basis.transpose() * reduction_basis;
	if ((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() > 1e-10) {
		throw std::invalid_argument("reduction basis columns are not orthonormal");
	}
	if (truncation < 1) {
		throw std::invalid_argument("truncation C must be >= 1");
	}
	if (!clustering && truncation < pairs()) {
		throw std::invalid_argument("the no-clustering fit needs C >= K*J");
	}
	spline.validate();
	hyper.validate();
	if (theta_method == ThetaMethod::polar && hyper.tau_theta != 0.0) {
		throw std::invalid_argument("tau_theta must be 0 with the polar update");
	}
	if (difference_order < 1) {
		throw std::invalid_argument("difference order must be >= 1");
	}
	if ((kind == ModelKind::dlnm || kind == ModelKind::nonseparable_dlnm) && difference_order >= n_lags) {
		throw std::invalid_argument("difference order must be below the number of lags");
	}
}

namespace {

void fnv_mix(std::uint64_t& h, const std::string& s) {
	for (unsigned char ch : s) {
		h ^= ch;
		h *= 0x100000001B3ULL;
	}
}

void fnv_matrix(std::uint64_t& h, const Eigen::MatrixXd& m) {
	fnv_mix(h, fmt::format("[{}x{}]", m.rows(), m.cols()));
	for (Eigen::Index j = 0; j < m.cols(); ++j) {
		for (Eigen::Index i = 0; i < m.rows(); ++i) {
			fnv_mix(h, fmt::format("{:.17g},", m(i, j)));
		}
	}
}

} // namespace

std::string spec_hash(const ModelSpec& spec) {
	std::uint64_t h = 0xCBF29CE484222325ULL;
	const HyperParams& hp = spec.hyper;
	fnv_mix(h, fmt::format("{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}", to_string(spec.kind), spec.n_outcomes,
	                       spec.n_indices, spec.exposure_dim, spec.truncation, to_string(spec.theta_method),
	                       to_string(spec.stick_update), spec.orthogonalize_random_effects, spec.clustering,
	                       spec.difference_order, spec.n_exposures, spec.n_lags, spec.lag_basis_dim, spec.spline.degree,
	                       spec.spline.n_basis));
	fnv_mix(h, fmt::format("{:.17g}|{:.17g}", spec.spline.lo, spec.spline.hi));
	const double hv[] = {hp.a_beta, hp.b_beta, hp.a_theta, hp.b_theta, hp.a_rho, hp.b_rho, hp.a_lambda_beta,
	                     hp.b_lambda_beta, hp.a_lambda_theta, hp.b_lambda_theta, hp.a_xi, hp.b_xi, hp.a_sigma,
	                     hp.b_sigma, hp.tau_theta, hp.rw_sd, hp.null_ridge, hp.angle_proposal_shape};
	for (double v : hv) {
		fnv_mix(h, fmt::format("{:.17g};", v));
	}
	fnv_mix(h, fmt::format("g{}", hp.gridsize));
	for (const auto& a : spec.index_designs) {
		fnv_matrix(h, a);
	}
	fnv_matrix(h, spec.reduction_basis);
	return fmt::format("{:016x}", h);
}

Eigen::MatrixXd lag_reduction_basis(int n_lags, int m) {
	if (m < 1 || m > n_lags) {
		throw std::invalid_argument("basis dimension must satisfy 1 <= m <= L");
	}
	const Eigen::VectorXd lags = Eigen::VectorXd::LinSpaced(n_lags, 1.0, static_cast<double>(n_lags));
	const Eigen::MatrixXd raw = natural_spline_basis(lags, m);
	Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
	Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n_lags, m);
	// fix column signs so the construction does not depend on the QR library's sign choices
	const Eigen::MatrixXd r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
	for (int c = 0; c < m; ++c) {
		if (r(c, c) < 0.0) {
			q.col(c) *= -1.0;
		}
	}
	return q;
}

namespace {

Eigen::MatrixXd block_selector(int block, int n_blocks, int width) {
	Eigen::MatrixXd a = Eigen::MatrixXd::Zero(width, n_blocks * width);
	a.block(0, block * width, width, width).setIdentity();
	return a;
}

} // namespace

ModelSpec build_dlnm_spec(int n_exposures, int n_lags, int m, int n_outcomes) {
	if (n_exposures < 1) {
		throw std::invalid_argument("DLNM needs P >= 1");
	}
	if (n_lags < 2) {
		throw std::invalid_argument("DLNM needs L >= 2");
	}
	if (m > n_lags) {
		throw std::invalid_argument(fmt::format("basis dimension m={} exceeds L={}", m, n_lags));
	}
	if (n_outcomes < 1) {
		throw std::invalid_argument("need K >= 1");
	}
	ModelSpec spec;
	spec.kind = ModelKind::dlnm;
	spec.n_outcomes = n_outcomes;
	spec.n_indices = n_exposures;
	spec.n_exposures = n_exposures;
	spec.n_lags = n_lags;
	spec.exposure_dim = n_exposures * n_lags;
	for (int p = 0; p < n_exposures; ++p) {
		spec.index_designs.push_back(block_selector(p, n_exposures, n_lags));
	}
	spec.reduction_basis = (m > 0) ? lag_reduction_basis(n_lags, m) : Eigen::MatrixXd::Identity(n_lags, n_lags);
	spec.difference_order = std::min(2, n_lags - 1);
	spec.theta_method = spec.m() >= 8 ? ThetaMethod::fisher_bingham_projection : ThetaMethod::polar;
	spec.set_default_truncation();
	return spec;
}

ModelSpec build_mim_spec(int n_exposures, int n_indices, int n_outcomes) {
	if (n_exposures < 2) {
		throw std::invalid_argument("MIM needs P >= 2");
	}
	if (n_indices < 1 || n_outcomes < 1) {
		throw std::invalid_argument("MIM needs J >= 1 and K >= 1");
	}
	ModelSpec spec;
	spec.kind = ModelKind::mim;
	spec.n_outcomes = n_outcomes;
	spec.n_indices = n_indices;
	spec.n_exposures = n_exposures;
	spec.exposure_dim = n_exposures;
	spec.index_designs.assign(n_indices, Eigen::MatrixXd::Identity(n_exposures, n_exposures));
	spec.reduction_basis = Eigen::MatrixXd::Identity(n_exposures, n_exposures);
	spec.theta_method = n_exposures >= 8 ? ThetaMethod::fisher_bingham_projection : ThetaMethod::polar;
	spec.set_default_truncation();
	return spec;
}

ModelSpec build_additive_spec(int n_exposures, int n_outcomes) {
	if (n_exposures < 1 || n_outcomes < 1) {
		throw std::invalid_argument("additive model needs P >= 1 and K >= 1");
	}
	ModelSpec spec;
	spec.kind = ModelKind::additive;
	spec.n_outcomes = n_outcomes;
	spec.n_indices = n_exposures;
	spec.n_exposures = n_exposures;
	spec.exposure_dim = n_exposures;
	for (int p = 0; p < n_exposures; ++p) {
		spec.index_designs.push_back(block_selector(p, n_exposures, 1));
	}
	spec.reduction_basis = Eigen::MatrixXd::Identity(1, 1);
	spec.set_default_truncation();
	return spec;
}

ModelSpec build_biomarker_spec(int n_exposures, int n_biomarkers, int n_outcomes) {
	if (n_exposures < 1 || n_biomarkers < 2 || n_outcomes < 1) {
		throw std::invalid_argument("biomarker model needs P >= 1, B >= 2 and K >= 1");
	}
	ModelSpec spec;
	spec.kind = ModelKind::biomarker;
	spec.n_outcomes = n_outcomes;
	spec.n_indices = n_exposures;
	spec.n_exposures = n_exposures;
	spec.n_lags = n_biomarkers;
	spec.exposure_dim = n_exposures * n_biomarkers;
	for (int p = 0; p < n_exposures; ++p) {
		spec.index_designs.push_back(block_selector(p, n_exposures, n_biomarkers));
	}
	spec.reduction_basis = Eigen::MatrixXd::Identity(n_biomarkers, n_biomarkers);
	spec.theta_method = n_biomarkers >= 8 ? ThetaMethod::fisher_bingham_projection : ThetaMethod::polar;
	spec.set_default_truncation();
	return spec;
}

void Dataset::validate() const {
	const Eigen::Index n = Y.rows();
	if (n < 2) {
		throw std::invalid_argument("dataset needs at least 2 rows");
	}
	if (Xstar.rows() != n || (Z.size() > 0 && Z.rows() != n)) {
		throw std::invalid_argument("Y, X* and Z must share the row count");
	}
	auto finite = [](const Eigen::MatrixXd& m) { return m.size() == 0 || m.allFinite(); };
	if (!finite(Y) || !finite(Xstar) || !finite(Z)) {
		throw std::invalid_argument("dataset contains missing or non-finite values");
	}
}

std::vector<std::string> expected_exposure_columns(const ModelSpec& spec) {
	std::vector<std::string> out;
	switch (spec.kind) {
	case ModelKind::dlnm:
	case ModelKind::biomarker:
	case ModelKind::nonseparable_dlnm:
		for (int p = 1; p <= spec.n_exposures; ++p) {
			for (int l = 1; l <= spec.n_lags; ++l) {
				out.push_back(fmt::format("x{}_l{}", p, l));
			}
		}
		break;
	case ModelKind::mim:
	case ModelKind::additive:
		for (int p = 1; p <= spec.n_exposures; ++p) {
			out.push_back(fmt::format("x{}", p));
		}
		break;
	}
	if (static_cast<int>(out.size()) != spec.exposure_dim) {
		throw std::invalid_argument("spec has no catalogued exposure column layout");
	}
	return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
	std::vector<std::string> out;
	std::string cell;
	std::istringstream ss(line);
	while (std::getline(ss, cell, ',')) {
		while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) {
			cell.pop_back();
		}
		std::size_t start = 0;
		while (start < cell.size() && cell[start] == ' ') {
			++start;
		}
		out.push_back(cell.substr(start));
	}
	if (!line.empty() && line.back() == ',') {
		out.emplace_back();
	}
	return out;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
	if (cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" || cell == "nan") {
		throw std::invalid_argument(fmt::format("missing value in column '{}' at data row {}", column, row));
	}
	std::size_t used = 0;
	double v = 0.0;
	try {
		v = std::stod(cell, &used);
	} catch (const std::exception&) {
		used = 0;
	}
	if (used != cell.size() || !std::isfinite(v)) {
		throw std::invalid_argument(fmt::format("bad numeric value '{}' in column '{}' at data row {}", cell, column, row));
	}
	return v;
}

} // namespace

Dataset read_dataset_csv(const std::string& path, const ModelSpec& spec) {
	std::ifstream in(path);
	if (!in) {
		throw std::invalid_argument("cannot open data file '" + path + "'");
	}
	std::string line;
	if (!std::getline(in, line)) {
		throw std::invalid_argument("data file '" + path + "' has no header");
	}
	const std::vector<std::string> header = split_csv_line(line);
	std::map<std::string, std::size_t> col;
	for (std::size_t i = 0; i < header.size(); ++i) {
		col[header[i]] = i;
	}
	Dataset data;
	for (int k = 1; k <= spec.n_outcomes; ++k) {
		data.outcome_names.push_back(fmt::format("y{}", k));
	}
	data.exposure_names = expected_exposure_columns(spec);
	for (const auto& h : header) {
		if (!h.empty() && h[0] == 'z') {
			data.covariate_names.push_back(h);
		}
	}
	auto require = [&](const std::string& name) {
		if (!col.count(name)) {
			throw std::invalid_argument("missing column '" + name + "' in '" + path + "'");
		}
		return col.at(name);
	};
	std::vector<std::size_t> yi, xi, zi;
	for (const auto& nm : data.outcome_names) yi.push_back(require(nm));
	for (const auto& nm : data.exposure_names) xi.push_back(require(nm));
	for (const auto& nm : data.covariate_names) zi.push_back(require(nm));

	std::vector<std::vector<std::string>> rows;
	while (std::getline(in, line)) {
		if (line.empty() || line == "\r") {
			continue;
		}
		rows.push_back(split_csv_line(line));
		if (rows.back().size() != header.size()) {
			throw std::invalid_argument(fmt::format("data row {} has {} cells, header has {}", rows.size(),
			                                        rows.back().size(), header.size()));
		}
	}
	const auto n = static_cast<Eigen::Index>(rows.size());
	data.Y.resize(n, static_cast<Eigen::Index>(yi.size()));
	data.Xstar.resize(n, static_cast<Eigen::Index>(xi.size()));
	data.Z.resize(n, static_cast<Eigen::Index>(zi.size()));
	for (Eigen::Index i = 0; i < n; ++i) {
		const auto& r = rows[static_cast<std::size_t>(i)];
		for (std::size_t c = 0; c < yi.size(); ++c) data.Y(i, c) = parse_cell(r[yi[c]], i + 1, header[yi[c]]);
		for (std::size_t c = 0; c < xi.size(); ++c) data.Xstar(i, c) = parse_cell(r[xi[c]], i + 1, header[xi[c]]);
		for (std::size_t c = 0; c < zi.size(); ++c) data.Z(i, c) = parse_cell(r[zi[c]], i + 1, header[zi[c]]);
	}
	data.validate();
	return data;
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
	auto out = fmt::output_file(path);
	std::string head;
	auto add = [&](const std::string& s) {
		if (!head.empty()) head += ',';
		head += s;
	};
	for (const auto& s : data.outcome_names) add(s);
	for (const auto& s : data.exposure_names) add(s);
	for (const auto& s : data.covariate_names) add(s);
	out.print("{}\n", head);
	for (Eigen::Index i = 0; i < data.n(); ++i) {
		std::string row;
		auto cell = [&](double v) {
			if (!row.empty()) row += ',';
			row += fmt::format("{:.17g}", v);
		};
		for (Eigen::Index c = 0; c < data.Y.cols(); ++c) cell(data.Y(i, c));
		for (Eigen::Index c = 0; c < data.Xstar.cols(); ++c) cell(data.Xstar(i, c));
		for (Eigen::Index c = 0; c < data.Z.cols(); ++c) cell(data.Z(i, c));
		out.print("{}\n", row);
	}
}

std::vector<Eigen::MatrixXd> compute_index_inputs(const ModelSpec& spec, const Eigen::MatrixXd& Xstar) {
	if (Xstar.cols() != spec.exposure_dim) {
		throw std::invalid_argument(fmt::format("X* has {} columns, spec expects M={}", Xstar.cols(), spec.exposure_dim));
	}
	std::vector<Eigen::MatrixXd> out;
	out.reserve(spec.index_designs.size());
	for (const auto& a : spec.index_designs) {
		if (a.cols() != Xstar.cols() || a.rows() != spec.reduction_basis.rows()) {
			throw std::invalid_argument("index design does not conform with X* and the reduction basis");
		}
		out.push_back(Xstar * (a.transpose() * spec.reduction_basis));
	}
	return out;
}

Eigen::VectorXd flat_theta(const ModelSpec& spec) {
	Eigen::VectorXd t = spec.reduction_basis.transpose() * Eigen::VectorXd::Ones(spec.r());
	if (t.norm() < 1e-12) {
		t = Eigen::VectorXd::Zero(spec.m());
		t(spec.m() - 1) = 1.0;
	}
	t.normalize();
	if (t(t.size() - 1) < 0.0) {
		t = -t;
	}
	return t;
}

} // namespace mixborrow
