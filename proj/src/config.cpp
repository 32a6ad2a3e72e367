#include "mixborrow/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <fmt/format.h>

#include "mixborrow/nonseparable.hpp"

namespace mixborrow {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
	const auto b = s.find_first_not_of(" \t\r\n");
	if (b == std::string::npos) return "";
	const auto e = s.find_last_not_of(" \t\r\n");
	return s.substr(b, e - b + 1);
}

std::string where(const std::string& section, const std::string& key) { return fmt::format("[{}] {}", section, key); }

template <class T, class F>
T convert(const std::string& text, const std::string& section, const std::string& key, F fn) {
	try {
		std::size_t used = 0;
		const T v = fn(text, &used);
		if (used != text.size()) throw std::invalid_argument("trailing characters");
		return v;
	} catch (const std::exception&) {
		throw std::invalid_argument(fmt::format("{}: cannot parse '{}'", where(section, key), text));
	}
}

} // namespace

std::vector<std::string> split_list(const std::string& s, char delim) {
	std::vector<std::string> out;
	std::stringstream ss(s);
	std::string item;
	while (std::getline(ss, item, delim)) {
		item = trim(item);
		if (!item.empty()) out.push_back(item);
	}
	return out;
}

Config Config::load(const std::string& path) {
	std::ifstream in(path);
	if (!in) {
		throw std::invalid_argument(fmt::format("cannot open config {}", path));
	}
	std::stringstream ss;
	ss << in.rdbuf();
	Config c = parse(ss.str());
	c.source_dir_ = std::filesystem::absolute(path).parent_path().string();
	return c;
}

Config Config::parse(const std::string& text) {
	Config c;
	std::istringstream in(text);
	try {
		pt::read_ini(in, c.raw_);
	} catch (const pt::ini_parser_error& e) {
		throw std::invalid_argument(fmt::format("config line {}: {}", e.line(), e.message()));
	}
	for (const auto& [name, child] : c.raw_) {
		if (child.empty() && !child.data().empty()) {
			throw std::invalid_argument(fmt::format("config key '{}' is outside any section", name));
		}
	}
	c.source_dir_ = std::filesystem::current_path().string();
	return c;
}

bool Config::has_section(const std::string& section) const { return raw_.get_child_optional(section).has_value(); }

bool Config::has(const std::string& section, const std::string& key) const {
	const auto sec = raw_.get_child_optional(section);
	return sec && sec->get_child_optional(pt::ptree::path_type(key, '\0'));
}

std::string Config::raw(const std::string& section, const std::string& key, const std::string& fallback) {
	sections_used_.insert(section);
	used_.emplace(section, key);
	std::string value = fallback;
	if (const auto sec = raw_.get_child_optional(section)) {
		if (const auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'))) value = trim(*v);
	}
	resolved_.put(pt::ptree::path_type(section + '\x1f' + key, '\x1f'), value);
	return value;
}

int Config::get_int(const std::string& section, const std::string& key, int fallback) {
	return convert<int>(raw(section, key, std::to_string(fallback)), section, key,
	                    [](const std::string& t, std::size_t* u) { return std::stoi(t, u); });
}

long Config::get_long(const std::string& section, const std::string& key, long fallback) {
	return convert<long>(raw(section, key, std::to_string(fallback)), section, key,
	                     [](const std::string& t, std::size_t* u) { return std::stol(t, u); });
}

std::uint64_t Config::get_seed(const std::string& section, const std::string& key, std::uint64_t fallback) {
	const std::string t = raw(section, key, std::to_string(fallback));
	if (!t.empty() && t[0] == '-') {
		throw std::invalid_argument(fmt::format("{}: seeds are non-negative", where(section, key)));
	}
	return convert<std::uint64_t>(t, section, key, [](const std::string& s, std::size_t* u) { return std::stoull(s, u); });
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) {
	return convert<double>(raw(section, key, fmt::format("{}", fallback)), section, key,
	                       [](const std::string& t, std::size_t* u) { return std::stod(t, u); });
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) {
	std::string t = raw(section, key, fallback ? "true" : "false");
	std::transform(t.begin(), t.end(), t.begin(), [](unsigned char ch) { return std::tolower(ch); });
	if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
	if (t == "false" || t == "0" || t == "no" || t == "off") return false;
	throw std::invalid_argument(fmt::format("{}: expected true/false, got '{}'", where(section, key), t));
}

std::string Config::get_string(const std::string& section, const std::string& key, const std::string& fallback) {
	return raw(section, key, fallback);
}

std::string Config::require(const std::string& section, const std::string& key) {
	if (!has(section, key)) {
		throw std::invalid_argument(fmt::format("missing required config key {}", where(section, key)));
	}
	return raw(section, key, "");
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
	raw_.put(pt::ptree::path_type(section + '\x1f' + key, '\x1f'), value);
	raw(section, key, value);
}

void Config::check_unknown() const {
	for (const auto& [section, child] : raw_) {
		if (!sections_used_.count(section)) continue;
		for (const auto& [key, value] : child) {
			if (!used_.count({section, key})) {
				throw std::invalid_argument(fmt::format("unknown config key {}", where(section, key)));
			}
		}
	}
}

std::string Config::resolved_ini() const {
	std::ostringstream out;
	pt::write_ini(out, resolved_);
	return out.str();
}

ModelSpec model_spec_from_config(Config& cfg) {
	const ModelKind kind = parse_model_kind(cfg.get_string("model", "kind", "dlnm"));
	const int K = cfg.get_int("model", "n_outcomes", 1);
	const int P = cfg.get_int("model", "n_exposures", 1);
	if (K < 1 || P < 1) {
		throw std::invalid_argument("[model] n_outcomes and n_exposures must be positive");
	}
	ModelSpec spec;
	switch (kind) {
	case ModelKind::dlnm:
		spec = build_dlnm_spec(P, cfg.get_int("model", "n_lags", 2), cfg.get_int("model", "reduction_dim", 0), K);
		break;
	case ModelKind::mim:
		spec = build_mim_spec(P, cfg.get_int("model", "n_indices", P), K);
		break;
	case ModelKind::additive:
		spec = build_additive_spec(P, K);
		break;
	case ModelKind::biomarker:
		spec = build_biomarker_spec(P, cfg.get_int("model", "n_biomarkers", 2), K);
		break;
	case ModelKind::nonseparable_dlnm: {
		const int L = cfg.get_int("model", "n_lags", 2);
		spec = build_nonseparable_spec(P, L, cfg.get_int("model", "lag_basis_dim", std::min(6, L)), K);
		break;
	}
	}
	const int C = cfg.get_int("model", "truncation", 0);
	if (C < 0) {
		throw std::invalid_argument("[model] truncation must be positive (0 selects K*J)");
	}
	if (C > 0) spec.truncation = C;
	spec.theta_method = parse_theta_method(cfg.get_string("model", "theta_method", to_string(spec.theta_method)));
	spec.stick_update = parse_stick_update(cfg.get_string("model", "stick_update", to_string(spec.stick_update)));
	spec.orthogonalize_random_effects =
	    cfg.get_bool("model", "orthogonalize_random_effects", spec.orthogonalize_random_effects);
	spec.clustering = cfg.get_bool("model", "clustering", spec.clustering);
	spec.difference_order = cfg.get_int("model", "difference_order", spec.difference_order);
	spec.spline.degree = cfg.get_int("model", "spline_degree", spec.spline.degree);
	spec.spline.n_basis = cfg.get_int("model", "spline_basis", spec.spline.n_basis);

	HyperParams& h = spec.hyper;
	auto real = [&](const char* key, double& v) { v = cfg.get_double("hyper", key, v); };
	real("a_beta", h.a_beta);
	real("b_beta", h.b_beta);
	real("a_theta", h.a_theta);
	real("b_theta", h.b_theta);
	real("a_rho", h.a_rho);
	real("b_rho", h.b_rho);
	real("a_lambda_beta", h.a_lambda_beta);
	real("b_lambda_beta", h.b_lambda_beta);
	real("a_lambda_theta", h.a_lambda_theta);
	real("b_lambda_theta", h.b_lambda_theta);
	real("a_xi", h.a_xi);
	real("b_xi", h.b_xi);
	real("a_sigma", h.a_sigma);
	real("b_sigma", h.b_sigma);
	real("tau_theta", h.tau_theta);
	real("rw_sd", h.rw_sd);
	h.gridsize = cfg.get_int("hyper", "gridsize", h.gridsize);
	real("null_ridge", h.null_ridge);
	real("angle_proposal_shape", h.angle_proposal_shape);
	spec.validate();
	return spec;
}

ChainSettings chain_settings_from_config(Config& cfg) {
	ChainSettings s;
	s.control.n_iter = cfg.get_long("chain", "n_iter", 2000);
	s.control.burn_in = cfg.get_long("chain", "burn_in", s.control.n_iter / 2);
	s.control.thin = cfg.get_long("chain", "thin", 1);
	s.n_chains = cfg.get_int("chain", "n_chains", 1);
	s.control.seed = cfg.get_seed("chain", "seed", 1);
	s.control.keep_random_effects = cfg.get_bool("chain", "keep_random_effects", false);
	if (s.control.n_iter < 1 || s.control.burn_in < 0 || s.control.burn_in >= s.control.n_iter || s.control.thin < 1) {
		throw std::invalid_argument("[chain] needs n_iter >= 1, 0 <= burn_in < n_iter, thin >= 1");
	}
	if (s.n_chains < 1) {
		throw std::invalid_argument("[chain] n_chains must be positive");
	}
	return s;
}

StudyConfig study_config_from_config(Config& cfg) {
	StudyConfig s;
	s.scenario = cfg.get_string("study", "scenario", s.scenario);
	s.n = cfg.get_int("study", "n", s.n);
	s.P = cfg.get_int("study", "P", s.P);
	s.L = cfg.get_int("study", "L", s.L);
	s.n_reps = cfg.get_int("study", "n_reps", s.n_reps);
	std::string est;
	for (const auto& e : s.estimators) est += (est.empty() ? "" : ",") + e;
	s.estimators = split_list(cfg.get_string("study", "estimators", est));
	s.n_iter = cfg.get_long("study", "n_iter", s.n_iter);
	s.burn_in = cfg.get_long("study", "burn_in", s.burn_in);
	s.thin = cfg.get_long("study", "thin", s.thin);
	s.master_seed = cfg.get_seed("study", "seed", s.master_seed);
	s.truncation = cfg.get_int("study", "truncation", s.truncation);
	s.reduced_dim = cfg.get_int("study", "reduced_dim", s.reduced_dim);
	s.mim_indices = cfg.get_int("study", "mim_indices", s.mim_indices);
	s.orthogonalize = cfg.get_bool("study", "orthogonalize", s.orthogonalize);
	s.grid_points = cfg.get_int("study", "grid_points", s.grid_points);
	const auto& cat = estimator_catalogue();
	for (const auto& e : s.estimators) {
		if (std::find(cat.begin(), cat.end(), e) == cat.end()) {
			throw std::invalid_argument(fmt::format("[study] unknown estimator '{}'", e));
		}
	}
	if (s.estimators.empty() || s.n_reps < 1 || s.n < 2 || s.n_iter < 1 || s.burn_in < 0 || s.burn_in >= s.n_iter ||
	    s.thin < 1 || s.grid_points < 2) {
		throw std::invalid_argument("[study] settings out of range");
	}
	return s;
}

} // namespace mixborrow
