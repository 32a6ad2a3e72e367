#include "mixborrow/io.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>

namespace mixborrow {

std::string exact(double v) { return fmt::format("{:.17g}", v); }

std::vector<std::string> chain_columns(const ModelContext& ctx, bool with_random_effects) {
	const ModelSpec& spec = ctx.spec;
	const int K = spec.n_outcomes;
	const int J = spec.n_indices;
	const int C = spec.truncation;
	std::vector<std::string> cols;
	for (int k = 1; k <= K; ++k) cols.push_back(fmt::format("beta0.{}", k));
	for (int k = 1; k <= K; ++k) {
		for (Eigen::Index q = 1; q <= ctx.Z.cols(); ++q) cols.push_back(fmt::format("betaZ.{}.{}", k, q));
	}
	for (int k = 1; k <= K; ++k) cols.push_back(fmt::format("sigma2.{}", k));
	for (const char* s : {"xi", "lambda_beta", "lambda_theta", "alpha_beta", "alpha_theta", "rho"}) cols.emplace_back(s);
	for (int c = 1; c <= C; ++c) cols.push_back(fmt::format("v_beta.{}", c));
	for (int c = 1; c <= C; ++c) cols.push_back(fmt::format("v_theta.{}", c));
	for (int k = 1; k <= K; ++k) {
		for (int j = 1; j <= J; ++j) cols.push_back(fmt::format("z_beta.{}.{}", k, j));
	}
	for (int k = 1; k <= K; ++k) {
		for (int j = 1; j <= J; ++j) cols.push_back(fmt::format("z_theta.{}.{}", k, j));
	}
	for (int c = 1; c <= C; ++c) {
		for (int d = 1; d <= ctx.beta_dim(); ++d) cols.push_back(fmt::format("beta_star.{}.{}", c, d));
	}
	for (int c = 1; c <= C; ++c) {
		for (int d = 1; d <= ctx.theta_dim(); ++d) cols.push_back(fmt::format("theta_star.{}.{}", c, d));
	}
	if (with_random_effects) {
		for (Eigen::Index i = 1; i <= ctx.n(); ++i) cols.push_back(fmt::format("u.{}", i));
	}
	cols.emplace_back("log_posterior");
	return cols;
}

void write_chain_csv(const std::string& path, const ChainOutput& chain) {
	const ModelContext& ctx = *chain.context;
	const bool with_u = !chain.draws.empty() && chain.draws.front().u.size() == ctx.n();
	auto out = fmt::output_file(path);
	const auto cols = chain_columns(ctx, with_u);
	out.print("{}\n", fmt::join(cols, ","));
	std::vector<std::string> row;
	for (std::size_t d = 0; d < chain.draws.size(); ++d) {
		const ParamState& s = chain.draws[d];
		const ClusterState& cl = s.cluster;
		row.clear();
		for (Eigen::Index k = 0; k < s.beta0.size(); ++k) row.push_back(exact(s.beta0(k)));
		for (Eigen::Index k = 0; k < s.betaZ.rows(); ++k) {
			for (Eigen::Index q = 0; q < s.betaZ.cols(); ++q) row.push_back(exact(s.betaZ(k, q)));
		}
		for (Eigen::Index k = 0; k < s.sigma2.size(); ++k) row.push_back(exact(s.sigma2(k)));
		for (double v : {s.xi, s.lambda_beta, s.lambda_theta, cl.alpha_beta, cl.alpha_theta, cl.rho}) row.push_back(exact(v));
		for (Eigen::Index c = 0; c < cl.v_beta.size(); ++c) row.push_back(exact(cl.v_beta(c)));
		for (Eigen::Index c = 0; c < cl.v_theta.size(); ++c) row.push_back(exact(cl.v_theta(c)));
		for (Eigen::Index k = 0; k < cl.z_beta.rows(); ++k) {
			for (Eigen::Index j = 0; j < cl.z_beta.cols(); ++j) row.push_back(std::to_string(cl.z_beta(k, j) + 1));
		}
		for (Eigen::Index k = 0; k < cl.z_theta.rows(); ++k) {
			for (Eigen::Index j = 0; j < cl.z_theta.cols(); ++j) row.push_back(std::to_string(cl.z_theta(k, j) + 1));
		}
		for (const auto& b : cl.beta_atoms) {
			for (Eigen::Index i = 0; i < b.size(); ++i) row.push_back(exact(b(i)));
		}
		for (const auto& t : cl.theta_atoms) {
			for (Eigen::Index i = 0; i < t.size(); ++i) row.push_back(exact(t(i)));
		}
		if (with_u) {
			for (Eigen::Index i = 0; i < s.u.size(); ++i) row.push_back(exact(s.u(i)));
		}
		row.push_back(d < chain.log_posterior.size() ? exact(chain.log_posterior[d]) : "nan");
		out.print("{}\n", fmt::join(row, ","));
	}
}

std::vector<ParamState> read_chain_csv(const std::string& path, const ModelContext& ctx, std::vector<double>* log_posterior) {
	std::ifstream in(path);
	if (!in) {
		throw std::invalid_argument(fmt::format("cannot open chain dump {}", path));
	}
	std::string line;
	if (!std::getline(in, line)) {
		throw std::invalid_argument(fmt::format("{}: empty chain dump", path));
	}
	std::vector<std::string> header;
	{
		std::stringstream ss(line);
		std::string cell;
		while (std::getline(ss, cell, ',')) header.push_back(cell);
	}
	const bool with_u = header == chain_columns(ctx, true);
	if (!with_u && header != chain_columns(ctx, false)) {
		throw std::invalid_argument(fmt::format("{}: columns do not match the model", path));
	}
	const ModelSpec& spec = ctx.spec;
	const int K = spec.n_outcomes, J = spec.n_indices, C = spec.truncation;
	const Eigen::Index q = ctx.Z.cols();
	std::vector<ParamState> draws;
	while (std::getline(in, line)) {
		if (line.empty()) continue;
		std::vector<double> v;
		v.reserve(header.size());
		std::stringstream ss(line);
		std::string cell;
		while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
		if (v.size() != header.size()) {
			throw std::invalid_argument(fmt::format("{}: row {} has {} fields, expected {}", path, draws.size() + 2,
			                                        v.size(), header.size()));
		}
		std::size_t at = 0;
		auto next = [&]() { return v[at++]; };
		ParamState s;
		s.beta0.resize(K);
		for (int k = 0; k < K; ++k) s.beta0(k) = next();
		s.betaZ.resize(K, q);
		for (int k = 0; k < K; ++k) for (Eigen::Index c = 0; c < q; ++c) s.betaZ(k, c) = next();
		s.sigma2.resize(K);
		for (int k = 0; k < K; ++k) s.sigma2(k) = next();
		s.xi = next();
		s.lambda_beta = next();
		s.lambda_theta = next();
		ClusterState& cl = s.cluster;
		cl.alpha_beta = next();
		cl.alpha_theta = next();
		cl.rho = next();
		cl.v_beta.resize(C);
		for (int c = 0; c < C; ++c) cl.v_beta(c) = next();
		cl.v_theta.resize(C);
		for (int c = 0; c < C; ++c) cl.v_theta(c) = next();
		cl.z_beta.resize(K, J);
		for (int k = 0; k < K; ++k) for (int j = 0; j < J; ++j) cl.z_beta(k, j) = static_cast<int>(next()) - 1;
		cl.z_theta.resize(K, J);
		for (int k = 0; k < K; ++k) for (int j = 0; j < J; ++j) cl.z_theta(k, j) = static_cast<int>(next()) - 1;
		cl.beta_atoms.assign(C, Eigen::VectorXd(ctx.beta_dim()));
		for (auto& b : cl.beta_atoms) for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = next();
		cl.theta_atoms.assign(C, Eigen::VectorXd(ctx.theta_dim()));
		for (auto& t : cl.theta_atoms) for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = next();
		if (with_u) {
			s.u.resize(ctx.n());
			for (Eigen::Index i = 0; i < ctx.n(); ++i) s.u(i) = next();
		}
		if (log_posterior) log_posterior->push_back(next());
		draws.push_back(std::move(s));
	}
	return draws;
}

void write_loglik_bin(const std::string& path, const std::vector<Eigen::MatrixXd>& loglik) {
	std::ofstream out(path, std::ios::binary);
	if (!out) {
		throw std::runtime_error(fmt::format("cannot write {}", path));
	}
	const std::int64_t S = static_cast<std::int64_t>(loglik.size());
	const std::int64_t n = S > 0 ? loglik.front().rows() : 0;
	const std::int64_t K = S > 0 ? loglik.front().cols() : 0;
	out.write("MBLL", 4);
	for (std::int64_t v : {S, n, K}) out.write(reinterpret_cast<const char*>(&v), sizeof v);
	for (const auto& m : loglik) {
		out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
	}
}

std::vector<Eigen::MatrixXd> read_loglik_bin(const std::string& path) {
	std::ifstream in(path, std::ios::binary);
	char magic[4];
	if (!in || !in.read(magic, 4) || std::string(magic, 4) != "MBLL") {
		throw std::invalid_argument(fmt::format("{} is not a pointwise log-likelihood file", path));
	}
	std::int64_t dims[3];
	in.read(reinterpret_cast<char*>(dims), sizeof dims);
	std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(dims[0]), Eigen::MatrixXd(dims[1], dims[2]));
	for (auto& m : out) {
		in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
	}
	if (!in) {
		throw std::invalid_argument(fmt::format("{} is truncated", path));
	}
	return out;
}

void write_curve_csv(const std::string& path, const CurveSummary& s, const std::string& grid_name) {
	auto out = fmt::output_file(path);
	out.print("{},mean,lower,upper\n", grid_name);
	for (Eigen::Index g = 0; g < s.grid.size(); ++g) {
		out.print("{},{},{},{}\n", exact(s.grid(g)), exact(s.mean(g)), exact(s.lower(g)), exact(s.upper(g)));
	}
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m, const std::vector<std::string>& labels) {
	auto out = fmt::output_file(path);
	out.print("pair,{}\n", fmt::join(labels, ","));
	for (Eigen::Index i = 0; i < m.rows(); ++i) {
		std::vector<std::string> row{labels[static_cast<std::size_t>(i)]};
		for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(exact(m(i, j)));
		out.print("{}\n", fmt::join(row, ","));
	}
}

void write_json(const std::string& path, const nlohmann::json& j) {
	std::ofstream out(path);
	if (!out) {
		throw std::runtime_error(fmt::format("cannot write {}", path));
	}
	out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path) {
	std::ifstream in(path);
	if (!in) {
		throw std::invalid_argument(fmt::format("cannot open {}", path));
	}
	return nlohmann::json::parse(in);
}

} // namespace mixborrow
