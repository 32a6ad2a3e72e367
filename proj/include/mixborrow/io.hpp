#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mixborrow/posterior.hpp"
#include "mixborrow/sampler.hpp"

namespace mixborrow {

/// Column names of a chain dump for this context, `<param>.<i>.<j>` with 1-based indices.
std::vector<std::string> chain_columns(const ModelContext& ctx, bool with_random_effects);

/// One row per stored draw; doubles printed with 17 significant digits.
void write_chain_csv(const std::string& path, const ChainOutput& chain);
/// Reads draws written by write_chain_csv for the same context.
std::vector<ParamState> read_chain_csv(const std::string& path, const ModelContext& ctx,
                                       std::vector<double>* log_posterior = nullptr);

/// Little-endian binary: "MBLL", int64 draws, n, K, then draws x n x K doubles (column-major per draw).
void write_loglik_bin(const std::string& path, const std::vector<Eigen::MatrixXd>& loglik);
std::vector<Eigen::MatrixXd> read_loglik_bin(const std::string& path);

void write_curve_csv(const std::string& path, const CurveSummary& s, const std::string& grid_name = "grid");
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m, const std::vector<std::string>& labels);
void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

/// Formats a double so that it parses back to the same value.
std::string exact(double v);

} // namespace mixborrow
