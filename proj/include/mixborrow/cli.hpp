#pragma once

#include <string>
#include <vector>

namespace mixborrow {

inline constexpr const char* kVersion = "0.1.0";

/** \brief Entry point of the batch front end.
 *
 * Returns 0 on success, 1 for invalid input (bad flags, config or data) and 2 for
 * failures while running. Errors are also printed to stderr as one JSON object.
 */
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

} // namespace mixborrow
