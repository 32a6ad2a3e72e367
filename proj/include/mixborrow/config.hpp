#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "mixborrow/model.hpp"
#include "mixborrow/sampler.hpp"
#include "mixborrow/study.hpp"

namespace mixborrow {

/** \brief INI-style run configuration.
 *
 * Keys are read through typed getters that also record the value actually used, so the
 * resolved document (defaults included) can be written back next to the artifacts.
 * Unknown keys in a section that was read are rejected by check_unknown().
 */
class Config {
public:
	Config() = default;
	static Config load(const std::string& path);
	static Config parse(const std::string& text);

	bool has_section(const std::string& section) const;
	bool has(const std::string& section, const std::string& key) const;

	int get_int(const std::string& section, const std::string& key, int fallback);
	long get_long(const std::string& section, const std::string& key, long fallback);
	std::uint64_t get_seed(const std::string& section, const std::string& key, std::uint64_t fallback);
	double get_double(const std::string& section, const std::string& key, double fallback);
	bool get_bool(const std::string& section, const std::string& key, bool fallback);
	std::string get_string(const std::string& section, const std::string& key, const std::string& fallback);
	/// Value without a default; throws naming the key when absent.
	std::string require(const std::string& section, const std::string& key);

	/// Replaces a value, e.g. from a command-line override, and records it.
	void set(const std::string& section, const std::string& key, const std::string& value);

	void check_unknown() const;
	std::string resolved_ini() const;
	const boost::property_tree::ptree& resolved() const { return resolved_; }
	std::string source_dir() const { return source_dir_; }

private:
	std::string raw(const std::string& section, const std::string& key, const std::string& fallback);

	boost::property_tree::ptree raw_;
	boost::property_tree::ptree resolved_;
	std::set<std::pair<std::string, std::string>> used_;
	std::set<std::string> sections_used_;
	std::string source_dir_;
};

/// [model] and [hyper] into a validated ModelSpec.
ModelSpec model_spec_from_config(Config& cfg);

struct ChainSettings {
	ChainControl control;
	int n_chains = 1;
};

/// [chain]: n_iter, burn_in, thin, n_chains, seed, keep_random_effects.
ChainSettings chain_settings_from_config(Config& cfg);

/// [study] into StudyConfig (cache_dir and threads are left to the caller).
StudyConfig study_config_from_config(Config& cfg);

/// Splits "a, b ,c" on a delimiter and trims blanks; empty items are dropped.
std::vector<std::string> split_list(const std::string& s, char delim = ',');

} // namespace mixborrow
