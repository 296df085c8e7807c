#pragma once

#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

namespace phil {

/// Parses a JSON file; errors name the path.
nlohmann::ordered_json read_json_file(const std::filesystem::path& path);
/// Pretty-prints `j` to `path`, replacing any existing file.
void write_json_file(const nlohmann::ordered_json& j, const std::filesystem::path& path);

/// Throws std::invalid_argument naming the first key of `j` missing from `known`.
void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known, const std::string& what);

/// Names of the top-level keys of an object.
std::set<std::string> key_set(const nlohmann::ordered_json& j);

}  // namespace phil
