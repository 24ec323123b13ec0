#pragma once
#include <iosfwd>
#include <map>
#include <string>

#include <json.hpp>

namespace cjlab {

inline constexpr int kSchemaVersion = 1;

using ConfigMap = std::map<std::string, std::string>;

// "key = value" lines; '#' starts a comment; blank lines ignored
ConfigMap read_kv_config(std::istream& is);
ConfigMap read_kv_config_file(const std::string& path);
void write_kv_config(const ConfigMap& c, std::ostream& os);

// {"schema_version", "subcommand", "config", "result"}
nlohmann::json output_envelope(const std::string& subcommand, const ConfigMap& config, nlohmann::json result);

std::string dump_json(const nlohmann::json& j);
// "-" writes to stdout
void write_text(const std::string& path, const std::string& content);

// strict numeric parsing; accepts p/q fractions and inf
double parse_double(const std::string& key, const std::string& value);
long long parse_int(const std::string& key, const std::string& value);
std::uint64_t parse_seed(const std::string& key, const std::string& value);

}  // namespace cjlab
