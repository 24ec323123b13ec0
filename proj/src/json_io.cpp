#include "cjlab/json_io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cjlab/error.hpp"

namespace cjlab {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

ConfigMap read_kv_config(std::istream& is) {
    ConfigMap c;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty()) throw InvalidArgument("config line " + std::to_string(lineno) + ": empty key");
        if (key.rfind("--", 0) == 0) key = key.substr(2);
        if (!c.emplace(key, value).second)
            throw InvalidArgument("config line " + std::to_string(lineno) + ": duplicate key " + key);
    }
    return c;
}

ConfigMap read_kv_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidArgument("cannot read config file " + path);
    return read_kv_config(f);
}

void write_kv_config(const ConfigMap& c, std::ostream& os) {
    for (const auto& [k, v] : c) os << k << " = " << v << '\n';
}

nlohmann::json output_envelope(const std::string& subcommand, const ConfigMap& config, nlohmann::json result) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["tool"] = "cjlab";
    j["subcommand"] = subcommand;
    j["config"] = config;
    j["result"] = std::move(result);
    return j;
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void write_text(const std::string& path, const std::string& content) {
    if (path == "-") {
        std::cout << content << std::flush;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidArgument("cannot write " + path);
    f << content;
    if (!f) throw InvalidArgument("write failed: " + path);
}

double parse_double(const std::string& key, const std::string& value) {
    auto bad = [&] { return InvalidArgument("--" + key + ": not a number: '" + value + "'"); };
    std::string v = trim(value);
    if (v == "inf" || v == "+inf") return INFINITY;
    if (v == "-inf") return -INFINITY;
    if (auto slash = v.find('/'); slash != std::string::npos) {
        double q = parse_double(key, v.substr(slash + 1));
        if (q == 0) throw bad();
        return parse_double(key, v.substr(0, slash)) / q;
    }
    if (v.empty()) throw bad();
    char* end = nullptr;
    errno = 0;
    double x = std::strtod(v.c_str(), &end);
    if (*end != '\0' || errno == ERANGE || std::isnan(x)) throw bad();
    return x;
}

long long parse_int(const std::string& key, const std::string& value) {
    std::string v = trim(value);
    char* end = nullptr;
    errno = 0;
    long long x = std::strtoll(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0' || errno == ERANGE)
        throw InvalidArgument("--" + key + ": not an integer: '" + value + "'");
    return x;
}

std::uint64_t parse_seed(const std::string& key, const std::string& value) {
    std::string v = trim(value);
    char* end = nullptr;
    errno = 0;
    if (v.empty() || v[0] == '-') throw InvalidArgument("--" + key + ": seed must be a nonnegative integer");
    unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (*end != '\0' || errno == ERANGE) throw InvalidArgument("--" + key + ": not a seed: '" + value + "'");
    return x;
}

}  // namespace cjlab
