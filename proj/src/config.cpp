#include "timegate/config.hpp"

#include <cctype>
#include <cstdlib>
#include <functional>
#include <map>
#include <string>

#include "timegate/fsutil.hpp"

namespace timegate::config {

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    std::size_t end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        int parsed = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError("config key \"" + key + "\" needs an integer, got \"" + value + "\"");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        double parsed = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError("config key \"" + key + "\" needs a number, got \"" + value + "\"");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config key \"" + key + "\" needs a boolean, got \"" + value + "\"");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"upstream_url", [](RunConfig& c, const std::string&, const std::string& v) { c.upstream_url = v; }},
        {"listen_host", [](RunConfig& c, const std::string&, const std::string& v) { c.listen_host = v; }},
        {"listen_port", [](RunConfig& c, const std::string& k, const std::string& v) { c.listen_port = parse_int(k, v); }},
        {"cutoff", [](RunConfig& c, const std::string&, const std::string& v) { c.cutoff = v; }},
        {"cache_ttl_seconds", [](RunConfig& c, const std::string& k, const std::string& v) { c.cache_ttl_seconds = parse_double(k, v); }},
        {"strict_metadata", [](RunConfig& c, const std::string& k, const std::string& v) { c.strict_metadata = parse_bool(k, v); }},
        {"llm_budget", [](RunConfig& c, const std::string& k, const std::string& v) { c.llm_budget = parse_int(k, v); }},
        {"test_budget", [](RunConfig& c, const std::string& k, const std::string& v) { c.test_budget = parse_int(k, v); }},
        {"setup_timeout_seconds", [](RunConfig& c, const std::string& k, const std::string& v) { c.setup_timeout_seconds = parse_double(k, v); }},
        {"test_timeout_seconds", [](RunConfig& c, const std::string& k, const std::string& v) { c.test_timeout_seconds = parse_double(k, v); }},
        {"workers", [](RunConfig& c, const std::string& k, const std::string& v) { c.workers = parse_int(k, v); }},
        {"manifest_path", [](RunConfig& c, const std::string&, const std::string& v) { c.manifest_path = v; }},
        {"output_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
        {"gold_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.gold_dir = v; }},
        {"tariff_path", [](RunConfig& c, const std::string&, const std::string& v) { c.tariff_path = v; }},
        {"chat_base_url", [](RunConfig& c, const std::string&, const std::string& v) { c.chat_base_url = v; }},
        {"chat_model", [](RunConfig& c, const std::string&, const std::string& v) { c.chat_model = v; }},
        {"chat_api_key", [](RunConfig& c, const std::string&, const std::string& v) { c.chat_api_key = v; }},
        {"chat_script", [](RunConfig& c, const std::string&, const std::string& v) { c.chat_script = v; }},
        {"system_prompt_path", [](RunConfig& c, const std::string&, const std::string& v) { c.system_prompt_path = v; }},
    };
    return table;
}

} // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              " is not key=value: \"" + line + "\"");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        auto it = setters().find(key);
        if (it == setters().end())
            throw ConfigError("unknown config key \"" + key + "\" on line " +
                              std::to_string(line_no));
        it->second(cfg, key, value);
    }
    return cfg;
}

void apply_env_overrides(RunConfig& cfg) {
    for (const auto& [key, setter] : setters()) {
        std::string env_name = "TIMEGATE_";
        for (char c : key) env_name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        const char* value = std::getenv(env_name.c_str());
        if (value != nullptr) setter(cfg, key, value);
    }
}

RunConfig resolve_config(const std::optional<std::string>& file_path) {
    RunConfig cfg;
    if (file_path) cfg = parse_config_text(fsutil::read_text_file(*file_path));
    apply_env_overrides(cfg);
    return cfg;
}

} // namespace timegate::config
