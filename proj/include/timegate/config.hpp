#pragma once

#include <optional>
#include <string>

#include "timegate/error.hpp"

namespace timegate::config {

class ConfigError : public Error {
public:
    using Error::Error;
};

// Operator settings shared by the CLI subcommands. Sources are layered:
// command-line flags beat TIMEGATE_* environment variables beat the config
// file; unknown file keys are rejected.
struct RunConfig {
    std::string upstream_url = "https://pypi.org"; // origin serving /simple/
    std::string listen_host = "127.0.0.1";
    int listen_port = 8750;
    std::string cutoff; // RFC3339 instant or YYYY-MM-DD (end of day)
    double cache_ttl_seconds = 300.0;
    bool strict_metadata = false;
    int llm_budget = 100;
    int test_budget = 10;
    double setup_timeout_seconds = 600.0;
    double test_timeout_seconds = 600.0;
    int workers = 1;
    std::string manifest_path;
    std::string output_dir = "out";
    std::string gold_dir;
    std::string tariff_path;
    std::string chat_base_url;
    std::string chat_model;
    std::string chat_api_key;
    std::string chat_script;
    std::string system_prompt_path;
};

// Parses the key=value file format ('#' starts a comment; blank lines
// ignored). Throws ConfigError on unknown keys or unparseable values.
RunConfig parse_config_text(const std::string& text);

// Layers: defaults <- file (optional) <- TIMEGATE_* environment variables.
RunConfig resolve_config(const std::optional<std::string>& file_path);

void apply_env_overrides(RunConfig& cfg);

} // namespace timegate::config
