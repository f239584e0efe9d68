#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "timegate/chrono.hpp"
#include "timegate/error.hpp"

namespace timegate::proxy {

class InvalidProjectName : public Error {
public:
    using Error::Error;
};

class ProjectNotFound : public Error {
public:
    using Error::Error;
};

// Transient upstream trouble (connect failure, 5xx); retryable.
class UpstreamUnavailable : public Error {
public:
    using Error::Error;
};

class MetadataIncomplete : public Error {
public:
    using Error::Error;
};

using CutoffInstant = Instant;

struct ProjectName {
    std::string raw;
    std::string normalized;
};

// Lowercases and collapses every run of '-', '_', '.' to a single '-'.
// Idempotent. Throws InvalidProjectName on empty or non-identifier input.
ProjectName normalize_project_name(const std::string& raw);

struct FileEntry {
    std::string filename;
    std::string url;
    Instant upload_instant{};
    std::optional<std::string> digest; // "sha256=<hex>" when upstream provides one
    bool yanked = false;
};

struct ProjectPage {
    ProjectName name;
    std::vector<FileEntry> entries; // upstream order preserved
    std::optional<std::string> upstream_etag;
    std::vector<std::string> skipped; // filenames dropped for missing upload instants
};

// Keeps exactly the entries uploaded at or before the cutoff (inclusive
// boundary), preserving order. Pure.
ProjectPage filter_page(const ProjectPage& page, CutoffInstant cutoff);

enum class PageFormat { HtmlSimple, JsonSimple };

struct RenderedPage {
    std::string body;
    std::string content_type;
};

// Serializes a page in the simple-index protocol: anchor-per-file HTML or the
// JSON form with a files array. Deterministic for identical input.
RenderedPage render_page(const ProjectPage& page, PageFormat format);

// Blocking HTTP client for the upstream index.
class UpstreamClient {
public:
    explicit UpstreamClient(std::string base_url);

    struct FetchResult {
        bool not_modified = false; // etag revalidation hit
        ProjectPage page;
    };
    // Fetches the project page in the JSON index format (the only upstream
    // format carrying upload instants). `strict` turns entries with missing
    // instants into MetadataIncomplete instead of skip-and-record.
    FetchResult fetch_page(const ProjectName& name,
                           const std::optional<std::string>& etag_hint = std::nullopt,
                           bool strict = false) const;

    struct RawResponse {
        int status = 0;
        std::string body;
        std::string content_type;
    };
    // Pass-through GET used for the root name list and file downloads.
    RawResponse fetch_raw(const std::string& path_and_query, const std::string& accept) const;

    const std::string& base_url() const { return base_url_; }

private:
    std::string base_url_;
};

// Thread-safe page cache keyed by normalized name; entries expire after the
// TTL and are revalidated against the upstream etag afterwards.
class PageCache {
public:
    explicit PageCache(double ttl_seconds = 300.0): ttl_seconds_(ttl_seconds) {}

    std::optional<ProjectPage> lookup_fresh(const std::string& normalized) const;
    std::optional<std::string> etag_of(const std::string& normalized) const;
    void store(const ProjectPage& page);
    void touch(const std::string& normalized); // refresh TTL after a 304
    std::size_t size() const;

private:
    struct Entry {
        ProjectPage page;
        std::chrono::steady_clock::time_point fetched_at;
    };
    mutable std::mutex mutex_;
    std::map<std::string, Entry> entries_;
    double ttl_seconds_;
};

struct ProxyConfig {
    std::string upstream_url;
    CutoffInstant default_cutoff{};
    double cache_ttl_seconds = 300.0;
    bool strict_metadata = false;
};

struct HttpResponse {
    int status = 200;
    std::string body;
    std::string content_type = "text/plain";
};

// The request handler: pure routing over (path, accept) given the configured
// upstream and default cutoff. Shared safely across server threads.
class ProxyCore {
public:
    explicit ProxyCore(ProxyConfig config);

    HttpResponse handle_request(const std::string& path, const std::string& accept) const;

    // Cached fetch: serves from cache inside the TTL, revalidates by etag
    // afterwards. Exposed for in-process callers (the pipeline).
    ProjectPage cached_page(const ProjectName& name) const;

    const ProxyConfig& config() const { return config_; }

private:
    ProxyConfig config_;
    UpstreamClient upstream_;
    mutable PageCache cache_;
};

// HTTP server wrapper; serves a ProxyCore on a loopback or configured socket.
class ProxyServer {
public:
    explicit ProxyServer(ProxyConfig config);
    ~ProxyServer();
    ProxyServer(const ProxyServer&) = delete;
    ProxyServer& operator=(const ProxyServer&) = delete;

    // Binds an ephemeral port and serves on a background thread.
    int start_on_any_port(const std::string& host = "127.0.0.1");
    // Blocks serving on the given socket (CLI path).
    bool listen(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace timegate::proxy
