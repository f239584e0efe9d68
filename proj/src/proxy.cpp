#include "timegate/proxy.hpp"

#include <cctype>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace timegate::proxy {

using nlohmann::json;

namespace {

constexpr const char* kJsonIndexType = "application/vnd.pypi.simple.v1+json";

bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
}

std::string html_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

} // namespace

ProjectName normalize_project_name(const std::string& raw) {
    if (raw.empty()) throw InvalidProjectName("project name is empty");
    std::string normalized;
    normalized.reserve(raw.size());
    bool pending_dash = false;
    for (char c : raw) {
        if (!is_name_char(c))
            throw InvalidProjectName("invalid character in project name \"" + raw + "\"");
        if (c == '-' || c == '_' || c == '.') {
            pending_dash = true;
            continue;
        }
        if (pending_dash && !normalized.empty()) normalized += '-';
        pending_dash = false;
        normalized += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (normalized.empty()) throw InvalidProjectName("project name has no identifier characters");
    return ProjectName{raw, normalized};
}

ProjectPage filter_page(const ProjectPage& page, CutoffInstant cutoff) {
    ProjectPage out;
    out.name = page.name;
    out.upstream_etag = page.upstream_etag;
    out.skipped = page.skipped;
    for (const FileEntry& entry : page.entries)
        if (entry.upload_instant <= cutoff) out.entries.push_back(entry);
    return out;
}

RenderedPage render_page(const ProjectPage& page, PageFormat format) {
    if (format == PageFormat::JsonSimple) {
        json files = json::array();
        for (const FileEntry& e : page.entries) {
            json hashes = json::object();
            if (e.digest) {
                std::size_t eq = e.digest->find('=');
                if (eq != std::string::npos)
                    hashes[e.digest->substr(0, eq)] = e.digest->substr(eq + 1);
            }
            json f{{"filename", e.filename},
                   {"url", e.url},
                   {"hashes", hashes},
                   {"upload-time", format_rfc3339(e.upload_instant)}};
            if (e.yanked) f["yanked"] = true;
            files.push_back(std::move(f));
        }
        json body{{"meta", {{"api-version", "1.0"}}},
                  {"name", page.name.normalized},
                  {"files", std::move(files)}};
        return {body.dump(), kJsonIndexType};
    }

    std::string body = "<!DOCTYPE html>\n<html>\n<head>\n"
                       "<meta name=\"pypi:repository-version\" content=\"1.0\">\n<title>Links for " +
                       html_escape(page.name.normalized) + "</title>\n</head>\n<body>\n<h1>Links for " +
                       html_escape(page.name.normalized) + "</h1>\n";
    for (const FileEntry& e : page.entries) {
        std::string href = e.url;
        if (e.digest) href += "#" + *e.digest;
        body += "<a href=\"" + html_escape(href) + "\"";
        if (e.yanked) body += " data-yanked=\"\"";
        body += ">" + html_escape(e.filename) + "</a><br/>\n";
    }
    body += "</body>\n</html>\n";
    return {std::move(body), "text/html"};
}

UpstreamClient::UpstreamClient(std::string base_url): base_url_(std::move(base_url)) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

UpstreamClient::FetchResult UpstreamClient::fetch_page(const ProjectName& name,
                                                       const std::optional<std::string>& etag_hint,
                                                       bool strict) const {
    httplib::Client client(base_url_);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(15, 0);

    httplib::Headers headers{{"Accept", kJsonIndexType}};
    if (etag_hint) headers.emplace("If-None-Match", *etag_hint);

    auto res = client.Get("/simple/" + name.normalized + "/", headers);
    if (!res)
        throw UpstreamUnavailable("upstream " + base_url_ + " unreachable: " +
                                  httplib::to_string(res.error()));
    if (res->status == 304) return {true, {}};
    if (res->status == 404) throw ProjectNotFound("project \"" + name.normalized + "\" not found upstream");
    if (res->status >= 500)
        throw UpstreamUnavailable("upstream returned " + std::to_string(res->status));
    if (res->status != 200)
        throw Error("unexpected upstream status " + std::to_string(res->status));

    json doc;
    try {
        doc = json::parse(res->body);
    } catch (const json::exception& ex) {
        throw Error("upstream page for \"" + name.normalized + "\" is not valid JSON: " + ex.what());
    }

    ProjectPage page;
    page.name = name;
    if (res->has_header("ETag")) page.upstream_etag = res->get_header_value("ETag");
    for (const json& f : doc.value("files", json::array())) {
        FileEntry entry;
        entry.filename = f.value("filename", "");
        entry.url = f.value("url", "");
        if (entry.filename.empty()) throw Error("upstream file entry lacks a filename");
        if (f.contains("hashes") && f["hashes"].is_object() && !f["hashes"].empty()) {
            auto it = f["hashes"].find("sha256");
            if (it == f["hashes"].end()) it = f["hashes"].begin();
            entry.digest = it.key() + "=" + it.value().get<std::string>();
        }
        if (f.contains("yanked") && !f["yanked"].is_null() &&
            (!f["yanked"].is_boolean() || f["yanked"].get<bool>()))
            entry.yanked = true;
        if (!f.contains("upload-time") || f["upload-time"].is_null()) {
            if (strict)
                throw MetadataIncomplete("no upload instant for \"" + entry.filename + "\"");
            page.skipped.push_back(entry.filename);
            continue;
        }
        entry.upload_instant = parse_rfc3339(f["upload-time"].get<std::string>());
        page.entries.push_back(std::move(entry));
    }
    return {false, std::move(page)};
}

UpstreamClient::RawResponse UpstreamClient::fetch_raw(const std::string& path_and_query,
                                                      const std::string& accept) const {
    httplib::Client client(base_url_);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(30, 0);
    httplib::Headers headers;
    if (!accept.empty()) headers.emplace("Accept", accept);
    auto res = client.Get(path_and_query, headers);
    if (!res)
        throw UpstreamUnavailable("upstream " + base_url_ + " unreachable: " +
                                  httplib::to_string(res.error()));
    RawResponse out;
    out.status = res->status;
    out.body = res->body;
    out.content_type = res->get_header_value("Content-Type");
    return out;
}

std::optional<ProjectPage> PageCache::lookup_fresh(const std::string& normalized) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(normalized);
    if (it == entries_.end()) return std::nullopt;
    double age = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                               it->second.fetched_at)
                     .count();
    if (age > ttl_seconds_) return std::nullopt;
    return it->second.page;
}

std::optional<std::string> PageCache::etag_of(const std::string& normalized) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(normalized);
    if (it == entries_.end()) return std::nullopt;
    return it->second.page.upstream_etag;
}

void PageCache::store(const ProjectPage& page) {
    std::lock_guard lock(mutex_);
    entries_[page.name.normalized] = Entry{page, std::chrono::steady_clock::now()};
}

void PageCache::touch(const std::string& normalized) {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(normalized);
    if (it != entries_.end()) it->second.fetched_at = std::chrono::steady_clock::now();
}

std::size_t PageCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

ProxyCore::ProxyCore(ProxyConfig config)
    : config_(std::move(config)), upstream_(config_.upstream_url),
      cache_(config_.cache_ttl_seconds) {}

ProjectPage ProxyCore::cached_page(const ProjectName& name) const {
    if (auto hit = cache_.lookup_fresh(name.normalized)) return *hit;

    auto etag = cache_.etag_of(name.normalized);
    auto fetched = upstream_.fetch_page(name, etag, config_.strict_metadata);
    if (fetched.not_modified) {
        cache_.touch(name.normalized);
        auto hit = cache_.lookup_fresh(name.normalized);
        if (hit) return *hit;
        // Entry raced out of the cache; refetch unconditionally.
        fetched = upstream_.fetch_page(name, std::nullopt, config_.strict_metadata);
    }
    cache_.store(fetched.page);
    return fetched.page;
}

HttpResponse ProxyCore::handle_request(const std::string& path, const std::string& accept) const {
    CutoffInstant cutoff = config_.default_cutoff;
    std::string rest = path;

    if (rest.rfind("/at/", 0) == 0) {
        std::size_t end = rest.find('/', 4);
        if (end == std::string::npos) return {400, "missing path after cutoff override\n"};
        std::string stamp = rest.substr(4, end - 4);
        try {
            cutoff = parse_cutoff(stamp);
        } catch (const TimeParseError& ex) {
            return {400, std::string("bad cutoff: ") + ex.what() + "\n"};
        }
        rest = rest.substr(end);
    }

    try {
        if (rest == "/healthz") return {200, "ok\n"};
        if (rest == "/simple" || rest == "/simple/") {
            // Name list: no date filtering applies, pass the upstream body on.
            auto raw = upstream_.fetch_raw("/simple/", accept);
            if (raw.status != 200) return {raw.status, std::move(raw.body), raw.content_type};
            return {200, std::move(raw.body),
                    raw.content_type.empty() ? "text/html" : raw.content_type};
        }
        if (rest.rfind("/simple/", 0) == 0) {
            std::string name_part = rest.substr(8);
            if (!name_part.empty() && name_part.back() == '/') name_part.pop_back();
            if (name_part.empty() || name_part.find('/') != std::string::npos)
                return {404, "not found\n"};
            ProjectName name;
            try {
                name = normalize_project_name(name_part);
            } catch (const InvalidProjectName& ex) {
                return {404, std::string(ex.what()) + "\n"};
            }
            ProjectPage filtered = filter_page(cached_page(name), cutoff);
            bool want_json = accept.find(kJsonIndexType) != std::string::npos;
            RenderedPage rendered =
                render_page(filtered, want_json ? PageFormat::JsonSimple : PageFormat::HtmlSimple);
            return {200, std::move(rendered.body), std::move(rendered.content_type)};
        }
        // Everything else (file downloads and friends) passes through with
        // the path untouched so relative links keep working.
        auto raw = upstream_.fetch_raw(rest, accept);
        return {raw.status, std::move(raw.body),
                raw.content_type.empty() ? "application/octet-stream" : raw.content_type};
    } catch (const ProjectNotFound& ex) {
        return {404, std::string(ex.what()) + "\n"};
    } catch (const UpstreamUnavailable& ex) {
        return {502, std::string(ex.what()) + "\n"};
    } catch (const MetadataIncomplete& ex) {
        return {502, std::string(ex.what()) + "\n"};
    }
}

struct ProxyServer::Impl {
    ProxyCore core;
    httplib::Server server;
    std::thread thread;

    explicit Impl(ProxyConfig config): core(std::move(config)) {
        server.Get(".*", [this](const httplib::Request& req, httplib::Response& res) {
            HttpResponse out = core.handle_request(req.path, req.get_header_value("Accept"));
            res.status = out.status;
            res.set_content(out.body, out.content_type);
        });
    }
};

ProxyServer::ProxyServer(ProxyConfig config): impl_(std::make_unique<Impl>(std::move(config))) {}

ProxyServer::~ProxyServer() { stop(); }

int ProxyServer::start_on_any_port(const std::string& host) {
    int port = impl_->server.bind_to_any_port(host);
    if (port <= 0) throw Error("cannot bind proxy to " + host);
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

bool ProxyServer::listen(const std::string& host, int port) {
    return impl_->server.listen(host, port);
}

void ProxyServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

} // namespace timegate::proxy
