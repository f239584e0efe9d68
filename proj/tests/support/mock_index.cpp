#include "support/mock_index.hpp"

#include <filesystem>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "timegate/fsutil.hpp"

namespace timegate::testsupport {

using nlohmann::json;

struct MockIndexServer::Impl {
    httplib::Server server;
    std::thread thread;

    mutable std::mutex mutex;
    struct Project {
        std::vector<MockFile> files;
        std::string etag;
        int status_override = 0;
        int requests = 0;
    };
    std::map<std::string, Project> projects;
    struct Blob {
        std::string body;
        std::string content_type;
    };
    std::map<std::string, Blob> blobs;
    std::atomic<int> total{0};

    void route(const httplib::Request& req, httplib::Response& res) {
        ++total;
        std::lock_guard<std::mutex> lock(mutex);
        auto blob = blobs.find(req.path);
        if (blob != blobs.end()) {
            res.status = 200;
            res.set_content(blob->second.body, blob->second.content_type);
            return;
        }
        // /simple/<name>/
        const std::string prefix = "/simple/";
        if (req.path.rfind(prefix, 0) == 0 && req.path.size() > prefix.size() &&
            req.path.back() == '/') {
            std::string name = req.path.substr(prefix.size());
            name.pop_back();
            auto it = projects.find(name);
            if (it == projects.end()) {
                res.status = 404;
                res.set_content("not found", "text/plain");
                return;
            }
            Project& project = it->second;
            ++project.requests;
            if (project.status_override != 0) {
                res.status = project.status_override;
                res.set_content("injected failure", "text/plain");
                return;
            }
            if (!project.etag.empty()) {
                res.set_header("ETag", project.etag);
                if (req.get_header_value("If-None-Match") == project.etag) {
                    res.status = 304;
                    return;
                }
            }
            json files = json::array();
            for (const MockFile& file : project.files) {
                json f;
                f["filename"] = file.filename;
                f["url"] = "/packages/" + name + "/" + file.filename;
                if (!file.sha256.empty()) f["hashes"] = json{{"sha256", file.sha256}};
                else f["hashes"] = json::object();
                if (!file.upload_time.empty()) f["upload-time"] = file.upload_time;
                if (file.yanked) f["yanked"] = true;
                files.push_back(std::move(f));
            }
            json body{{"meta", {{"api-version", "1.0"}}}, {"name", name},
                      {"files", std::move(files)}};
            res.status = 200;
            res.set_content(body.dump(), "application/vnd.pypi.simple.v1+json");
            return;
        }
        res.status = 404;
        res.set_content("not found", "text/plain");
    }
};

MockIndexServer::MockIndexServer(): impl_(std::make_unique<Impl>()) {
    impl_->server.Get(".*", [this](const httplib::Request& req, httplib::Response& res) {
        impl_->route(req, res);
    });
    port_ = impl_->server.bind_to_any_port("127.0.0.1");
    impl_->thread = std::thread([this]() { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

MockIndexServer::~MockIndexServer() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockIndexServer::base_url() const {
    return "http://127.0.0.1:" + std::to_string(port_);
}

void MockIndexServer::add_project(const std::string& normalized_name,
                                  std::vector<MockFile> files, const std::string& etag) {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    Impl::Project& project = impl_->projects[normalized_name];
    project.files = std::move(files);
    project.etag = etag;
}

void MockIndexServer::add_blob(const std::string& path, const std::string& body,
                               const std::string& content_type) {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    impl_->blobs[path] = {body, content_type};
}

void MockIndexServer::set_status_override(const std::string& normalized_name, int status) {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    impl_->projects[normalized_name].status_override = status;
}

int MockIndexServer::page_requests(const std::string& normalized_name) const {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    auto it = impl_->projects.find(normalized_name);
    return it == impl_->projects.end() ? 0 : it->second.requests;
}

int MockIndexServer::total_requests() const { return impl_->total.load(); }

TempDir::TempDir(): path_(fsutil::make_temp_dir("timegate-test").string()) {}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

} // namespace timegate::testsupport
