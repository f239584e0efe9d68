#include "timegate/chat.hpp"

#include <fstream>
#include <mutex>

#include <httplib.h>
#include <json.hpp>

namespace timegate::chat {

using nlohmann::json;

ScriptedChatPort::ScriptedChatPort(std::vector<ChatReply> replies)
    : replies_(std::move(replies)) {}

ScriptedChatPort ScriptedChatPort::from_jsonl_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open chat script \"" + path + "\"");
    std::vector<ChatReply> replies;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ChatError("chat script line " + std::to_string(line_no) + ": " + e.what());
        }
        ChatReply reply;
        reply.reasoning = j.value("reasoning", std::string{});
        if (j.contains("tool")) {
            ToolCall call;
            call.name = j.at("tool").get<std::string>();
            call.arguments_json = j.contains("arguments") ? j.at("arguments").dump() : "{}";
            reply.tool_call = call;
        }
        reply.usage.tokens_in = j.value("tokens_in", std::int64_t{0});
        reply.usage.tokens_out = j.value("tokens_out", std::int64_t{0});
        replies.push_back(std::move(reply));
    }
    return ScriptedChatPort(std::move(replies));
}

ChatReply ScriptedChatPort::complete(const std::vector<Message>&,
                                     const std::vector<ToolSchema>&) {
    if (next_ >= replies_.size()) {
        ++next_;
        ChatReply reply;
        reply.reasoning = "(script exhausted)";
        return reply;
    }
    return replies_[next_++];
}

namespace {

const char* role_name(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
        case Role::Tool: return "tool";
    }
    return "user";
}

} // namespace

struct HttpChatPort::Impl {
    HttpChatOptions options;
    httplib::Client client;
    std::mutex mutex;

    explicit Impl(HttpChatOptions opts)
        : options(std::move(opts)), client(split_origin(options.base_url)) {
        client.set_connection_timeout(options.timeout_seconds, 0);
        client.set_read_timeout(options.timeout_seconds, 0);
        client.set_keep_alive(true);
    }

    // httplib clients take an origin; the path suffix of base_url is kept
    // separately and prepended to every request path.
    static std::string split_origin(const std::string& base_url) {
        std::size_t scheme = base_url.find("://");
        std::size_t path = scheme == std::string::npos ? base_url.find('/')
                                                       : base_url.find('/', scheme + 3);
        return path == std::string::npos ? base_url : base_url.substr(0, path);
    }

    std::string path_prefix() const {
        std::size_t scheme = options.base_url.find("://");
        std::size_t path = scheme == std::string::npos ? options.base_url.find('/')
                                                       : options.base_url.find('/', scheme + 3);
        if (path == std::string::npos) return "";
        std::string prefix = options.base_url.substr(path);
        while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
        return prefix;
    }
};

HttpChatPort::HttpChatPort(HttpChatOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {}

HttpChatPort::~HttpChatPort() = default;

ChatReply HttpChatPort::complete(const std::vector<Message>& messages,
                                 const std::vector<ToolSchema>& tools) {
    json body;
    body["model"] = impl_->options.model;
    body["temperature"] = impl_->options.temperature;
    body["max_tokens"] = impl_->options.max_output_tokens;

    json wire_messages = json::array();
    int call_counter = 0;
    std::string pending_call_id;
    for (const Message& message : messages) {
        json m;
        m["role"] = role_name(message.role);
        m["content"] = message.content;
        if (message.role == Role::Assistant && message.tool_call) {
            pending_call_id = "call_" + std::to_string(++call_counter);
            m["tool_calls"] = json::array({json{
                {"id", pending_call_id},
                {"type", "function"},
                {"function", json{{"name", message.tool_call->name},
                                  {"arguments", message.tool_call->arguments_json}}}}});
        } else if (message.role == Role::Tool) {
            m["tool_call_id"] = pending_call_id;
        }
        wire_messages.push_back(std::move(m));
    }
    body["messages"] = std::move(wire_messages);

    json wire_tools = json::array();
    for (const ToolSchema& tool : tools) {
        json parameters;
        try {
            parameters = json::parse(tool.parameters_json);
        } catch (const json::exception& e) {
            throw ChatError("invalid tool schema for \"" + tool.name + "\": " + e.what());
        }
        wire_tools.push_back(json{{"type", "function"},
                                  {"function", json{{"name", tool.name},
                                                    {"description", tool.description},
                                                    {"parameters", parameters}}}});
    }
    body["tools"] = std::move(wire_tools);

    httplib::Headers headers;
    if (!impl_->options.api_key.empty())
        headers.emplace("Authorization", "Bearer " + impl_->options.api_key);

    std::lock_guard<std::mutex> lock(impl_->mutex);
    httplib::Result res = impl_->client.Post(impl_->path_prefix() + "/chat/completions", headers,
                                             body.dump(), "application/json");
    if (!res) throw ChatError("chat backend unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw ChatError("chat backend returned HTTP " + std::to_string(res->status) + ": " +
                        res->body.substr(0, 500));

    json j;
    try {
        j = json::parse(res->body);
    } catch (const json::exception& e) {
        throw ChatError(std::string("chat backend sent invalid JSON: ") + e.what());
    }
    try {
        const json& message = j.at("choices").at(0).at("message");
        ChatReply reply;
        if (message.contains("content") && message["content"].is_string())
            reply.reasoning = message["content"].get<std::string>();
        if (message.contains("tool_calls") && message["tool_calls"].is_array() &&
            !message["tool_calls"].empty()) {
            const json& fn = message["tool_calls"].at(0).at("function");
            ToolCall call;
            call.name = fn.at("name").get<std::string>();
            const json& args = fn.at("arguments");
            call.arguments_json = args.is_string() ? args.get<std::string>() : args.dump();
            reply.tool_call = call;
        }
        if (j.contains("usage")) {
            reply.usage.tokens_in = j["usage"].value("prompt_tokens", std::int64_t{0});
            reply.usage.tokens_out = j["usage"].value("completion_tokens", std::int64_t{0});
        }
        return reply;
    } catch (const json::exception& e) {
        throw ChatError(std::string("chat backend response missing fields: ") + e.what());
    }
}

} // namespace timegate::chat
