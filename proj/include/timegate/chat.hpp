#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "timegate/error.hpp"

namespace timegate::chat {

class ChatError : public Error {
public:
    using Error::Error;
};

enum class Role { System, User, Assistant, Tool };

struct ToolCall {
    std::string name;
    std::string arguments_json; // JSON object text, e.g. {"file_path":"a.py","line_no":10}
};

struct Message {
    Role role = Role::User;
    std::string content;
    std::optional<ToolCall> tool_call; // assistant messages only
};

struct ToolSchema {
    std::string name;
    std::string description;
    std::string parameters_json; // JSON schema object text
};

struct ChatUsage {
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
};

struct ChatReply {
    std::string reasoning;
    std::optional<ToolCall> tool_call;
    ChatUsage usage;
};

// One completion backend invocation == one LLM call in the budget metrics.
// Implementations must either be safe for concurrent use or report
// serial_only() so the harness serializes access.
class ChatPort {
public:
    virtual ~ChatPort() = default;
    virtual ChatReply complete(const std::vector<Message>& messages,
                               const std::vector<ToolSchema>& tools) = 0;
    virtual bool serial_only() const { return false; }
};

// Deterministic replay: returns scripted replies in order. Once the script
// is exhausted every further call yields a no-tool reply, which the
// trajectory loop answers with the corrective observation until the call
// budget runs out.
class ScriptedChatPort : public ChatPort {
public:
    explicit ScriptedChatPort(std::vector<ChatReply> replies);
    // One JSON object per line:
    //   {"reasoning": "...", "tool": "view_file", "arguments": {...},
    //    "tokens_in": 0, "tokens_out": 0}
    // Omit "tool" for a reply without a tool call.
    static ScriptedChatPort from_jsonl_file(const std::string& path);

    ChatReply complete(const std::vector<Message>& messages,
                       const std::vector<ToolSchema>& tools) override;
    bool serial_only() const override { return true; }
    std::size_t calls_made() const { return next_; }

private:
    std::vector<ChatReply> replies_;
    std::size_t next_ = 0;
};

struct HttpChatOptions {
    std::string base_url;     // e.g. http://127.0.0.1:8081/v1
    std::string model;        // backend model identifier
    std::string api_key;      // optional bearer token
    int max_output_tokens = 512;
    double temperature = 0.0;
    int timeout_seconds = 120;
};

// OpenAI-style chat-completions client: POST {base_url}/chat/completions
// with messages, tool schemas, temperature and max_tokens; reads
// choices[0].message plus usage counts.
class HttpChatPort : public ChatPort {
public:
    explicit HttpChatPort(HttpChatOptions options);
    ~HttpChatPort() override;

    ChatReply complete(const std::vector<Message>& messages,
                       const std::vector<ToolSchema>& tools) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace timegate::chat
