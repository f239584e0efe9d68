#include "timegate/subprocess.hpp"

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace timegate {

namespace {

// Drops the head once the buffer exceeds twice the cap, so appends stay O(1)
// amortized while the tail is always preserved.
void append_capped(std::string& buf, const char* data, std::size_t n, std::size_t cap,
                   bool& truncated) {
    buf.append(data, n);
    if (cap > 0 && buf.size() > cap * 2) {
        buf.erase(0, buf.size() - cap);
        truncated = true;
    }
}

std::vector<std::string> build_env(const CommandSpec& spec) {
    std::map<std::string, std::string> merged;
    for (char** e = environ; e && *e; ++e) {
        const char* eq = std::strchr(*e, '=');
        if (!eq) continue;
        merged[std::string(*e, eq - *e)] = std::string(eq + 1);
    }
    for (const std::string& name : spec.unset_env) merged.erase(name);
    for (const auto& [k, v] : spec.env) merged[k] = v;

    std::vector<std::string> out;
    out.reserve(merged.size());
    for (const auto& [k, v] : merged) out.push_back(k + "=" + v);
    return out;
}

} // namespace

CommandResult run_command(const CommandSpec& spec) {
    if (spec.argv.empty()) throw SubprocessError("empty argv");

    int pipefd[2];
    if (pipe(pipefd) != 0) throw SubprocessError("pipe: " + std::string(std::strerror(errno)));

    std::vector<std::string> env_store = build_env(spec);
    std::vector<char*> envp;
    envp.reserve(env_store.size() + 1);
    for (std::string& e : env_store) envp.push_back(e.data());
    envp.push_back(nullptr);

    std::vector<char*> argv;
    std::vector<std::string> argv_store = spec.argv;
    argv.reserve(argv_store.size() + 1);
    for (std::string& a : argv_store) argv.push_back(a.data());
    argv.push_back(nullptr);

    auto start = std::chrono::steady_clock::now();
    pid_t pid = fork();
    if (pid < 0) {
        close(pipefd[0]);
        close(pipefd[1]);
        throw SubprocessError("fork: " + std::string(std::strerror(errno)));
    }
    if (pid == 0) {
        setpgid(0, 0);
        close(pipefd[0]);
        dup2(pipefd[1], STDOUT_FILENO);
        dup2(pipefd[1], STDERR_FILENO);
        close(pipefd[1]);
        if (!spec.cwd.empty() && chdir(spec.cwd.c_str()) != 0) _exit(127);
        execve(argv[0], argv.data(), envp.data());
        // Fall back to PATH search when argv[0] has no slash.
        environ = envp.data();
        execvp(argv[0], argv.data());
        _exit(127);
    }

    close(pipefd[1]);
    fcntl(pipefd[0], F_SETFL, O_NONBLOCK);

    CommandResult result;
    bool killed = false;
    char buf[65536];
    while (true) {
        double remaining_ms = -1;
        if (spec.timeout_seconds > 0 && !killed) {
            double elapsed =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            remaining_ms = (spec.timeout_seconds - elapsed) * 1000.0;
            if (remaining_ms <= 0) {
                kill(-pid, SIGKILL);
                killed = true;
                result.timed_out = true;
                remaining_ms = -1;
            }
        }

        struct pollfd pfd{pipefd[0], POLLIN, 0};
        int timeout = remaining_ms < 0 ? 1000 : static_cast<int>(remaining_ms) + 1;
        int rc = poll(&pfd, 1, killed ? 1000 : timeout);
        if (rc > 0) {
            ssize_t n;
            while ((n = read(pipefd[0], buf, sizeof(buf))) > 0)
                append_capped(result.output, buf, static_cast<std::size_t>(n),
                              spec.output_cap_bytes, result.output_truncated);
            if (n == 0) break; // EOF: every writer closed
            if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) break;
        }
        if (rc == 0 && killed) break; // killed and drained
    }
    close(pipefd[0]);

    int status = 0;
    waitpid(pid, &status, 0);
    if (killed) kill(-pid, SIGKILL); // sweep any stragglers in the group
    result.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (result.timed_out && result.duration_seconds < spec.timeout_seconds)
        result.duration_seconds = spec.timeout_seconds;

    if (WIFEXITED(status))
        result.exit_status = WEXITSTATUS(status);
    else if (WIFSIGNALED(status))
        result.exit_status = -WTERMSIG(status);
    if (spec.output_cap_bytes > 0 && result.output.size() > spec.output_cap_bytes) {
        result.output.erase(0, result.output.size() - spec.output_cap_bytes);
        result.output_truncated = true;
    }
    return result;
}

CommandResult run_shell(const std::string& script, const CommandSpec& base) {
    CommandSpec spec = base;
    spec.argv = {"/bin/sh", "-c", script};
    return run_command(spec);
}

} // namespace timegate
