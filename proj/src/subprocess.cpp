#include "capsule/subprocess.hpp"

#include <cerrno>
#include <chrono>
#include <cstring>
#include <string_view>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

namespace capsule {

namespace {

constexpr std::string_view kExecFailMarker = "capsule-exec-failed: ";

// Keeps the first and last chunks of an unbounded stream within `cap` bytes.
class StreamCapture {
public:
    explicit StreamCapture(std::size_t cap) : cap_(cap) {
        head_cap_ = cap_ / 2 > 64 ? cap_ / 2 - 64 : cap_ / 2;
        tail_cap_ = head_cap_;
    }

    void append(const char* data, std::size_t n) {
        total_ += n;
        std::size_t take = 0;
        if (head_.size() < head_cap_) {
            take = std::min(n, head_cap_ - head_.size());
            head_.append(data, take);
        }
        if (take < n) {
            spilled_ = true;
            tail_.append(data + take, n - take);
            if (tail_.size() > 2 * tail_cap_) {
                tail_.erase(0, tail_.size() - tail_cap_);
                trimmed_ = true;
            }
        }
    }

    std::string str() const {
        if (!spilled_) return head_;
        if (!trimmed_ && head_.size() + tail_.size() <= cap_) return head_ + tail_;
        std::string tail = tail_.size() > tail_cap_ ? tail_.substr(tail_.size() - tail_cap_) : tail_;
        return head_ + "\n...[output capped: " + std::to_string(total_) + " bytes total]...\n" +
               tail;
    }

private:
    std::size_t cap_;
    std::size_t head_cap_;
    std::size_t tail_cap_;
    std::size_t total_ = 0;
    std::string head_;
    std::string tail_;
    bool spilled_ = false;
    bool trimmed_ = false;
};

std::vector<char*> to_argv(const std::vector<std::string>& items) {
    std::vector<char*> ptrs;
    ptrs.reserve(items.size() + 1);
    for (const auto& s : items) ptrs.push_back(const_cast<char*>(s.c_str()));
    ptrs.push_back(nullptr);
    return ptrs;
}

} // namespace

ProcessResult run_process(const ProcessOptions& options) {
    ProcessResult result;
    if (options.argv.empty()) {
        result.spawn_failed = true;
        result.spawn_error = "empty argv";
        return result;
    }

    int out_pipe[2];
    int err_pipe[2];
    if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0) {
        result.spawn_failed = true;
        result.spawn_error = std::strerror(errno);
        return result;
    }

    const auto start = std::chrono::steady_clock::now();
    pid_t pid = fork();
    if (pid < 0) {
        result.spawn_failed = true;
        result.spawn_error = std::strerror(errno);
        for (int fd : {out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) close(fd);
        return result;
    }

    if (pid == 0) {
        // child: own process group so the whole tree can be killed
        setpgid(0, 0);
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        for (int fd : {out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) close(fd);
        if (!options.cwd.empty() && chdir(options.cwd.c_str()) != 0) {
            std::string msg = std::string(kExecFailMarker) + "chdir: " + std::strerror(errno);
            (void)!write(STDERR_FILENO, msg.data(), msg.size());
            _exit(127);
        }
        std::vector<std::string> env_strings;
        env_strings.reserve(options.env.size());
        for (const auto& [k, v] : options.env) env_strings.push_back(k + "=" + v);
        auto argv = to_argv(options.argv);
        auto envp = to_argv(env_strings);
        execvpe(options.argv[0].c_str(), argv.data(), envp.data());
        std::string msg = std::string(kExecFailMarker) + options.argv[0] + ": " +
                          std::strerror(errno);
        (void)!write(STDERR_FILENO, msg.data(), msg.size());
        _exit(127);
    }

    close(out_pipe[1]);
    close(err_pipe[1]);
    setpgid(pid, pid); // also from the parent side to avoid a race

    StreamCapture out_cap(options.stream_cap);
    StreamCapture err_cap(options.stream_cap);
    struct pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
    bool open_fd[2] = {true, true};
    bool killed = false;
    const auto deadline =
        start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                    std::chrono::duration<double>(options.timeout_s));

    int status = 0;
    bool reaped = false;
    auto drain_deadline = deadline + std::chrono::seconds(2);
    while (open_fd[0] || open_fd[1]) {
        const auto now = std::chrono::steady_clock::now();
        if (!reaped && waitpid(pid, &status, WNOHANG) == pid) {
            reaped = true;
            // the child is gone; give straggling pipe holders a short grace
            drain_deadline = std::min(drain_deadline, now + std::chrono::milliseconds(200));
        }
        if (!killed) {
            bool over_deadline = now >= deadline;
            bool cancel = options.cancel && options.cancel->load();
            if (over_deadline || cancel) {
                kill(-pid, SIGKILL);
                killed = true;
                result.timed_out = over_deadline && !reaped;
                result.cancelled = cancel && !over_deadline;
                drain_deadline = now + std::chrono::seconds(2);
            }
        }
        if (now >= drain_deadline) break;
        for (int i = 0; i < 2; ++i) fds[i].fd = open_fd[i] ? fds[i].fd : -1;
        int rc = poll(fds, 2, 50);
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        char buf[8192];
        for (int i = 0; i < 2; ++i) {
            if (!open_fd[i] || !(fds[i].revents & (POLLIN | POLLHUP))) continue;
            ssize_t n = read(fds[i].fd, buf, sizeof buf);
            if (n > 0) {
                (i == 0 ? out_cap : err_cap).append(buf, static_cast<std::size_t>(n));
            } else if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR)) {
                close(fds[i].fd);
                open_fd[i] = false;
            }
        }
    }

    if (!reaped) waitpid(pid, &status, 0);
    if (killed) kill(-pid, SIGKILL); // sweep stragglers in the group
    for (int i = 0; i < 2; ++i)
        if (open_fd[i]) close(fds[i].fd);

    result.duration_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.out = out_cap.str();
    result.err = err_cap.str();
    if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.exit_code = 128 + WTERMSIG(status);
    }
    if (result.exit_code == 127 && result.err.rfind(kExecFailMarker, 0) == 0) {
        result.spawn_failed = true;
        result.spawn_error = result.err.substr(kExecFailMarker.size());
    }
    return result;
}

} // namespace capsule
