#include "capsule/executor.hpp"

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "capsule/digest.hpp"
#include "capsule/errors.hpp"
#include "capsule/subprocess.hpp"

namespace capsule {

using nlohmann::json;

namespace {

// Container entry contract: install the listed requirements, then exec the
// main file so its exit code becomes the container exit code. Installer
// failure exits with the sentinel below and maps to setup_error.
constexpr int kInstallFailedExit = 97;

const char kEntryScript[] =
    "#!/bin/sh\n"
    "set -u\n"
    "cd /workspace\n"
    "if [ -s requirements.txt ]; then\n"
    "    pip install --no-cache-dir --quiet -r requirements.txt 1>&2 || exit 97\n"
    "fi\n"
    "exec python3 main.py\n";

std::string sanitize_for_path(const std::string& id) {
    std::string out;
    bool changed = false;
    for (char c : id) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_') {
            out.push_back(c);
        } else {
            out.push_back('_');
            changed = true;
        }
    }
    if (out.empty()) {
        out = "problem";
        changed = true;
    }
    // avoid collisions between ids that sanitize to the same text
    if (changed) out += "-" + sha256_hex(id).substr(0, 8);
    return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SandboxUnavailable("cannot write " + path.string());
    out << content;
    if (!out) throw SandboxUnavailable("failed writing " + path.string());
}

// The interpreter absolutizes the main module's path, which would leak the
// per-run workspace directory into tracebacks (and through refined errors
// into prompts and transcripts). Rewriting to workspace-relative paths keeps
// captured output machine- and run-independent, matching the container
// backend's stable mount point.
void scrub_paths(std::string& text, const std::vector<std::string>& roots) {
    for (const auto& root : roots) {
        if (root.empty()) continue;
        std::string prefix = root.back() == '/' ? root : root + "/";
        std::size_t pos = 0;
        while ((pos = text.find(prefix, pos)) != std::string::npos) text.erase(pos, prefix.size());
    }
}

std::string cap_text(std::string s, std::size_t cap) {
    if (s.size() <= cap) return s;
    std::size_t head = cap / 2 > 64 ? cap / 2 - 64 : cap / 2;
    std::size_t tail = head;
    return s.substr(0, head) + "\n...[output capped: " + std::to_string(s.size()) +
           " bytes total]...\n" + s.substr(s.size() - tail);
}

} // namespace

std::string to_string(ExecStatus status) {
    switch (status) {
    case ExecStatus::passed: return "passed";
    case ExecStatus::failed: return "failed";
    case ExecStatus::timeout: return "timeout";
    case ExecStatus::setup_error: return "setup_error";
    }
    return "setup_error";
}

ExecStatus exec_status_from_string(const std::string& name) {
    if (name == "passed") return ExecStatus::passed;
    if (name == "failed") return ExecStatus::failed;
    if (name == "timeout") return ExecStatus::timeout;
    if (name == "setup_error") return ExecStatus::setup_error;
    throw Error("unknown execution status: " + name);
}

ExecBackendKind exec_backend_from_string(const std::string& name) {
    if (name == "subprocess") return ExecBackendKind::subprocess;
    if (name == "container") return ExecBackendKind::container;
    throw Error("unknown execution backend: " + name + " (expected subprocess|container)");
}

SandboxExecutor::SandboxExecutor(ExecutorConfig config) : config_(std::move(config)) {
    if (config_.work_root.empty())
        config_.work_root = std::filesystem::temp_directory_path() / "capsule-work";
    if (config_.pip_argv.empty())
        config_.pip_argv = {config_.interpreter, "-m",      "pip",
                            "install",          "--no-cache-dir", "--quiet",
                            "--disable-pip-version-check"};
}

Workspace SandboxExecutor::prepare_workspace(const SanitizedCode& code,
                                             const TestHarnessText& harness,
                                             const std::vector<std::string>& requirements,
                                             const std::string& problem_id, int attempt_index) {
    Workspace ws;
    ws.problem_id = problem_id;
    ws.attempt_index = attempt_index;
    ws.root = config_.work_root / sanitize_for_path(problem_id) /
              ("attempt_" + std::to_string(attempt_index));
    std::error_code ec;
    std::filesystem::create_directories(ws.root, ec);
    if (ec) throw SandboxUnavailable("cannot create workspace " + ws.root.string() + ": " +
                                     ec.message());

    std::string main_text = code.code;
    if (!main_text.empty() && main_text.back() != '\n') main_text += '\n';
    main_text += '\n';
    main_text += harness.body;
    if (!main_text.empty() && main_text.back() != '\n') main_text += '\n';

    std::string req_text;
    for (const auto& r : requirements) {
        req_text += r;
        req_text += '\n';
    }

    ws.main_file = ws.root / "main.py";
    ws.requirements_file = ws.root / "requirements.txt";
    write_file(ws.main_file, main_text);
    write_file(ws.requirements_file, req_text);
    return ws;
}

ExecutionResult SandboxExecutor::execute(const Workspace& workspace, double timeout_s) {
    if (config_.backend == ExecBackendKind::container)
        return run_container(workspace, timeout_s);
    return run_subprocess(workspace, timeout_s);
}

SandboxExecutor::InstallOutcome SandboxExecutor::ensure_requirements(const Workspace& workspace) {
    std::ifstream in(workspace.requirements_file);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string req_text = buf.str();
    bool empty = true;
    for (char c : req_text)
        if (!std::isspace(static_cast<unsigned char>(c))) empty = false;
    if (empty) return {};

    // environments are cached per unique requirements set within a run
    std::string digest = sha256_hex(req_text);
    std::lock_guard lock(env_cache_mutex_);
    if (auto it = env_cache_.find(digest); it != env_cache_.end()) return {it->second, {}};

    std::filesystem::path site = config_.work_root / "envs" / digest.substr(0, 16);
    std::filesystem::path marker = site / ".capsule-ok";
    if (std::filesystem::exists(marker)) {
        env_cache_[digest] = site;
        return {site, {}};
    }
    std::error_code ec;
    std::filesystem::create_directories(site, ec);
    if (ec) throw SandboxUnavailable("cannot create env dir: " + ec.message());

    ProcessOptions opts;
    opts.argv = config_.pip_argv;
    opts.argv.insert(opts.argv.end(),
                     {"--target", site.string(), "-r", workspace.requirements_file.string()});
    opts.cwd = workspace.root;
    if (const char* path = std::getenv("PATH")) opts.env.emplace_back("PATH", path);
    if (const char* home = std::getenv("HOME")) opts.env.emplace_back("HOME", home);
    opts.timeout_s = config_.install_timeout_s;
    opts.stream_cap = config_.stream_cap;
    opts.cancel = cancel_;
    ProcessResult proc = run_process(opts);
    if (proc.spawn_failed)
        throw SandboxUnavailable("cannot run installer: " + proc.spawn_error);
    if (proc.exit_code != 0 || proc.timed_out) {
        // the generated code chose these dependencies, so the failure goes
        // back into the debugging loop rather than aborting the problem
        ExecutionResult r;
        r.status = ExecStatus::setup_error;
        r.exit_code = proc.exit_code;
        r.stdout_text = cap_text(proc.out, config_.stream_cap);
        r.stderr_text = cap_text(proc.err, config_.stream_cap);
        const std::vector<std::string> roots = {
            std::filesystem::absolute(workspace.root).string(),
            std::filesystem::absolute(config_.work_root).string()};
        scrub_paths(r.stdout_text, roots);
        scrub_paths(r.stderr_text, roots);
        r.duration_s = proc.duration_s;
        return {{}, r};
    }
    write_file(marker, "ok\n");
    env_cache_[digest] = site;
    return {site, {}};
}

ExecutionResult SandboxExecutor::run_subprocess(const Workspace& workspace, double timeout_s) {
    InstallOutcome install = ensure_requirements(workspace);
    if (install.failure) return *install.failure;

    ProcessOptions opts;
    opts.argv = {config_.interpreter, "main.py"};
    opts.cwd = workspace.root;
    // fresh, minimal environment for the generated code
    if (const char* path = std::getenv("PATH")) opts.env.emplace_back("PATH", path);
    opts.env.emplace_back("HOME", workspace.root.string());
    opts.env.emplace_back("LANG", "C.UTF-8");
    opts.env.emplace_back("PYTHONDONTWRITEBYTECODE", "1");
    opts.env.emplace_back("PYTHONIOENCODING", "utf-8");
    if (!install.site_dir.empty()) opts.env.emplace_back("PYTHONPATH", install.site_dir.string());
    opts.timeout_s = timeout_s;
    opts.stream_cap = config_.stream_cap;
    opts.cancel = cancel_;

    ProcessResult proc = run_process(opts);
    if (proc.spawn_failed)
        throw SandboxUnavailable("cannot run interpreter '" + config_.interpreter +
                                 "': " + proc.spawn_error);

    ExecutionResult result;
    result.exit_code = proc.exit_code;
    result.stdout_text = std::move(proc.out);
    result.stderr_text = std::move(proc.err);
    const std::vector<std::string> roots = {
        std::filesystem::absolute(workspace.root).string(),
        std::filesystem::absolute(config_.work_root).string()};
    scrub_paths(result.stdout_text, roots);
    scrub_paths(result.stderr_text, roots);
    result.duration_s = proc.duration_s;
    if (proc.cancelled) {
        result.status = ExecStatus::setup_error;
        result.stderr_text = "execution cancelled";
    } else if (proc.timed_out) {
        result.status = ExecStatus::timeout;
    } else {
        result.status = proc.exit_code == 0 ? ExecStatus::passed : ExecStatus::failed;
    }
    return result;
}

void SandboxExecutor::cleanup(const Workspace& workspace) {
    if (config_.keep_artifacts || workspace.root.empty()) return;
    std::error_code ec;
    std::filesystem::remove_all(workspace.root, ec);
    // non-fatal by contract; nothing to do on error
}

// --- container backend -------------------------------------------------

namespace {

std::unique_ptr<httplib::Client> engine_client(const std::string& socket_path) {
    auto client = std::make_unique<httplib::Client>(socket_path);
    client->set_address_family(AF_UNIX);
    client->set_connection_timeout(5);
    client->set_read_timeout(30);
    return client;
}

[[noreturn]] void engine_error(const std::string& what, const httplib::Result& res) {
    std::string detail = httplib::to_string(res.error());
    if (res) detail = "HTTP " + std::to_string(res->status) + " " + res->body;
    throw SandboxUnavailable("container engine: " + what + ": " + detail);
}

} // namespace

void demux_engine_logs(const std::string& raw, std::string& out, std::string& err) {
    // multiplexed stream frames: 1 byte type, 3 bytes zero, 4 bytes length BE
    if (!raw.empty() && raw[0] != 0 && raw[0] != 1 && raw[0] != 2) {
        out = raw; // TTY mode: a single raw stream
        return;
    }
    std::size_t pos = 0;
    while (pos + 8 <= raw.size()) {
        unsigned char type = static_cast<unsigned char>(raw[pos]);
        std::size_t len = (static_cast<unsigned char>(raw[pos + 4]) << 24) |
                          (static_cast<unsigned char>(raw[pos + 5]) << 16) |
                          (static_cast<unsigned char>(raw[pos + 6]) << 8) |
                          static_cast<unsigned char>(raw[pos + 7]);
        pos += 8;
        std::size_t take = std::min(len, raw.size() - pos);
        if (type == 2)
            err.append(raw, pos, take);
        else
            out.append(raw, pos, take);
        pos += take;
    }
}

ExecutionResult SandboxExecutor::run_container(const Workspace& workspace, double timeout_s) {
    // requirements are installed inside the container by the entry script
    write_file(workspace.root / "entry.sh", kEntryScript);

    auto client = engine_client(config_.engine_socket);
    auto ping = client->Get("/_ping");
    if (!ping || ping->status != 200)
        throw SandboxUnavailable("container engine unreachable at " + config_.engine_socket);

    json host_config{
        {"Binds", {std::filesystem::absolute(workspace.root).string() + ":/workspace"}},
        {"NetworkMode", "none"},
    };
    if (config_.memory_limit_bytes) host_config["Memory"] = *config_.memory_limit_bytes;
    if (config_.cpus) host_config["NanoCpus"] = static_cast<long long>(*config_.cpus * 1e9);
    json create{
        {"Image", config_.image},
        {"Cmd", {"/bin/sh", "/workspace/entry.sh"}},
        {"WorkingDir", "/workspace"},
        {"Env", {"PYTHONDONTWRITEBYTECODE=1", "PYTHONIOENCODING=utf-8"}},
        {"HostConfig", host_config},
    };
    auto created = client->Post("/containers/create", create.dump(), "application/json");
    if (!created || created->status != 201) engine_error("create failed", created);
    std::string id = json::parse(created->body).at("Id").get<std::string>();

    ExecutionResult result;
    const auto start = std::chrono::steady_clock::now();
    try {
        auto started = client->Post("/containers/" + id + "/start", "", "application/json");
        if (!started || (started->status != 204 && started->status != 304))
            engine_error("start failed", started);

        const auto deadline =
            start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                        std::chrono::duration<double>(timeout_s));
        bool running = true;
        int exit_code = -1;
        bool timed_out = false;
        while (running) {
            auto info = client->Get("/containers/" + id + "/json");
            if (!info || info->status != 200) engine_error("inspect failed", info);
            auto state = json::parse(info->body).at("State");
            running = state.value("Running", false);
            if (!running) {
                exit_code = state.value("ExitCode", -1);
                break;
            }
            if (std::chrono::steady_clock::now() >= deadline ||
                (cancel_ && cancel_->load())) {
                client->Post("/containers/" + id + "/kill", "", "application/json");
                timed_out = std::chrono::steady_clock::now() >= deadline;
                running = false;
                exit_code = -1;
            } else {
                std::this_thread::sleep_for(std::chrono::milliseconds(100));
            }
        }

        auto logs = client->Get("/containers/" + id + "/logs?stdout=true&stderr=true");
        std::string out_text, err_text;
        if (logs && logs->status == 200) demux_engine_logs(logs->body, out_text, err_text);

        result.exit_code = exit_code;
        result.stdout_text = cap_text(out_text, config_.stream_cap);
        result.stderr_text = cap_text(err_text, config_.stream_cap);
        result.duration_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (timed_out)
            result.status = ExecStatus::timeout;
        else if (exit_code == kInstallFailedExit)
            result.status = ExecStatus::setup_error;
        else
            result.status = exit_code == 0 ? ExecStatus::passed : ExecStatus::failed;
    } catch (...) {
        client->Delete("/containers/" + id + "?force=true");
        throw;
    }
    client->Delete("/containers/" + id + "?force=true");
    return result;
}

} // namespace capsule
