#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace testutil {

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "capsule-test") {
        auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        std::mt19937_64 rng(static_cast<unsigned long long>(stamp));
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(rng() % 1000000000));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

    std::filesystem::path write(const std::string& name, const std::string& content) const {
        auto file = path_ / name;
        std::ofstream out(file, std::ios::binary);
        out << content;
        return file;
    }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// A response in the documented completion skeleton.
inline std::string canned_response(const std::string& code,
                                   const std::string& requirements = "None") {
    return "### Step-by-step reasoning\nWork through the description.\n\n### Requirements\n" +
           requirements + "\n\n### Code\n```python\n" + code + "\n```\n";
}

} // namespace testutil
