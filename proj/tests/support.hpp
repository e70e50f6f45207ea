#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <chrono>
#include <fcntl.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "vqs/ingestion.hpp"
#include "vqs/linalg.hpp"
#include "vqs/rng.hpp"

namespace testing {

inline vqs::Matrix random_matrix(std::size_t rows, std::size_t cols, vqs::SplitMix64& rng, double lo = -1.0,
                                 double hi = 1.0) {
    vqs::Matrix m(rows, cols);
    for (double& v : m.values()) v = rng.uniform(lo, hi);
    return m;
}

inline double max_abs_diff(const vqs::Matrix& a, const vqs::Matrix& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
    return d;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("vqs_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline vqs::ExpressionMatrix make_expression(std::vector<std::string> features, std::vector<std::string> samples,
                                             vqs::Matrix values) {
    vqs::ExpressionMatrix m;
    m.feature_ids = std::move(features);
    m.sample_ids = std::move(samples);
    m.values = std::move(values);
    return m;
}

struct ProcessResult {
    int exit_code = -1;
    std::string out;
    std::string err;
    double seconds = 0.0;
    long max_rss_kb = 0;  // peak resident set of the child
};

/// Run `argv` as a child process, capturing stdout and stderr.
inline ProcessResult run_process(const std::vector<std::string>& argv) {
    TempDir io;
    const auto out_path = io / "stdout", err_path = io / "stderr";
    const auto start = std::chrono::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid == 0) {
        const int out = ::open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        const int err = ::open(err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        ::dup2(out, 1);
        ::dup2(err, 2);
        std::vector<char*> args;
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);
        ::execv(args[0], args.data());
        ::_exit(127);
    }
    int status = 0;
    struct rusage usage {};
    ::wait4(pid, &status, 0, &usage);
    ProcessResult r;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    r.max_rss_kb = usage.ru_maxrss;
    r.out = read_text(out_path);
    r.err = read_text(err_path);
    return r;
}

}  // namespace testing
