// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "symgrade/random.hpp"
#include "symgrade/tensor.hpp"

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace symgrade::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("symgrade_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = scale * rng.normal();
    return t;
}

/// Rows drawn from a random Dirichlet-like positive vector, normalized.
inline Tensor random_stochastic(std::size_t n, std::size_t k, Rng& rng) {
    Tensor t({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            t(i, j) = -std::log(1.0 - rng.uniform());
            total += t(i, j);
        }
        for (std::size_t j = 0; j < k; ++j) t(i, j) /= total;
    }
    return t;
}

} // namespace symgrade::test
