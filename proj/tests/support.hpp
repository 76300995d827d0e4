#pragma once

#include "nrenet/tensor.hpp"

#include <cstring>
#include <filesystem>
#include <string>

namespace nrenet::testing
{

inline bool bitwise_equal(const Tensor& a, const Tensor& b)
{
    return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

inline std::filesystem::path fixture(const std::string& name)
{
    return std::filesystem::path(NRENET_FIXTURE_DIR) / name;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("nrenet_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace nrenet::testing
