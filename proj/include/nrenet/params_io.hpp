#pragma once

#include "nrenet/fusion.hpp"

#include <filesystem>
#include <optional>

namespace nrenet
{

struct FusionParams
{
    AdfmParams adfm;
    EafmParams eafm;
};

inline constexpr const char* kManifestName = "manifest.txt";

/// Writes one "<name>.ten" per parameter plus a manifest of "name d0 d1 ..."
/// lines, followed by "config.groups G" and "config.pool 0|1" (average|max).
/// Creates the directory if needed.
void save_params(const std::filesystem::path& dir, const FusionParams& params);

/// Loads a directory written by save_params and checks every tensor against
/// the manifest and against C (and C' when given). Group count and pool mode
/// come from the manifest; a given `groups` must agree with it. Throws
/// FormatError for missing/inconsistent files and ShapeError for dimension
/// mismatches.
FusionParams load_params(const std::filesystem::path& dir,
                         std::size_t c,
                         std::optional<std::size_t> c_prime = std::nullopt,
                         std::optional<std::size_t> groups = std::nullopt);

} // namespace nrenet
