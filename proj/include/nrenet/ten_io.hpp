#pragma once

#include "nrenet/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace nrenet
{

/// Malformed or unreadable ".ten" container.
class FormatError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// ".ten" layout: "TENS", version byte (1), rank byte (1..4), two zero
/// bytes, rank x u32 LE extents, then f32 LE values, last axis fastest.
inline constexpr std::uint8_t kTenVersion = 1;

std::vector<std::uint8_t> encode_ten(const Tensor& t);
Tensor decode_ten(std::span<const std::uint8_t> bytes);

void write_ten(std::ostream& out, const Tensor& t);
Tensor read_ten(std::istream& in);

void save_ten(const std::filesystem::path& path, const Tensor& t);
Tensor load_ten(const std::filesystem::path& path);

} // namespace nrenet
