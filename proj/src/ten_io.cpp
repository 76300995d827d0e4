#include "nrenet/ten_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace nrenet
{

namespace
{

constexpr std::uint8_t kMagic[4] = {0x54, 0x45, 0x4E, 0x53};
constexpr std::size_t kHeaderSize = 8;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
    {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

std::uint32_t get_u32(const std::uint8_t* p)
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace

std::vector<std::uint8_t> encode_ten(const Tensor& t)
{
    validate_shape(t.shape());
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + 4 * t.rank() + 4 * t.numel());
    for (std::uint8_t b : kMagic)
    {
        out.push_back(b);
    }
    out.push_back(kTenVersion);
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    out.push_back(0);
    out.push_back(0);
    for (std::size_t extent : t.shape())
    {
        if (extent > UINT32_MAX)
        {
            throw FormatError("extent does not fit in u32");
        }
        put_u32(out, static_cast<std::uint32_t>(extent));
    }
    for (float v : t.values())
    {
        put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

Tensor decode_ten(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < kHeaderSize)
    {
        throw FormatError("truncated .ten header");
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    {
        throw FormatError("bad .ten magic (expected \"TENS\")");
    }
    if (bytes[4] != kTenVersion)
    {
        throw FormatError("unsupported .ten version " + std::to_string(bytes[4]));
    }
    const std::size_t rank = bytes[5];
    if (rank < 1 || rank > 4)
    {
        throw FormatError(".ten rank must be 1..4, got " + std::to_string(rank));
    }
    if (bytes[6] != 0 || bytes[7] != 0)
    {
        throw FormatError(".ten reserved bytes must be zero");
    }
    if (bytes.size() < kHeaderSize + 4 * rank)
    {
        throw FormatError("truncated .ten extents");
    }
    Shape shape(rank);
    std::size_t count = 1;
    for (std::size_t i = 0; i < rank; ++i)
    {
        shape[i] = get_u32(bytes.data() + kHeaderSize + 4 * i);
        if (shape[i] == 0)
        {
            throw FormatError(".ten extents must be >= 1");
        }
        count *= shape[i];
    }
    const std::size_t offset = kHeaderSize + 4 * rank;
    if (bytes.size() != offset + 4 * count)
    {
        throw FormatError(".ten payload holds " + std::to_string(bytes.size() - offset) + " bytes, shape " +
                          to_string(shape) + " needs " + std::to_string(4 * count));
    }
    std::vector<float> data(count);
    for (std::size_t i = 0; i < count; ++i)
    {
        data[i] = std::bit_cast<float>(get_u32(bytes.data() + offset + 4 * i));
    }
    return Tensor(std::move(shape), std::move(data));
}

void write_ten(std::ostream& out, const Tensor& t)
{
    const auto bytes = encode_ten(t);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
    {
        throw FormatError("failed writing .ten stream");
    }
}

Tensor read_ten(std::istream& in)
{
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_ten(bytes);
}

void save_ten(const std::filesystem::path& path, const Tensor& t)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
    {
        throw FormatError("cannot open " + path.string() + " for writing");
    }
    write_ten(out, t);
}

Tensor load_ten(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw FormatError("cannot open " + path.string());
    }
    try
    {
        return read_ten(in);
    }
    catch (const FormatError& e)
    {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace nrenet
