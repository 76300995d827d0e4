#include "nrenet/params_io.hpp"

#include "nrenet/ten_io.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace nrenet
{

namespace
{

constexpr const char* kManifestTag = "nrenet-params 1";
constexpr const char* kGroupsKey = "config.groups";
constexpr const char* kPoolKey = "config.pool"; // 0 average, 1 max

std::map<std::string, Shape> read_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
    {
        throw FormatError("missing parameter manifest " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != kManifestTag)
    {
        throw FormatError(path.string() + ": expected first line \"" + kManifestTag + "\"");
    }
    std::map<std::string, Shape> entries;
    while (std::getline(in, line))
    {
        if (line.empty())
        {
            continue;
        }
        std::istringstream fields(line);
        std::string name;
        fields >> name;
        Shape shape;
        std::size_t extent = 0;
        while (fields >> extent)
        {
            shape.push_back(extent);
        }
        if (name.empty() || shape.empty() || !fields.eof())
        {
            throw FormatError(path.string() + ": malformed manifest line \"" + line + "\"");
        }
        entries[name] = shape;
    }
    return entries;
}

template <typename Params>
void load_into(Params& p, const std::filesystem::path& dir, const std::map<std::string, Shape>& manifest)
{
    p.for_each([&](const std::string& name, Tensor& t) {
        const auto it = manifest.find(name);
        if (it == manifest.end())
        {
            throw FormatError("parameter " + name + " is not listed in the manifest");
        }
        t = load_ten(dir / (name + ".ten"));
        if (t.shape() != it->second)
        {
            throw FormatError("parameter " + name + " has shape " + to_string(t.shape()) + " but the manifest says " +
                              to_string(it->second));
        }
    });
}

} // namespace

void save_params(const std::filesystem::path& dir, const FusionParams& params)
{
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / kManifestName, std::ios::trunc);
    if (!manifest)
    {
        throw FormatError("cannot write manifest in " + dir.string());
    }
    manifest << kManifestTag << '\n';
    const auto write = [&](const std::string& name, const Tensor& t) {
        save_ten(dir / (name + ".ten"), t);
        manifest << name;
        for (std::size_t e : t.shape())
        {
            manifest << ' ' << e;
        }
        manifest << '\n';
    };
    params.adfm.for_each(write);
    params.eafm.for_each(write);
    manifest << kGroupsKey << ' ' << params.eafm.groups << '\n';
    manifest << kPoolKey << ' ' << (params.eafm.pool == PoolMode::max ? 1 : 0) << '\n';
}

FusionParams load_params(const std::filesystem::path& dir,
                         std::size_t c,
                         std::optional<std::size_t> c_prime,
                         std::optional<std::size_t> groups)
{
    const auto manifest = read_manifest(dir / kManifestName);
    FusionParams params;
    load_into(params.adfm, dir, manifest);
    load_into(params.eafm, dir, manifest);

    const auto saved_groups = manifest.find(kGroupsKey);
    const auto saved_pool = manifest.find(kPoolKey);
    if (saved_groups == manifest.end() || saved_groups->second.size() != 1 || saved_pool == manifest.end() ||
        saved_pool->second.size() != 1 || saved_pool->second[0] > 1)
    {
        throw FormatError(dir.string() + ": manifest lacks a valid " + kGroupsKey + " / " + kPoolKey + " entry");
    }
    params.eafm.groups = saved_groups->second[0];
    params.eafm.pool = saved_pool->second[0] == 1 ? PoolMode::max : PoolMode::average;
    if (groups && *groups != params.eafm.groups)
    {
        throw ShapeError("parameters in " + dir.string() + " were saved with groups = " +
                         std::to_string(params.eafm.groups) + ", requested " + std::to_string(*groups));
    }

    validate(params.adfm);
    validate(params.eafm);
    if (channels(params.adfm) != c || (c_prime && reduced_channels(params.adfm) != *c_prime) || channels(params.eafm) != c)
    {
        std::ostringstream os;
        os << "parameters in " << dir.string() << " have C = " << channels(params.adfm)
           << ", C' = " << reduced_channels(params.adfm) << "; expected C = " << c;
        if (c_prime)
        {
            os << ", C' = " << *c_prime;
        }
        throw ShapeError(os.str());
    }
    return params;
}

} // namespace nrenet
