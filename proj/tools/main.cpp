// nrenet: command-line front end for the depth/event/fusion/metrics kernels.
//
// Exit codes: 0 success, 1 check failure, 2 usage or input error.

#include "nrenet/eval.hpp"
#include "nrenet/events.hpp"
#include "nrenet/fusion.hpp"
#include "nrenet/fusion_check.hpp"
#include "nrenet/geometry.hpp"
#include "nrenet/params_io.hpp"
#include "nrenet/random.hpp"
#include "nrenet/ten_io.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace nrenet;

namespace
{

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

/// Raised for bad user input; main() maps it to exit code 2.
struct UsageError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

struct Globals
{
    std::uint64_t seed = 0;
    bool verbose = false;
};

void require_file(const std::string& path)
{
    if (!fs::is_regular_file(path))
    {
        throw UsageError("input not found: " + path);
    }
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes)
    {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v)
{
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

// --------------------------------------------------------------------------

struct Depth2NormalArgs
{
    std::string input, output, png;
};

int run_depth2normal(const Depth2NormalArgs& a, const Globals&)
{
    require_file(a.input);
    const DepthMap depth = DepthMap::from_tensor(load_ten(a.input));
    const NormalMap normals = depth_to_normals(depth);
    save_ten(a.output, normals.to_tensor());
    if (!a.png.empty())
    {
        write_png(a.png, encode_normal_png(normals));
    }
    double nz = 0.0;
    for (std::size_t i = 0; i < normals.normal.size(); ++i)
    {
        if (normals.valid[i])
        {
            nz += std::abs(normals.normal[i].z());
        }
    }
    const std::size_t count = normals.valid_count();
    std::cout << "valid_pixels " << count << "\n";
    std::cout << "mean_abs_nz " << std::setprecision(6) << (count ? nz / static_cast<double>(count) : 0.0) << "\n";
    return kOk;
}

// --------------------------------------------------------------------------

struct Events2FrameArgs
{
    std::string input, output;
    std::size_t width = 0, height = 0;
    std::uint64_t window_us = kDefaultWindowUs;
    std::size_t bins = 1;
    std::string kernel = "delta";
};

int run_events2frame(const Events2FrameArgs& a, const Globals& g)
{
    require_file(a.input);
    if (a.window_us == 0 || a.bins == 0)
    {
        throw UsageError("--window-us and --bins must be positive");
    }
    const EventKernel kernel = parse_kernel(a.kernel);
    std::ifstream in(a.input);
    EventStream stream;
    try
    {
        stream = parse_events(in, a.width, a.height);
    }
    catch (const EventCsvError& e)
    {
        throw UsageError(a.input + ": " + e.what());
    }
    const auto windows = split_windows(stream, a.window_us);
    std::cout << "windows " << windows.size() << "\n";
    for (std::size_t k = 0; k < windows.size(); ++k)
    {
        const EventFrame frame = rasterize(windows[k], a.bins, kernel);
        std::ostringstream name;
        name << a.output << '_' << std::setw(6) << std::setfill('0') << k << ".ten";
        save_ten(name.str(), frame.tensor);
        std::cout << "window " << k << " events " << windows[k].stream.events.size() << "\n";
        if (g.verbose)
        {
            std::cerr << "  [" << frame.start << ", " << frame.end << ") -> " << name.str() << "\n";
        }
    }
    return kOk;
}

// --------------------------------------------------------------------------

struct FuseArgs
{
    std::string rgb, normal, event, output, params, save_params;
    std::optional<std::uint64_t> init_seed;
    std::optional<std::size_t> c_prime, groups;
    std::optional<std::string> pool;
};

int run_fuse(const FuseArgs& a, const Globals& g)
{
    require_file(a.rgb);
    require_file(a.normal);
    require_file(a.event);
    const Tensor f_r = load_ten(a.rgb), f_n = load_ten(a.normal), f_e = load_ten(a.event);
    if (f_r.rank() != 3 || f_r.shape() != f_n.shape() || f_r.shape() != f_e.shape())
    {
        throw UsageError("fuse: inputs must share one C x H x W shape, got rgb " + to_string(f_r.shape()) +
                         ", normal " + to_string(f_n.shape()) + ", event " + to_string(f_e.shape()));
    }
    const std::size_t c = f_r.dim(0);
    const std::size_t c_prime = a.c_prime.value_or(std::max<std::size_t>(1, c / 2));
    const std::size_t groups = a.groups.value_or(default_groups(c));
    // With --params, C' and groups come from the directory unless given explicitly.
    const bool explicit_dims = a.params.empty();
    if ((explicit_dims || a.c_prime) && (c_prime < 1 || c_prime > c))
    {
        throw UsageError("--c-prime must lie in [1, C]");
    }
    if ((explicit_dims || a.groups) && (groups == 0 || c % groups != 0))
    {
        throw UsageError("--groups " + std::to_string(groups) + " does not divide C = " + std::to_string(c));
    }

    FusionParams params;
    if (!a.params.empty())
    {
        if (!fs::is_directory(a.params))
        {
            throw UsageError("params directory not found: " + a.params);
        }
        params = load_params(a.params, c, a.c_prime, a.groups);
    }
    else
    {
        const std::uint64_t seed = a.init_seed.value_or(g.seed);
        params.adfm = adfm_init(c, c_prime, seed);
        params.eafm = eafm_init(c, groups, seed ^ 0x9e3779b97f4a7c15ULL);
    }
    if (a.pool)
    {
        if (*a.pool != "avg" && *a.pool != "max")
        {
            throw UsageError("--pool must be avg or max");
        }
        const PoolMode mode = *a.pool == "max" ? PoolMode::max : PoolMode::average;
        if (!a.params.empty() && mode != params.eafm.pool)
        {
            throw UsageError("--pool " + *a.pool + " disagrees with the pool mode stored in " + a.params);
        }
        params.eafm.pool = mode;
    }
    if (!a.save_params.empty())
    {
        save_params(a.save_params, params);
    }

    Tensor adfm_stage;
    const Tensor fused = nre_fuse(f_r, f_n, f_e, params.adfm, params.eafm, &adfm_stage);
    save_ten(a.output, fused);
    if (g.verbose)
    {
        std::cerr << "adfm alpha " << params.adfm.alpha[0] << ", stage equals rgb input: "
                  << (adfm_stage == f_r ? "yes" : "no") << "\n";
    }
    std::cout << "shape " << to_string(fused.shape()) << "\n";
    std::cout << "checksum " << hex64(fnv1a(encode_ten(fused))) << "\n";
    return kOk;
}

// --------------------------------------------------------------------------

struct EvalArgs
{
    std::string input, output;
    double iou_start = 0.50, iou_stop = 0.95, iou_step = 0.05;
};

int run_eval(const EvalArgs& a, const Globals&)
{
    require_file(a.input);
    std::ifstream in(a.input);
    std::stringstream text;
    text << in.rdbuf();
    AnnotationSet set;
    try
    {
        set = parse_annotations(text.str());
    }
    catch (const AnnotationError& e)
    {
        throw UsageError(a.input + ": " + e.what());
    }
    IouSweep sweep{a.iou_start, a.iou_stop, a.iou_step};
    try
    {
        sweep.thresholds();
    }
    catch (const std::invalid_argument& e)
    {
        throw UsageError(e.what());
    }
    const MetricsReport report = map_suite(set.detections, set.ground_truth, sweep);
    std::cout << report_table(report);
    if (!a.output.empty())
    {
        std::ofstream out(a.output, std::ios::trunc);
        out << report_json(report);
        if (!out)
        {
            throw std::runtime_error("cannot write " + a.output);
        }
    }
    return kOk;
}

// --------------------------------------------------------------------------

struct GradcheckArgs
{
    std::string module;
    FusionCheckConfig config;
    std::size_t seeds = 20;
};

int run_gradcheck(const GradcheckArgs& a, const Globals& g)
{
    if (a.module != "adfm" && a.module != "eafm")
    {
        throw UsageError("--module must be adfm or eafm, got '" + a.module + "'");
    }
    const FusionCheckConfig& cfg = a.config;
    if (cfg.channels == 0 || cfg.height == 0 || cfg.width == 0)
    {
        throw UsageError("--c, --height and --width must be positive");
    }
    if (a.module == "adfm" && (cfg.c_prime == 0 || cfg.c_prime > cfg.channels))
    {
        throw UsageError("--c-prime must lie in [1, C]");
    }
    if (a.module == "eafm" && (cfg.groups == 0 || cfg.channels % cfg.groups != 0))
    {
        throw UsageError("configuration error: --groups " + std::to_string(cfg.groups) + " does not divide C = " +
                         std::to_string(cfg.channels));
    }
    if (!(cfg.eps >= 1e-6f && cfg.eps <= 1e-2f))
    {
        throw UsageError("--eps must lie in [1e-6, 1e-2]");
    }

    std::map<std::string, double> worst;
    std::vector<std::string> order;
    bool pass = true;
    for (std::size_t s = 0; s < a.seeds; ++s)
    {
        const std::uint64_t seed = g.seed + s;
        const FusionCheckResult r =
            a.module == "adfm" ? check_adfm_gradients(cfg, seed) : check_eafm_gradients(cfg, seed);
        pass = pass && r.report.pass;
        for (const auto& p : r.report.params)
        {
            if (!worst.count(p.name))
            {
                order.push_back(p.name);
            }
            worst[p.name] = std::max(worst[p.name], p.max_rel_error);
        }
        if (g.verbose)
        {
            std::cerr << "seed " << seed << " worst " << r.report.worst() << "\n";
        }
    }
    for (const auto& name : order)
    {
        std::cout << std::left << std::setw(22) << name << ' ' << std::scientific << std::setprecision(3)
                  << worst[name] << (worst[name] < cfg.threshold ? "" : "  FAIL") << "\n";
    }
    std::cout << (pass ? "PASS" : "FAIL") << "\n";
    return pass ? kOk : kCheckFailed;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"nrenet: depth normals, event frames, RGB/normal/event fusion and detection metrics"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals globals;
    app.add_option("--seed", globals.seed, "Seed for every random quantity");
    app.add_flag("--verbose", globals.verbose, "Extra diagnostics on stderr");

    Depth2NormalArgs d2n;
    auto* cmd_d2n = app.add_subcommand("depth2normal", "Surface normals from an H x W depth .ten");
    cmd_d2n->add_option("--input", d2n.input, "Depth .ten (NaN marks invalid)")->required();
    cmd_d2n->add_option("--output", d2n.output, "Normal map .ten (3 x H x W)")->required();
    cmd_d2n->add_option("--png", d2n.png, "Optional RGB visualisation");

    Events2FrameArgs e2f;
    auto* cmd_e2f = app.add_subcommand("events2frame", "Rasterize an event CSV into per-window frames");
    cmd_e2f->add_option("--input", e2f.input, "Event CSV (t_us,x,y,polarity)")->required();
    cmd_e2f->add_option("--output", e2f.output, "Output prefix; writes <prefix>_NNNNNN.ten")->required();
    cmd_e2f->add_option("--width", e2f.width, "Sensor width")->required()->check(CLI::PositiveNumber);
    cmd_e2f->add_option("--height", e2f.height, "Sensor height")->required()->check(CLI::PositiveNumber);
    cmd_e2f->add_option("--window-us", e2f.window_us, "Window length in microseconds")->capture_default_str();
    cmd_e2f->add_option("--bins", e2f.bins, "Temporal bins per window")->capture_default_str();
    cmd_e2f->add_option("--kernel", e2f.kernel, "delta or bilinear-t")->capture_default_str();

    FuseArgs fuse;
    auto* cmd_fuse = app.add_subcommand("fuse", "EAFM(ADFM(rgb, normal), event) over C x H x W features");
    cmd_fuse->add_option("--rgb", fuse.rgb, "RGB feature .ten")->required();
    cmd_fuse->add_option("--normal", fuse.normal, "Normal feature .ten")->required();
    cmd_fuse->add_option("--event", fuse.event, "Event feature .ten")->required();
    cmd_fuse->add_option("--output", fuse.output, "Fused feature .ten")->required();
    auto* params_opt = cmd_fuse->add_option("--params", fuse.params, "Parameter directory");
    cmd_fuse->add_option("--init-seed", fuse.init_seed, "Initialise parameters from this seed")->excludes(params_opt);
    cmd_fuse->add_option("--c-prime", fuse.c_prime, "Reduced ADFM width (default C/2)");
    cmd_fuse->add_option("--groups", fuse.groups, "EAFM group-norm groups (default min(8, C), or as saved)");
    cmd_fuse->add_option("--pool", fuse.pool, "EAFM gate pooling: avg (default) or max");
    cmd_fuse->add_option("--save-params", fuse.save_params, "Write the parameters used to this directory");

    EvalArgs ev;
    auto* cmd_eval = app.add_subcommand("eval", "COCO-style mAP report from an annotations JSON");
    cmd_eval->add_option("--input", ev.input, "Annotations JSON")->required();
    cmd_eval->add_option("--output", ev.output, "Report JSON");
    cmd_eval->add_option("--iou-start", ev.iou_start)->capture_default_str();
    cmd_eval->add_option("--iou-stop", ev.iou_stop)->capture_default_str();
    cmd_eval->add_option("--iou-step", ev.iou_step)->capture_default_str();

    GradcheckArgs gc;
    auto* cmd_gc = app.add_subcommand("gradcheck", "Finite-difference check of fusion gradients");
    cmd_gc->add_option("--module", gc.module, "adfm or eafm")->required();
    cmd_gc->add_option("--c", gc.config.channels)->capture_default_str();
    cmd_gc->add_option("--c-prime", gc.config.c_prime)->capture_default_str();
    cmd_gc->add_option("--groups", gc.config.groups)->capture_default_str();
    cmd_gc->add_option("--height", gc.config.height)->capture_default_str();
    cmd_gc->add_option("--width", gc.config.width)->capture_default_str();
    cmd_gc->add_option("--seeds", gc.seeds, "Number of random cases")->capture_default_str();
    cmd_gc->add_option("--eps", gc.config.eps)->capture_default_str();
    cmd_gc->add_option("--threshold", gc.config.threshold, "Max relative error")->capture_default_str();
    cmd_gc->add_flag("--perturb-grad", gc.config.perturb_gradients, "Testing only: corrupt analytic gradients");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try
    {
        if (*cmd_d2n)
        {
            return run_depth2normal(d2n, globals);
        }
        if (*cmd_e2f)
        {
            return run_events2frame(e2f, globals);
        }
        if (*cmd_fuse)
        {
            return run_fuse(fuse, globals);
        }
        if (*cmd_eval)
        {
            return run_eval(ev, globals);
        }
        if (*cmd_gc)
        {
            return run_gradcheck(gc, globals);
        }
    }
    catch (const UsageError& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    catch (const FormatError& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    catch (const ShapeError& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    catch (const std::invalid_argument& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
