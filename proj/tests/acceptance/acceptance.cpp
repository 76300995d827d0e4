// Acceptance runner: one PASS/FAIL line per criterion, exit 1 if any fails.

#include "../cli_support.hpp"
#include "../eval_support.hpp"
#include "../events_support.hpp"
#include "../fusion_support.hpp"
#include "../reference/metrics_reference.hpp"
#include "../support.hpp"
#include "nrenet/eval.hpp"
#include "nrenet/fusion_check.hpp"
#include "nrenet/geometry.hpp"
#include "nrenet/ten_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>

using namespace nrenet;
using namespace nrenet::testing;
namespace fs = std::filesystem;

namespace
{

struct Outcome
{
    bool pass = true;
    std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Outcome()>& body)
{
    Outcome o;
    try
    {
        o = body();
    }
    catch (const std::exception& e)
    {
        o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << title;
    if (!o.detail.empty())
    {
        std::cout << " (" << o.detail << ")";
    }
    std::cout << "\n" << std::flush;
}

std::string sci(double v)
{
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

Shape random_chw(UniformSource& rng, std::size_t c)
{
    return {c, 1 + static_cast<std::size_t>(rng.unit() * 4), 1 + static_cast<std::size_t>(rng.unit() * 4)};
}

Outcome adfm_identity()
{
    UniformSource rng(1001);
    for (int k = 0; k < 100; ++k)
    {
        const std::size_t c = 1 + static_cast<std::size_t>(rng.unit() * 8);
        const std::size_t cp = 1 + static_cast<std::size_t>(rng.unit() * static_cast<float>(c));
        AdfmParams p = random_adfm(rng, c, cp);
        p.alpha[0] = 0.0f;
        const Shape shape = random_chw(rng, c);
        const Tensor f_r = rng.tensor(shape, -3, 3), f_n = rng.tensor(shape, -3, 3);
        if (!bitwise_equal(adfm_forward(f_r, f_n, p), f_r))
        {
            return {false, "case " + std::to_string(k) + " differs"};
        }
    }
    return {true, "100 cases bitwise"};
}

struct SuiteStats
{
    double adfm_worst = 0.0, eafm_worst = 0.0, attention = 0.0;
    bool adfm_pass = true, eafm_pass = true, control_failed = true;
};

const SuiteStats& gradient_suite()
{
    static const SuiteStats stats = [] {
        SuiteStats s;
        FusionCheckConfig cfg; // C = 8, C' = 4, groups = 2, 4 x 4, eps 1e-3, threshold 1e-3
        FusionCheckConfig bad = cfg;
        bad.perturb_gradients = true;
        for (std::uint64_t seed = 0; seed < 20; ++seed)
        {
            const FusionCheckResult a = check_adfm_gradients(cfg, seed);
            const FusionCheckResult e = check_eafm_gradients(cfg, seed);
            s.adfm_worst = std::max(s.adfm_worst, a.report.worst());
            s.eafm_worst = std::max(s.eafm_worst, e.report.worst());
            s.adfm_pass = s.adfm_pass && a.report.pass;
            s.eafm_pass = s.eafm_pass && e.report.pass;
            s.attention = std::max(s.attention, a.attention_row_error);
            s.control_failed = s.control_failed && !check_adfm_gradients(bad, seed).report.pass &&
                               !check_eafm_gradients(bad, seed).report.pass;
        }
        return s;
    }();
    return stats;
}

/// Worst |a - g| / (1e-3 |g| + 1e-6) of the analytic gradients against
/// float64 central differences of the reference; <= 1 means agreement.
double float64_oracle_ratio()
{
    const reference::Dims d{8, 4, 2, 4, 4};
    double worst = 0.0;
    const auto fold = [&worst](const std::vector<Tensor>& analytic, const reference::Leaves& exact) {
        for (std::size_t k = 0; k < analytic.size(); ++k)
        {
            for (std::size_t i = 0; i < analytic[k].numel(); ++i)
            {
                const double g = exact[k][i];
                worst = std::max(worst, std::abs(analytic[k][i] - g) / (1e-3 * std::abs(g) + 1e-6));
            }
        }
    };
    for (int s = 0; s < 20; ++s)
    {
        UniformSource rng(9000 + s);
        const AdfmParams pa = random_adfm(rng, 8, 4);
        const EafmParams pe = random_eafm(rng, 8, 2);
        const Tensor a = rng.tensor({8, 4, 4}, -1, 1), b = rng.tensor({8, 4, 4}, -1, 1), w = rng.tensor({8, 4, 4}, -1, 1);
        const AdfmGradients ga = adfm_gradients(adfm_record(a, b, pa), w);
        std::vector<Tensor> va{ga.f_r, ga.f_n};
        ga.params.for_each([&](const std::string&, const Tensor& t) { va.push_back(t); });
        fold(va, reference::numeric_gradient([&d](const reference::Leaves& l) { return reference::adfm(l, d); }, to_leaves(a, b, pa), to_vec(w)));
        const EafmGradients ge = eafm_gradients(eafm_record(a, b, pe), w);
        std::vector<Tensor> ve{ge.f_a, ge.f_e};
        ge.params.for_each([&](const std::string&, const Tensor& t) { ve.push_back(t); });
        fold(ve, reference::numeric_gradient([&d](const reference::Leaves& l) { return reference::eafm(l, d); }, to_leaves(a, b, pe), to_vec(w)));
    }
    return worst;
}

Outcome gradients()
{
    const SuiteStats& s = gradient_suite();
    std::string detail = "20 seeds, worst f32 rel err adfm " + sci(s.adfm_worst) + ", eafm " + sci(s.eafm_worst) +
                         ", threshold 1e-3; negative control " + (s.control_failed ? "detected" : "NOT detected") +
                         "; float64-oracle error ratio " + sci(float64_oracle_ratio()) + " (<= 1 agrees)";
    return {s.adfm_pass && s.eafm_pass && s.control_failed, detail};
}

Outcome attention_rows()
{
    const SuiteStats& s = gradient_suite();
    return {s.attention <= 1e-6, "max |row sum - 1| " + sci(s.attention)};
}

Outcome oracle_equivalence()
{
    UniformSource rng(1004);
    double worst = 0.0;
    int cases = 0;
    for (int k = 0; k < 60; ++k)
    {
        const std::size_t c = 1 + static_cast<std::size_t>(rng.unit() * 8);
        const std::size_t cp = 1 + static_cast<std::size_t>(rng.unit() * static_cast<float>(c));
        std::vector<std::size_t> divisors;
        for (std::size_t g = 1; g <= c; ++g)
        {
            if (c % g == 0)
            {
                divisors.push_back(g);
            }
        }
        const std::size_t groups = divisors[static_cast<std::size_t>(rng.unit() * static_cast<float>(divisors.size()))];
        const Shape shape = random_chw(rng, c);
        const Tensor a = rng.tensor(shape, -1, 1), b = rng.tensor(shape, -1, 1);
        const AdfmParams pa = random_adfm(rng, c, cp);
        const EafmParams pe = random_eafm(rng, c, groups);
        const std::size_t h = shape[1], w = shape[2];
        worst = std::max(worst, max_abs_diff(adfm_forward(a, b, pa), reference::adfm(to_leaves(a, b, pa), {c, cp, 1, h, w})));
        worst = std::max(worst, max_abs_diff(eafm_forward(a, b, pe), reference::eafm(to_leaves(a, b, pe), {c, 0, groups, h, w})));
        ++cases;
    }
    return {worst <= 1e-5, std::to_string(cases) + " cases, max abs diff " + sci(worst)};
}

DepthMap depth_from(std::size_t w, std::size_t h, const std::function<double(double, double)>& f)
{
    DepthMap d(w, h);
    for (std::size_t v = 0; v < h; ++v)
    {
        for (std::size_t u = 0; u < w; ++u)
        {
            d.depth[d.index(u, v)] = static_cast<float>(f(static_cast<double>(u), static_cast<double>(v)));
            d.valid[d.index(u, v)] = 1;
        }
    }
    return d;
}

Outcome geometry()
{
    double worst = 0.0;
    const auto against = [&worst](const NormalMap& n, double x, double y, double z) {
        for (std::size_t i = 0; i < n.normal.size(); ++i)
        {
            if (!n.valid[i])
            {
                worst = 1.0;
                continue;
            }
            const auto& v = n.normal[i];
            worst = std::max({worst, std::abs(v.x() - x), std::abs(v.y() - y), std::abs(v.z() - z)});
        }
    };
    against(depth_to_normals(depth_from(7, 5, [](double, double) { return 3.0; })), 0, 0, 1);
    const double r = 1.0 / std::sqrt(2.0);
    against(depth_to_normals(depth_from(7, 5, [](double u, double) { return 1.0 + u; })), r, 0, r);

    UniformSource rng(1005);
    double unit = 0.0, self = 0.0, asym = 0.0;
    for (int k = 0; k < 100; ++k)
    {
        const std::size_t w = 2 + static_cast<std::size_t>(rng.unit() * 10), h = 2 + static_cast<std::size_t>(rng.unit() * 10);
        DepthMap a(w, h), b(w, h);
        for (std::size_t i = 0; i < w * h; ++i)
        {
            a.depth[i] = rng.uniform(0.5f, 10.0f);
            a.valid[i] = rng.unit() < 0.9f;
            b.depth[i] = rng.uniform(0.5f, 10.0f);
            b.valid[i] = rng.unit() < 0.9f;
        }
        const NormalMap na = depth_to_normals(a), nb = depth_to_normals(b);
        for (std::size_t i = 0; i < na.normal.size(); ++i)
        {
            if (na.valid[i])
            {
                unit = std::max(unit, std::abs(static_cast<double>(na.normal[i].norm()) - 1.0));
            }
        }
        if (na.valid_count() > 0)
        {
            self = std::max(self, angular_loss(na, na).sum);
        }
        try
        {
            asym = std::max(asym, std::abs(angular_loss(na, nb).sum - angular_loss(nb, na).sum));
        }
        catch (const EmptyDomainError&)
        {
        }
    }
    const bool pass = worst <= 1e-6 && unit <= 1e-6 && self == 0.0 && asym == 0.0;
    return {pass, "planar err " + sci(worst) + ", unit-length err " + sci(unit) + ", L(a,a) " + sci(self) + ", |L(a,b)-L(b,a)| " + sci(asym)};
}

Outcome event_mass()
{
    UniformSource rng(1006);
    double delta_err = 0.0, bilinear_err = 0.0;
    for (int trial = 0; trial < 1000; ++trial)
    {
        const EventStream s = random_stream(rng, 80, 2000);
        const std::size_t bins = 1 + static_cast<std::size_t>(rng.unit() * 5);
        for (const auto& w : split_windows(s, 1 + rng.bits() % 700))
        {
            const double count = static_cast<double>(w.stream.events.size());
            delta_err = std::max(delta_err, std::abs(sum(rasterize(w, bins, EventKernel::delta).tensor) - count));
            bilinear_err = std::max(bilinear_err, std::abs(sum(rasterize(w, bins, EventKernel::bilinear_t).tensor) - count));
        }
    }
    // Half-open rule: an event exactly on a boundary opens the next window.
    EventStream b{4, 4, {{0, 0, 0, Polarity::on}, {99, 1, 0, Polarity::off}, {100, 2, 0, Polarity::on}, {200, 3, 0, Polarity::on}}};
    const auto windows = split_windows(b, 100);
    const bool half_open = windows.size() == 3 && windows[0].stream.events.size() == 2 && windows[1].stream.events.size() == 1 &&
                           windows[1].stream.events[0].t == 100 && windows[2].stream.events[0].t == 200;
    return {delta_err == 0.0 && bilinear_err <= 1e-6 && half_open,
            "1000 streams, delta err " + sci(delta_err) + ", bilinear err " + sci(bilinear_err) +
                (half_open ? ", boundary events open the next window" : ", half-open rule violated")};
}

Outcome metrics()
{
    UniformSource rng(1007);
    int mismatches = 0;
    const int scenes = 100;
    for (int k = 0; k < scenes; ++k)
    {
        const Scene s = random_scene(rng);
        const MetricsReport r = map_suite(s.dets, s.gts);
        const reference::Summary o = reference::evaluate(s.dets, s.gts);
        mismatches += !(r.overall.map == o.map && r.overall.map50 == o.map50 && r.overall.map75 == o.map75 &&
                        r.overall.map_s == o.map_s && r.overall.map_m == o.map_m && r.overall.map_l == o.map_l);
    }
    const std::vector<RankedLabel> one{{1.0, true}}, half{{0.9, false}, {0.8, true}};
    const bool ap_cases = average_precision(one, 1) == 1.0 && average_precision(half, 1) == 0.5;
    const std::vector<GroundTruth> gts{{{0, 0, 60, 10}, 1, "a"}};
    const std::vector<Detection> dets{{{0, 0, 100, 10}, 0.7, 1, "a"}};
    const MetricsReport single = map_suite(dets, gts);
    const bool single_case = single.overall.map50 == 1.0 && single.overall.map75 == 0.0 && std::abs(*single.overall.map - 0.3) < 1e-12;
    return {mismatches == 0 && ap_cases && single_case,
            std::to_string(scenes) + " scenes, " + std::to_string(mismatches) + " oracle mismatches; hand cases " +
                (ap_cases && single_case ? "match" : "differ")};
}

Outcome round_trips()
{
    UniformSource rng(1008);
    int bad = 0;
    for (std::size_t rank = 1; rank <= 4; ++rank)
    {
        for (int k = 0; k < 100; ++k)
        {
            Shape shape;
            for (std::size_t a = 0; a < rank; ++a)
            {
                shape.push_back(1 + static_cast<std::size_t>(rng.unit() * 5));
            }
            Tensor t(shape);
            for (float& v : t.data())
            {
                const auto bits = static_cast<std::uint32_t>(rng.bits());
                std::memcpy(&v, &bits, sizeof v);
            }
            std::stringstream io;
            write_ten(io, t);
            bad += !bitwise_equal(read_ten(io), t);
        }
    }
    NormalMap n(64, 64);
    for (std::size_t i = 0; i < n.normal.size(); ++i)
    {
        Eigen::Vector3f v;
        do
        {
            v = Eigen::Vector3f(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        } while (v.norm() < 1e-3f || v.norm() > 1.0f || v.normalized().z() < 0.05f);
        n.normal[i] = v.normalized();
        n.valid[i] = 1;
    }
    const fs::path dir = scratch_dir("acceptance_png");
    write_png(dir / "n.png", encode_normal_png(n));
    const AngularLoss loss = angular_loss(n, decode_normal_png(read_png(dir / "n.png")));
    const double worst = *std::max_element(loss.per_pixel.begin(), loss.per_pixel.end());
    return {bad == 0 && loss.count == n.normal.size() && worst < 0.01,
            "400 tensors, " + std::to_string(bad) + " mismatches; PNG worst angular error " + sci(worst) + " rad"};
}

/// Full pipeline into `dir`; returns the concatenated stdout of every step.
std::string run_pipeline(const fs::path& dir)
{
    std::string log;
    const auto step = [&log](const std::string& args) {
        const CliRun r = run_cli("--seed 42 " + args);
        if (r.status != 0)
        {
            throw std::runtime_error("pipeline step failed: " + args + "\n" + r.output);
        }
        log += r.output;
    };
    step("depth2normal --input " + quoted(fixture("depth_ramp.ten")) + " --output " + quoted(dir / "normals.ten") + " --png " +
         quoted(dir / "normals.png"));
    step("events2frame --input " + quoted(fixture("events_stream.csv")) + " --output " + quoted(dir / "frame") +
         " --width 16 --height 12 --window-us 20000 --bins 3 --kernel bilinear-t");
    step("fuse --rgb " + quoted(fixture("feat_rgb.ten")) + " --normal " + quoted(fixture("feat_normal.ten")) + " --event " +
         quoted(fixture("feat_event.ten")) + " --output " + quoted(dir / "fused.ten") + " --save-params " + quoted(dir / "params"));
    step("eval --input " + quoted(fixture("ann_perfect.json")) + " --output " + quoted(dir / "report.json"));
    return log;
}

Outcome determinism()
{
    const fs::path a = scratch_dir("acceptance_run_a"), b = scratch_dir("acceptance_run_b");
    const std::string log_a = run_pipeline(a), log_b = run_pipeline(b);
    std::size_t files = 0, differing = 0;
    for (const auto& entry : fs::recursive_directory_iterator(a))
    {
        if (!entry.is_regular_file())
        {
            continue;
        }
        ++files;
        const fs::path other = b / fs::relative(entry.path(), a);
        differing += !fs::exists(other) || read_bytes(entry.path()) != read_bytes(other);
    }
    return {differing == 0 && log_a == log_b && files > 0,
            std::to_string(files) + " output files, " + std::to_string(differing) + " differ; stdout " +
                (log_a == log_b ? "identical" : "differs")};
}

} // namespace

int main()
{
    report(1, "ADFM identity at alpha = 0", adfm_identity);
    report(2, "gradient suite (literal f32 finite differences) + negative control", gradients);
    report(3, "attention rows sum to 1", attention_rows);
    report(4, "forward passes match the direct-formula reference", oracle_equivalence);
    report(5, "geometry exactness", geometry);
    report(6, "event mass conservation and half-open windows", event_mass);
    report(7, "metrics match the brute-force oracle", metrics);
    report(8, "format round trips", round_trips);
    report(9, "end-to-end CLI determinism", determinism);
    return failures == 0 ? 0 : 1;
}
