#include "nrenet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace nrenet
{

namespace
{

constexpr double kSmallMaxArea = 32.0 * 32.0;
constexpr double kMediumMaxArea = 96.0 * 96.0;

/// Indices of `dets` sorted by descending score, ties kept in input order.
std::vector<std::size_t> score_order(std::span<const Detection> dets)
{
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].score > dets[b].score;
    });
    return order;
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& values)
{
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& v : values)
    {
        if (v)
        {
            total += *v;
            ++count;
        }
    }
    if (count == 0)
    {
        return std::nullopt;
    }
    return total / static_cast<double>(count);
}

StratumCounts count_range(std::span<const Detection> dets, std::span<const GroundTruth> gts, SizeRange range)
{
    StratumCounts c;
    for (const auto& g : gts)
    {
        c.gt += in_range(range, g.box.area());
    }
    for (const auto& d : dets)
    {
        c.det += in_range(range, d.box.area());
    }
    return c;
}

} // namespace

double iou(const Box& a, const Box& b)
{
    const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

bool in_range(SizeRange range, double area)
{
    switch (range)
    {
    case SizeRange::all:
        return true;
    case SizeRange::small:
        return area < kSmallMaxArea;
    case SizeRange::medium:
        return area >= kSmallMaxArea && area <= kMediumMaxArea;
    case SizeRange::large:
        return area > kMediumMaxArea;
    }
    return false;
}

const char* range_name(SizeRange range)
{
    switch (range)
    {
    case SizeRange::all:
        return "all";
    case SizeRange::small:
        return "small";
    case SizeRange::medium:
        return "medium";
    case SizeRange::large:
        return "large";
    }
    return "?";
}

MatchResult match_detections(std::span<const Detection> dets,
                             std::span<const GroundTruth> gts,
                             double iou_threshold,
                             SizeRange range)
{
    const std::string* image = nullptr;
    const int* category = nullptr;
    const auto check = [&](const std::string& img, const int& cat) {
        if (image == nullptr)
        {
            image = &img;
            category = &cat;
        }
        else if (*image != img || *category != cat)
        {
            throw std::invalid_argument("match_detections: records mix image or category ids");
        }
    };
    for (const auto& d : dets)
    {
        check(d.image, d.category);
    }
    for (const auto& g : gts)
    {
        check(g.image, g.category);
    }

    std::vector<std::uint8_t> gt_ignored(gts.size());
    for (std::size_t j = 0; j < gts.size(); ++j)
    {
        gt_ignored[j] = !in_range(range, gts[j].box.area());
    }
    std::vector<std::uint8_t> gt_taken(gts.size(), 0);
    MatchResult result{std::vector<MatchLabel>(dets.size(), MatchLabel::false_positive),
                       std::vector<std::ptrdiff_t>(dets.size(), -1)};

    for (std::size_t i : score_order(dets))
    {
        std::ptrdiff_t best = -1;
        double best_iou = 0.0;
        bool best_ignored = true;
        for (std::size_t j = 0; j < gts.size(); ++j)
        {
            if (gt_taken[j])
            {
                continue;
            }
            const double overlap = iou(dets[i].box, gts[j].box);
            if (overlap < iou_threshold)
            {
                continue;
            }
            // An in-range GT always beats an ignored one; otherwise higher IoU wins.
            const bool ignored = gt_ignored[j] != 0;
            const bool better =
                best < 0 || (best_ignored && !ignored) || (ignored == best_ignored && overlap > best_iou);
            if (better)
            {
                best = static_cast<std::ptrdiff_t>(j);
                best_iou = overlap;
                best_ignored = ignored;
            }
        }
        if (best >= 0)
        {
            gt_taken[static_cast<std::size_t>(best)] = 1;
            result.matched[i] = best;
            result.labels[i] = best_ignored ? MatchLabel::ignored : MatchLabel::true_positive;
        }
        else if (!in_range(range, dets[i].box.area()))
        {
            result.labels[i] = MatchLabel::ignored;
        }
    }
    return result;
}

std::optional<double> average_precision(std::span<const RankedLabel> ranked, std::size_t n_gt)
{
    if (n_gt == 0)
    {
        return ranked.empty() ? std::optional<double>(0.0) : std::nullopt;
    }
    std::vector<std::size_t> order(ranked.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ranked[a].score > ranked[b].score;
    });

    std::vector<double> recall(ranked.size()), precision(ranked.size());
    std::size_t tp = 0;
    for (std::size_t k = 0; k < order.size(); ++k)
    {
        tp += ranked[order[k]].true_positive;
        recall[k] = static_cast<double>(tp) / static_cast<double>(n_gt);
        precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    }
    // Envelope: best precision at this recall or beyond.
    for (std::size_t k = precision.size(); k-- > 1;)
    {
        precision[k - 1] = std::max(precision[k - 1], precision[k]);
    }
    double total = 0.0;
    for (int r = 0; r <= 100; ++r)
    {
        const double level = r / 100.0;
        const auto it = std::lower_bound(recall.begin(), recall.end(), level);
        if (it != recall.end())
        {
            total += precision[static_cast<std::size_t>(it - recall.begin())];
        }
    }
    return total / 101.0;
}

std::vector<double> IouSweep::thresholds() const
{
    if (!(step > 0.0) || stop < start || start < 0.0 || stop > 1.0)
    {
        throw std::invalid_argument("IoU sweep needs 0 <= start <= stop <= 1 and step > 0");
    }
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    std::vector<double> out(count);
    for (std::size_t k = 0; k < count; ++k)
    {
        out[k] = std::round((start + static_cast<double>(k) * step) * 1e6) / 1e6;
    }
    return out;
}

namespace
{

/// AP of one category at one threshold and size range, pooling all images.
std::optional<double> category_ap(const std::vector<const Detection*>& dets,
                                  const std::vector<const GroundTruth*>& gts,
                                  double threshold,
                                  SizeRange range)
{
    std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<GroundTruth>>> per_image;
    for (std::size_t i = 0; i < dets.size(); ++i)
    {
        per_image[dets[i]->image].first.push_back(i);
    }
    std::size_t n_gt = 0;
    for (const GroundTruth* g : gts)
    {
        per_image[g->image].second.push_back(*g);
        n_gt += in_range(range, g->box.area());
    }
    if (n_gt == 0)
    {
        return std::nullopt;
    }

    // Global rank key: (score desc, original detection order).
    std::vector<std::pair<std::size_t, RankedLabel>> pooled;
    for (auto& [image, entry] : per_image)
    {
        std::vector<Detection> local;
        local.reserve(entry.first.size());
        for (std::size_t i : entry.first)
        {
            local.push_back(*dets[i]);
        }
        const MatchResult m = match_detections(local, entry.second, threshold, range);
        for (std::size_t k = 0; k < local.size(); ++k)
        {
            if (m.labels[k] != MatchLabel::ignored)
            {
                pooled.push_back({entry.first[k], {local[k].score, m.labels[k] == MatchLabel::true_positive}});
            }
        }
    }
    std::sort(pooled.begin(), pooled.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<RankedLabel> ranked;
    ranked.reserve(pooled.size());
    for (const auto& p : pooled)
    {
        ranked.push_back(p.second);
    }
    return average_precision(ranked, n_gt);
}

} // namespace

MetricsReport map_suite(std::span<const Detection> dets, std::span<const GroundTruth> gts, const IouSweep& sweep)
{
    MetricsReport report;
    report.iou_thresholds = sweep.thresholds();
    report.all = count_range(dets, gts, SizeRange::all);
    report.small = count_range(dets, gts, SizeRange::small);
    report.medium = count_range(dets, gts, SizeRange::medium);
    report.large = count_range(dets, gts, SizeRange::large);

    std::map<int, std::pair<std::vector<const Detection*>, std::vector<const GroundTruth*>>> by_category;
    for (const auto& d : dets)
    {
        by_category[d.category].first.push_back(&d);
    }
    for (const auto& g : gts)
    {
        by_category[g.category].second.push_back(&g);
    }

    std::vector<std::optional<double>> maps, map50s, map75s, smalls, mediums, larges;
    for (const auto& [category, records] : by_category)
    {
        const auto& [cat_dets, cat_gts] = records;
        const auto swept = [&](SizeRange range) {
            std::vector<std::optional<double>> aps;
            for (double t : report.iou_thresholds)
            {
                aps.push_back(category_ap(cat_dets, cat_gts, t, range));
            }
            return mean_of(aps);
        };

        CategoryReport cr;
        cr.category = category;
        cr.ap.map = swept(SizeRange::all);
        cr.ap.map50 = category_ap(cat_dets, cat_gts, 0.50, SizeRange::all);
        cr.ap.map75 = category_ap(cat_dets, cat_gts, 0.75, SizeRange::all);
        cr.ap.map_s = swept(SizeRange::small);
        cr.ap.map_m = swept(SizeRange::medium);
        cr.ap.map_l = swept(SizeRange::large);

        std::vector<Detection> dv;
        std::vector<GroundTruth> gv;
        for (const auto* d : cat_dets)
        {
            dv.push_back(*d);
        }
        for (const auto* g : cat_gts)
        {
            gv.push_back(*g);
        }
        cr.all = count_range(dv, gv, SizeRange::all);
        cr.small = count_range(dv, gv, SizeRange::small);
        cr.medium = count_range(dv, gv, SizeRange::medium);
        cr.large = count_range(dv, gv, SizeRange::large);

        maps.push_back(cr.ap.map);
        map50s.push_back(cr.ap.map50);
        map75s.push_back(cr.ap.map75);
        smalls.push_back(cr.ap.map_s);
        mediums.push_back(cr.ap.map_m);
        larges.push_back(cr.ap.map_l);
        report.categories.push_back(std::move(cr));
    }
    report.overall = ApSummary{mean_of(maps), mean_of(map50s), mean_of(map75s),
                               mean_of(smalls), mean_of(mediums), mean_of(larges)};
    return report;
}

} // namespace nrenet
