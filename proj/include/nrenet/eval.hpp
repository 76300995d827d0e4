#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nrenet
{

/// Axis-aligned box: top-left corner and extents in pixels.
struct Box
{
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double area() const { return w * h; }
    bool valid() const { return w > 0.0 && h > 0.0; }
};

struct Detection
{
    Box box;
    double score = 0.0;
    int category = 0;
    std::string image;
};

struct GroundTruth
{
    Box box;
    int category = 0;
    std::string image;
};

double iou(const Box& a, const Box& b);

enum class MatchLabel
{
    true_positive,
    false_positive,
    ignored, ///< excluded from the PR curve (size-stratified evaluation only)
};

/// Object-size stratum by area: small < 32^2 <= medium <= 96^2 < large.
enum class SizeRange
{
    all,
    small,
    medium,
    large
};

bool in_range(SizeRange range, double area);
const char* range_name(SizeRange range);

struct MatchResult
{
    std::vector<MatchLabel> labels;       ///< per detection, input order
    std::vector<std::ptrdiff_t> matched;  ///< GT index per detection, -1 if none
};

/// Greedy matching for one image and category: detections in descending
/// score (ties by input order) take the unmatched GT with the highest IoU
/// >= threshold (ties by GT order).
///
/// With a size range, GTs outside it are ignored: a detection prefers an
/// in-range GT, a detection matched to an ignored GT is ignored, and an
/// unmatched detection whose own area is outside the range is ignored.
/// Throws std::invalid_argument if records mix image or category ids.
MatchResult match_detections(std::span<const Detection> dets,
                             std::span<const GroundTruth> gts,
                             double iou_threshold,
                             SizeRange range = SizeRange::all);

struct RankedLabel
{
    double score = 0.0;
    bool true_positive = false;
};

/// 101-point interpolated AP of a ranked TP/FP list (descending score,
/// ties in the given order). nullopt when n_gt == 0 and detections exist
/// (the category is excluded from averages); 0 when both are empty.
std::optional<double> average_precision(std::span<const RankedLabel> ranked, std::size_t n_gt);

/// Inclusive IoU sweep start:step:stop.
struct IouSweep
{
    double start = 0.50;
    double stop = 0.95;
    double step = 0.05;

    /// Thresholds rounded to 1e-6 so decimal steps land on exact decimals.
    std::vector<double> thresholds() const;
};

/// AP family for one category or averaged over categories. Empty optionals
/// mark quantities with no ground truth to evaluate.
struct ApSummary
{
    std::optional<double> map;    ///< mean AP over the IoU sweep
    std::optional<double> map50;
    std::optional<double> map75;
    std::optional<double> map_s;
    std::optional<double> map_m;
    std::optional<double> map_l;
};

struct StratumCounts
{
    std::size_t gt = 0;
    std::size_t det = 0;
};

struct CategoryReport
{
    int category = 0;
    ApSummary ap;
    StratumCounts all, small, medium, large;
};

struct MetricsReport
{
    ApSummary overall;
    std::vector<CategoryReport> categories; ///< ascending category id
    std::vector<double> iou_thresholds;
    StratumCounts all, small, medium, large;
};

/// COCO-style evaluation over every (category, IoU threshold, size range).
MetricsReport map_suite(std::span<const Detection> dets, std::span<const GroundTruth> gts, const IouSweep& sweep = {});

// ---------------------------------------------------------------------------
// Annotation / report I/O
// ---------------------------------------------------------------------------

class AnnotationError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

struct AnnotationSet
{
    std::vector<Detection> detections;
    std::vector<GroundTruth> ground_truth;
};

/// Parses {"images": [{"id", "detections": [...], "ground_truth": [...]}]}.
/// Malformed JSON reports the byte offset of the parse failure.
AnnotationSet parse_annotations(const std::string& json_text);

std::string report_json(const MetricsReport& report);
std::string report_table(const MetricsReport& report);

} // namespace nrenet
