#include "nrenet/eval.hpp"

#include <json.hpp>

#include <cmath>
#include <iomanip>
#include <sstream>

namespace nrenet
{

namespace
{

using nlohmann::json;

Box parse_box(const json& v, const std::string& where)
{
    if (!v.is_array() || v.size() != 4 || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); }))
    {
        throw AnnotationError(where + ": bbox must be an array of 4 numbers");
    }
    Box b{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
    if (!std::isfinite(b.x) || !std::isfinite(b.y) || !std::isfinite(b.w) || !std::isfinite(b.h) || !b.valid())
    {
        throw AnnotationError(where + ": bbox needs finite coordinates and positive width/height");
    }
    return b;
}

int parse_category(const json& obj, const std::string& where)
{
    const auto it = obj.find("category");
    if (it == obj.end() || !it->is_number_integer())
    {
        throw AnnotationError(where + ": \"category\" must be an integer");
    }
    return it->get<int>();
}

const json& require_array(const json& obj, const char* key, const std::string& where)
{
    const auto it = obj.find(key);
    if (it == obj.end() || !it->is_array())
    {
        throw AnnotationError(where + ": \"" + key + "\" must be an array");
    }
    return *it;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json summary_json(const ApSummary& ap)
{
    return json{{"mAP", optional_number(ap.map)},
                {"mAP50", optional_number(ap.map50)},
                {"mAP75", optional_number(ap.map75)},
                {"mAP_s", optional_number(ap.map_s)},
                {"mAP_m", optional_number(ap.map_m)},
                {"mAP_L", optional_number(ap.map_l)}};
}

json counts_json(const StratumCounts& all, const StratumCounts& s, const StratumCounts& m, const StratumCounts& l)
{
    const auto one = [](const StratumCounts& c) { return json{{"gt", c.gt}, {"detections", c.det}}; };
    return json{{"all", one(all)}, {"small", one(s)}, {"medium", one(m)}, {"large", one(l)}};
}

std::string cell(const std::optional<double>& v)
{
    if (!v)
    {
        return "n/a";
    }
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << *v;
    return os.str();
}

} // namespace

AnnotationSet parse_annotations(const std::string& json_text)
{
    json doc;
    try
    {
        doc = json::parse(json_text);
    }
    catch (const json::parse_error& e)
    {
        throw AnnotationError("malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (!doc.is_object())
    {
        throw AnnotationError("annotations must be a JSON object");
    }
    AnnotationSet set;
    const json& images = require_array(doc, "images", "annotations");
    for (std::size_t i = 0; i < images.size(); ++i)
    {
        const json& img = images[i];
        const std::string where = "images[" + std::to_string(i) + "]";
        if (!img.is_object() || !img.contains("id") || !img["id"].is_string())
        {
            throw AnnotationError(where + ": \"id\" must be a string");
        }
        const std::string id = img["id"].get<std::string>();
        const json& dets = require_array(img, "detections", where);
        for (std::size_t k = 0; k < dets.size(); ++k)
        {
            const std::string at = where + ".detections[" + std::to_string(k) + "]";
            if (!dets[k].is_object() || !dets[k].contains("bbox"))
            {
                throw AnnotationError(at + ": expected an object with \"bbox\"");
            }
            const auto score = dets[k].find("score");
            if (score == dets[k].end() || !score->is_number())
            {
                throw AnnotationError(at + ": \"score\" must be a number");
            }
            const double s = score->get<double>();
            if (!std::isfinite(s) || s < 0.0 || s > 1.0)
            {
                throw AnnotationError(at + ": score must lie in [0, 1]");
            }
            set.detections.push_back(Detection{parse_box(dets[k]["bbox"], at), s, parse_category(dets[k], at), id});
        }
        const json& gts = require_array(img, "ground_truth", where);
        for (std::size_t k = 0; k < gts.size(); ++k)
        {
            const std::string at = where + ".ground_truth[" + std::to_string(k) + "]";
            if (!gts[k].is_object() || !gts[k].contains("bbox"))
            {
                throw AnnotationError(at + ": expected an object with \"bbox\"");
            }
            set.ground_truth.push_back(GroundTruth{parse_box(gts[k]["bbox"], at), parse_category(gts[k], at), id});
        }
    }
    return set;
}

std::string report_json(const MetricsReport& report)
{
    json cats = json::array();
    for (const auto& c : report.categories)
    {
        json entry = summary_json(c.ap);
        entry["category"] = c.category;
        entry["counts"] = counts_json(c.all, c.small, c.medium, c.large);
        cats.push_back(std::move(entry));
    }
    json doc{{"overall", summary_json(report.overall)},
             {"iou_thresholds", report.iou_thresholds},
             {"counts", counts_json(report.all, report.small, report.medium, report.large)},
             {"categories", std::move(cats)}};
    return doc.dump(2) + "\n";
}

std::string report_table(const MetricsReport& report)
{
    std::ostringstream os;
    const auto row = [&os](const std::string& label, const ApSummary& ap) {
        os << std::left << std::setw(10) << label << std::right;
        for (const auto& v : {ap.map, ap.map50, ap.map75, ap.map_s, ap.map_m, ap.map_l})
        {
            os << std::setw(9) << cell(v);
        }
        os << '\n';
    };
    os << std::left << std::setw(10) << "category" << std::right;
    for (const char* h : {"mAP", "mAP50", "mAP75", "mAP_s", "mAP_m", "mAP_L"})
    {
        os << std::setw(9) << h;
    }
    os << '\n';
    for (const auto& c : report.categories)
    {
        row(std::to_string(c.category), c.ap);
    }
    row("overall", report.overall);
    return os.str();
}

} // namespace nrenet
