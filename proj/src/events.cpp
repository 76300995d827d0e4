#include "nrenet/events.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace nrenet
{

EventCsvError::EventCsvError(Kind kind, std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), kind_(kind), line_(line)
{
}

EventKernel parse_kernel(std::string_view name)
{
    if (name == "delta")
    {
        return EventKernel::delta;
    }
    if (name == "bilinear-t" || name == "bilinear_t")
    {
        return EventKernel::bilinear_t;
    }
    throw std::invalid_argument("unknown event kernel '" + std::string(name) + "' (expected delta or bilinear-t)");
}

std::string_view kernel_name(EventKernel kernel)
{
    return kernel == EventKernel::delta ? "delta" : "bilinear-t";
}

namespace
{

template <typename T>
bool parse_field(std::string_view text, T& out)
{
    if (text.empty())
    {
        return false;
    }
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

std::string_view trim_cr(std::string_view line)
{
    if (!line.empty() && line.back() == '\r')
    {
        line.remove_suffix(1);
    }
    return line;
}

} // namespace

EventStream parse_events(std::istream& in, std::size_t width, std::size_t height)
{
    using Kind = EventCsvError::Kind;
    EventStream stream{width, height, {}};
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line))
    {
        throw EventCsvError(Kind::parse, 1, "missing header \"" + std::string(kEventCsvHeader) + "\"");
    }
    ++line_no;
    if (trim_cr(line) != kEventCsvHeader)
    {
        throw EventCsvError(Kind::parse, 1, "header must be exactly \"" + std::string(kEventCsvHeader) + "\"");
    }
    while (std::getline(in, line))
    {
        ++line_no;
        const std::string_view row = trim_cr(line);
        if (row.empty())
        {
            continue;
        }
        std::string_view fields[4];
        std::size_t count = 0, begin = 0;
        for (std::size_t i = 0; i <= row.size(); ++i)
        {
            if (i == row.size() || row[i] == ',')
            {
                if (count == 4)
                {
                    count = 5;
                    break;
                }
                fields[count++] = row.substr(begin, i - begin);
                begin = i + 1;
            }
        }
        if (count != 4)
        {
            throw EventCsvError(Kind::parse, line_no, "expected 4 comma-separated fields");
        }
        Event e;
        unsigned polarity = 0;
        if (!parse_field(fields[0], e.t) || !parse_field(fields[1], e.x) || !parse_field(fields[2], e.y) ||
            !parse_field(fields[3], polarity))
        {
            throw EventCsvError(Kind::parse, line_no, "fields must be non-negative decimal integers");
        }
        if (polarity > 1)
        {
            throw EventCsvError(Kind::parse, line_no, "polarity must be 0 or 1");
        }
        e.polarity = static_cast<Polarity>(polarity);
        if (e.x >= width || e.y >= height)
        {
            std::ostringstream os;
            os << "event (" << e.x << ", " << e.y << ") outside " << width << " x " << height << " sensor";
            throw EventCsvError(Kind::bounds, line_no, os.str());
        }
        if (!stream.events.empty() && e.t < stream.events.back().t)
        {
            std::ostringstream os;
            os << "timestamp " << e.t << " precedes " << stream.events.back().t;
            throw EventCsvError(Kind::ordering, line_no, os.str());
        }
        stream.events.push_back(e);
    }
    return stream;
}

EventStream parse_events(std::string_view text, std::size_t width, std::size_t height)
{
    std::istringstream in{std::string(text)};
    return parse_events(in, width, height);
}

std::vector<EventWindow> split_windows(const EventStream& stream, std::uint64_t delta_t)
{
    if (delta_t == 0)
    {
        throw std::invalid_argument("split_windows: window length must be positive");
    }
    std::vector<EventWindow> windows;
    if (stream.events.empty())
    {
        return windows;
    }
    const std::uint64_t t0 = stream.events.front().t;
    for (const Event& e : stream.events)
    {
        const std::uint64_t k = (e.t - t0) / delta_t;
        while (windows.size() <= k)
        {
            const std::uint64_t start = t0 + windows.size() * delta_t;
            windows.push_back(EventWindow{start, start + delta_t, EventStream{stream.width, stream.height, {}}});
        }
        windows[k].stream.events.push_back(e);
    }
    return windows;
}

EventWindow whole_stream_window(const EventStream& stream)
{
    if (stream.events.empty())
    {
        return EventWindow{0, 0, stream};
    }
    return EventWindow{stream.events.front().t, stream.events.back().t, stream};
}

EventFrame rasterize(const EventWindow& window, std::size_t bins, EventKernel kernel)
{
    if (bins == 0)
    {
        throw std::invalid_argument("rasterize: bin count must be positive");
    }
    const EventStream& s = window.stream;
    const std::size_t plane = s.width * s.height;
    std::vector<double> mass(2 * bins * plane, 0.0);
    const double span = window.end > window.start ? static_cast<double>(window.end - window.start) : 0.0;
    const auto deposit = [&](std::size_t bin, const Event& e, double weight) {
        const std::size_t channel = 2 * bin + static_cast<std::size_t>(e.polarity);
        mass[channel * plane + e.y * s.width + e.x] += weight;
    };
    const auto last_bin = static_cast<double>(bins - 1);

    for (const Event& e : s.events)
    {
        // Fraction of the window elapsed; a single-timestamp window puts everything at 0.
        const double fraction = span > 0.0 ? static_cast<double>(e.t - window.start) / span : 0.0;
        if (kernel == EventKernel::delta)
        {
            const double bin = std::min(std::floor(static_cast<double>(bins) * fraction), last_bin);
            deposit(static_cast<std::size_t>(std::max(bin, 0.0)), e, 1.0);
            continue;
        }
        const double coord = static_cast<double>(bins) * fraction - 0.5;
        if (coord <= 0.0)
        {
            deposit(0, e, 1.0);
        }
        else if (coord >= last_bin)
        {
            deposit(bins - 1, e, 1.0);
        }
        else
        {
            const double lower = std::floor(coord);
            const double upper_weight = coord - lower;
            const auto lo = static_cast<std::size_t>(lower);
            deposit(lo, e, 1.0 - upper_weight);
            deposit(lo + 1, e, upper_weight);
        }
    }

    std::vector<float> data(mass.begin(), mass.end());
    return EventFrame{Tensor({2 * bins, s.height, s.width}, std::move(data)), bins, window.start, window.end};
}

} // namespace nrenet
