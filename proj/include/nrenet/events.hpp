#pragma once

#include "nrenet/tensor.hpp"

#include <cstdint>
#include <istream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nrenet
{

enum class Polarity : std::uint8_t
{
    off = 0,
    on = 1
};

struct Event
{
    std::uint64_t t = 0; ///< microseconds
    std::uint32_t x = 0;
    std::uint32_t y = 0;
    Polarity polarity = Polarity::off;

    friend bool operator==(const Event&, const Event&) = default;
};

/// Time-ordered events inside a width x height sensor.
struct EventStream
{
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<Event> events;
};

/// Half-open interval [start, end) of a stream plus the events inside it.
struct EventWindow
{
    std::uint64_t start = 0;
    std::uint64_t end = 0;
    EventStream stream;
};

/// Dense deposit of one window: (2 * bins) x H x W, bin-major with the
/// polarity channel (OFF, ON) inside each bin.
struct EventFrame
{
    Tensor tensor;
    std::size_t bins = 0;
    std::uint64_t start = 0;
    std::uint64_t end = 0;
};

enum class EventKernel
{
    delta,      ///< unit mass into one temporal bin
    bilinear_t, ///< unit mass split linearly between neighbouring bins
};

EventKernel parse_kernel(std::string_view name);
std::string_view kernel_name(EventKernel kernel);

inline constexpr std::uint64_t kDefaultWindowUs = 50'000;
inline constexpr std::string_view kEventCsvHeader = "t_us,x,y,polarity";

/// Problem in an event CSV; line() is 1-based and counts the header.
class EventCsvError : public std::runtime_error
{
public:
    enum class Kind
    {
        parse,
        ordering,
        bounds
    };

    EventCsvError(Kind kind, std::size_t line, const std::string& what);

    Kind kind() const noexcept { return kind_; }
    std::size_t line() const noexcept { return line_; }

private:
    Kind kind_;
    std::size_t line_;
};

/// Reads the "t_us,x,y,polarity" CSV. Sensor geometry comes from the caller.
EventStream parse_events(std::istream& in, std::size_t width, std::size_t height);
EventStream parse_events(std::string_view text, std::size_t width, std::size_t height);

/// Splits into windows [t0 + k dt, t0 + (k+1) dt) anchored at the first
/// event. Windows between the first and last event are emitted even when
/// empty so the window index maps to time; nothing is emitted past the last
/// event. Throws std::invalid_argument for dt == 0.
std::vector<EventWindow> split_windows(const EventStream& stream, std::uint64_t delta_t);

/// Window spanning [first event, last event] of the stream.
EventWindow whole_stream_window(const EventStream& stream);

/// Deposits every event of the window with the chosen temporal kernel.
/// Throws std::invalid_argument for bins == 0.
EventFrame rasterize(const EventWindow& window, std::size_t bins, EventKernel kernel);

} // namespace nrenet
