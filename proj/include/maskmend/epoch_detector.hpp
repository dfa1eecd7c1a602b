#pragma once

// Relabel-epoch selection from the course of the mean cumulative
// uncertainty: the epoch at which its backward relative change is most
// negative.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "maskmend/error.hpp"

namespace maskmend {

struct TraceRecord {
    int epoch = 0;
    double sigma_u = 0.0;
    std::optional<double> delta_sigma_u; // undefined for the first record
    std::optional<double> d_clean;
    std::optional<double> d_noisy;

    friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

/// Backward relative change: out[t] = (s[t] - s[t-1]) / s[t-1] for t >= 1.
/// out[0] is undefined, as is any entry whose previous value is 0.
inline std::vector<std::optional<double>> relative_change(std::span<const double> sigma_u)
{
    std::vector<std::optional<double>> out(sigma_u.size());
    for (std::size_t t = 1; t < sigma_u.size(); ++t)
        if (sigma_u[t - 1] != 0.0)
            out[t] = (sigma_u[t] - sigma_u[t - 1]) / sigma_u[t - 1];
    return out;
}

class TrainingTrace {
public:
    TrainingTrace() = default;

    /// Appends an epoch and fills in its relative change.
    void append(int epoch, double sigma_u, std::optional<double> d_clean = std::nullopt,
                std::optional<double> d_noisy = std::nullopt)
    {
        if (!records_.empty() && epoch <= records_.back().epoch)
            throw InvariantError("trace epochs must be strictly increasing");
        if (!(sigma_u >= 0.0) || !std::isfinite(sigma_u))
            throw InvariantError("trace sigma_u must be finite and nonnegative");
        TraceRecord r{epoch, sigma_u, std::nullopt, d_clean, d_noisy};
        if (!records_.empty() && records_.back().sigma_u != 0.0)
            r.delta_sigma_u = (sigma_u - records_.back().sigma_u) / records_.back().sigma_u;
        records_.push_back(r);
    }

    /// Appends a stored record verbatim (used when loading a CSV).
    void append_record(const TraceRecord& r)
    {
        if (!records_.empty() && r.epoch <= records_.back().epoch)
            throw InvariantError("trace epochs must be strictly increasing");
        if (!(r.sigma_u >= 0.0) || !std::isfinite(r.sigma_u))
            throw InvariantError("trace sigma_u must be finite and nonnegative");
        records_.push_back(r);
    }

    std::span<const TraceRecord> records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    const TraceRecord& operator[](std::size_t i) const noexcept { return records_[i]; }

    std::vector<double> sigma_u() const
    {
        std::vector<double> s;
        for (const auto& r : records_)
            s.push_back(r.sigma_u);
        return s;
    }

    friend bool operator==(const TrainingTrace&, const TrainingTrace&) = default;

private:
    std::vector<TraceRecord> records_;
};

/// Offline rule: argmin of the relative change over epochs > warmup,
/// earliest epoch on ties. Entries with undefined change are skipped.
inline int detect_relabel_epoch(const TrainingTrace& trace, int warmup = 1)
{
    if (warmup < 0)
        throw ParameterError("warmup must be >= 0");
    std::optional<int> best_epoch;
    double best = 0.0;
    for (const auto& r : trace.records()) {
        if (r.epoch <= warmup || !r.delta_sigma_u)
            continue;
        if (!best_epoch || *r.delta_sigma_u < best) {
            best = *r.delta_sigma_u;
            best_epoch = r.epoch;
        }
    }
    if (!best_epoch)
        throw NotEnoughData("detect_relabel_epoch: no epoch after warmup " +
                            std::to_string(warmup) + " has a defined relative change");
    return *best_epoch;
}

/// Online rule for live training: the running minimum of the relative
/// change (epochs > warmup) is declared final once `patience` further
/// epochs have passed without a strictly lower value.
class OnlineEpochDetector {
public:
    explicit OnlineEpochDetector(int warmup = 1, int patience = 2)
        : warmup_(warmup), patience_(patience)
    {
        if (warmup < 0)
            throw ParameterError("warmup must be >= 0");
        if (patience < 1)
            throw ParameterError("patience must be >= 1");
    }

    /// Feeds one epoch; returns the detected epoch the first time the rule
    /// fires, nothing otherwise (and nothing after it has fired).
    std::optional<int> observe(int epoch, std::optional<double> delta_sigma_u)
    {
        if (fired_ || epoch <= warmup_)
            return std::nullopt;
        if (delta_sigma_u && (!best_epoch_ || *delta_sigma_u < best_)) {
            best_ = *delta_sigma_u;
            best_epoch_ = epoch;
            since_best_ = 0;
            return std::nullopt;
        }
        if (!best_epoch_)
            return std::nullopt;
        if (++since_best_ >= patience_) {
            fired_ = true;
            return best_epoch_;
        }
        return std::nullopt;
    }

    bool fired() const noexcept { return fired_; }
    std::optional<int> candidate() const noexcept { return best_epoch_; }

private:
    int warmup_;
    int patience_;
    std::optional<int> best_epoch_;
    double best_ = 0.0;
    int since_best_ = 0;
    bool fired_ = false;
};

// -------------------------------------------------------------------- CSV

namespace detail {

inline std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string format_optional(const std::optional<double>& v)
{
    return v ? format_double(*v) : std::string();
}

inline std::optional<double> parse_optional(const std::string& s, int lineno)
{
    if (s.empty())
        return std::nullopt;
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw FormatError("trace line " + std::to_string(lineno) + ": bad number `" + s + "`");
    return v;
}

} // namespace detail

inline constexpr const char* kTraceHeader = "epoch,sigma_u,delta_sigma_u,d_clean,d_noisy";

inline std::string trace_to_csv(const TrainingTrace& trace)
{
    std::ostringstream os;
    os << kTraceHeader << '\n';
    for (const auto& r : trace.records())
        os << r.epoch << ',' << detail::format_double(r.sigma_u) << ','
           << detail::format_optional(r.delta_sigma_u) << ',' << detail::format_optional(r.d_clean)
           << ',' << detail::format_optional(r.d_noisy) << '\n';
    return os.str();
}

inline void write_trace(const TrainingTrace& trace, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    out << trace_to_csv(trace);
    if (!out)
        throw IoError("write failure on " + path.string());
}

/// Reads a trace CSV. A missing delta_sigma_u column entry is recomputed
/// from sigma_u when the previous value is nonzero.
inline TrainingTrace read_trace(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open trace " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw FormatError("trace file is empty: " + path.string());
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != kTraceHeader)
        throw FormatError("trace header must be `" + std::string(kTraceHeader) + "`");
    TrainingTrace trace;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        std::vector<std::string> cols;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                cols.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        cols.push_back(cur);
        if (cols.size() != 5)
            throw FormatError("trace line " + std::to_string(lineno) + ": expected 5 columns");
        TraceRecord r;
        const auto epoch = detail::parse_optional(cols[0], lineno);
        const auto sigma = detail::parse_optional(cols[1], lineno);
        if (!epoch || !sigma || *epoch != std::floor(*epoch))
            throw FormatError("trace line " + std::to_string(lineno) +
                              ": epoch and sigma_u are required");
        r.epoch = static_cast<int>(*epoch);
        r.sigma_u = *sigma;
        r.delta_sigma_u = detail::parse_optional(cols[2], lineno);
        r.d_clean = detail::parse_optional(cols[3], lineno);
        r.d_noisy = detail::parse_optional(cols[4], lineno);
        if (!r.delta_sigma_u && !trace.empty() && trace.records().back().sigma_u != 0.0)
            r.delta_sigma_u =
                (r.sigma_u - trace.records().back().sigma_u) / trace.records().back().sigma_u;
        trace.append_record(r);
    }
    return trace;
}

} // namespace maskmend
