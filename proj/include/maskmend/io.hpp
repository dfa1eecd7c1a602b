#pragma once

// File formats:
//   masks / images  binary PGM (P5, maxval <= 255; P2 accepted on read)
//   tensors         "UENS" 0x01, u32le N, H, W, then N*H*W f32le,
//                   member-major then row-major
//   manifest        CSV `image,clean_mask,noisy_mask,split`, paths relative
//                   to the manifest's directory

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "maskmend/error.hpp"
#include "maskmend/grid.hpp"

namespace maskmend {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- graymaps

/// Raw 8-bit graymap as stored on disk.
struct Graymap {
    int height = 0;
    int width = 0;
    int maxval = 255;
    std::vector<std::uint8_t> pixels;
};

namespace detail {

inline std::vector<char> slurp(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string() + " for reading");
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad())
        throw IoError("read failure on " + path.string());
    return bytes;
}

inline void dump(const fs::path& path, const std::vector<char>& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out)
        throw IoError("write failure on " + path.string());
}

// Header tokenizer for the netpbm family: whitespace separated, '#' starts
// a comment running to end of line.
class PnmHeader {
public:
    explicit PnmHeader(const std::vector<char>& bytes) : bytes_(bytes) {}

    std::string token()
    {
        skip_space_and_comments();
        std::string t;
        while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_])) &&
               bytes_[pos_] != '#')
            t.push_back(bytes_[pos_++]);
        return t;
    }

    int number(const char* what)
    {
        auto t = token();
        if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) {
                return std::isdigit(static_cast<unsigned char>(c));
            }))
            throw FormatError(std::string("malformed graymap header: bad ") + what);
        if (t.size() > 9)
            throw FormatError(std::string("malformed graymap header: ") + what + " too large");
        return std::stoi(t);
    }

    // Exactly one whitespace byte separates the header from a binary payload.
    std::size_t payload_offset()
    {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
            throw FormatError("malformed graymap header: missing separator before payload");
        return pos_ + 1;
    }

    std::size_t position() const noexcept { return pos_; }

private:
    void skip_space_and_comments()
    {
        while (pos_ < bytes_.size()) {
            char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n')
                    ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    const std::vector<char>& bytes_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline Graymap read_graymap(const fs::path& path)
{
    const auto bytes = detail::slurp(path);
    detail::PnmHeader header(bytes);
    const auto magic = header.token();
    if (magic != "P5" && magic != "P2")
        throw FormatError("malformed graymap header: expected P5 or P2 in " + path.string());
    Graymap g;
    g.width = header.number("width");
    g.height = header.number("height");
    g.maxval = header.number("maxval");
    if (g.width < 1 || g.height < 1)
        throw FormatError("malformed graymap header: non-positive dimensions in " +
                          path.string());
    if (g.maxval < 1 || g.maxval > 255)
        throw FormatError("malformed graymap header: maxval must be in [1, 255]");
    const auto count = static_cast<std::size_t>(g.width) * static_cast<std::size_t>(g.height);
    g.pixels.reserve(count);
    if (magic == "P5") {
        const auto offset = header.payload_offset();
        if (bytes.size() < offset || bytes.size() - offset < count)
            throw FormatError("payload shorter than header dims in " + path.string());
        for (std::size_t i = 0; i < count; ++i)
            g.pixels.push_back(static_cast<std::uint8_t>(bytes[offset + i]));
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            auto t = header.token();
            if (t.empty())
                throw FormatError("payload shorter than header dims in " + path.string());
            if (!std::all_of(t.begin(), t.end(),
                             [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
                throw FormatError("malformed graymap payload in " + path.string());
            const int v = std::stoi(t);
            if (v > g.maxval)
                throw FormatError("graymap sample exceeds maxval in " + path.string());
            g.pixels.push_back(static_cast<std::uint8_t>(v));
        }
    }
    for (auto p : g.pixels)
        if (p > g.maxval)
            throw FormatError("graymap sample exceeds maxval in " + path.string());
    return g;
}

inline void write_graymap(const Graymap& g, const fs::path& path)
{
    std::string header = "P5\n" + std::to_string(g.width) + " " + std::to_string(g.height) +
                         "\n" + std::to_string(g.maxval) + "\n";
    std::vector<char> bytes(header.begin(), header.end());
    for (auto p : g.pixels)
        bytes.push_back(static_cast<char>(p));
    detail::dump(path, bytes);
}

/// Any stored value above 0 becomes label 1.
inline BinaryMask read_mask(const fs::path& path)
{
    auto g = read_graymap(path);
    std::vector<std::uint8_t> labels(g.pixels.size());
    std::transform(g.pixels.begin(), g.pixels.end(), labels.begin(),
                   [](std::uint8_t v) { return static_cast<std::uint8_t>(v > 0 ? 1 : 0); });
    return {g.height, g.width, std::move(labels)};
}

inline void write_mask(const BinaryMask& mask, const fs::path& path)
{
    Graymap g{mask.height(), mask.width(), 255, {}};
    g.pixels.reserve(mask.size());
    for (auto v : mask.values())
        g.pixels.push_back(v ? 255 : 0);
    write_graymap(g, path);
}

inline GrayImage read_image(const fs::path& path)
{
    auto g = read_graymap(path);
    std::vector<double> data(g.pixels.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = static_cast<double>(g.pixels[i]) / g.maxval;
    return {g.height, g.width, std::move(data)};
}

/// Quantizes to 8 bits.
inline void write_image(const GrayImage& image, const fs::path& path)
{
    Graymap g{image.height(), image.width(), 255, {}};
    g.pixels.reserve(image.size());
    for (double v : image.values())
        g.pixels.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    write_graymap(g, path);
}

// ----------------------------------------------------------------- tensors

inline constexpr std::array<char, 4> kTensorMagic{'U', 'E', 'N', 'S'};
inline constexpr std::uint8_t kTensorVersion = 0x01;

/// N x H x W stack of 32-bit floats, the in-memory form of the container.
struct Tensor {
    std::uint32_t n = 0;
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::vector<float> values;
};

namespace detail {

inline void put_u32(std::vector<char>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const std::vector<char>& in, std::size_t at)
{
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

} // namespace detail

inline void write_tensor(const Tensor& t, const fs::path& path)
{
    if (t.values.size() != static_cast<std::size_t>(t.n) * t.height * t.width)
        throw ParameterError("tensor value count does not match N*H*W");
    std::vector<char> bytes(kTensorMagic.begin(), kTensorMagic.end());
    bytes.push_back(static_cast<char>(kTensorVersion));
    detail::put_u32(bytes, t.n);
    detail::put_u32(bytes, t.height);
    detail::put_u32(bytes, t.width);
    bytes.reserve(bytes.size() + 4 * t.values.size());
    for (float f : t.values)
        detail::put_u32(bytes, std::bit_cast<std::uint32_t>(f));
    detail::dump(path, bytes);
}

inline Tensor read_tensor(const fs::path& path)
{
    const auto bytes = detail::slurp(path);
    constexpr std::size_t header_size = 4 + 1 + 12;
    if (bytes.size() < header_size)
        throw FormatError("tensor file too short for header: " + path.string());
    if (!std::equal(kTensorMagic.begin(), kTensorMagic.end(), bytes.begin()))
        throw FormatError("tensor magic mismatch in " + path.string());
    if (static_cast<std::uint8_t>(bytes[4]) != kTensorVersion)
        throw FormatError("unsupported tensor version in " + path.string());
    Tensor t;
    t.n = detail::get_u32(bytes, 5);
    t.height = detail::get_u32(bytes, 9);
    t.width = detail::get_u32(bytes, 13);
    if (t.n == 0)
        throw FormatError("ensemble must have n >= 1");
    if (t.height == 0 || t.width == 0)
        throw FormatError("tensor dimensions must be positive");
    const auto count = static_cast<std::uint64_t>(t.n) * t.height * t.width;
    if (bytes.size() - header_size != 4 * count)
        throw FormatError("tensor payload size does not match dims N=" + std::to_string(t.n) +
                          " H=" + std::to_string(t.height) + " W=" + std::to_string(t.width));
    t.values.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        t.values[i] = std::bit_cast<float>(detail::get_u32(bytes, header_size + 4 * i));
    return t;
}

namespace detail {

inline std::vector<double> slice(const Tensor& t, std::uint32_t member)
{
    const std::size_t plane = static_cast<std::size_t>(t.height) * t.width;
    const auto first = t.values.begin() + static_cast<std::ptrdiff_t>(member * plane);
    return {first, first + static_cast<std::ptrdiff_t>(plane)};
}

} // namespace detail

inline void write_ensemble(const PredictionEnsemble& ens, const fs::path& path)
{
    Tensor t{static_cast<std::uint32_t>(ens.n()), static_cast<std::uint32_t>(ens.height()),
             static_cast<std::uint32_t>(ens.width()), {}};
    t.values.reserve(ens.n() * ens[0].size());
    for (const auto& m : ens.members())
        for (double v : m.values())
            t.values.push_back(static_cast<float>(v));
    write_tensor(t, path);
}

inline PredictionEnsemble read_ensemble(const fs::path& path)
{
    const auto t = read_tensor(path);
    std::vector<ProbMap> members;
    for (std::uint32_t i = 0; i < t.n; ++i)
        members.emplace_back(static_cast<int>(t.height), static_cast<int>(t.width),
                             detail::slice(t, i));
    return PredictionEnsemble(std::move(members));
}

/// Uncertainty maps use the tensor container with N = 1.
inline void write_uncertainty(const UncertaintyMap& map, const fs::path& path)
{
    Tensor t{1, static_cast<std::uint32_t>(map.height()), static_cast<std::uint32_t>(map.width()),
             {}};
    t.values.reserve(map.size());
    for (double v : map.values())
        t.values.push_back(static_cast<float>(v));
    write_tensor(t, path);
}

inline UncertaintyMap read_uncertainty(const fs::path& path)
{
    const auto t = read_tensor(path);
    if (t.n != 1)
        throw FormatError("uncertainty map file must hold exactly one plane, found " +
                          std::to_string(t.n));
    return {static_cast<int>(t.height), static_cast<int>(t.width), detail::slice(t, 0)};
}

// ---------------------------------------------------------------- manifest

enum class Split { train, test };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

struct ManifestEntry {
    fs::path image;
    fs::path clean_mask;
    std::optional<fs::path> noisy_mask;
    Split split = Split::train;
};

/// Entries hold paths exactly as written; resolve() joins them with the
/// manifest directory.
struct Manifest {
    fs::path base_dir;
    std::vector<ManifestEntry> entries;

    fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }
};

inline constexpr const char* kManifestHeader = "image,clean_mask,noisy_mask,split";

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace detail

inline Manifest read_manifest(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open manifest " + path.string());
    Manifest m;
    m.base_dir = path.parent_path();
    std::string line;
    if (!std::getline(in, line))
        throw ManifestError("manifest is empty: " + path.string());
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != kManifestHeader)
        throw ManifestError("manifest header must be `" + std::string(kManifestHeader) +
                            "`, got `" + line + "`");
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r")
            continue;
        auto cols = detail::split_csv_line(line);
        if (cols.size() != 4)
            throw ManifestError("manifest line " + std::to_string(lineno) + ": expected 4 columns");
        if (cols[0].empty() || cols[1].empty())
            throw ManifestError("manifest line " + std::to_string(lineno) +
                                ": image and clean_mask are required");
        ManifestEntry e;
        e.image = cols[0];
        e.clean_mask = cols[1];
        if (!cols[2].empty())
            e.noisy_mask = fs::path(cols[2]);
        if (cols[3] == "train")
            e.split = Split::train;
        else if (cols[3] == "test")
            e.split = Split::test;
        else
            throw ManifestError("manifest line " + std::to_string(lineno) +
                                ": split must be train or test, got `" + cols[3] + "`");
        m.entries.push_back(std::move(e));
    }
    return m;
}

inline void write_manifest(const Manifest& m, const fs::path& path)
{
    std::ostringstream os;
    os << kManifestHeader << '\n';
    for (const auto& e : m.entries) {
        os << e.image.generic_string() << ',' << e.clean_mask.generic_string() << ','
           << (e.noisy_mask ? e.noisy_mask->generic_string() : std::string()) << ','
           << to_string(e.split) << '\n';
    }
    const auto s = os.str();
    detail::dump(path, std::vector<char>(s.begin(), s.end()));
}

} // namespace maskmend
