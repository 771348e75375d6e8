#pragma once

/// @file dataset.hpp
/// Seeded synthetic image-classification data and its raw binary file format.
///
/// File layout (all integers little-endian uint32):
///   "TEDS" magic, height, width, channels, count, classes,
///   count * height * width * channels float32 pixels in (N, H, W, C) order,
///   count uint8 labels.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "topoevo/errors.hpp"
#include "topoevo/topology.hpp"

namespace topoevo {

struct Dataset {
    int height = 0;
    int width = 0;
    int channels = 0;
    int classes = 0;
    std::vector<float> images;
    std::vector<std::uint8_t> labels;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
    [[nodiscard]] std::size_t image_size() const noexcept { return static_cast<std::size_t>(height) * width * channels; }
    [[nodiscard]] std::span<const float> image(std::size_t i) const {
        return std::span<const float>(images).subspan(i * image_size(), image_size());
    }
    [[nodiscard]] InputShape shape() const noexcept { return {height, width, channels}; }
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DataSplits {
    Dataset train;
    Dataset validation;
};

/// Pattern families cycled over class labels.
enum class Pattern { HorizontalStripes, VerticalStripes, Checker, Blob, Gradient, DiagonalStripes };
inline constexpr int kPatternFamilies = 6;

struct SyntheticOptions {
    int classes = 4;
    int size = 16;
    int count = 2000;
    int channels = 1;
    double noise = 0.15;
    std::uint64_t seed = 1;
};

/// Class k draws from family k % 6; every further cycle of six classes raises
/// the spatial frequency. Phase, frequency jitter, contrast and noise are random.
inline Dataset generate_synthetic(const SyntheticOptions& opt) {
    if (opt.classes < 2 || opt.size < 2 || opt.count < 1 || opt.channels < 1) throw Error("invalid synthetic dataset options");
    Dataset ds{opt.size, opt.size, opt.channels, opt.classes, {}, {}};
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, opt.noise);
    const double two_pi = 2.0 * std::numbers::pi;
    const int s = opt.size;

    std::vector<int> labels(static_cast<std::size_t>(opt.count));
    for (int i = 0; i < opt.count; ++i) labels[static_cast<std::size_t>(i)] = i % opt.classes;
    std::shuffle(labels.begin(), labels.end(), rng);

    ds.images.reserve(static_cast<std::size_t>(opt.count) * s * s * opt.channels);
    std::vector<double> plane(static_cast<std::size_t>(s) * s);
    for (int label : labels) {
        const auto family = static_cast<Pattern>(label % kPatternFamilies);
        const double freq = (1.5 + label / kPatternFamilies) + unit(rng) * 1.5;
        const double phase = unit(rng) * two_pi;
        const double phase2 = unit(rng) * two_pi;
        const double contrast = 0.5 + 0.5 * unit(rng);
        const double cx = (0.25 + 0.5 * unit(rng)) * s, cy = (0.25 + 0.5 * unit(rng)) * s;
        const double radius = (0.1 + 0.15 * unit(rng)) * s;
        const double angle = unit(rng) * two_pi;
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                const double u = static_cast<double>(x) / s, v = static_cast<double>(y) / s;
                double val = 0.0;
                switch (family) {
                case Pattern::HorizontalStripes: val = std::sin(two_pi * freq * v + phase); break;
                case Pattern::VerticalStripes: val = std::sin(two_pi * freq * u + phase); break;
                case Pattern::DiagonalStripes: val = std::sin(two_pi * freq * (u + v) / std::numbers::sqrt2 + phase); break;
                case Pattern::Checker:
                    val = std::sin(two_pi * freq * u + phase) * std::sin(two_pi * freq * v + phase2) > 0 ? 1.0 : -1.0;
                    break;
                case Pattern::Blob: {
                    const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    val = 2.0 * std::exp(-d2 / (2.0 * radius * radius)) - 1.0;
                    break;
                }
                case Pattern::Gradient: val = 2.0 * ((u - 0.5) * std::cos(angle) + (v - 0.5) * std::sin(angle)); break;
                }
                plane[static_cast<std::size_t>(y) * s + x] = 0.5 + 0.5 * contrast * val;
            }
        std::vector<double> tint(static_cast<std::size_t>(opt.channels), 1.0);
        if (opt.channels > 1)
            for (auto& t : tint) t = 0.5 + 0.5 * unit(rng);
        for (const double p : plane)
            for (int c = 0; c < opt.channels; ++c)
                ds.images.push_back(static_cast<float>(std::clamp(p * tint[static_cast<std::size_t>(c)] + noise(rng), 0.0, 1.0)));
        ds.labels.push_back(static_cast<std::uint8_t>(label));
    }
    return ds;
}

/// Tail split: the last `round(size * val_fraction)` samples form the validation set.
inline DataSplits split_dataset(const Dataset& ds, double val_fraction) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw Error("validation fraction must be in (0, 1)");
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(ds.size()) * val_fraction));
    if (n_val == 0 || n_val >= ds.size()) throw Error("split leaves an empty partition");
    const auto n_train = ds.size() - n_val;
    DataSplits out{ds, ds};
    const auto per = ds.image_size();
    out.train.images.assign(ds.images.begin(), ds.images.begin() + static_cast<std::ptrdiff_t>(n_train * per));
    out.train.labels.assign(ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.validation.images.assign(ds.images.begin() + static_cast<std::ptrdiff_t>(n_train * per), ds.images.end());
    out.validation.labels.assign(ds.labels.begin() + static_cast<std::ptrdiff_t>(n_train), ds.labels.end());
    return out;
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF), static_cast<char>((v >> 16) & 0xFF),
                                static_cast<char>((v >> 24) & 0xFF)};
    os.write(b.data(), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw ParseError("dataset: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) | (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace detail

inline constexpr std::array<char, 4> kDatasetMagic{'T', 'E', 'D', 'S'};

inline void write_dataset(const std::string& path, const Dataset& ds) {
    static_assert(std::endian::native == std::endian::little, "pixel payload is written in native float order");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open for writing: " + path);
    os.write(kDatasetMagic.data(), 4);
    for (int v : {ds.height, ds.width, ds.channels, static_cast<int>(ds.size()), ds.classes}) detail::put_u32(os, static_cast<std::uint32_t>(v));
    os.write(reinterpret_cast<const char*>(ds.images.data()), static_cast<std::streamsize>(ds.images.size() * sizeof(float)));
    os.write(reinterpret_cast<const char*>(ds.labels.data()), static_cast<std::streamsize>(ds.labels.size()));
    if (!os) throw Error("write failed: " + path);
}

inline Dataset read_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open dataset: " + path);
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), 4) || magic != kDatasetMagic) throw ParseError("dataset: bad magic in " + path);
    Dataset ds;
    ds.height = static_cast<int>(detail::get_u32(is));
    ds.width = static_cast<int>(detail::get_u32(is));
    ds.channels = static_cast<int>(detail::get_u32(is));
    const auto count = detail::get_u32(is);
    ds.classes = static_cast<int>(detail::get_u32(is));
    if (ds.height < 1 || ds.width < 1 || ds.channels < 1 || ds.classes < 2 || ds.height > 4096 || ds.width > 4096 || ds.channels > 64)
        throw ParseError("dataset: implausible header in " + path);
    ds.images.resize(static_cast<std::size_t>(count) * ds.image_size());
    ds.labels.resize(count);
    if (!is.read(reinterpret_cast<char*>(ds.images.data()), static_cast<std::streamsize>(ds.images.size() * sizeof(float))) ||
        !is.read(reinterpret_cast<char*>(ds.labels.data()), static_cast<std::streamsize>(ds.labels.size())))
        throw ParseError("dataset: truncated payload in " + path);
    for (auto y : ds.labels)
        if (y >= ds.classes) throw ParseError("dataset: label out of range in " + path);
    return ds;
}

} // namespace topoevo
