#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "faceaudit/corpus.hpp"
#include "faceaudit/scorekit.hpp"

// Binary face masks derived from segmentation labels and the statistics on
// them: per-group visibility heatmaps, difference maps, level masks, and
// percent-face distributions.

namespace faceaudit::maskmetrics {

// Set of segmentation labels treated as "face"; labels fit in 0..18 so a
// 32-bit field covers the whole alphabet.
class LabelSet {
public:
    LabelSet() = default;
    LabelSet(std::initializer_list<int> labels) {
        for (int l : labels) bits_ |= 1u << l;
    }
    static LabelSet range(int lo, int hi) {
        LabelSet s;
        for (int l = lo; l <= hi; ++l) s.bits_ |= 1u << l;
        return s;
    }
    // Union of face regions: skin, brows, eyes, ears, nose, mouth.
    static LabelSet default_face() { return range(1, 13); }

    bool contains(std::uint8_t label) const { return (bits_ >> label) & 1u; }
    std::uint32_t bits() const { return bits_; }

private:
    std::uint32_t bits_ = 0;
};

// Fixed-size bitmap backed by 64-bit words; popcount-heavy operations (IoU
// search) run on the words directly.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int h, int w) : h_(h), w_(w), words_((static_cast<std::size_t>(h) * w + 63) / 64, 0) {}

    int height() const { return h_; }
    int width() const { return w_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(h_) * w_; }

    bool get(std::size_t p) const { return (words_[p >> 6] >> (p & 63)) & 1u; }
    void set(std::size_t p, bool v) {
        const std::uint64_t bit = 1ull << (p & 63);
        if (v) words_[p >> 6] |= bit; else words_[p >> 6] &= ~bit;
    }
    bool at(int r, int c) const { return get(static_cast<std::size_t>(r) * w_ + c); }

    std::size_t popcount() const;
    std::span<const std::uint64_t> words() const { return words_; }

    BinaryMask operator&(const BinaryMask& o) const;
    BinaryMask operator|(const BinaryMask& o) const;
    bool operator==(const BinaryMask& o) const = default;

    bool same_shape(const BinaryMask& o) const { return h_ == o.h_ && w_ == o.w_; }

    // Serialized as a 1-record masks.bin (labels: 1 inside, 0 outside).
    void save(const std::filesystem::path& path) const;
    static BinaryMask load(const std::filesystem::path& path);
    std::vector<std::uint8_t> to_labels() const;

private:
    int h_ = 0, w_ = 0;
    std::vector<std::uint64_t> words_;
};

std::size_t and_popcount(const BinaryMask& a, const BinaryMask& b);
std::size_t or_popcount(const BinaryMask& a, const BinaryMask& b);

BinaryMask face_mask(std::span<const std::uint8_t> labels, int h, int w,
                     LabelSet face_labels = LabelSet::default_face());
BinaryMask face_mask(const corpus::DatasetView& view, std::size_t i,
                     LabelSet face_labels = LabelSet::default_face());

double percent_face(const BinaryMask& m);

// Per-pixel face-visibility frequency for a group of images. Counts are
// stored exactly; division by n happens at read time.
struct Heatmap {
    int height = 0;
    int width = 0;
    std::uint64_t n = 0;
    std::vector<std::uint32_t> counts;

    double value(std::size_t p) const {
        return static_cast<double>(counts[p]) / static_cast<double>(n);
    }
    std::size_t pixel_count() const { return counts.size(); }
};

Heatmap heatmap(const corpus::DatasetView& view,
                LabelSet face_labels = LabelSet::default_face(), int workers = 0);

struct DiffHeatmap {
    int height = 0;
    int width = 0;
    std::vector<double> values;  // male frequency minus female frequency
};

DiffHeatmap diff_heatmap(const Heatmap& male, const Heatmap& female);

// Pixels whose frequency is >= p (inclusive, so p = 0 keeps the full grid).
BinaryMask level_mask(const Heatmap& h, double p = 0.10);

scorekit::Histogram percent_face_histogram(const corpus::DatasetView& view, std::size_t bins,
                                           LabelSet face_labels = LabelSet::default_face());

void write_heatmap_csv(const std::filesystem::path& path, const Heatmap& h);
void write_diff_heatmap_csv(const std::filesystem::path& path, const DiffHeatmap& d);

struct PfaceSeries {
    std::string group;
    const scorekit::Histogram* hist;
};
void write_pface_csv(const std::filesystem::path& path, const std::vector<PfaceSeries>& series);

}  // namespace faceaudit::maskmetrics
