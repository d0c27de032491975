#include "faceaudit/maskmetrics.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

#include "faceaudit/parallel.hpp"

namespace faceaudit::maskmetrics {

std::size_t BinaryMask::popcount() const {
    std::size_t total = 0;
    for (std::uint64_t w : words_) total += std::popcount(w);
    return total;
}

BinaryMask BinaryMask::operator&(const BinaryMask& o) const {
    if (!same_shape(o)) throw Error(ErrorKind::invalid_input, "mask AND: dimension mismatch");
    BinaryMask out(h_, w_);
    for (std::size_t i = 0; i < words_.size(); ++i) out.words_[i] = words_[i] & o.words_[i];
    return out;
}

BinaryMask BinaryMask::operator|(const BinaryMask& o) const {
    if (!same_shape(o)) throw Error(ErrorKind::invalid_input, "mask OR: dimension mismatch");
    BinaryMask out(h_, w_);
    for (std::size_t i = 0; i < words_.size(); ++i) out.words_[i] = words_[i] | o.words_[i];
    return out;
}

void BinaryMask::save(const std::filesystem::path& path) const {
    corpus::write_u8_tensor(path, "MSK1", 1, static_cast<std::uint16_t>(h_),
                            static_cast<std::uint16_t>(w_), to_labels());
}

BinaryMask BinaryMask::load(const std::filesystem::path& path) {
    const corpus::U8Tensor t = corpus::read_u8_tensor(path, "MSK1");
    if (t.n != 1) {
        throw Error(ErrorKind::corrupt_file,
                    "stencil file must hold exactly 1 mask, has " + std::to_string(t.n));
    }
    BinaryMask m(t.h, t.w);
    for (std::size_t p = 0; p < t.data.size(); ++p) {
        if (t.data[p]) m.set(p, true);
    }
    return m;
}

std::vector<std::uint8_t> BinaryMask::to_labels() const {
    std::vector<std::uint8_t> out(pixel_count(), 0);
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = get(p) ? 1 : 0;
    return out;
}

std::size_t and_popcount(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw Error(ErrorKind::invalid_input, "and_popcount: dimension mismatch");
    std::size_t total = 0;
    const auto wa = a.words(), wb = b.words();
    for (std::size_t i = 0; i < wa.size(); ++i) total += std::popcount(wa[i] & wb[i]);
    return total;
}

std::size_t or_popcount(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw Error(ErrorKind::invalid_input, "or_popcount: dimension mismatch");
    std::size_t total = 0;
    const auto wa = a.words(), wb = b.words();
    for (std::size_t i = 0; i < wa.size(); ++i) total += std::popcount(wa[i] | wb[i]);
    return total;
}

BinaryMask face_mask(std::span<const std::uint8_t> labels, int h, int w, LabelSet face_labels) {
    BinaryMask m(h, w);
    for (std::size_t p = 0; p < labels.size(); ++p) {
        if (face_labels.contains(labels[p])) m.set(p, true);
    }
    return m;
}

BinaryMask face_mask(const corpus::DatasetView& view, std::size_t i, LabelSet face_labels) {
    return face_mask(view.label_grid(i), view.dataset().height, view.dataset().width,
                     face_labels);
}

double percent_face(const BinaryMask& m) {
    if (m.pixel_count() == 0) return 0.0;
    return static_cast<double>(m.popcount()) / static_cast<double>(m.pixel_count());
}

Heatmap heatmap(const corpus::DatasetView& view, LabelSet face_labels, int workers) {
    if (view.empty()) throw Error(ErrorKind::invalid_input, "heatmap: empty view");
    const int h = view.dataset().height;
    const int w = view.dataset().width;
    const std::size_t px = static_cast<std::size_t>(h) * w;

    constexpr std::size_t kChunk = 256;  // images per accumulation chunk
    const std::size_t chunks = (view.size() + kChunk - 1) / kChunk;
    std::vector<std::vector<std::uint32_t>> partial(chunks);
    parallel_blocks(chunks, workers, [&](std::size_t c) {
        auto& grid = partial[c];
        grid.assign(px, 0);
        const std::size_t begin = c * kChunk;
        const std::size_t end = std::min(begin + kChunk, view.size());
        for (std::size_t i = begin; i < end; ++i) {
            const auto labels = view.label_grid(i);
            for (std::size_t p = 0; p < px; ++p) {
                if (face_labels.contains(labels[p])) ++grid[p];
            }
        }
    });

    Heatmap out;
    out.height = h;
    out.width = w;
    out.n = view.size();
    out.counts.assign(px, 0);
    for (const auto& grid : partial) {
        for (std::size_t p = 0; p < px; ++p) out.counts[p] += grid[p];
    }
    return out;
}

DiffHeatmap diff_heatmap(const Heatmap& male, const Heatmap& female) {
    if (male.height != female.height || male.width != female.width) {
        throw Error(ErrorKind::invalid_input, "diff_heatmap: dimension mismatch");
    }
    DiffHeatmap out;
    out.height = male.height;
    out.width = male.width;
    out.values.resize(male.pixel_count());
    for (std::size_t p = 0; p < out.values.size(); ++p) {
        out.values[p] = male.value(p) - female.value(p);
    }
    return out;
}

BinaryMask level_mask(const Heatmap& h, double p) {
    BinaryMask m(h.height, h.width);
    for (std::size_t i = 0; i < h.pixel_count(); ++i) {
        if (h.value(i) >= p) m.set(i, true);
    }
    return m;
}

scorekit::Histogram percent_face_histogram(const corpus::DatasetView& view, std::size_t bins,
                                           LabelSet face_labels) {
    scorekit::Histogram hist(0.0, 1.0, bins);
    const int h = view.dataset().height;
    const int w = view.dataset().width;
    for (std::size_t i = 0; i < view.size(); ++i) {
        hist.add(percent_face(face_mask(view.label_grid(i), h, w, face_labels)));
    }
    return hist;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

void write_heatmap_csv(const std::filesystem::path& path, const Heatmap& h) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << "row,col,value,n\n";
    for (int r = 0; r < h.height; ++r) {
        for (int c = 0; c < h.width; ++c) {
            const std::size_t p = static_cast<std::size_t>(r) * h.width + c;
            out << r << ',' << c << ',' << fmt(h.value(p)) << ',' << h.n << '\n';
        }
    }
}

void write_diff_heatmap_csv(const std::filesystem::path& path, const DiffHeatmap& d) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << "row,col,value\n";
    for (int r = 0; r < d.height; ++r) {
        for (int c = 0; c < d.width; ++c) {
            out << r << ',' << c << ',' << fmt(d.values[static_cast<std::size_t>(r) * d.width + c])
                << '\n';
        }
    }
}

void write_pface_csv(const std::filesystem::path& path, const std::vector<PfaceSeries>& series) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << "group,bin_lo,bin_hi,count\n";
    for (const auto& s : series) {
        const auto& h = *s.hist;
        for (std::size_t b = 0; b < h.bin_count(); ++b) {
            if (h.counts()[b] == 0) continue;
            out << s.group << ',' << fmt(h.edge(b)) << ',' << fmt(h.edge(b + 1)) << ','
                << h.counts()[b] << '\n';
        }
    }
}

}  // namespace faceaudit::maskmetrics
