#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "faceaudit/error.hpp"

// On-disk dataset formats, loading/validation, and filtered views.
//
// A dataset directory holds:
//   manifest.jsonl   one JSON object per line: image_id, subject_id,
//                    gender ("F"/"M"), cohort, age (int or null), row
//   embeddings.bin   "EMB1", u32 N, u32 d, N*d float32 LE, row-major
//   masks.bin        "MSK1", u32 N, u16 H, u16 W, N*H*W u8 labels (0..18)
//   images.bin       "IMG1", u32 N, u16 H, u16 W, N*H*W u8 gray (optional)

namespace faceaudit::corpus {

enum class Gender : std::uint8_t { F, M };

const char* to_string(Gender g);
Gender gender_from_string(const std::string& s);

constexpr std::uint8_t kMaxLabel = 18;

struct ImageRecord {
    std::string image_id;
    std::string subject_id;
    Gender gender = Gender::F;
    std::string cohort;
    std::optional<int> age;
    std::size_t row = 0;  // index into the packed tensors
};

struct Dataset {
    std::vector<ImageRecord> records;  // manifest order
    std::size_t dim = 0;
    std::vector<float> embeddings;  // records.size() * dim, row-major
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> labels;                // N*H*W segmentation labels
    std::optional<std::vector<std::uint8_t>> images;  // N*H*W grayscale

    std::size_t size() const { return records.size(); }
    std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }

    std::span<const float> embedding_row(std::size_t row) const {
        return {embeddings.data() + row * dim, dim};
    }
    std::span<const std::uint8_t> label_grid(std::size_t row) const {
        return {labels.data() + row * pixels(), pixels()};
    }
    std::span<const std::uint8_t> image_grid(std::size_t row) const {
        return {images->data() + row * pixels(), pixels()};
    }
};

// Ordered, immutable handle onto a subset of a dataset's records.
class DatasetView {
public:
    DatasetView() = default;
    DatasetView(const Dataset& ds, std::vector<std::uint32_t> indices)
        : ds_(&ds), indices_(std::move(indices)) {}

    const Dataset& dataset() const { return *ds_; }
    std::size_t size() const { return indices_.size(); }
    bool empty() const { return indices_.empty(); }
    const std::vector<std::uint32_t>& indices() const { return indices_; }

    const ImageRecord& record(std::size_t i) const { return ds_->records[indices_[i]]; }
    std::span<const float> embedding(std::size_t i) const {
        return ds_->embedding_row(record(i).row);
    }
    std::span<const std::uint8_t> label_grid(std::size_t i) const {
        return ds_->label_grid(record(i).row);
    }
    std::span<const std::uint8_t> image_grid(std::size_t i) const {
        return ds_->image_grid(record(i).row);
    }

private:
    const Dataset* ds_ = nullptr;
    std::vector<std::uint32_t> indices_;
};

struct Filter {
    std::optional<Gender> gender;
    std::optional<std::string> cohort;
    std::optional<std::pair<int, int>> age_range;  // inclusive
    std::optional<std::vector<std::string>> image_ids;
};

struct LoadReport {
    std::size_t normalized_rows = 0;  // rows whose norm deviated by > 1e-4
    bool had_images = false;
};

struct LoadResult {
    Dataset dataset;
    LoadReport report;
};

LoadResult load_dataset(const std::filesystem::path& root);
void save_dataset(const Dataset& ds, const std::filesystem::path& root);

struct ValidationCheck {
    std::string name;
    bool passed = true;
    bool fatal = true;  // cross-gender subjects are a warning, not an error
    std::vector<std::string> offending_image_ids;
    std::string detail;
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;
    bool all_passed() const;     // ignores non-fatal warnings
    bool has_warnings() const;
};

ValidationReport validate(const Dataset& ds);

DatasetView select(const Dataset& ds, const Filter& filter);
DatasetView select(const DatasetView& view, const Filter& filter);
DatasetView all_rows(const Dataset& ds);

// Low-level tensor file helpers, shared with the stencil format (N=1 masks).
void write_u8_tensor(const std::filesystem::path& path, const char magic[4],
                     std::uint32_t n, std::uint16_t h, std::uint16_t w,
                     std::span<const std::uint8_t> data);
struct U8Tensor {
    std::uint32_t n;
    std::uint16_t h;
    std::uint16_t w;
    std::vector<std::uint8_t> data;
};
U8Tensor read_u8_tensor(const std::filesystem::path& path, const char magic[4]);

}  // namespace faceaudit::corpus
