#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "faceaudit/corpus.hpp"

namespace testsupport {

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("faceaudit_" + tag + "_" + std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::filesystem::path path;

private:
    static int& counter() {
        static int c = 0;
        return c;
    }
};

// Builder for small in-memory datasets.
class DatasetBuilder {
public:
    DatasetBuilder(std::size_t dim, int h, int w) : dim_(dim), h_(h), w_(w) {}

    DatasetBuilder& add(const std::string& image_id, const std::string& subject_id,
                        faceaudit::corpus::Gender gender, std::vector<float> embedding,
                        std::uint8_t label_fill = 1, std::optional<int> age = std::nullopt,
                        const std::string& cohort = "toy") {
        faceaudit::corpus::ImageRecord rec;
        rec.image_id = image_id;
        rec.subject_id = subject_id;
        rec.gender = gender;
        rec.cohort = cohort;
        rec.age = age;
        rec.row = records_.size();
        records_.push_back(rec);
        double ss = 0.0;
        for (float v : embedding) ss += static_cast<double>(v) * v;
        const double inv = ss > 0 ? 1.0 / std::sqrt(ss) : 0.0;
        for (float v : embedding) embeddings_.push_back(static_cast<float>(v * inv));
        labels_.insert(labels_.end(), static_cast<std::size_t>(h_) * w_, label_fill);
        return *this;
    }

    DatasetBuilder& with_images() {
        images_ = true;
        return *this;
    }

    DatasetBuilder& set_labels(std::size_t row, std::vector<std::uint8_t> grid) {
        std::copy(grid.begin(), grid.end(),
                  labels_.begin() + static_cast<std::ptrdiff_t>(row * grid.size()));
        return *this;
    }

    DatasetBuilder& set_image(std::size_t row, std::vector<std::uint8_t> grid) {
        images_ = true;
        const std::size_t px = static_cast<std::size_t>(h_) * w_;
        if (pixels_.size() < labels_.size()) pixels_.resize(labels_.size(), 128);
        std::copy(grid.begin(), grid.end(),
                  pixels_.begin() + static_cast<std::ptrdiff_t>(row * px));
        return *this;
    }

    faceaudit::corpus::Dataset build() const {
        faceaudit::corpus::Dataset ds;
        ds.records = records_;
        ds.dim = dim_;
        ds.embeddings = embeddings_;
        ds.height = h_;
        ds.width = w_;
        ds.labels = labels_;
        if (images_) {
            auto px = pixels_;
            px.resize(labels_.size(), 128);
            ds.images = std::move(px);
        }
        return ds;
    }

private:
    std::size_t dim_;
    int h_, w_;
    bool images_ = false;
    std::vector<faceaudit::corpus::ImageRecord> records_;
    std::vector<float> embeddings_;
    std::vector<std::uint8_t> labels_;
    std::vector<std::uint8_t> pixels_;
};

}  // namespace testsupport
