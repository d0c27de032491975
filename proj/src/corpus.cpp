#include "faceaudit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace faceaudit::corpus {

namespace {

using nlohmann::json;

void write_exact(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_exact(std::ifstream& in, void* p, std::size_t n, const std::filesystem::path& path) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw Error(ErrorKind::corrupt_file, "truncated file: " + path.string());
    }
}

// All multi-byte fields are little-endian on disk; this codebase targets
// little-endian hosts and asserts so at load time.
void check_endianness() {
    const std::uint32_t probe = 1;
    char b;
    std::memcpy(&b, &probe, 1);
    if (b != 1) {
        throw Error(ErrorKind::io, "big-endian hosts are not supported");
    }
}

std::vector<ImageRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    std::vector<ImageRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::corrupt_file,
                        path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        ImageRecord rec;
        try {
            rec.image_id = j.at("image_id").get<std::string>();
            rec.subject_id = j.at("subject_id").get<std::string>();
            rec.gender = gender_from_string(j.at("gender").get<std::string>());
            rec.cohort = j.at("cohort").get<std::string>();
            if (j.contains("age") && !j.at("age").is_null()) {
                rec.age = j.at("age").get<int>();
            }
            rec.row = j.at("row").get<std::size_t>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::invalid_record,
                        path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (rec.cohort.empty()) {
            throw Error(ErrorKind::invalid_record,
                        "empty cohort for image " + rec.image_id);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace

const char* to_string(Gender g) { return g == Gender::F ? "F" : "M"; }

Gender gender_from_string(const std::string& s) {
    if (s == "F") return Gender::F;
    if (s == "M") return Gender::M;
    throw Error(ErrorKind::invalid_record, "gender must be \"F\" or \"M\", got \"" + s + "\"");
}

void write_u8_tensor(const std::filesystem::path& path, const char magic[4],
                     std::uint32_t n, std::uint16_t h, std::uint16_t w,
                     std::span<const std::uint8_t> data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    write_exact(out, magic, 4);
    write_exact(out, &n, 4);
    write_exact(out, &h, 2);
    write_exact(out, &w, 2);
    write_exact(out, data.data(), data.size());
    if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

U8Tensor read_u8_tensor(const std::filesystem::path& path, const char magic[4]) {
    check_endianness();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    char got[4];
    read_exact(in, got, 4, path);
    if (std::memcmp(got, magic, 4) != 0) {
        throw Error(ErrorKind::corrupt_file,
                    "bad magic in " + path.string() + " (expected " +
                        std::string(magic, 4) + ")");
    }
    U8Tensor t;
    read_exact(in, &t.n, 4, path);
    read_exact(in, &t.h, 2, path);
    read_exact(in, &t.w, 2, path);
    const std::size_t count =
        static_cast<std::size_t>(t.n) * t.h * t.w;
    t.data.resize(count);
    read_exact(in, t.data.data(), count, path);
    return t;
}

LoadResult load_dataset(const std::filesystem::path& root) {
    check_endianness();
    LoadResult result;
    Dataset& ds = result.dataset;
    ds.records = read_manifest(root / "manifest.jsonl");
    const std::size_t n = ds.records.size();

    // Manifest-level invariants: unique image ids, rows a permutation of 0..N-1.
    {
        std::unordered_set<std::string> ids;
        std::vector<bool> seen_row(n, false);
        for (const auto& rec : ds.records) {
            if (!ids.insert(rec.image_id).second) {
                throw Error(ErrorKind::invalid_record,
                            "duplicate image_id " + rec.image_id);
            }
            if (rec.row >= n || seen_row[rec.row]) {
                throw Error(ErrorKind::invalid_record,
                            "bad or duplicate row index for image " + rec.image_id);
            }
            seen_row[rec.row] = true;
        }
    }

    // Embeddings.
    {
        const auto path = root / "embeddings.bin";
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
        char got[4];
        read_exact(in, got, 4, path);
        if (std::memcmp(got, "EMB1", 4) != 0) {
            throw Error(ErrorKind::corrupt_file, "bad magic in " + path.string());
        }
        std::uint32_t file_n = 0, file_d = 0;
        read_exact(in, &file_n, 4, path);
        read_exact(in, &file_d, 4, path);
        if (file_n != n) {
            throw Error(ErrorKind::inconsistent_dataset,
                        "manifest has " + std::to_string(n) + " records but embeddings.bin has " +
                            std::to_string(file_n));
        }
        ds.dim = file_d;
        ds.embeddings.resize(static_cast<std::size_t>(file_n) * file_d);
        read_exact(in, ds.embeddings.data(), ds.embeddings.size() * sizeof(float), path);
    }

    // Masks.
    {
        U8Tensor t = read_u8_tensor(root / "masks.bin", "MSK1");
        if (t.n != n) {
            throw Error(ErrorKind::inconsistent_dataset,
                        "manifest has " + std::to_string(n) + " records but masks.bin has " +
                            std::to_string(t.n));
        }
        ds.height = t.h;
        ds.width = t.w;
        ds.labels = std::move(t.data);
    }

    // Optional images.
    if (std::filesystem::exists(root / "images.bin")) {
        U8Tensor t = read_u8_tensor(root / "images.bin", "IMG1");
        if (t.n != n || t.h != ds.height || t.w != ds.width) {
            throw Error(ErrorKind::inconsistent_dataset,
                        "images.bin dimensions disagree with masks.bin/manifest");
        }
        ds.images = std::move(t.data);
        result.report.had_images = true;
    }

    // Label range is a hard invariant at load.
    for (const auto& rec : ds.records) {
        const auto grid = ds.label_grid(rec.row);
        for (std::uint8_t v : grid) {
            if (v > kMaxLabel) {
                throw Error(ErrorKind::invalid_record,
                            "label " + std::to_string(v) + " out of range in image " +
                                rec.image_id);
            }
        }
    }

    // Unit-normalize embedding rows. Every row is renormalized (so the
    // 1e-6 post-load invariant holds); rows that deviated by more than
    // 1e-4 are counted as normalization events.
    for (const auto& rec : ds.records) {
        float* row = ds.embeddings.data() + rec.row * ds.dim;
        double ss = 0.0;
        for (std::size_t k = 0; k < ds.dim; ++k) {
            const float v = row[k];
            if (!std::isfinite(v)) {
                throw Error(ErrorKind::invalid_record,
                            "non-finite embedding entry in image " + rec.image_id);
            }
            ss += static_cast<double>(v) * v;
        }
        const double norm = std::sqrt(ss);
        if (norm == 0.0) {
            throw Error(ErrorKind::invalid_record,
                        "zero-norm embedding row for image " + rec.image_id);
        }
        if (std::abs(norm - 1.0) > 1e-4) ++result.report.normalized_rows;
        const double inv = 1.0 / norm;
        for (std::size_t k = 0; k < ds.dim; ++k) {
            row[k] = static_cast<float>(row[k] * inv);
        }
    }

    return result;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& root) {
    std::filesystem::create_directories(root);
    {
        std::ofstream out(root / "manifest.jsonl");
        if (!out) throw Error(ErrorKind::io, "cannot write manifest.jsonl");
        for (const auto& rec : ds.records) {
            json j;
            j["image_id"] = rec.image_id;
            j["subject_id"] = rec.subject_id;
            j["gender"] = to_string(rec.gender);
            j["cohort"] = rec.cohort;
            if (rec.age) j["age"] = *rec.age; else j["age"] = nullptr;
            j["row"] = rec.row;
            out << j.dump() << '\n';
        }
    }
    {
        const auto path = root / "embeddings.bin";
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
        const std::uint32_t n = static_cast<std::uint32_t>(ds.size());
        const std::uint32_t d = static_cast<std::uint32_t>(ds.dim);
        write_exact(out, "EMB1", 4);
        write_exact(out, &n, 4);
        write_exact(out, &d, 4);
        write_exact(out, ds.embeddings.data(), ds.embeddings.size() * sizeof(float));
    }
    write_u8_tensor(root / "masks.bin", "MSK1", static_cast<std::uint32_t>(ds.size()),
                    static_cast<std::uint16_t>(ds.height),
                    static_cast<std::uint16_t>(ds.width), ds.labels);
    if (ds.images) {
        write_u8_tensor(root / "images.bin", "IMG1", static_cast<std::uint32_t>(ds.size()),
                        static_cast<std::uint16_t>(ds.height),
                        static_cast<std::uint16_t>(ds.width), *ds.images);
    }
}

bool ValidationReport::all_passed() const {
    for (const auto& c : checks) {
        if (c.fatal && !c.passed) return false;
    }
    return true;
}

bool ValidationReport::has_warnings() const {
    for (const auto& c : checks) {
        if (!c.fatal && !c.passed) return true;
    }
    return false;
}

ValidationReport validate(const Dataset& ds) {
    ValidationReport report;

    ValidationCheck labels{"label_range", true, true, {}, "all labels <= 18"};
    for (const auto& rec : ds.records) {
        for (std::uint8_t v : ds.label_grid(rec.row)) {
            if (v > kMaxLabel) {
                labels.passed = false;
                labels.offending_image_ids.push_back(rec.image_id);
                break;
            }
        }
    }
    report.checks.push_back(std::move(labels));

    ValidationCheck norms{"embedding_norms", true, true, {}, "rows finite and unit length"};
    for (const auto& rec : ds.records) {
        double ss = 0.0;
        bool finite = true;
        for (float v : ds.embedding_row(rec.row)) {
            if (!std::isfinite(v)) { finite = false; break; }
            ss += static_cast<double>(v) * v;
        }
        if (!finite || std::abs(std::sqrt(ss) - 1.0) > 1e-6) {
            norms.passed = false;
            norms.offending_image_ids.push_back(rec.image_id);
        }
    }
    report.checks.push_back(std::move(norms));

    ValidationCheck dup{"unique_image_ids", true, true, {}, ""};
    {
        std::unordered_set<std::string> seen;
        for (const auto& rec : ds.records) {
            if (!seen.insert(rec.image_id).second) {
                dup.passed = false;
                dup.offending_image_ids.push_back(rec.image_id);
            }
        }
    }
    report.checks.push_back(std::move(dup));

    ValidationCheck rows{"row_indices", true, true, {}, "rows a permutation of 0..N-1"};
    {
        std::vector<bool> seen(ds.size(), false);
        for (const auto& rec : ds.records) {
            if (rec.row >= ds.size() || seen[rec.row]) {
                rows.passed = false;
                rows.offending_image_ids.push_back(rec.image_id);
            } else {
                seen[rec.row] = true;
            }
        }
    }
    report.checks.push_back(std::move(rows));

    // Subjects appearing under both genders: flagged, not fatal.
    ValidationCheck cross{"cross_gender_subjects", true, false, {}, ""};
    {
        std::unordered_map<std::string, Gender> first_gender;
        std::unordered_set<std::string> flagged;
        for (const auto& rec : ds.records) {
            auto [it, inserted] = first_gender.emplace(rec.subject_id, rec.gender);
            if (!inserted && it->second != rec.gender && flagged.insert(rec.subject_id).second) {
                cross.passed = false;
                cross.offending_image_ids.push_back(rec.image_id);
            }
        }
    }
    report.checks.push_back(std::move(cross));

    return report;
}

namespace {

bool matches(const ImageRecord& rec, const Filter& f,
             const std::unordered_set<std::string>* id_set) {
    if (f.gender && rec.gender != *f.gender) return false;
    if (f.cohort && rec.cohort != *f.cohort) return false;
    if (f.age_range) {
        if (!rec.age) return false;
        if (*rec.age < f.age_range->first || *rec.age > f.age_range->second) return false;
    }
    if (id_set && !id_set->count(rec.image_id)) return false;
    return true;
}

}  // namespace

DatasetView select(const Dataset& ds, const Filter& filter) {
    std::unordered_set<std::string> id_set;
    if (filter.image_ids) {
        id_set.insert(filter.image_ids->begin(), filter.image_ids->end());
    }
    std::vector<std::uint32_t> indices;
    for (std::uint32_t i = 0; i < ds.size(); ++i) {
        if (matches(ds.records[i], filter, filter.image_ids ? &id_set : nullptr)) {
            indices.push_back(i);
        }
    }
    return DatasetView(ds, std::move(indices));
}

DatasetView select(const DatasetView& view, const Filter& filter) {
    std::unordered_set<std::string> id_set;
    if (filter.image_ids) {
        id_set.insert(filter.image_ids->begin(), filter.image_ids->end());
    }
    std::vector<std::uint32_t> indices;
    for (std::uint32_t idx : view.indices()) {
        if (matches(view.dataset().records[idx], filter,
                    filter.image_ids ? &id_set : nullptr)) {
            indices.push_back(idx);
        }
    }
    return DatasetView(view.dataset(), std::move(indices));
}

DatasetView all_rows(const Dataset& ds) {
    std::vector<std::uint32_t> indices(ds.size());
    for (std::uint32_t i = 0; i < ds.size(); ++i) indices[i] = i;
    return DatasetView(ds, std::move(indices));
}

}  // namespace faceaudit::corpus
