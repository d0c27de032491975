#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>

#include "faceaudit/corpus.hpp"
#include "test_support.hpp"

using namespace faceaudit;
using corpus::Gender;
using testsupport::DatasetBuilder;
using testsupport::TempDir;

namespace {

corpus::Dataset toy_dataset() {
    return DatasetBuilder(2, 4, 4)
        .add("img-0", "subj-a", Gender::F, {1.f, 0.f}, 1, 20)
        .add("img-1", "subj-a", Gender::F, {0.f, 1.f}, 1, 21)
        .add("img-2", "subj-b", Gender::M, {0.6f, 0.8f}, 2, 35)
        .build();
}

void write_raw_embeddings(const std::filesystem::path& path, std::uint32_t n, std::uint32_t d,
                          const std::vector<float>& values, const char* magic = "EMB1") {
    std::ofstream out(path, std::ios::binary);
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
}

}  // namespace

TEST_CASE("load round-trips a well-formed toy dataset") {
    TempDir dir("corpus_roundtrip");
    corpus::Dataset ds = toy_dataset();
    corpus::save_dataset(ds, dir.path);

    const corpus::LoadResult lr = corpus::load_dataset(dir.path);
    CHECK(lr.dataset.size() == 3);
    CHECK(lr.dataset.dim == 2);
    CHECK(lr.dataset.height == 4);
    CHECK(lr.dataset.width == 4);
    CHECK(lr.report.normalized_rows == 0);
    CHECK(corpus::validate(lr.dataset).all_passed());

    // Tensors byte-identical, manifest semantically equal.
    CHECK(lr.dataset.labels == ds.labels);
    CHECK(std::memcmp(lr.dataset.embeddings.data(), ds.embeddings.data(),
                      ds.embeddings.size() * sizeof(float)) == 0);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(lr.dataset.records[i].image_id == ds.records[i].image_id);
        CHECK(lr.dataset.records[i].subject_id == ds.records[i].subject_id);
        CHECK(lr.dataset.records[i].gender == ds.records[i].gender);
        CHECK(lr.dataset.records[i].age == ds.records[i].age);
        CHECK(lr.dataset.records[i].row == ds.records[i].row);
    }
}

TEST_CASE("load normalizes the 3-4-5 row and counts one event") {
    TempDir dir("corpus_norm");
    corpus::Dataset ds = toy_dataset();
    corpus::save_dataset(ds, dir.path);
    // Overwrite embeddings with a non-unit row (3,4) for img-0.
    write_raw_embeddings(dir.path / "embeddings.bin", 3, 2,
                         {3.f, 4.f, 0.f, 1.f, 0.6f, 0.8f});

    const corpus::LoadResult lr = corpus::load_dataset(dir.path);
    CHECK(lr.report.normalized_rows == 1);
    const auto row = lr.dataset.embedding_row(0);
    CHECK(row[0] == doctest::Approx(0.6).epsilon(1e-7));
    CHECK(row[1] == doctest::Approx(0.8).epsilon(1e-7));
}

TEST_CASE("after load every embedding row is unit within 1e-6") {
    TempDir dir("corpus_unit");
    corpus::save_dataset(toy_dataset(), dir.path);
    write_raw_embeddings(dir.path / "embeddings.bin", 3, 2,
                         {0.9999f, 0.f, 1.0001f, 0.f, 0.70712f, 0.70712f});
    const corpus::LoadResult lr = corpus::load_dataset(dir.path);
    for (const auto& rec : lr.dataset.records) {
        double ss = 0.0;
        for (float v : lr.dataset.embedding_row(rec.row)) ss += static_cast<double>(v) * v;
        CHECK(std::abs(std::sqrt(ss) - 1.0) <= 1e-6);
    }
}

TEST_CASE("count mismatch between manifest and embeddings is an inconsistent-dataset error") {
    TempDir dir("corpus_mismatch");
    corpus::save_dataset(toy_dataset(), dir.path);
    write_raw_embeddings(dir.path / "embeddings.bin", 2, 2, {1.f, 0.f, 0.f, 1.f});
    try {
        corpus::load_dataset(dir.path);
        FAIL("expected inconsistent-dataset error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::inconsistent_dataset);
    }
}

TEST_CASE("bad magic is a corrupt-file error") {
    TempDir dir("corpus_magic");
    corpus::save_dataset(toy_dataset(), dir.path);
    write_raw_embeddings(dir.path / "embeddings.bin", 3, 2,
                         {1.f, 0.f, 0.f, 1.f, 0.6f, 0.8f}, "XXX1");
    try {
        corpus::load_dataset(dir.path);
        FAIL("expected corrupt-file error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::corrupt_file);
    }
}

TEST_CASE("zero-norm embedding row reports the offending image") {
    TempDir dir("corpus_zeronorm");
    corpus::save_dataset(toy_dataset(), dir.path);
    write_raw_embeddings(dir.path / "embeddings.bin", 3, 2,
                         {1.f, 0.f, 0.f, 0.f, 0.6f, 0.8f});
    try {
        corpus::load_dataset(dir.path);
        FAIL("expected invalid-record error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::invalid_record);
        CHECK(std::string(e.what()).find("img-1") != std::string::npos);
    }
}

TEST_CASE("validate flags label range, duplicates and cross-gender subjects") {
    SUBCASE("clean fixture passes everything") {
        const auto report = corpus::validate(toy_dataset());
        CHECK(report.all_passed());
        CHECK(!report.has_warnings());
    }
    SUBCASE("label value 19 fails the range check naming the image") {
        corpus::Dataset ds = toy_dataset();
        ds.labels[ds.pixels() * 2] = 19;  // img-2's grid
        const auto report = corpus::validate(ds);
        CHECK(!report.all_passed());
        bool found = false;
        for (const auto& check : report.checks) {
            if (check.name == "label_range") {
                found = true;
                CHECK(!check.passed);
                REQUIRE(check.offending_image_ids.size() == 1);
                CHECK(check.offending_image_ids[0] == "img-2");
            }
        }
        CHECK(found);
    }
    SUBCASE("a subject under both genders is a warning, not fatal") {
        corpus::Dataset ds = DatasetBuilder(2, 4, 4)
                                 .add("a", "s1", Gender::F, {1.f, 0.f})
                                 .add("b", "s1", Gender::M, {0.f, 1.f})
                                 .build();
        const auto report = corpus::validate(ds);
        CHECK(report.all_passed());
        CHECK(report.has_warnings());
    }
    SUBCASE("duplicate image ids fail") {
        corpus::Dataset ds = toy_dataset();
        ds.records[1].image_id = "img-0";
        CHECK(!corpus::validate(ds).all_passed());
    }
}

TEST_CASE("select filters by gender, age and cohort") {
    const corpus::Dataset ds = DatasetBuilder(2, 4, 4)
                                   .add("f0", "sf0", Gender::F, {1.f, 0.f}, 1, 20)
                                   .add("f1", "sf1", Gender::F, {1.f, 0.f}, 1, 35)
                                   .add("m0", "sm0", Gender::M, {1.f, 0.f}, 1, 20)
                                   .add("m1", "sm1", Gender::M, {1.f, 0.f}, 1, 35)
                                   .add("m2", "sm2", Gender::M, {1.f, 0.f}, 1, 50)
                                   .build();
    SUBCASE("gender filter") {
        corpus::Filter f;
        f.gender = Gender::F;
        CHECK(corpus::select(ds, f).size() == 2);
    }
    SUBCASE("age range keeps only in-range records") {
        corpus::Filter f;
        f.age_range = {18, 29};
        const auto view = corpus::select(ds, f);
        REQUIRE(view.size() == 2);
        CHECK(view.record(0).image_id == "f0");
        CHECK(view.record(1).image_id == "m0");
    }
    SUBCASE("no filter returns all rows in manifest order") {
        const auto view = corpus::select(ds, {});
        REQUIRE(view.size() == 5);
        for (std::size_t i = 0; i < 5; ++i) CHECK(view.indices()[i] == i);
    }
    SUBCASE("unknown cohort yields an empty view, not an error") {
        corpus::Filter f;
        f.cohort = "nope";
        CHECK(corpus::select(ds, f).empty());
    }
    SUBCASE("select composes: select(select(ds,A),B) == select(ds,A and B)") {
        corpus::Filter a, b, both;
        a.gender = Gender::M;
        b.age_range = {30, 60};
        both.gender = Gender::M;
        both.age_range = {30, 60};
        const auto nested = corpus::select(corpus::select(ds, a), b);
        const auto direct = corpus::select(ds, both);
        CHECK(nested.indices() == direct.indices());
        // idempotence
        const auto twice = corpus::select(corpus::select(ds, a), a);
        CHECK(twice.indices() == corpus::select(ds, a).indices());
    }
    SUBCASE("image id filter") {
        corpus::Filter f;
        f.image_ids = {{"m1", "f0"}};
        const auto view = corpus::select(ds, f);
        REQUIRE(view.size() == 2);
        CHECK(view.record(0).image_id == "f0");
        CHECK(view.record(1).image_id == "m1");
    }
}

TEST_CASE("stencil tensor helpers round-trip") {
    TempDir dir("tensor_helper");
    std::vector<std::uint8_t> data(12, 0);
    data[3] = 1;
    corpus::write_u8_tensor(dir.path / "t.bin", "MSK1", 1, 3, 4, data);
    const auto t = corpus::read_u8_tensor(dir.path / "t.bin", "MSK1");
    CHECK(t.n == 1);
    CHECK(t.h == 3);
    CHECK(t.w == 4);
    CHECK(t.data == data);
}
