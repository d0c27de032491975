#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "faceaudit/equalize.hpp"
#include "faceaudit/rng.hpp"
#include "test_support.hpp"

using namespace faceaudit;
using corpus::Gender;
using maskmetrics::BinaryMask;
using testsupport::DatasetBuilder;
using testsupport::TempDir;

namespace {

BinaryMask mask_of(int h, int w, std::initializer_list<std::size_t> set_pixels) {
    BinaryMask m(h, w);
    for (std::size_t p : set_pixels) m.set(p, true);
    return m;
}

double brute_force_best(const std::vector<std::vector<double>>& w) {
    const std::size_t n = w.size();
    const std::size_t m = w[0].size();
    std::vector<std::size_t> cols(m);
    std::iota(cols.begin(), cols.end(), 0);
    double best = -1.0;
    // permutations of columns; first n entries assign rows 0..n-1
    std::sort(cols.begin(), cols.end());
    do {
        double total = 0.0;
        for (std::size_t r = 0; r < n; ++r) total += w[r][cols[r]];
        best = std::max(best, total);
    } while (std::next_permutation(cols.begin(), cols.end()));
    return best;
}

double total_weight(const std::vector<std::vector<double>>& w,
                    const std::vector<std::size_t>& assignment) {
    double total = 0.0;
    for (std::size_t r = 0; r < assignment.size(); ++r) total += w[r][assignment[r]];
    return total;
}

std::vector<std::vector<double>> random_weights(Rng& rng, std::size_t n, std::size_t m) {
    std::vector<std::vector<double>> w(n, std::vector<double>(m));
    for (auto& row : w) {
        for (auto& v : row) v = rng.next_unit();
    }
    return w;
}

// Small two-gender dataset with hand-laid masks on a 2x4 grid.
corpus::Dataset mask_fixture(const std::vector<std::vector<std::uint8_t>>& female_grids,
                             const std::vector<std::vector<std::uint8_t>>& male_grids) {
    DatasetBuilder builder(2, 2, 4);
    std::size_t idx = 0;
    for (std::size_t i = 0; i < female_grids.size(); ++i) {
        builder.add("f" + std::to_string(i), "sf" + std::to_string(i), Gender::F, {1.f, 0.f});
        builder.set_labels(idx++, female_grids[i]);
    }
    for (std::size_t i = 0; i < male_grids.size(); ++i) {
        builder.add("m" + std::to_string(i), "sm" + std::to_string(i), Gender::M, {1.f, 0.f});
        builder.set_labels(idx++, male_grids[i]);
    }
    return builder.build();
}

}  // namespace

TEST_CASE("apply_stencil is bitwise AND and idempotent") {
    const BinaryMask m = mask_of(2, 4, {0, 1, 2, 3});
    const BinaryMask full = [&] {
        BinaryMask f(2, 4);
        for (std::size_t p = 0; p < 8; ++p) f.set(p, true);
        return f;
    }();
    CHECK(equalize::apply_stencil(m, full) == m);
    CHECK(equalize::apply_stencil(m, BinaryMask(2, 4)).popcount() == 0);
    const BinaryMask stencil = mask_of(2, 4, {1, 3, 5});
    const BinaryMask once = equalize::apply_stencil(m, stencil);
    CHECK(once.popcount() == 2);
    CHECK(equalize::apply_stencil(once, stencil) == once);

    SUBCASE("image variant zeroes outside the stencil") {
        const std::vector<std::uint8_t> img{10, 20, 30, 40, 50, 60, 70, 80};
        const auto out = equalize::apply_stencil_image(img, stencil);
        CHECK(out == std::vector<std::uint8_t>{0, 20, 0, 40, 0, 60, 0, 0});
    }
}

TEST_CASE("iou hand values") {
    const BinaryMask a = mask_of(2, 4, {0, 1, 2, 3});
    CHECK(equalize::iou(a, a) == 1.0);
    const BinaryMask b = mask_of(2, 4, {4, 5});
    CHECK(equalize::iou(a, b) == 0.0);
    // |a|=4, |b|=6, overlap 2 -> 2/8
    const BinaryMask c = mask_of(2, 4, {2, 3, 4, 5, 6, 7});
    CHECK(equalize::iou(a, c) == doctest::Approx(0.25));
    CHECK(equalize::iou(c, a) == doctest::Approx(0.25));
    CHECK(equalize::iou(BinaryMask(2, 4), BinaryMask(2, 4)) == 1.0);
}

TEST_CASE("exact assignment matches factorial brute force on random instances") {
    Rng rng(31);
    double min_greedy_ratio = 1.0;
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 2 + rng.bounded(5);       // rows
        const std::size_t m = n + rng.bounded(3);       // cols >= rows
        const auto w = random_weights(rng, n, m);
        const double best = brute_force_best(w);
        const auto exact = equalize::solve_assignment(w);
        const auto greedy = equalize::greedy_assignment(w);
        const double exact_total = total_weight(w, exact);
        const double greedy_total = total_weight(w, greedy);
        CHECK(exact_total == doctest::Approx(best).epsilon(1e-9));
        CHECK(greedy_total <= exact_total + 1e-12);
        CHECK(greedy_total >= 0.5 * exact_total - 1e-12);
        if (exact_total > 0) min_greedy_ratio = std::min(min_greedy_ratio, greedy_total / exact_total);
        // assignments are injective
        auto cols = exact;
        std::sort(cols.begin(), cols.end());
        CHECK(std::adjacent_find(cols.begin(), cols.end()) == cols.end());
    }
    MESSAGE("min greedy/exact ratio over instances: ", min_greedy_ratio);
}

TEST_CASE("exact assignment total never decreases when the pool grows") {
    Rng rng(57);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 3 + rng.bounded(3);
        const std::size_t m = n + 1 + rng.bounded(3);
        auto w = random_weights(rng, n, m);
        const double smaller = total_weight(w, equalize::solve_assignment(w));
        for (auto& row : w) row.push_back(rng.next_unit());  // one extra candidate
        const double larger = total_weight(w, equalize::solve_assignment(w));
        CHECK(larger >= smaller - 1e-12);
    }
}

TEST_CASE("match_images picks the argmax male for a single female") {
    // female: 4 pixels; males overlap 1, 4, 2 of them.
    const corpus::Dataset ds = mask_fixture(
        {{1, 1, 1, 1, 0, 0, 0, 0}},
        {{1, 0, 0, 0, 1, 1, 1, 0},    // iou 1/7
         {1, 1, 1, 1, 0, 0, 0, 0},    // iou 1.0
         {1, 1, 0, 0, 1, 0, 0, 0}});  // iou 2/5
    corpus::Filter f_filter, m_filter;
    f_filter.gender = Gender::F;
    m_filter.gender = Gender::M;
    BinaryMask full(2, 4);
    for (std::size_t p = 0; p < 8; ++p) full.set(p, true);
    const auto pairing =
        equalize::match_images(corpus::select(ds, f_filter), corpus::select(ds, m_filter), full);
    REQUIRE(pairing.entries.size() == 1);
    CHECK(pairing.entries[0].male_image_id == "m1");
    CHECK(pairing.entries[0].iou == doctest::Approx(1.0));
}

TEST_CASE("match_images requires a sufficient male pool") {
    const corpus::Dataset ds = mask_fixture(
        {{1, 1, 0, 0, 0, 0, 0, 0}, {0, 0, 1, 1, 0, 0, 0, 0}}, {{1, 1, 1, 1, 0, 0, 0, 0}});
    corpus::Filter f_filter, m_filter;
    f_filter.gender = Gender::F;
    m_filter.gender = Gender::M;
    BinaryMask full(2, 4);
    for (std::size_t p = 0; p < 8; ++p) full.set(p, true);
    try {
        equalize::match_images(corpus::select(ds, f_filter), corpus::select(ds, m_filter), full);
        FAIL("expected insufficient-pool error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::insufficient_pool);
    }
    SUBCASE("with replacement allows reuse") {
        equalize::MatchOptions opts;
        opts.with_replacement = true;
        const auto pairing = equalize::match_images(corpus::select(ds, f_filter),
                                                    corpus::select(ds, m_filter), full, opts);
        CHECK(pairing.entries.size() == 2);
        CHECK(pairing.entries[0].male_image_id == "m0");
        CHECK(pairing.entries[1].male_image_id == "m0");
    }
}

TEST_CASE("greedy matching is injective and equals the full-sort oracle") {
    Rng rng(404);
    for (int trial = 0; trial < 8; ++trial) {
        // random masks over a 4x8 grid; ids are zero-padded so lexicographic
        // id order equals index order, matching greedy_assignment's tie rule
        const std::size_t n_f = 3 + rng.bounded(4);
        const std::size_t n_m = n_f + rng.bounded(4);
        DatasetBuilder builder(2, 4, 8);
        std::size_t idx = 0;
        auto random_grid = [&] {
            std::vector<std::uint8_t> g(32);
            for (auto& v : g) v = rng.bounded(2) ? 1 : 0;
            return g;
        };
        for (std::size_t i = 0; i < n_f; ++i) {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "f%03zu", i);
            builder.add(buf, std::string("s") + buf, Gender::F, {1.f, 0.f});
            builder.set_labels(idx++, random_grid());
        }
        for (std::size_t i = 0; i < n_m; ++i) {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "m%03zu", i);
            builder.add(buf, std::string("s") + buf, Gender::M, {1.f, 0.f});
            builder.set_labels(idx++, random_grid());
        }
        const corpus::Dataset ds = builder.build();
        corpus::Filter ff, mf;
        ff.gender = Gender::F;
        mf.gender = Gender::M;
        const auto f_view = corpus::select(ds, ff);
        const auto m_view = corpus::select(ds, mf);
        BinaryMask full(4, 8);
        for (std::size_t p = 0; p < 32; ++p) full.set(p, true);

        const auto pairing = equalize::match_images(f_view, m_view, full);

        // oracle: explicit IoU matrix + full-sort greedy
        std::vector<std::vector<double>> w(n_f, std::vector<double>(n_m));
        for (std::size_t f = 0; f < n_f; ++f) {
            for (std::size_t m = 0; m < n_m; ++m) {
                w[f][m] = equalize::iou(maskmetrics::face_mask(f_view, f),
                                        maskmetrics::face_mask(m_view, m));
            }
        }
        const auto oracle = equalize::greedy_assignment(w);
        REQUIRE(pairing.entries.size() == n_f);
        for (std::size_t f = 0; f < n_f; ++f) {
            CHECK(pairing.entries[f].male_image_id == m_view.record(oracle[f]).image_id);
            CHECK(pairing.entries[f].iou == doctest::Approx(w[f][oracle[f]]));
        }
        // injective on males
        std::vector<std::string> males;
        for (const auto& e : pairing.entries) males.push_back(e.male_image_id);
        std::sort(males.begin(), males.end());
        CHECK(std::adjacent_find(males.begin(), males.end()) == males.end());
    }
}

TEST_CASE("exact mode total is at least the greedy total on mask instances") {
    Rng rng(88);
    DatasetBuilder builder(2, 4, 8);
    std::size_t idx = 0;
    for (int i = 0; i < 6; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "f%03d", i);
        builder.add(buf, std::string("s") + buf, Gender::F, {1.f, 0.f});
        std::vector<std::uint8_t> g(32);
        for (auto& v : g) v = rng.bounded(2) ? 1 : 0;
        builder.set_labels(idx++, g);
    }
    for (int i = 0; i < 8; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "m%03d", i);
        builder.add(buf, std::string("s") + buf, Gender::M, {1.f, 0.f});
        std::vector<std::uint8_t> g(32);
        for (auto& v : g) v = rng.bounded(2) ? 1 : 0;
        builder.set_labels(idx++, g);
    }
    const corpus::Dataset ds = builder.build();
    corpus::Filter ff, mf;
    ff.gender = Gender::F;
    mf.gender = Gender::M;
    BinaryMask full(4, 8);
    for (std::size_t p = 0; p < 32; ++p) full.set(p, true);
    equalize::MatchOptions exact_opts;
    exact_opts.mode = equalize::MatchMode::exact_assignment;
    const auto greedy =
        equalize::match_images(corpus::select(ds, ff), corpus::select(ds, mf), full);
    const auto exact =
        equalize::match_images(corpus::select(ds, ff), corpus::select(ds, mf), full, exact_opts);
    double greedy_total = 0, exact_total = 0;
    for (const auto& e : greedy.entries) greedy_total += e.iou;
    for (const auto& e : exact.entries) exact_total += e.iou;
    CHECK(exact_total >= greedy_total - 1e-12);
    CHECK(greedy_total >= 0.5 * exact_total - 1e-12);
}

TEST_CASE("equalization_report on self-pairing is exactly zero") {
    const corpus::Dataset ds = mask_fixture(
        {{1, 1, 0, 0, 0, 0, 0, 0}, {0, 0, 1, 1, 0, 0, 0, 0}}, {});
    corpus::Filter ff;
    ff.gender = Gender::F;
    const auto view = corpus::select(ds, ff);
    BinaryMask full(2, 4);
    for (std::size_t p = 0; p < 8; ++p) full.set(p, true);
    const auto report = equalize::equalization_report(view, view, full);
    CHECK(report.max_abs == 0.0);
    CHECK(report.mean_abs == 0.0);
    CHECK(report.within_budget);

    SUBCASE("size mismatch is an error") {
        corpus::Filter one;
        one.image_ids = {{"f0"}};
        CHECK_THROWS_AS(equalize::equalization_report(view, corpus::select(ds, one), full),
                        Error);
    }
}

TEST_CASE("export and load round-trip the pairing exactly") {
    TempDir dir("pairing_io");
    equalize::Pairing pairing;
    pairing.mode = equalize::MatchMode::greedy_global;
    BinaryMask stencil = mask_of(3, 3, {0, 4, 8});
    pairing.stencil_hash = equalize::stencil_hash(stencil);
    pairing.entries = {{"f0", "m3", 0.75}, {"f1", "m1", 0.5}, {"f2", "m2", 1.0}};
    equalize::export_selection(pairing, stencil, dir.path);

    const auto back = equalize::load_pairing(dir.path / "pairing.jsonl");
    CHECK(back.mode == pairing.mode);
    CHECK(back.stencil_hash == pairing.stencil_hash);
    REQUIRE(back.entries.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.entries[i].female_image_id == pairing.entries[i].female_image_id);
        CHECK(back.entries[i].male_image_id == pairing.entries[i].male_image_id);
        CHECK(back.entries[i].iou == pairing.entries[i].iou);
    }
    // stencil file parses as a valid 1-record masks.bin
    const auto tensor = corpus::read_u8_tensor(dir.path / "stencil.msk", "MSK1");
    CHECK(tensor.n == 1);
    CHECK(BinaryMask::load(dir.path / "stencil.msk") == stencil);
}
