#include "faceaudit/equalize.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <queue>

#include <json.hpp>

#include "faceaudit/parallel.hpp"

namespace faceaudit::equalize {

using maskmetrics::BinaryMask;

maskmetrics::BinaryMask apply_stencil(const BinaryMask& m, const BinaryMask& stencil) {
    return m & stencil;
}

std::vector<std::uint8_t> apply_stencil_image(std::span<const std::uint8_t> pixels,
                                              const BinaryMask& stencil) {
    if (pixels.size() != stencil.pixel_count()) {
        throw Error(ErrorKind::invalid_input, "apply_stencil_image: dimension mismatch");
    }
    std::vector<std::uint8_t> out(pixels.size());
    for (std::size_t p = 0; p < pixels.size(); ++p) {
        out[p] = stencil.get(p) ? pixels[p] : 0;
    }
    return out;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
    const std::size_t uni = or_popcount(a, b);
    if (uni == 0) return 1.0;
    return static_cast<double>(and_popcount(a, b)) / static_cast<double>(uni);
}

std::string stencil_hash(const BinaryMask& stencil) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t byte : stencil.to_labels()) {
        h ^= byte;
        h *= 0x100000001b3ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::size_t> solve_assignment(const std::vector<std::vector<double>>& weight) {
    const std::size_t n = weight.size();
    if (n == 0) return {};
    const std::size_t m = weight[0].size();
    if (m < n) {
        throw Error(ErrorKind::insufficient_pool,
                    "assignment needs at least as many columns as rows");
    }
    // Kuhn-Munkres with potentials, minimizing -weight; rows 1..n, cols 1..m.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            std::size_t j1 = 0;
            double delta = inf;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = -weight[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<std::size_t> row_to_col(n, static_cast<std::size_t>(-1));
    for (std::size_t j = 1; j <= m; ++j) {
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    }
    return row_to_col;
}

std::vector<std::size_t> greedy_assignment(const std::vector<std::vector<double>>& weight) {
    const std::size_t n = weight.size();
    if (n == 0) return {};
    const std::size_t m = weight[0].size();
    if (m < n) {
        throw Error(ErrorKind::insufficient_pool,
                    "assignment needs at least as many columns as rows");
    }
    struct Entry {
        double w;
        std::size_t r, c;
    };
    std::vector<Entry> entries;
    entries.reserve(n * m);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < m; ++c) entries.push_back({weight[r][c], r, c});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.w != b.w) return a.w > b.w;
        if (a.r != b.r) return a.r < b.r;
        return a.c < b.c;
    });
    std::vector<std::size_t> row_to_col(n, static_cast<std::size_t>(-1));
    std::vector<char> col_used(m, 0);
    std::size_t committed = 0;
    for (const Entry& e : entries) {
        if (committed == n) break;
        if (row_to_col[e.r] != static_cast<std::size_t>(-1) || col_used[e.c]) continue;
        row_to_col[e.r] = e.c;
        col_used[e.c] = 1;
        ++committed;
    }
    return row_to_col;
}

namespace {

std::vector<BinaryMask> stenciled_masks(const corpus::DatasetView& view,
                                        const BinaryMask& stencil, int workers) {
    std::vector<BinaryMask> masks(view.size());
    constexpr std::size_t kChunk = 128;
    const std::size_t chunks = (view.size() + kChunk - 1) / kChunk;
    parallel_blocks(chunks, workers, [&](std::size_t c) {
        const std::size_t begin = c * kChunk;
        const std::size_t end = std::min(begin + kChunk, view.size());
        for (std::size_t i = begin; i < end; ++i) {
            masks[i] = maskmetrics::face_mask(view, i) & stencil;
        }
    });
    return masks;
}

struct IouTable {
    std::size_t f_count = 0, m_count = 0;
    std::vector<float> values;  // f_count * m_count
    float at(std::size_t f, std::size_t m) const { return values[f * m_count + m]; }
};

IouTable iou_table(const std::vector<BinaryMask>& fm, const std::vector<BinaryMask>& mm,
                   int workers) {
    IouTable t;
    t.f_count = fm.size();
    t.m_count = mm.size();
    t.values.resize(t.f_count * t.m_count);
    std::vector<std::size_t> fpop(fm.size()), mpop(mm.size());
    for (std::size_t i = 0; i < fm.size(); ++i) fpop[i] = fm[i].popcount();
    for (std::size_t i = 0; i < mm.size(); ++i) mpop[i] = mm[i].popcount();
    parallel_blocks(t.f_count, workers, [&](std::size_t f) {
        float* row = t.values.data() + f * t.m_count;
        for (std::size_t m = 0; m < t.m_count; ++m) {
            const std::size_t inter = maskmetrics::and_popcount(fm[f], mm[m]);
            const std::size_t uni = fpop[f] + mpop[m] - inter;
            row[m] = uni == 0 ? 1.0f
                              : static_cast<float>(static_cast<double>(inter) /
                                                   static_cast<double>(uni));
        }
    });
    return t;
}

// Greedy global matching with lazy best-candidate revalidation. Equivalent
// to sorting all (iou, female, male) entries and committing in order, but
// without holding F*M entries at once.
std::vector<std::size_t> greedy_match(const IouTable& t,
                                      const std::vector<const std::string*>& fid,
                                      const std::vector<const std::string*>& mid) {
    struct Cand {
        float iou;
        std::uint32_t f, m;
    };
    auto worse = [&](const Cand& a, const Cand& b) {
        if (a.iou != b.iou) return a.iou < b.iou;
        if (*fid[a.f] != *fid[b.f]) return *fid[a.f] > *fid[b.f];
        return *mid[a.m] > *mid[b.m];
    };
    std::vector<char> m_used(t.m_count, 0);

    auto best_for = [&](std::uint32_t f) {
        Cand best{-1.0f, f, 0};
        bool found = false;
        const float* row = t.values.data() + static_cast<std::size_t>(f) * t.m_count;
        for (std::uint32_t m = 0; m < t.m_count; ++m) {
            if (m_used[m]) continue;
            const Cand c{row[m], f, m};
            if (!found || worse(best, c)) {
                best = c;
                found = true;
            }
        }
        return best;
    };

    std::priority_queue<Cand, std::vector<Cand>, decltype(worse)> heap(worse);
    for (std::uint32_t f = 0; f < t.f_count; ++f) heap.push(best_for(f));

    std::vector<std::size_t> f_to_m(t.f_count, static_cast<std::size_t>(-1));
    std::size_t committed = 0;
    while (committed < t.f_count) {
        Cand top = heap.top();
        heap.pop();
        if (m_used[top.m]) {
            heap.push(best_for(top.f));  // stale candidate, recompute
            continue;
        }
        f_to_m[top.f] = top.m;
        m_used[top.m] = 1;
        ++committed;
    }
    return f_to_m;
}

}  // namespace

Pairing match_images(const corpus::DatasetView& female, const corpus::DatasetView& male,
                     const BinaryMask& stencil, const MatchOptions& opts) {
    if (!opts.with_replacement && male.size() < female.size()) {
        throw Error(ErrorKind::insufficient_pool,
                    "male pool (" + std::to_string(male.size()) + ") smaller than female view (" +
                        std::to_string(female.size()) + ")");
    }
    if (female.empty()) {
        throw Error(ErrorKind::invalid_input, "match_images: empty female view");
    }
    const auto fm = stenciled_masks(female, stencil, opts.workers);
    const auto mm = stenciled_masks(male, stencil, opts.workers);
    const IouTable t = iou_table(fm, mm, opts.workers);

    std::vector<const std::string*> fid(female.size()), mid(male.size());
    for (std::size_t i = 0; i < female.size(); ++i) fid[i] = &female.record(i).image_id;
    for (std::size_t i = 0; i < male.size(); ++i) mid[i] = &male.record(i).image_id;

    std::vector<std::size_t> f_to_m;
    if (opts.with_replacement) {
        f_to_m.resize(female.size());
        for (std::size_t f = 0; f < female.size(); ++f) {
            std::size_t best = 0;
            for (std::size_t m = 1; m < male.size(); ++m) {
                const float a = t.at(f, m), b = t.at(f, best);
                if (a > b || (a == b && *mid[m] < *mid[best])) best = m;
            }
            f_to_m[f] = best;
        }
    } else if (opts.mode == MatchMode::exact_assignment) {
        std::vector<std::vector<double>> w(female.size(), std::vector<double>(male.size()));
        for (std::size_t f = 0; f < female.size(); ++f) {
            for (std::size_t m = 0; m < male.size(); ++m) w[f][m] = t.at(f, m);
        }
        f_to_m = solve_assignment(w);
    } else {
        f_to_m = greedy_match(t, fid, mid);
    }

    Pairing out;
    out.mode = opts.mode;
    out.stencil_hash = stencil_hash(stencil);
    out.entries.reserve(female.size());
    for (std::size_t f = 0; f < female.size(); ++f) {
        out.entries.push_back({*fid[f], *mid[f_to_m[f]], static_cast<double>(t.at(f, f_to_m[f]))});
    }
    return out;
}

EqualizationReport equalization_report(const corpus::DatasetView& female,
                                       const corpus::DatasetView& male_selected,
                                       const BinaryMask& stencil, double max_abs_budget) {
    if (female.size() != male_selected.size()) {
        throw Error(ErrorKind::invalid_input,
                    "equalization_report: views must have equal sizes, got " +
                        std::to_string(female.size()) + " vs " +
                        std::to_string(male_selected.size()));
    }
    if (female.empty()) {
        throw Error(ErrorKind::invalid_input, "equalization_report: empty views");
    }
    const std::size_t px = stencil.pixel_count();
    auto count_grid = [&](const corpus::DatasetView& view) {
        std::vector<std::uint32_t> counts(px, 0);
        for (std::size_t i = 0; i < view.size(); ++i) {
            const BinaryMask m = maskmetrics::face_mask(view, i) & stencil;
            for (std::size_t p = 0; p < px; ++p) {
                if (m.get(p)) ++counts[p];
            }
        }
        return counts;
    };
    const auto fc = count_grid(female);
    const auto mc = count_grid(male_selected);

    EqualizationReport rep;
    rep.budget = max_abs_budget;
    rep.diff.height = stencil.height();
    rep.diff.width = stencil.width();
    rep.diff.values.resize(px);
    const double n = static_cast<double>(female.size());
    double sum_abs = 0.0;
    std::size_t stencil_px = 0;
    for (std::size_t p = 0; p < px; ++p) {
        const double d = (static_cast<double>(mc[p]) - static_cast<double>(fc[p])) / n;
        rep.diff.values[p] = d;
        rep.max_abs = std::max(rep.max_abs, std::abs(d));
        if (stencil.get(p)) {
            sum_abs += std::abs(d);
            ++stencil_px;
        }
    }
    rep.mean_abs = stencil_px == 0 ? 0.0 : sum_abs / static_cast<double>(stencil_px);
    rep.within_budget = rep.max_abs <= max_abs_budget;
    return rep;
}

namespace {

const char* mode_name(MatchMode m) {
    return m == MatchMode::greedy_global ? "greedy_global" : "exact_assignment";
}

MatchMode mode_from_name(const std::string& s) {
    if (s == "greedy_global") return MatchMode::greedy_global;
    if (s == "exact_assignment") return MatchMode::exact_assignment;
    throw Error(ErrorKind::corrupt_file, "unknown pairing mode: " + s);
}

}  // namespace

void export_selection(const Pairing& pairing, const BinaryMask& stencil,
                      const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(out_dir / "pairing.jsonl");
        if (!out) throw Error(ErrorKind::io, "cannot write pairing.jsonl");
        nlohmann::json header;
        header["mode"] = mode_name(pairing.mode);
        header["stencil_hash"] = pairing.stencil_hash;
        header["pairs"] = pairing.entries.size();
        out << header.dump() << '\n';
        for (const auto& e : pairing.entries) {
            nlohmann::json j;
            j["female_image_id"] = e.female_image_id;
            j["male_image_id"] = e.male_image_id;
            j["iou"] = e.iou;
            out << j.dump() << '\n';
        }
    }
    stencil.save(out_dir / "stencil.msk");
}

Pairing load_pairing(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorKind::corrupt_file, "pairing file is empty: " + path.string());
    }
    Pairing p;
    try {
        const auto header = nlohmann::json::parse(line);
        p.mode = mode_from_name(header.at("mode").get<std::string>());
        p.stencil_hash = header.at("stencil_hash").get<std::string>();
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            p.entries.push_back({j.at("female_image_id").get<std::string>(),
                                 j.at("male_image_id").get<std::string>(),
                                 j.at("iou").get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::corrupt_file, path.string() + ": " + e.what());
    }
    return p;
}

}  // namespace faceaudit::equalize
