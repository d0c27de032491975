#include "faceaudit/scorekit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "faceaudit/parallel.hpp"
#include "faceaudit/rng.hpp"

namespace faceaudit::scorekit {

Histogram::Histogram(double lo, double hi, std::size_t bins) : lo_(lo), hi_(hi) {
    if (!(hi > lo) || bins == 0) {
        throw Error(ErrorKind::invalid_input, "histogram needs hi > lo and bins >= 1");
    }
    counts_.assign(bins, 0);
}

void Histogram::add(double x) {
    moments_.add(x);
    const double w = bin_width();
    long long k = static_cast<long long>(std::floor((x - lo_) / w));
    if (k < 0) k = 0;
    if (k >= static_cast<long long>(counts_.size())) {
        k = static_cast<long long>(counts_.size()) - 1;
    }
    ++counts_[static_cast<std::size_t>(k)];
}

void Histogram::merge(const Histogram& o) {
    if (o.lo_ != lo_ || o.hi_ != hi_ || o.counts_.size() != counts_.size()) {
        throw Error(ErrorKind::invalid_input, "cannot merge histograms with different binning");
    }
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    moments_.merge(o.moments_);
}

double cosine(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorKind::invalid_input, "cosine: dimension mismatch");
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return std::clamp(dot, -1.0, 1.0);
}

namespace {

// Positions within the view, grouped by subject, used for genuine pairs and
// exact impostor counts.
struct SubjectGroups {
    std::vector<std::vector<std::uint32_t>> groups;  // in first-appearance order
};

SubjectGroups group_by_subject(const corpus::DatasetView& view) {
    SubjectGroups sg;
    std::unordered_map<std::string, std::size_t> index;
    for (std::uint32_t pos = 0; pos < view.size(); ++pos) {
        const auto& sid = view.record(pos).subject_id;
        auto [it, inserted] = index.emplace(sid, sg.groups.size());
        if (inserted) sg.groups.emplace_back();
        sg.groups[it->second].push_back(pos);
    }
    return sg;
}

bool in_scope(const corpus::DatasetView& view, PairPolicy::Scope scope,
              std::uint32_t i, std::uint32_t j) {
    const auto& a = view.record(i);
    const auto& b = view.record(j);
    if (a.subject_id == b.subject_id) return false;
    if (scope == PairPolicy::Scope::cross_gender && a.gender == b.gender) return false;
    return true;
}

// rank(i,j) = i*V - i*(i+1)/2 + (j - i - 1) over unordered pairs i < j.
IndexPair unrank_pair(std::uint64_t k, std::uint64_t v) {
    std::uint64_t lo = 0, hi = v - 1;  // find largest i with base(i) <= k
    auto base = [v](std::uint64_t i) { return i * v - i * (i + 1) / 2; };
    while (lo < hi) {
        const std::uint64_t mid = (lo + hi + 1) / 2;
        if (base(mid) <= k) lo = mid; else hi = mid - 1;
    }
    const std::uint64_t i = lo;
    const std::uint64_t j = i + 1 + (k - base(i));
    return {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)};
}

std::uint64_t count_impostors(const corpus::DatasetView& view, const SubjectGroups& sg,
                              PairPolicy::Scope scope) {
    const std::uint64_t v = view.size();
    if (scope == PairPolicy::Scope::within_group) {
        std::uint64_t genuine = 0;
        for (const auto& g : sg.groups) {
            genuine += static_cast<std::uint64_t>(g.size()) * (g.size() - 1) / 2;
        }
        return v * (v - 1) / 2 - genuine;
    }
    std::uint64_t f = 0, m = 0, same_subject_cross = 0;
    for (std::uint32_t pos = 0; pos < view.size(); ++pos) {
        (view.record(pos).gender == corpus::Gender::F ? f : m) += 1;
    }
    for (const auto& g : sg.groups) {
        std::uint64_t gf = 0, gm = 0;
        for (auto pos : g) (view.record(pos).gender == corpus::Gender::F ? gf : gm) += 1;
        same_subject_cross += gf * gm;
    }
    return f * m - same_subject_cross;
}

}  // namespace

PairEnumeration enumerate_pairs(const corpus::DatasetView& view, const PairPolicy& policy,
                                std::uint64_t materialize_limit) {
    if (view.empty()) {
        throw Error(ErrorKind::invalid_input, "enumerate_pairs: empty view");
    }
    if (policy.sampled && policy.max_pairs < 1) {
        throw Error(ErrorKind::invalid_input, "sampled mode requires max_pairs >= 1");
    }
    const SubjectGroups sg = group_by_subject(view);

    PairEnumeration out;
    for (const auto& g : sg.groups) {
        for (std::size_t a = 0; a < g.size(); ++a) {
            for (std::size_t b = a + 1; b < g.size(); ++b) {
                out.genuine.emplace_back(g[a], g[b]);
            }
        }
    }
    out.genuine_count = out.genuine.size();
    out.no_genuine = out.genuine.empty();
    out.impostor_count = count_impostors(view, sg, policy.scope);

    const std::uint64_t v = view.size();
    const auto materialize_all = [&] {
        out.impostor.reserve(out.impostor_count);
        for (std::uint32_t i = 0; i < v; ++i) {
            for (std::uint32_t j = i + 1; j < v; ++j) {
                if (in_scope(view, policy.scope, i, j)) out.impostor.emplace_back(i, j);
            }
        }
        out.impostor_materialized = true;
    };

    if (!policy.sampled) {
        if (out.impostor_count <= materialize_limit) materialize_all();
        return out;
    }

    if (policy.max_pairs >= out.impostor_count) {
        materialize_all();
        return out;
    }

    // Without-replacement draw: rejection over the unordered-pair index
    // space, deterministic per seed.
    Rng rng(derive_seed(policy.seed, {0x70616972ULL}));  // "pair"
    const std::uint64_t total = v * (v - 1) / 2;
    std::unordered_set<std::uint64_t> taken;
    taken.reserve(policy.max_pairs * 2);
    out.impostor.reserve(policy.max_pairs);
    while (out.impostor.size() < policy.max_pairs) {
        const std::uint64_t k = rng.bounded(total);
        const auto [i, j] = unrank_pair(k, v);
        if (!in_scope(view, policy.scope, i, j)) continue;
        if (!taken.insert(k).second) continue;
        out.impostor.emplace_back(i, j);
    }
    out.impostor_materialized = true;
    return out;
}

namespace {

constexpr std::uint32_t kRowBlock = 64;       // exhaustive scoring: rows per block
constexpr std::size_t kListBlock = 65536;     // list scoring: pairs per block

void score_pair_list(const corpus::DatasetView& view, const std::vector<IndexPair>& pairs,
                     int workers, std::size_t bins, Histogram& out) {
    const std::size_t blocks = (pairs.size() + kListBlock - 1) / kListBlock;
    std::vector<Histogram> partial(blocks, Histogram(out.lo(), out.hi(), bins));
    parallel_blocks(blocks, workers, [&](std::size_t b) {
        const std::size_t begin = b * kListBlock;
        const std::size_t end = std::min(begin + kListBlock, pairs.size());
        Histogram& h = partial[b];
        for (std::size_t p = begin; p < end; ++p) {
            h.add(cosine(view.embedding(pairs[p].first), view.embedding(pairs[p].second)));
        }
    });
    for (const auto& h : partial) out.merge(h);
}

}  // namespace

ScoreDistributions score_distributions(const corpus::DatasetView& view,
                                       const PairPolicy& policy, int workers,
                                       std::size_t bins) {
    if (view.dataset().embeddings.empty()) {
        throw Error(ErrorKind::invalid_input, "score_distributions: no embeddings");
    }
    ScoreDistributions out{Histogram(-1.0, 1.0, bins), Histogram(-1.0, 1.0, bins), false};

    // Genuine pairs are few; always scored from the materialized list.
    PairPolicy count_only = policy;
    count_only.sampled = false;
    const PairEnumeration pe = enumerate_pairs(view, policy, /*materialize_limit=*/0);
    out.no_genuine = pe.no_genuine;
    score_pair_list(view, pe.genuine, workers, bins, out.genuine);

    if (policy.sampled) {
        score_pair_list(view, pe.impostor, workers, bins, out.impostor);
        return out;
    }

    // Exhaustive impostors: iterate the upper triangle in fixed row blocks.
    const std::uint32_t v = static_cast<std::uint32_t>(view.size());
    const std::size_t blocks = (v + kRowBlock - 1) / kRowBlock;
    std::vector<Histogram> partial(blocks, Histogram(-1.0, 1.0, bins));
    // Subject/gender keys resolved once; string compares are too slow per pair.
    std::vector<std::uint32_t> subject_key(v);
    std::vector<std::uint8_t> gender_key(v);
    {
        std::unordered_map<std::string, std::uint32_t> ids;
        for (std::uint32_t pos = 0; pos < v; ++pos) {
            const auto& rec = view.record(pos);
            auto [it, inserted] =
                ids.emplace(rec.subject_id, static_cast<std::uint32_t>(ids.size()));
            subject_key[pos] = it->second;
            gender_key[pos] = static_cast<std::uint8_t>(rec.gender);
        }
    }
    const bool cross_only = policy.scope == PairPolicy::Scope::cross_gender;
    parallel_blocks(blocks, workers, [&](std::size_t b) {
        Histogram& h = partial[b];
        const std::uint32_t row_begin = static_cast<std::uint32_t>(b) * kRowBlock;
        const std::uint32_t row_end = std::min(row_begin + kRowBlock, v);
        for (std::uint32_t i = row_begin; i < row_end; ++i) {
            const auto ei = view.embedding(i);
            for (std::uint32_t j = i + 1; j < v; ++j) {
                if (subject_key[i] == subject_key[j]) continue;
                if (cross_only && gender_key[i] == gender_key[j]) continue;
                h.add(cosine(ei, view.embedding(j)));
            }
        }
    });
    for (const auto& h : partial) out.impostor.merge(h);
    return out;
}

std::optional<double> d_prime(const Moments& a, const Moments& b) {
    if (a.n < 2 || b.n < 2) return std::nullopt;
    const double pooled = (a.variance() + b.variance()) / 2.0;
    if (pooled <= 0.0) return std::nullopt;
    return std::abs(a.mean - b.mean) / std::sqrt(pooled);
}

std::optional<double> d_prime(const Histogram& a, const Histogram& b) {
    return d_prime(a.moments(), b.moments());
}

Rates fmr_fnmr(const Histogram& genuine, const Histogram& impostor, double threshold) {
    if (genuine.n() == 0 || impostor.n() == 0) {
        throw Error(ErrorKind::degenerate, "fmr_fnmr: empty distribution");
    }
    if (genuine.lo() != impostor.lo() || genuine.hi() != impostor.hi() ||
        genuine.bin_count() != impostor.bin_count()) {
        throw Error(ErrorKind::invalid_input, "fmr_fnmr: histograms must share binning");
    }
    const std::size_t bins = genuine.bin_count();
    long long k = std::llround((threshold - genuine.lo()) / genuine.bin_width());
    k = std::clamp<long long>(k, 0, static_cast<long long>(bins));
    Rates r;
    r.threshold = genuine.edge(static_cast<std::size_t>(k));
    r.snap_distance = std::abs(threshold - r.threshold);
    std::uint64_t imp_ge = 0, gen_lt = 0;
    for (std::size_t b = static_cast<std::size_t>(k); b < bins; ++b) {
        imp_ge += impostor.counts()[b];
    }
    for (std::size_t b = 0; b < static_cast<std::size_t>(k); ++b) {
        gen_lt += genuine.counts()[b];
    }
    r.fmr = static_cast<double>(imp_ge) / static_cast<double>(impostor.n());
    r.fnmr = static_cast<double>(gen_lt) / static_cast<double>(genuine.n());
    return r;
}

std::vector<RocPoint> roc_points(const Histogram& genuine, const Histogram& impostor,
                                 const std::vector<double>& levels) {
    if (genuine.n() == 0 || impostor.n() == 0) {
        throw Error(ErrorKind::degenerate, "roc_points: empty distribution");
    }
    const std::size_t bins = genuine.bin_count();
    // fmr/fnmr at every edge k = 0..bins.
    std::vector<double> fmr(bins + 1), fnmr(bins + 1);
    {
        std::uint64_t suffix = impostor.n();
        std::uint64_t prefix = 0;
        for (std::size_t k = 0; k <= bins; ++k) {
            fmr[k] = static_cast<double>(suffix) / static_cast<double>(impostor.n());
            fnmr[k] = static_cast<double>(prefix) / static_cast<double>(genuine.n());
            if (k < bins) {
                suffix -= impostor.counts()[k];
                prefix += genuine.counts()[k];
            }
        }
    }
    std::vector<RocPoint> out;
    out.reserve(levels.size());
    for (double target : levels) {
        std::size_t best = 0;
        double best_gap = std::abs(fmr[0] - target);
        for (std::size_t k = 1; k <= bins; ++k) {
            const double gap = std::abs(fmr[k] - target);
            if (gap < best_gap) {
                best_gap = gap;
                best = k;
            }
        }
        out.push_back({genuine.edge(best), fmr[best], fnmr[best]});
    }
    return out;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

void write_hist_csv(const std::filesystem::path& path, const std::vector<HistSeries>& series) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << "series,group,bin_lo,bin_hi,count\n";
    for (const auto& s : series) {
        const Histogram& h = *s.hist;
        for (std::size_t b = 0; b < h.bin_count(); ++b) {
            if (h.counts()[b] == 0) continue;  // sparse emission
            out << s.series << ',' << s.group << ',' << fmt(h.edge(b)) << ','
                << fmt(h.edge(b + 1)) << ',' << h.counts()[b] << '\n';
        }
    }
}

void write_dprime_csv(const std::filesystem::path& path, const std::vector<DPrimeRow>& rows) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << "comparison,d_prime,n1,n2,mean1,mean2,var1,var2\n";
    for (const auto& r : rows) {
        out << r.comparison << ',' << (r.d_prime ? fmt(*r.d_prime) : "degenerate") << ','
            << r.a.n << ',' << r.b.n << ',' << fmt(r.a.mean) << ',' << fmt(r.b.mean) << ','
            << fmt(r.a.variance()) << ',' << fmt(r.b.variance()) << '\n';
    }
}

}  // namespace faceaudit::scorekit
