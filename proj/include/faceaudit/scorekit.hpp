#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "faceaudit/corpus.hpp"

// Genuine/impostor score distributions and the summary statistics built on
// them. Moments are streamed (Welford) independently of the binning, so
// d-prime does not depend on histogram resolution.

namespace faceaudit::scorekit {

struct Moments {
    std::uint64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
    }

    // Chan's parallel combination; exact given a fixed merge order.
    void merge(const Moments& o) {
        if (o.n == 0) return;
        if (n == 0) { *this = o; return; }
        const double delta = o.mean - mean;
        const std::uint64_t total = n + o.n;
        mean += delta * static_cast<double>(o.n) / static_cast<double>(total);
        m2 += o.m2 + delta * delta * static_cast<double>(n) *
                         static_cast<double>(o.n) / static_cast<double>(total);
        n = total;
    }

    double variance() const { return n >= 2 ? m2 / static_cast<double>(n - 1) : 0.0; }
};

class Histogram {
public:
    explicit Histogram(double lo = -1.0, double hi = 1.0, std::size_t bins = 1000);

    // Out-of-range samples clamp into the edge bins; moments see the raw value.
    void add(double x);
    void merge(const Histogram& o);

    double lo() const { return lo_; }
    double hi() const { return hi_; }
    std::size_t bin_count() const { return counts_.size(); }
    double bin_width() const { return (hi_ - lo_) / static_cast<double>(counts_.size()); }
    double edge(std::size_t k) const { return lo_ + bin_width() * static_cast<double>(k); }

    const std::vector<std::uint64_t>& counts() const { return counts_; }
    std::uint64_t n() const { return moments_.n; }
    double mean() const { return moments_.mean; }
    double variance() const { return moments_.variance(); }
    const Moments& moments() const { return moments_; }

private:
    double lo_, hi_;
    std::vector<std::uint64_t> counts_;
    Moments moments_;
};

struct PairPolicy {
    enum class Scope { within_group, cross_gender };
    Scope scope = Scope::within_group;
    bool sampled = false;        // default: exhaustive impostor scoring
    std::uint64_t max_pairs = 0; // sampled mode: >= 1
    std::uint64_t seed = 0;      // sampled mode: explicit seed required
};

using IndexPair = std::pair<std::uint32_t, std::uint32_t>;  // view positions, first < second

struct PairEnumeration {
    std::uint64_t genuine_count = 0;
    std::uint64_t impostor_count = 0;  // in-scope total (pre-sampling)
    std::vector<IndexPair> genuine;
    std::vector<IndexPair> impostor;   // sampled list, or exhaustive if materialized
    bool impostor_materialized = false;
    bool no_genuine = false;           // flag, not an error
};

// Exhaustive impostor pairs are materialized only up to materialize_limit;
// counts are exact either way. Sampled mode always materializes its draw.
PairEnumeration enumerate_pairs(const corpus::DatasetView& view, const PairPolicy& policy,
                                std::uint64_t materialize_limit = 2'000'000);

double cosine(std::span<const float> a, std::span<const float> b);

struct ScoreDistributions {
    Histogram genuine;
    Histogram impostor;
    bool no_genuine = false;
};

// Scores every in-scope pair exactly once. Deterministic for any worker
// count: the pair space is cut into fixed blocks merged in index order.
ScoreDistributions score_distributions(const corpus::DatasetView& view,
                                       const PairPolicy& policy, int workers = 0,
                                       std::size_t bins = 1000);

// |mean1 - mean2| / sqrt((var1 + var2) / 2); nullopt when pooled variance
// is zero or either side has n < 2.
std::optional<double> d_prime(const Moments& a, const Moments& b);
std::optional<double> d_prime(const Histogram& a, const Histogram& b);

struct Rates {
    double fmr = 0.0;
    double fnmr = 0.0;
    double threshold = 0.0;      // snapped bin edge actually used
    double snap_distance = 0.0;
};

// Computed from bin counts with the threshold snapped to the nearest edge.
Rates fmr_fnmr(const Histogram& genuine, const Histogram& impostor, double threshold);

struct RocPoint {
    double threshold = 0.0;
    double fmr = 0.0;
    double fnmr = 0.0;
};

// One point per requested FMR level: the bin edge whose FMR is closest to
// the target (smallest threshold on ties).
std::vector<RocPoint> roc_points(const Histogram& genuine, const Histogram& impostor,
                                 const std::vector<double>& levels);

// CSV emission ------------------------------------------------------------

struct HistSeries {
    std::string series;  // "genuine" | "impostor"
    std::string group;
    const Histogram* hist;
};

void write_hist_csv(const std::filesystem::path& path, const std::vector<HistSeries>& series);

struct DPrimeRow {
    std::string comparison;
    std::optional<double> d_prime;
    Moments a;
    Moments b;
};

void write_dprime_csv(const std::filesystem::path& path, const std::vector<DPrimeRow>& rows);

}  // namespace faceaudit::scorekit
