#include "faceaudit/facespace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>

#include "faceaudit/parallel.hpp"
#include "faceaudit/rng.hpp"

namespace faceaudit::facespace {

EigenResult jacobi_eigensymmetric(Matrix a) {
    if (a.rows != a.cols) {
        throw Error(ErrorKind::invalid_input, "jacobi: matrix must be square");
    }
    const std::size_t n = a.rows;
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) s += a.at(p, q) * a.at(p, q);
        }
        return std::sqrt(2.0 * s);
    };
    double frob = 0.0;
    for (double x : a.data) frob += x * x;
    frob = std::sqrt(frob);
    const double stop = std::max(1e-14 * frob, 1e-300);

    for (int sweep = 0; sweep < 100 && off_norm() > stop; ++sweep) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (apq == 0.0) continue;
                const double app = a.at(p, p);
                const double aqq = a.at(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                // smaller-magnitude root for stability
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a.at(i, p);
                    const double aiq = a.at(i, q);
                    a.at(i, p) = c * aip - s * aiq;
                    a.at(i, q) = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a.at(p, i);
                    const double aqi = a.at(q, i);
                    a.at(p, i) = c * api - s * aqi;
                    a.at(q, i) = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = v.at(i, p);
                    const double viq = v.at(i, q);
                    v.at(i, p) = c * vip - s * viq;
                    v.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = a.at(i, i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return diag[x] > diag[y]; });

    EigenResult out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = diag[order[k]];
        for (std::size_t i = 0; i < n; ++i) out.vectors.at(k, i) = v.at(i, order[k]);
    }
    return out;
}

namespace {

// Sign convention: largest-|component| entry is positive. Keeps the two PCA
// routes comparable and runs reproducible.
void normalize_sign(Matrix& basis) {
    for (std::size_t r = 0; r < basis.rows; ++r) {
        double* row = basis.row(r);
        std::size_t arg = 0;
        for (std::size_t c = 1; c < basis.cols; ++c) {
            if (std::abs(row[c]) > std::abs(row[arg])) arg = c;
        }
        if (row[arg] < 0.0) {
            for (std::size_t c = 0; c < basis.cols; ++c) row[c] = -row[c];
        }
    }
}

}  // namespace

FaceSpace fit_pca_matrix(const Matrix& x, PcaRoute route) {
    const std::size_t n = x.rows;
    const std::size_t dim = x.cols;
    if (n < 2) throw Error(ErrorKind::invalid_input, "fit_pca: need at least 2 samples");

    FaceSpace fs;
    fs.n = n;
    fs.mean.assign(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = x.row(i);
        for (std::size_t c = 0; c < dim; ++c) fs.mean[c] += row[c];
    }
    for (double& m : fs.mean) m /= static_cast<double>(n);

    Matrix centered(n, dim);
    double total_ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* src = x.row(i);
        double* dst = centered.row(i);
        for (std::size_t c = 0; c < dim; ++c) {
            dst[c] = src[c] - fs.mean[c];
            total_ss += dst[c] * dst[c];
        }
    }
    fs.total_variance = total_ss / static_cast<double>(n - 1);

    if (route == PcaRoute::automatic) {
        route = (n - 1 < dim) ? PcaRoute::gram : PcaRoute::covariance;
    }
    const std::size_t max_rank = std::min(n - 1, dim);

    std::vector<double> values;
    Matrix basis;
    if (route == PcaRoute::gram) {
        Matrix gram(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i; j < n; ++j) {
                double dot = 0.0;
                const double* ri = centered.row(i);
                const double* rj = centered.row(j);
                for (std::size_t c = 0; c < dim; ++c) dot += ri[c] * rj[c];
                gram.at(i, j) = gram.at(j, i) = dot / static_cast<double>(n - 1);
            }
        }
        EigenResult eig = jacobi_eigensymmetric(std::move(gram));
        const double lambda_max = eig.values.empty() ? 0.0 : std::max(eig.values[0], 0.0);
        const double cut = std::max(lambda_max * 1e-10, 1e-12);
        std::size_t k = 0;
        while (k < max_rank && k < eig.values.size() && eig.values[k] > cut) ++k;
        values.assign(eig.values.begin(), eig.values.begin() + k);
        basis = Matrix(k, dim);
        for (std::size_t r = 0; r < k; ++r) {
            double* face = basis.row(r);
            for (std::size_t i = 0; i < n; ++i) {
                const double u = eig.vectors.at(r, i);
                if (u == 0.0) continue;
                const double* ri = centered.row(i);
                for (std::size_t c = 0; c < dim; ++c) face[c] += u * ri[c];
            }
            double norm = 0.0;
            for (std::size_t c = 0; c < dim; ++c) norm += face[c] * face[c];
            norm = std::sqrt(norm);
            for (std::size_t c = 0; c < dim; ++c) face[c] /= norm;
        }
    } else {
        Matrix cov(dim, dim);
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = centered.row(i);
            for (std::size_t a = 0; a < dim; ++a) {
                const double ra = row[a];
                if (ra == 0.0) continue;
                double* cov_row = cov.row(a);
                for (std::size_t b = a; b < dim; ++b) cov_row[b] += ra * row[b];
            }
        }
        for (std::size_t a = 0; a < dim; ++a) {
            for (std::size_t b = a; b < dim; ++b) {
                cov.at(a, b) /= static_cast<double>(n - 1);
                cov.at(b, a) = cov.at(a, b);
            }
        }
        EigenResult eig = jacobi_eigensymmetric(std::move(cov));
        const double lambda_max = eig.values.empty() ? 0.0 : std::max(eig.values[0], 0.0);
        const double cut = std::max(lambda_max * 1e-10, 1e-12);
        std::size_t k = 0;
        while (k < max_rank && k < eig.values.size() && eig.values[k] > cut) ++k;
        values.assign(eig.values.begin(), eig.values.begin() + k);
        basis = Matrix(k, dim);
        for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t c = 0; c < dim; ++c) basis.at(r, c) = eig.vectors.at(r, c);
        }
    }

    normalize_sign(basis);
    fs.eigenvalues = std::move(values);
    fs.basis = std::move(basis);
    fs.degenerate = fs.eigenvalues.empty();
    return fs;
}

namespace {

std::vector<double> preprocess_image(std::span<const std::uint8_t> image,
                                     const std::optional<maskmetrics::BinaryMask>& stencil) {
    std::vector<double> out(image.size());
    for (std::size_t p = 0; p < image.size(); ++p) {
        out[p] = (!stencil || stencil->get(p)) ? static_cast<double>(image[p]) / 255.0 : 0.0;
    }
    return out;
}

}  // namespace

FaceSpace fit_pca(const corpus::DatasetView& view,
                  const std::optional<maskmetrics::BinaryMask>& stencil, PcaRoute route,
                  int workers) {
    const corpus::Dataset& ds = view.dataset();
    if (!ds.images) {
        throw Error(ErrorKind::invalid_input, "fit_pca: dataset has no pixel data (images.bin)");
    }
    if (view.size() < 2) {
        throw Error(ErrorKind::invalid_input, "fit_pca: need at least 2 images");
    }
    if (stencil && (stencil->height() != ds.height || stencil->width() != ds.width)) {
        throw Error(ErrorKind::invalid_input, "fit_pca: stencil dimensions mismatch");
    }
    const std::size_t dim = ds.pixels();
    Matrix x(view.size(), dim);
    parallel_blocks(view.size(), workers, [&](std::size_t i) {
        const auto img = view.image_grid(i);
        double* row = x.row(i);
        for (std::size_t p = 0; p < dim; ++p) {
            row[p] = (!stencil || stencil->get(p)) ? static_cast<double>(img[p]) / 255.0 : 0.0;
        }
    });
    FaceSpace fs = fit_pca_matrix(x, route);
    fs.height = ds.height;
    fs.width = ds.width;
    fs.stencil = stencil;
    return fs;
}

VarianceCurve variance_curve(const FaceSpace& fs) {
    if (fs.degenerate || fs.total_variance <= 0.0) {
        throw Error(ErrorKind::degenerate, "variance_curve: degenerate face space");
    }
    VarianceCurve curve;
    curve.cumulative.reserve(fs.k());
    double acc = 0.0;
    for (double lambda : fs.eigenvalues) {
        acc += lambda;
        curve.cumulative.push_back(acc / fs.total_variance);
    }
    return curve;
}

std::size_t components_for_variance(const FaceSpace& fs, double target) {
    if (!(target > 0.0) || target > 1.0) {
        throw Error(ErrorKind::invalid_input, "variance target must be in (0, 1]");
    }
    const VarianceCurve curve = variance_curve(fs);
    for (std::size_t j = 0; j < curve.cumulative.size(); ++j) {
        if (curve.cumulative[j] >= target - 1e-12) return j + 1;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", curve.cumulative.back());
    throw Error(ErrorKind::infeasible,
                "variance target " + std::to_string(target) + " unreachable; spectrum tops out at " +
                    buf);
}

double reconstruction_error(const FaceSpace& fs, std::size_t k,
                            std::span<const std::uint8_t> image) {
    if (k > fs.k()) {
        throw Error(ErrorKind::invalid_input, "reconstruction_error: k exceeds basis size");
    }
    if (image.size() != fs.mean.size()) {
        throw Error(ErrorKind::invalid_input, "reconstruction_error: image size mismatch");
    }
    const std::size_t dim = fs.mean.size();
    std::vector<double> y = preprocess_image(image, fs.stencil);
    for (std::size_t p = 0; p < dim; ++p) y[p] -= fs.mean[p];

    std::vector<double> coeff(k, 0.0);
    for (std::size_t r = 0; r < k; ++r) {
        const double* b = fs.basis.row(r);
        double dot = 0.0;
        for (std::size_t p = 0; p < dim; ++p) dot += b[p] * y[p];
        coeff[r] = dot;
    }
    std::vector<double> recon(dim, 0.0);
    for (std::size_t r = 0; r < k; ++r) {
        const double c = coeff[r];
        if (c == 0.0) continue;
        const double* b = fs.basis.row(r);
        for (std::size_t p = 0; p < dim; ++p) recon[p] += c * b[p];
    }
    double ss = 0.0;
    std::size_t denom = 0;
    for (std::size_t p = 0; p < dim; ++p) {
        if (fs.stencil && !fs.stencil->get(p)) continue;
        const double e = y[p] - recon[p];
        ss += e * e;
        ++denom;
    }
    if (denom == 0) return 0.0;
    return std::sqrt(ss / static_cast<double>(denom));
}

corpus::DatasetView best_image_per_subject(const corpus::DatasetView& view,
                                           maskmetrics::LabelSet face_labels) {
    struct Best {
        double fraction = -1.0;
        std::uint32_t dataset_index = 0;
        std::size_t row = 0;
    };
    std::unordered_map<std::string, Best> best;
    const int h = view.dataset().height;
    const int w = view.dataset().width;
    for (std::size_t i = 0; i < view.size(); ++i) {
        const auto& rec = view.record(i);
        const double frac =
            maskmetrics::percent_face(maskmetrics::face_mask(view.label_grid(i), h, w, face_labels));
        auto [it, inserted] = best.emplace(rec.subject_id, Best{});
        Best& b = it->second;
        if (inserted || frac > b.fraction || (frac == b.fraction && rec.row < b.row)) {
            b.fraction = frac;
            b.dataset_index = view.indices()[i];
            b.row = rec.row;
        }
    }
    std::vector<std::uint32_t> indices;
    indices.reserve(best.size());
    for (const auto& [sid, b] : best) indices.push_back(b.dataset_index);
    std::sort(indices.begin(), indices.end());
    return corpus::DatasetView(view.dataset(), std::move(indices));
}

corpus::DatasetView sample_to_count(const corpus::DatasetView& view, std::size_t count,
                                    std::uint64_t seed) {
    if (count > view.size()) {
        throw Error(ErrorKind::infeasible,
                    "sample_to_count: requested " + std::to_string(count) + " from view of " +
                        std::to_string(view.size()));
    }
    std::vector<std::uint32_t> pool = view.indices();
    Rng rng(derive_seed(seed, {0x73616d70ULL}));  // "samp"
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + rng.bounded(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return corpus::DatasetView(view.dataset(), std::move(pool));
}

int AgeBins::bin_of(std::optional<int> age) const {
    if (!age) return -1;
    int bin = -1;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (*age >= edges[i]) bin = static_cast<int>(i);
    }
    // ages below the first edge share bin 0 with it
    return bin < 0 ? 0 : bin;
}

std::string AgeBins::bin_name(int bin) const {
    if (bin < 0) return "unknown";
    const int lo = edges[static_cast<std::size_t>(bin)];
    if (static_cast<std::size_t>(bin) + 1 < edges.size()) {
        return std::to_string(lo) + "-" + std::to_string(edges[static_cast<std::size_t>(bin) + 1] - 1);
    }
    return std::to_string(lo) + "+";
}

corpus::DatasetView match_demographics(const corpus::DatasetView& source,
                                       const corpus::DatasetView& reference,
                                       const AgeBins& bins, std::uint64_t seed) {
    if (bins.edges.empty()) {
        throw Error(ErrorKind::invalid_input, "match_demographics: no age bins");
    }
    std::map<int, std::size_t> ref_counts;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        ++ref_counts[bins.bin_of(reference.record(i).age)];
    }
    std::map<int, std::vector<std::uint32_t>> source_bins;
    for (std::size_t i = 0; i < source.size(); ++i) {
        source_bins[bins.bin_of(source.record(i).age)].push_back(source.indices()[i]);
    }
    std::vector<std::uint32_t> chosen;
    for (const auto& [bin, need] : ref_counts) {
        auto it = source_bins.find(bin);
        const std::size_t have = it == source_bins.end() ? 0 : it->second.size();
        if (have < need) {
            throw Error(ErrorKind::infeasible,
                        "age bin " + bins.bin_name(bin) + ": need " + std::to_string(need) +
                            ", source has " + std::to_string(have) + " (deficit " +
                            std::to_string(need - have) + ")");
        }
        std::vector<std::uint32_t>& pool = it->second;
        Rng rng(derive_seed(seed, {0x62696eULL, static_cast<std::uint64_t>(bin + 1)}));
        for (std::size_t i = 0; i < need; ++i) {
            const std::size_t j = i + rng.bounded(pool.size() - i);
            std::swap(pool[i], pool[j]);
        }
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(need));
    }
    std::sort(chosen.begin(), chosen.end());
    return corpus::DatasetView(source.dataset(), std::move(chosen));
}

LowErrorSelection select_low_error(const corpus::DatasetView& candidates, std::size_t keep,
                                   double variance_target,
                                   const std::optional<maskmetrics::BinaryMask>& stencil,
                                   PcaRoute route, int workers) {
    if (keep > candidates.size()) {
        throw Error(ErrorKind::infeasible, "select_low_error: keep exceeds candidate count");
    }
    const FaceSpace fs = fit_pca(candidates, stencil, route, workers);
    const std::size_t k = components_for_variance(fs, variance_target);

    std::vector<RankedError> ranked(candidates.size());
    parallel_blocks(candidates.size(), workers, [&](std::size_t i) {
        ranked[i] = {candidates.record(i).image_id, candidates.indices()[i],
                     reconstruction_error(fs, k, candidates.image_grid(i))};
    });
    std::stable_sort(ranked.begin(), ranked.end(), [&](const RankedError& a, const RankedError& b) {
        if (a.rmse != b.rmse) return a.rmse < b.rmse;
        return candidates.dataset().records[a.dataset_index].row <
               candidates.dataset().records[b.dataset_index].row;
    });

    std::vector<std::uint32_t> indices;
    indices.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) indices.push_back(ranked[i].dataset_index);
    std::sort(indices.begin(), indices.end());

    LowErrorSelection out;
    out.view = corpus::DatasetView(candidates.dataset(), std::move(indices));
    out.k = k;
    out.ranked = std::move(ranked);
    return out;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

void write_variance_curve_csv(const std::filesystem::path& path,
                              const std::vector<std::pair<std::string, VarianceCurve>>& curves) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << "group,component_index,cumulative_fraction\n";
    for (const auto& [group, curve] : curves) {
        for (std::size_t j = 0; j < curve.cumulative.size(); ++j) {
            out << group << ',' << (j + 1) << ',' << fmt(curve.cumulative[j]) << '\n';
        }
    }
}

void write_recon_errors_csv(const std::filesystem::path& path, std::size_t k,
                            const std::vector<RankedError>& ranked) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << "image_id,k,rmse\n";
    for (const auto& r : ranked) {
        out << r.image_id << ',' << k << ',' << fmt(r.rmse) << '\n';
    }
}

}  // namespace faceaudit::facespace
