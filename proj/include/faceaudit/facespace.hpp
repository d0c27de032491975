#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "faceaudit/corpus.hpp"
#include "faceaudit/maskmetrics.hpp"

// Eigenface analysis: PCA over stencil-zeroed grayscale pixels, variance
// curves, reconstruction-error ranking, and the subject-selection helpers
// feeding it. For n samples of dimension D with n-1 < D the decomposition
// runs on the n x n Gram matrix; eigenfaces are recovered and renormalized.

namespace faceaudit::facespace {

struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct EigenResult {
    std::vector<double> values;  // nonincreasing
    Matrix vectors;              // one eigenvector per row, matching values
};

// Cyclic Jacobi for symmetric matrices; deterministic, accurate to ~1e-13
// relative. Cubic cost: intended for n up to a few thousand.
EigenResult jacobi_eigensymmetric(Matrix a);

enum class PcaRoute { automatic, gram, covariance };

struct FaceSpace {
    std::vector<double> mean;          // length D
    Matrix basis;                      // k x D, orthonormal rows
    std::vector<double> eigenvalues;   // k, nonincreasing
    double total_variance = 0.0;       // trace of covariance, incl. discarded
    std::size_t n = 0;                 // fitted sample count
    int height = 0, width = 0;
    std::optional<maskmetrics::BinaryMask> stencil;
    bool degenerate = false;           // rank 0 (all samples identical)

    std::size_t k() const { return eigenvalues.size(); }
};

// Rows of x are samples. Centers in place of a copy; rank is cut at
// max(lambda_max * 1e-10, 1e-12) and capped at min(n-1, D).
FaceSpace fit_pca_matrix(const Matrix& x, PcaRoute route = PcaRoute::automatic);

// Pixel pipeline: grayscale scaled to [0,1], zeroed outside the stencil,
// flattened row-major.
FaceSpace fit_pca(const corpus::DatasetView& view,
                  const std::optional<maskmetrics::BinaryMask>& stencil = std::nullopt,
                  PcaRoute route = PcaRoute::automatic, int workers = 0);

struct VarianceCurve {
    std::vector<double> cumulative;  // c_1 <= ... <= c_k, fractions of total
};

VarianceCurve variance_curve(const FaceSpace& fs);

// Smallest k whose cumulative fraction reaches target; throws infeasible
// (reporting the reachable maximum) when the spectrum cannot get there.
std::size_t components_for_variance(const FaceSpace& fs, double target);

// RMSE between the preprocessed image and its rank-k reconstruction,
// measured over stencil pixels only.
double reconstruction_error(const FaceSpace& fs, std::size_t k,
                            std::span<const std::uint8_t> image);

// One row per subject: the image with the highest face fraction, ties to
// the smallest row index.
corpus::DatasetView best_image_per_subject(
    const corpus::DatasetView& view,
    maskmetrics::LabelSet face_labels = maskmetrics::LabelSet::default_face());

// Uniform without-replacement subsample; deterministic per seed. The
// resulting view keeps manifest order.
corpus::DatasetView sample_to_count(const corpus::DatasetView& view, std::size_t count,
                                    std::uint64_t seed);

// Age-bin edges: bin i is [edges[i], edges[i+1]), last bin open-ended.
// Records without an age form their own bin.
struct AgeBins {
    std::vector<int> edges;  // ascending
    int bin_of(std::optional<int> age) const;  // -1 = unknown-age bin
    std::string bin_name(int bin) const;
};

// Per age bin, samples from source exactly the number of records reference
// holds in that bin.
corpus::DatasetView match_demographics(const corpus::DatasetView& source,
                                       const corpus::DatasetView& reference,
                                       const AgeBins& bins, std::uint64_t seed);

struct RankedError {
    std::string image_id;
    std::uint32_t dataset_index = 0;
    double rmse = 0.0;
};

struct LowErrorSelection {
    corpus::DatasetView view;           // survivors, manifest order
    std::size_t k = 0;                  // components used for the ranking
    std::vector<RankedError> ranked;    // all candidates, ascending error
};

// Fits PCA on the full candidate set, ranks by reconstruction error at the
// variance target, keeps the lowest `keep`. Ties break by row index.
LowErrorSelection select_low_error(const corpus::DatasetView& candidates, std::size_t keep,
                                   double variance_target,
                                   const std::optional<maskmetrics::BinaryMask>& stencil,
                                   PcaRoute route = PcaRoute::automatic, int workers = 0);

void write_variance_curve_csv(const std::filesystem::path& path,
                              const std::vector<std::pair<std::string, VarianceCurve>>& curves);
void write_recon_errors_csv(const std::filesystem::path& path, std::size_t k,
                            const std::vector<RankedError>& ranked);

}  // namespace faceaudit::facespace
