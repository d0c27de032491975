#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "faceaudit/corpus.hpp"
#include "faceaudit/maskmetrics.hpp"

// Information equalization: stencil every image to the female 10%-level
// mask, then pair each female image with a distinct male image by maximum
// face-pixel IoU.

namespace faceaudit::equalize {

maskmetrics::BinaryMask apply_stencil(const maskmetrics::BinaryMask& m,
                                      const maskmetrics::BinaryMask& stencil);

// Zeroes pixel intensities outside the stencil.
std::vector<std::uint8_t> apply_stencil_image(std::span<const std::uint8_t> pixels,
                                              const maskmetrics::BinaryMask& stencil);

// |a AND b| / |a OR b|; 1.0 when both masks are empty.
double iou(const maskmetrics::BinaryMask& a, const maskmetrics::BinaryMask& b);

enum class MatchMode { greedy_global, exact_assignment };

struct PairingEntry {
    std::string female_image_id;
    std::string male_image_id;
    double iou = 0.0;
};

struct Pairing {
    MatchMode mode = MatchMode::greedy_global;
    std::string stencil_hash;
    std::vector<PairingEntry> entries;  // one per female image, in commit order
};

struct MatchOptions {
    MatchMode mode = MatchMode::greedy_global;
    bool with_replacement = false;  // per-female argmax allowing male reuse
    int workers = 0;
};

// Greedy: repeatedly commits the highest-IoU unmatched pair, ties broken by
// (female_id, male_id). Exact: maximizes total IoU via rectangular
// assignment; intended for pools up to roughly 500x500.
Pairing match_images(const corpus::DatasetView& female, const corpus::DatasetView& male,
                     const maskmetrics::BinaryMask& stencil, const MatchOptions& opts = {});

struct EqualizationReport {
    maskmetrics::DiffHeatmap diff;  // selected-male minus female, stenciled masks
    double max_abs = 0.0;
    double mean_abs = 0.0;
    double budget = 0.05;
    bool within_budget = true;
};

EqualizationReport equalization_report(const corpus::DatasetView& female,
                                       const corpus::DatasetView& male_selected,
                                       const maskmetrics::BinaryMask& stencil,
                                       double max_abs_budget = 0.05);

// pairing.jsonl (header line with mode + stencil hash) and stencil.msk.
void export_selection(const Pairing& pairing, const maskmetrics::BinaryMask& stencil,
                      const std::filesystem::path& out_dir);
Pairing load_pairing(const std::filesystem::path& path);

std::string stencil_hash(const maskmetrics::BinaryMask& stencil);

// Maximum-total-weight rectangular assignment (rows <= cols). Returns the
// column assigned to each row. Exposed for direct oracle testing.
std::vector<std::size_t> solve_assignment(const std::vector<std::vector<double>>& weight);

// Greedy counterpart on an explicit weight matrix; same tie rule as
// match_images with rows/cols standing in for id order.
std::vector<std::size_t> greedy_assignment(const std::vector<std::vector<double>>& weight);

}  // namespace faceaudit::equalize
