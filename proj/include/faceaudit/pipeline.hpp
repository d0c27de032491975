#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "faceaudit/corpus.hpp"
#include "faceaudit/equalize.hpp"
#include "faceaudit/facespace.hpp"
#include "faceaudit/maskmetrics.hpp"
#include "faceaudit/scorekit.hpp"
#include "faceaudit/synthlab.hpp"

// End-to-end synthetic analyses: fixed cohort recipes plus the staged runs
// the repro subcommand and the acceptance suite share.

namespace faceaudit::pipeline {

enum class Preset { quick, paper };

// Balanced groups; the female group has smaller between- and within-subject
// spread and a taller occlusion band.
synthlab::SynthConfig balanced_cohort(std::uint64_t seed, Preset preset = Preset::paper);
// Same knobs with a 4x male image surplus, so IoU pairing has room to
// select band-matched males.
synthlab::SynthConfig surplus_cohort(std::uint64_t seed, Preset preset = Preset::paper);
// Smaller cohort with a 2x male subject surplus for low-error selection.
synthlab::SynthConfig flip_cohort(std::uint64_t seed, Preset preset = Preset::paper);

struct GroupScores {
    scorekit::ScoreDistributions f;
    scorekit::ScoreDistributions m;
};

GroupScores score_by_gender(const corpus::Dataset& ds, int workers = 0,
                            const corpus::Filter& base = {});

struct EqualizationOutcome {
    maskmetrics::BinaryMask stencil;
    equalize::Pairing pairing;
    equalize::EqualizationReport report;
    corpus::Dataset regenerated;
    double genuine_mean_f_pre = 0.0;
    double genuine_mean_m_pre = 0.0;
    double genuine_mean_f_post = 0.0;
    double genuine_mean_m_post = 0.0;
};

EqualizationOutcome run_equalization(const synthlab::SynthConfig& cfg, const corpus::Dataset& ds,
                                     double level = 0.10,
                                     equalize::MatchMode mode = equalize::MatchMode::greedy_global,
                                     int workers = 0);

struct FacespaceOutcome {
    std::size_t n_f = 0;  // images per group after best-image + sampling
    std::size_t n_m = 0;
    std::size_t k_f = 0;  // components to reach the variance target
    std::size_t k_m = 0;
    facespace::VarianceCurve curve_f;
    facespace::VarianceCurve curve_m;
};

FacespaceOutcome run_facespace(const corpus::Dataset& ds, std::uint64_t seed,
                               double level = 0.10, double target = 0.95, int workers = 0,
                               const corpus::Filter& base = {});

struct FlipOutcome {
    std::size_t keep = 0;
    std::size_t rank_k = 0;  // components used for the error ranking
    std::size_t k95_female = 0;
    std::size_t k95_male_pool = 0;
    std::size_t k95_male_selected = 0;
    facespace::VarianceCurve curve_f;
    facespace::VarianceCurve curve_m_pool;
    facespace::VarianceCurve curve_m_selected;
    std::vector<facespace::RankedError> ranked;
};

// keep == 0 selects as many males as there are female subjects.
FlipOutcome run_flip(const corpus::Dataset& ds, double variance_target = 0.80,
                     double curve_target = 0.95, double level = 0.10, int workers = 0,
                     const corpus::Filter& base = {}, std::size_t keep = 0);

struct ReproSummary {
    double impostor_mean_f = 0.0;
    double impostor_mean_m = 0.0;
    double same_gender_dprime_f = 0.0;
    double same_gender_dprime_m = 0.0;
    double genuine_mean_f_pre = 0.0;
    double genuine_mean_m_pre = 0.0;
    double genuine_mean_f_post = 0.0;
    double genuine_mean_m_post = 0.0;
    double equalization_max_abs = 0.0;
    std::size_t k95_f = 0;
    std::size_t k95_m = 0;
    std::size_t flip_k95_female = 0;
    std::size_t flip_k95_male_selected = 0;
};

// Runs the full synthetic replica (scores, heatmaps, equalization,
// facespace, flip selection) and writes every artifact under out_dir.
// Byte-identical across runs with the same seed and preset.
ReproSummary run_repro(std::uint64_t seed, const std::filesystem::path& out_dir,
                       Preset preset = Preset::quick, int workers = 0);

}  // namespace faceaudit::pipeline
