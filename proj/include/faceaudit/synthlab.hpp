#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "faceaudit/corpus.hpp"
#include "faceaudit/equalize.hpp"
#include "faceaudit/maskmetrics.hpp"

// Seeded synthetic cohorts: embeddings, masks, images and manifests whose
// parameters directly control between-subject variance and occlusion.
//
// Construction notes (the properties the tests rely on):
//  - every identity shares a fixed unit mean-face component per dimension,
//    so a group with smaller sigma_between has impostor cosines centered
//    strictly higher;
//  - per-image noise is scaled by (1 + lambda * occluded_fraction), so less
//    visible face means worse genuine scores;
//  - pixel patterns are phase-modulated by the identity deviation, so a
//    group exploring a wider deviation range needs more eigenfaces for the
//    same variance fraction.

namespace faceaudit::synthlab {

struct GroupConfig {
    std::size_t subjects = 0;
    std::size_t images_per_subject = 1;
    double sigma_between = 1.0;
    double sigma_within = 0.5;
    int occlusion_rows = 0;     // hair-band height in pixels, from ellipse top
    int occlusion_jitter = 0;   // band height varies uniformly by +/- jitter
};

struct SynthConfig {
    std::size_t dim = 64;
    GroupConfig f;
    GroupConfig m;
    double lambda = 1.0;  // noise inflation per unit occluded fraction
    int height = 112;
    int width = 112;
    std::uint64_t seed = 0;
    std::string cohort = "synthetic";
    bool emit_images = true;

    void validate() const;
};

// Flat key=value file (one per line, '#' comments); overrides win.
SynthConfig parse_config(const std::filesystem::path& path,
                         const std::map<std::string, std::string>& overrides = {});
SynthConfig config_from_map(const std::map<std::string, std::string>& kv);
void write_config(const SynthConfig& cfg, const std::filesystem::path& path);

// Fully determined by cfg.seed; writes the four corpus files when out_dir
// is non-empty and always returns the in-memory dataset.
corpus::Dataset generate(const SynthConfig& cfg, const std::filesystem::path& out_dir = {});

// Re-emits the images referenced by the pairing (all females, the selected
// males) with the occluded fraction recomputed against the stencil, using
// the same identity and noise draws as generate(). Masks and images are
// zeroed outside the stencil.
corpus::Dataset regenerate_masked(const SynthConfig& cfg,
                                  const maskmetrics::BinaryMask& stencil,
                                  const equalize::Pairing& pairing,
                                  const std::filesystem::path& out_dir = {});

}  // namespace faceaudit::synthlab
