#pragma once

#include <filesystem>
#include <string>

#include "faceaudit/error.hpp"

// Standalone SVG renderings of the CSV artifacts. One rect per heatmap
// cell; histograms and curves as step/poly lines. Everything deterministic:
// identical CSV input yields byte-identical SVG.

namespace faceaudit::svg {

struct PlotOptions {
    std::string title;
    std::string provenance;  // embedded as an SVG comment
};

// kind: hist-overlay | heatmap | diff-heatmap | curve.
// hist-overlay accepts scores_hist.csv (series,group,...) and
// pface_hist.csv (group,...); heatmap takes row,col,value[,n]; curve takes
// group,component_index,cumulative_fraction.
void render_csv(const std::string& kind, const std::filesystem::path& csv_path,
                const std::filesystem::path& out_svg, const PlotOptions& opts = {});

}  // namespace faceaudit::svg
