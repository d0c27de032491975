#include "faceaudit/pipeline.hpp"

#include <fstream>

#include <json.hpp>

#include "faceaudit/svg.hpp"

namespace faceaudit::pipeline {

using corpus::Filter;
using corpus::Gender;
using synthlab::SynthConfig;

namespace {

SynthConfig base_replica(std::uint64_t seed, Preset preset) {
    SynthConfig cfg;
    cfg.dim = 64;
    cfg.height = 112;
    cfg.width = 112;
    cfg.lambda = 1.0;
    cfg.seed = seed;
    cfg.cohort = "replica";
    const bool paper = preset == Preset::paper;
    cfg.f.subjects = paper ? 200 : 80;
    cfg.f.images_per_subject = paper ? 5 : 4;
    cfg.f.sigma_between = 0.8;
    cfg.f.sigma_within = 0.672;
    cfg.f.occlusion_rows = 40;
    cfg.f.occlusion_jitter = 4;
    cfg.m.subjects = paper ? 200 : 80;
    cfg.m.images_per_subject = paper ? 5 : 4;
    cfg.m.sigma_between = 1.0;
    cfg.m.sigma_within = 0.8;
    cfg.m.occlusion_rows = 24;
    cfg.m.occlusion_jitter = 24;
    return cfg;
}

}  // namespace

SynthConfig balanced_cohort(std::uint64_t seed, Preset preset) {
    return base_replica(seed, preset);
}

SynthConfig surplus_cohort(std::uint64_t seed, Preset preset) {
    SynthConfig cfg = base_replica(seed, preset);
    cfg.m.subjects = preset == Preset::paper ? 800 : 320;
    return cfg;
}

SynthConfig flip_cohort(std::uint64_t seed, Preset preset) {
    SynthConfig cfg = base_replica(seed, preset);
    const bool paper = preset == Preset::paper;
    cfg.f.subjects = paper ? 160 : 64;
    cfg.m.subjects = paper ? 320 : 128;
    cfg.f.images_per_subject = 3;
    cfg.m.images_per_subject = 3;
    return cfg;
}

GroupScores score_by_gender(const corpus::Dataset& ds, int workers, const corpus::Filter& base) {
    Filter f_filter = base, m_filter = base;
    f_filter.gender = Gender::F;
    m_filter.gender = Gender::M;
    scorekit::PairPolicy policy;  // within-group exhaustive
    return GroupScores{
        scorekit::score_distributions(corpus::select(ds, f_filter), policy, workers),
        scorekit::score_distributions(corpus::select(ds, m_filter), policy, workers)};
}

EqualizationOutcome run_equalization(const SynthConfig& cfg, const corpus::Dataset& ds,
                                     double level, equalize::MatchMode mode, int workers) {
    Filter f_filter, m_filter;
    f_filter.gender = Gender::F;
    m_filter.gender = Gender::M;
    const corpus::DatasetView f_view = corpus::select(ds, f_filter);
    const corpus::DatasetView m_view = corpus::select(ds, m_filter);

    const GroupScores pre = score_by_gender(ds, workers);

    const maskmetrics::Heatmap heat_f = maskmetrics::heatmap(f_view, {}, workers);
    maskmetrics::BinaryMask stencil = maskmetrics::level_mask(heat_f, level);

    equalize::MatchOptions opts;
    opts.mode = mode;
    opts.workers = workers;
    equalize::Pairing pairing = equalize::match_images(f_view, m_view, stencil, opts);

    Filter selected_filter;
    selected_filter.image_ids.emplace();
    for (const auto& e : pairing.entries) selected_filter.image_ids->push_back(e.male_image_id);
    const corpus::DatasetView male_selected = corpus::select(ds, selected_filter);

    EqualizationOutcome out;
    out.report = equalize::equalization_report(f_view, male_selected, stencil);
    out.stencil = std::move(stencil);
    out.pairing = std::move(pairing);
    out.regenerated = synthlab::regenerate_masked(cfg, out.stencil, out.pairing);

    const GroupScores post = score_by_gender(out.regenerated, workers);
    out.genuine_mean_f_pre = pre.f.genuine.mean();
    out.genuine_mean_m_pre = pre.m.genuine.mean();
    out.genuine_mean_f_post = post.f.genuine.mean();
    out.genuine_mean_m_post = post.m.genuine.mean();
    return out;
}

FacespaceOutcome run_facespace(const corpus::Dataset& ds, std::uint64_t seed, double level,
                               double target, int workers, const corpus::Filter& base) {
    Filter f_filter = base, m_filter = base;
    f_filter.gender = Gender::F;
    m_filter.gender = Gender::M;
    const corpus::DatasetView f_view = corpus::select(ds, f_filter);
    const corpus::DatasetView m_view = corpus::select(ds, m_filter);

    const maskmetrics::Heatmap heat_f = maskmetrics::heatmap(f_view, {}, workers);
    const maskmetrics::BinaryMask stencil = maskmetrics::level_mask(heat_f, level);

    corpus::DatasetView f_fit = facespace::best_image_per_subject(f_view);
    corpus::DatasetView m_fit = facespace::best_image_per_subject(m_view);
    if (m_fit.size() > f_fit.size()) {
        m_fit = facespace::sample_to_count(m_fit, f_fit.size(), seed);
    } else if (f_fit.size() > m_fit.size()) {
        f_fit = facespace::sample_to_count(f_fit, m_fit.size(), seed);
    }

    const facespace::FaceSpace fs_f =
        facespace::fit_pca(f_fit, stencil, facespace::PcaRoute::automatic, workers);
    const facespace::FaceSpace fs_m =
        facespace::fit_pca(m_fit, stencil, facespace::PcaRoute::automatic, workers);

    FacespaceOutcome out;
    out.n_f = f_fit.size();
    out.n_m = m_fit.size();
    out.k_f = facespace::components_for_variance(fs_f, target);
    out.k_m = facespace::components_for_variance(fs_m, target);
    out.curve_f = facespace::variance_curve(fs_f);
    out.curve_m = facespace::variance_curve(fs_m);
    return out;
}

FlipOutcome run_flip(const corpus::Dataset& ds, double variance_target, double curve_target,
                     double level, int workers, const corpus::Filter& base, std::size_t keep) {
    Filter f_filter = base, m_filter = base;
    f_filter.gender = Gender::F;
    m_filter.gender = Gender::M;
    const corpus::DatasetView f_view = corpus::select(ds, f_filter);
    const corpus::DatasetView m_view = corpus::select(ds, m_filter);

    const maskmetrics::Heatmap heat_f = maskmetrics::heatmap(f_view, {}, workers);
    const maskmetrics::BinaryMask stencil = maskmetrics::level_mask(heat_f, level);

    const corpus::DatasetView f_pool = facespace::best_image_per_subject(f_view);
    const corpus::DatasetView m_pool = facespace::best_image_per_subject(m_view);

    FlipOutcome out;
    out.keep = keep == 0 ? f_pool.size() : keep;
    if (out.keep > m_pool.size()) {
        throw Error(ErrorKind::insufficient_pool,
                    "flip selection: keep (" + std::to_string(out.keep) +
                        ") exceeds male pool (" + std::to_string(m_pool.size()) + ")");
    }

    const facespace::FaceSpace fs_f =
        facespace::fit_pca(f_pool, stencil, facespace::PcaRoute::automatic, workers);
    const facespace::FaceSpace fs_m_pool =
        facespace::fit_pca(m_pool, stencil, facespace::PcaRoute::automatic, workers);

    facespace::LowErrorSelection sel = facespace::select_low_error(
        m_pool, out.keep, variance_target, stencil, facespace::PcaRoute::automatic, workers);
    const facespace::FaceSpace fs_m_sel =
        facespace::fit_pca(sel.view, stencil, facespace::PcaRoute::automatic, workers);

    out.rank_k = sel.k;
    out.k95_female = facespace::components_for_variance(fs_f, curve_target);
    out.k95_male_pool = facespace::components_for_variance(fs_m_pool, curve_target);
    out.k95_male_selected = facespace::components_for_variance(fs_m_sel, curve_target);
    out.curve_f = facespace::variance_curve(fs_f);
    out.curve_m_pool = facespace::variance_curve(fs_m_pool);
    out.curve_m_selected = facespace::variance_curve(fs_m_sel);
    out.ranked = std::move(sel.ranked);
    return out;
}

namespace {

void write_group_hists(const std::filesystem::path& path, const GroupScores& scores) {
    scorekit::write_hist_csv(path, {{"genuine", "F", &scores.f.genuine},
                                    {"impostor", "F", &scores.f.impostor},
                                    {"genuine", "M", &scores.m.genuine},
                                    {"impostor", "M", &scores.m.impostor}});
}

void write_group_dprime(const std::filesystem::path& path, const GroupScores& scores) {
    std::vector<scorekit::DPrimeRow> rows;
    rows.push_back({"cross-gender-genuine",
                    scorekit::d_prime(scores.f.genuine, scores.m.genuine),
                    scores.f.genuine.moments(), scores.m.genuine.moments()});
    rows.push_back({"cross-gender-impostor",
                    scorekit::d_prime(scores.f.impostor, scores.m.impostor),
                    scores.f.impostor.moments(), scores.m.impostor.moments()});
    rows.push_back({"same-gender-F", scorekit::d_prime(scores.f.genuine, scores.f.impostor),
                    scores.f.genuine.moments(), scores.f.impostor.moments()});
    rows.push_back({"same-gender-M", scorekit::d_prime(scores.m.genuine, scores.m.impostor),
                    scores.m.genuine.moments(), scores.m.impostor.moments()});
    scorekit::write_dprime_csv(path, rows);
}

}  // namespace

ReproSummary run_repro(std::uint64_t seed, const std::filesystem::path& out_dir, Preset preset,
                       int workers) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    for (const char* sub : {"cohort_a", "cohort_b", "cohort_c", "scores", "heatmaps", "pface",
                            "equalize", "equalized", "facespace", "flip"}) {
        fs::create_directories(out_dir / sub);
    }

    ReproSummary summary;

    // Balanced cohort: score distributions and d-prime tables.
    const SynthConfig cfg_a = balanced_cohort(seed, preset);
    synthlab::write_config(cfg_a, out_dir / "config_a.cfg");
    const corpus::Dataset ds_a = synthlab::generate(cfg_a, out_dir / "cohort_a");
    {
        const GroupScores scores = score_by_gender(ds_a, workers);
        write_group_hists(out_dir / "scores" / "scores_hist.csv", scores);
        write_group_dprime(out_dir / "scores" / "dprime.csv", scores);
        svg::render_csv("hist-overlay", out_dir / "scores" / "scores_hist.csv",
                        out_dir / "scores" / "scores_hist.svg",
                        {"score distributions by gender", ""});
        summary.impostor_mean_f = scores.f.impostor.mean();
        summary.impostor_mean_m = scores.m.impostor.mean();
        summary.same_gender_dprime_f =
            scorekit::d_prime(scores.f.genuine, scores.f.impostor).value_or(0.0);
        summary.same_gender_dprime_m =
            scorekit::d_prime(scores.m.genuine, scores.m.impostor).value_or(0.0);
    }

    // Surplus cohort: heatmaps, percent-face, equalization, facespace.
    const SynthConfig cfg_b = surplus_cohort(seed, preset);
    synthlab::write_config(cfg_b, out_dir / "config_b.cfg");
    const corpus::Dataset ds_b = synthlab::generate(cfg_b, out_dir / "cohort_b");
    Filter f_filter, m_filter;
    f_filter.gender = Gender::F;
    m_filter.gender = Gender::M;
    {
        const auto f_view = corpus::select(ds_b, f_filter);
        const auto m_view = corpus::select(ds_b, m_filter);
        const auto heat_f = maskmetrics::heatmap(f_view, {}, workers);
        const auto heat_m = maskmetrics::heatmap(m_view, {}, workers);
        maskmetrics::write_heatmap_csv(out_dir / "heatmaps" / "heatmap_f.csv", heat_f);
        maskmetrics::write_heatmap_csv(out_dir / "heatmaps" / "heatmap_m.csv", heat_m);
        maskmetrics::write_diff_heatmap_csv(out_dir / "heatmaps" / "heatmap_diff.csv",
                                            maskmetrics::diff_heatmap(heat_m, heat_f));
        svg::render_csv("heatmap", out_dir / "heatmaps" / "heatmap_f.csv",
                        out_dir / "heatmaps" / "heatmap_f.svg", {"female face frequency", ""});
        svg::render_csv("heatmap", out_dir / "heatmaps" / "heatmap_m.csv",
                        out_dir / "heatmaps" / "heatmap_m.svg", {"male face frequency", ""});
        svg::render_csv("diff-heatmap", out_dir / "heatmaps" / "heatmap_diff.csv",
                        out_dir / "heatmaps" / "heatmap_diff.svg",
                        {"male minus female face frequency", ""});

        const auto pface_f = maskmetrics::percent_face_histogram(f_view, 100);
        const auto pface_m = maskmetrics::percent_face_histogram(m_view, 100);
        maskmetrics::write_pface_csv(out_dir / "pface" / "pface_hist.csv",
                                     {{"F", &pface_f}, {"M", &pface_m}});
        svg::render_csv("hist-overlay", out_dir / "pface" / "pface_hist.csv",
                        out_dir / "pface" / "pface_hist.svg",
                        {"percent of image labelled face", ""});
    }
    {
        EqualizationOutcome eq = run_equalization(cfg_b, ds_b, 0.10,
                                                  equalize::MatchMode::greedy_global, workers);
        equalize::export_selection(eq.pairing, eq.stencil, out_dir / "equalize");
        maskmetrics::write_diff_heatmap_csv(out_dir / "equalize" / "equalize_diff.csv",
                                            eq.report.diff);
        svg::render_csv("diff-heatmap", out_dir / "equalize" / "equalize_diff.csv",
                        out_dir / "equalize" / "equalize_diff.svg",
                        {"equalized male minus female", ""});
        corpus::save_dataset(eq.regenerated, out_dir / "equalized" / "dataset");
        const GroupScores post = score_by_gender(eq.regenerated, workers);
        write_group_hists(out_dir / "equalized" / "scores_hist.csv", post);
        write_group_dprime(out_dir / "equalized" / "dprime.csv", post);
        svg::render_csv("hist-overlay", out_dir / "equalized" / "scores_hist.csv",
                        out_dir / "equalized" / "scores_hist.svg",
                        {"equalized score distributions", ""});
        nlohmann::json rep;
        rep["max_abs"] = eq.report.max_abs;
        rep["mean_abs"] = eq.report.mean_abs;
        rep["budget"] = eq.report.budget;
        rep["within_budget"] = eq.report.within_budget;
        rep["genuine_mean_f_pre"] = eq.genuine_mean_f_pre;
        rep["genuine_mean_m_pre"] = eq.genuine_mean_m_pre;
        rep["genuine_mean_f_post"] = eq.genuine_mean_f_post;
        rep["genuine_mean_m_post"] = eq.genuine_mean_m_post;
        std::ofstream(out_dir / "equalize" / "report.json") << rep.dump(2) << '\n';
        summary.genuine_mean_f_pre = eq.genuine_mean_f_pre;
        summary.genuine_mean_m_pre = eq.genuine_mean_m_pre;
        summary.genuine_mean_f_post = eq.genuine_mean_f_post;
        summary.genuine_mean_m_post = eq.genuine_mean_m_post;
        summary.equalization_max_abs = eq.report.max_abs;
    }
    {
        const FacespaceOutcome fo = run_facespace(ds_b, seed, 0.10, 0.95, workers);
        facespace::write_variance_curve_csv(out_dir / "facespace" / "variance_curve.csv",
                                            {{"F", fo.curve_f}, {"M", fo.curve_m}});
        svg::render_csv("curve", out_dir / "facespace" / "variance_curve.csv",
                        out_dir / "facespace" / "variance_curve.svg",
                        {"cumulative variance by components", ""});
        nlohmann::json j;
        j["n_f"] = fo.n_f;
        j["n_m"] = fo.n_m;
        j["k95_f"] = fo.k_f;
        j["k95_m"] = fo.k_m;
        std::ofstream(out_dir / "facespace" / "facespace.json") << j.dump(2) << '\n';
        summary.k95_f = fo.k_f;
        summary.k95_m = fo.k_m;
    }

    // Flip cohort: low-error male selection.
    const SynthConfig cfg_c = flip_cohort(seed, preset);
    synthlab::write_config(cfg_c, out_dir / "config_c.cfg");
    const corpus::Dataset ds_c = synthlab::generate(cfg_c, out_dir / "cohort_c");
    {
        const FlipOutcome fo = run_flip(ds_c, 0.80, 0.95, 0.10, workers);
        facespace::write_recon_errors_csv(out_dir / "flip" / "recon_errors.csv", fo.rank_k,
                                          fo.ranked);
        facespace::write_variance_curve_csv(out_dir / "flip" / "variance_curve.csv",
                                            {{"F", fo.curve_f},
                                             {"M-pool", fo.curve_m_pool},
                                             {"M-selected", fo.curve_m_selected}});
        svg::render_csv("curve", out_dir / "flip" / "variance_curve.csv",
                        out_dir / "flip" / "variance_curve.svg",
                        {"variance curves after low-error selection", ""});
        std::ofstream sel(out_dir / "flip" / "selection.jsonl");
        for (std::size_t i = 0; i < fo.keep; ++i) {
            nlohmann::json j;
            j["image_id"] = fo.ranked[i].image_id;
            sel << j.dump() << '\n';
        }
        nlohmann::json j;
        j["keep"] = fo.keep;
        j["rank_k"] = fo.rank_k;
        j["k95_female"] = fo.k95_female;
        j["k95_male_pool"] = fo.k95_male_pool;
        j["k95_male_selected"] = fo.k95_male_selected;
        std::ofstream(out_dir / "flip" / "flip.json") << j.dump(2) << '\n';
        summary.flip_k95_female = fo.k95_female;
        summary.flip_k95_male_selected = fo.k95_male_selected;
    }

    {
        nlohmann::json j;
        j["seed"] = seed;
        j["preset"] = preset == Preset::paper ? "paper" : "quick";
        j["impostor_mean_f"] = summary.impostor_mean_f;
        j["impostor_mean_m"] = summary.impostor_mean_m;
        j["same_gender_dprime_f"] = summary.same_gender_dprime_f;
        j["same_gender_dprime_m"] = summary.same_gender_dprime_m;
        j["genuine_mean_f_pre"] = summary.genuine_mean_f_pre;
        j["genuine_mean_m_pre"] = summary.genuine_mean_m_pre;
        j["genuine_mean_f_post"] = summary.genuine_mean_f_post;
        j["genuine_mean_m_post"] = summary.genuine_mean_m_post;
        j["equalization_max_abs"] = summary.equalization_max_abs;
        j["k95_f"] = summary.k95_f;
        j["k95_m"] = summary.k95_m;
        j["flip_k95_female"] = summary.flip_k95_female;
        j["flip_k95_male_selected"] = summary.flip_k95_male_selected;
        std::ofstream(out_dir / "summary.json") << j.dump(2) << '\n';
    }

    return summary;
}

}  // namespace faceaudit::pipeline
