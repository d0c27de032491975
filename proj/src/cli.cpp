#include "faceaudit/cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "faceaudit/corpus.hpp"
#include "faceaudit/equalize.hpp"
#include "faceaudit/facespace.hpp"
#include "faceaudit/maskmetrics.hpp"
#include "faceaudit/pipeline.hpp"
#include "faceaudit/scorekit.hpp"
#include "faceaudit/svg.hpp"
#include "faceaudit/synthlab.hpp"

namespace faceaudit::cli {

namespace {

using nlohmann::json;

constexpr const char* kFormatVersion = "1";
constexpr const char* kDPrimeFormula = "abs(mean1-mean2)/sqrt((var1+var2)/2)";

struct CommonArgs {
    std::string dataset;
    std::string out;
    std::string gender;
    std::string cohort;
    int age_min = -1;
    int age_max = -1;
    int workers = 0;
};

corpus::Filter make_filter(const CommonArgs& args) {
    corpus::Filter f;
    if (!args.gender.empty()) f.gender = corpus::gender_from_string(args.gender);
    if (!args.cohort.empty()) f.cohort = args.cohort;
    if (args.age_min >= 0 || args.age_max >= 0) {
        f.age_range = {args.age_min >= 0 ? args.age_min : 0,
                       args.age_max >= 0 ? args.age_max : 1000};
    }
    return f;
}

std::string group_label(const CommonArgs& args) {
    std::string label = args.gender.empty() ? "all" : args.gender;
    if (!args.cohort.empty()) label += "/" + args.cohort;
    return label;
}

void write_run_json(const std::filesystem::path& out_dir, const std::string& subcommand,
                    json parameters) {
    std::filesystem::create_directories(out_dir);
    json j;
    j["subcommand"] = subcommand;
    j["format_version"] = kFormatVersion;
    j["dprime_formula"] = kDPrimeFormula;
    j["parameters"] = std::move(parameters);
    std::ofstream out(out_dir / "run.json");
    if (!out) throw Error(ErrorKind::io, "cannot write run.json");
    out << j.dump(2) << '\n';
}

corpus::Dataset load_or_die(const std::string& dir) {
    return corpus::load_dataset(dir).dataset;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool need_out = true) {
    cmd->add_option("--dataset", args.dataset, "dataset directory")->required();
    if (need_out) cmd->add_option("--out", args.out, "output directory")->required();
    cmd->add_option("--gender", args.gender, "filter: F or M");
    cmd->add_option("--cohort", args.cohort, "filter: cohort name");
    cmd->add_option("--age-min", args.age_min, "filter: minimum age");
    cmd->add_option("--age-max", args.age_max, "filter: maximum age");
    cmd->add_option("--workers", args.workers, "worker threads (0 = auto)");
}

// ---------------------------------------------------------------- ingest-check

int cmd_ingest_check(const CommonArgs& args) {
    const corpus::LoadResult lr = corpus::load_dataset(args.dataset);
    const corpus::ValidationReport report = corpus::validate(lr.dataset);
    std::cout << "dataset: " << args.dataset << "\n"
              << "records: " << lr.dataset.size() << ", dim: " << lr.dataset.dim << ", grid: "
              << lr.dataset.height << "x" << lr.dataset.width
              << (lr.dataset.images ? ", images: yes" : ", images: no") << "\n"
              << "normalized rows: " << lr.report.normalized_rows << "\n";
    for (const auto& check : report.checks) {
        const char* tag = check.passed ? "PASS" : (check.fatal ? "FAIL" : "WARN");
        std::cout << tag << ' ' << check.name;
        if (!check.offending_image_ids.empty()) {
            std::cout << " [";
            for (std::size_t i = 0; i < check.offending_image_ids.size() && i < 8; ++i) {
                if (i) std::cout << ' ';
                std::cout << check.offending_image_ids[i];
            }
            if (check.offending_image_ids.size() > 8) std::cout << " ...";
            std::cout << ']';
        }
        std::cout << '\n';
    }
    return report.all_passed() ? 0 : 2;
}

// ---------------------------------------------------------------------- scores

struct ScoresArgs {
    CommonArgs common;
    std::string scope = "within";
    std::uint64_t sampled = 0;
    std::uint64_t seed = 0;
    std::size_t bins = 1000;
    bool plot = false;
};

int cmd_scores(const ScoresArgs& args) {
    const corpus::Dataset ds = load_or_die(args.common.dataset);
    const corpus::DatasetView view = corpus::select(ds, make_filter(args.common));
    if (view.empty()) {
        throw Error(ErrorKind::invalid_input, "selection matched no records");
    }
    scorekit::PairPolicy policy;
    policy.scope = args.scope == "cross" ? scorekit::PairPolicy::Scope::cross_gender
                                         : scorekit::PairPolicy::Scope::within_group;
    if (args.sampled > 0) {
        policy.sampled = true;
        policy.max_pairs = args.sampled;
        policy.seed = args.seed;
    }
    const auto dist =
        scorekit::score_distributions(view, policy, args.common.workers, args.bins);
    const std::string label = group_label(args.common);
    std::filesystem::create_directories(args.common.out);
    const std::filesystem::path out(args.common.out);
    scorekit::write_hist_csv(out / "scores_hist.csv", {{"genuine", label, &dist.genuine},
                                                       {"impostor", label, &dist.impostor}});
    scorekit::write_dprime_csv(
        out / "dprime.csv",
        {{"genuine-vs-impostor/" + label, scorekit::d_prime(dist.genuine, dist.impostor),
          dist.genuine.moments(), dist.impostor.moments()}});
    if (args.plot) {
        svg::render_csv("hist-overlay", out / "scores_hist.csv", out / "scores_hist.svg",
                        {"score distributions: " + label, ""});
    }
    json params{{"dataset", args.common.dataset},  {"group", label},
                {"scope", args.scope},             {"sampled", args.sampled},
                {"seed", args.seed},               {"bins", args.bins},
                {"genuine_pairs", dist.genuine.n()}, {"impostor_pairs", dist.impostor.n()}};
    write_run_json(out, "scores", params);
    if (dist.no_genuine) std::cerr << "note: view has no genuine pairs\n";
    return 0;
}

// ---------------------------------------------------------------------- dprime

int cmd_dprime(const CommonArgs& args, bool plot) {
    const corpus::Dataset ds = load_or_die(args.dataset);
    corpus::Filter base = make_filter(args);
    base.gender.reset();  // the comparison is F vs M by construction
    const pipeline::GroupScores scores = pipeline::score_by_gender(ds, args.workers, base);
    const std::filesystem::path out(args.out);
    std::filesystem::create_directories(out);
    scorekit::write_hist_csv(out / "scores_hist.csv",
                             {{"genuine", "F", &scores.f.genuine},
                              {"impostor", "F", &scores.f.impostor},
                              {"genuine", "M", &scores.m.genuine},
                              {"impostor", "M", &scores.m.impostor}});
    std::vector<scorekit::DPrimeRow> rows;
    rows.push_back({"cross-gender-genuine", scorekit::d_prime(scores.f.genuine, scores.m.genuine),
                    scores.f.genuine.moments(), scores.m.genuine.moments()});
    rows.push_back({"cross-gender-impostor",
                    scorekit::d_prime(scores.f.impostor, scores.m.impostor),
                    scores.f.impostor.moments(), scores.m.impostor.moments()});
    rows.push_back({"same-gender-F", scorekit::d_prime(scores.f.genuine, scores.f.impostor),
                    scores.f.genuine.moments(), scores.f.impostor.moments()});
    rows.push_back({"same-gender-M", scorekit::d_prime(scores.m.genuine, scores.m.impostor),
                    scores.m.genuine.moments(), scores.m.impostor.moments()});
    scorekit::write_dprime_csv(out / "dprime.csv", rows);
    if (plot) {
        svg::render_csv("hist-overlay", out / "scores_hist.csv", out / "scores_hist.svg",
                        {"score distributions by gender", ""});
    }
    write_run_json(out, "dprime",
                   json{{"dataset", args.dataset}, {"cohort", args.cohort}});
    for (const auto& r : rows) {
        std::cout << r.comparison << ": "
                  << (r.d_prime ? std::to_string(*r.d_prime) : "degenerate") << '\n';
    }
    return 0;
}

// --------------------------------------------------------------------- heatmap

int cmd_heatmap(const CommonArgs& args, bool plot) {
    const corpus::Dataset ds = load_or_die(args.dataset);
    corpus::Filter base = make_filter(args);
    base.gender.reset();
    corpus::Filter f_filter = base, m_filter = base;
    f_filter.gender = corpus::Gender::F;
    m_filter.gender = corpus::Gender::M;
    const auto f_view = corpus::select(ds, f_filter);
    const auto m_view = corpus::select(ds, m_filter);
    const auto heat_f = maskmetrics::heatmap(f_view, {}, args.workers);
    const auto heat_m = maskmetrics::heatmap(m_view, {}, args.workers);
    const std::filesystem::path out(args.out);
    std::filesystem::create_directories(out);
    maskmetrics::write_heatmap_csv(out / "heatmap_f.csv", heat_f);
    maskmetrics::write_heatmap_csv(out / "heatmap_m.csv", heat_m);
    maskmetrics::write_diff_heatmap_csv(out / "heatmap_diff.csv",
                                        maskmetrics::diff_heatmap(heat_m, heat_f));
    if (plot) {
        svg::render_csv("heatmap", out / "heatmap_f.csv", out / "heatmap_f.svg",
                        {"female face frequency", ""});
        svg::render_csv("heatmap", out / "heatmap_m.csv", out / "heatmap_m.svg",
                        {"male face frequency", ""});
        svg::render_csv("diff-heatmap", out / "heatmap_diff.csv", out / "heatmap_diff.svg",
                        {"male minus female face frequency", ""});
    }
    write_run_json(out, "heatmap",
                   json{{"dataset", args.dataset}, {"cohort", args.cohort},
                        {"n_f", f_view.size()}, {"n_m", m_view.size()}});
    return 0;
}

// ----------------------------------------------------------------------- pface

int cmd_pface(const CommonArgs& args, std::size_t bins, bool plot) {
    const corpus::Dataset ds = load_or_die(args.dataset);
    corpus::Filter base = make_filter(args);
    base.gender.reset();
    corpus::Filter f_filter = base, m_filter = base;
    f_filter.gender = corpus::Gender::F;
    m_filter.gender = corpus::Gender::M;
    const auto hist_f = maskmetrics::percent_face_histogram(corpus::select(ds, f_filter), bins);
    const auto hist_m = maskmetrics::percent_face_histogram(corpus::select(ds, m_filter), bins);
    const std::filesystem::path out(args.out);
    std::filesystem::create_directories(out);
    maskmetrics::write_pface_csv(out / "pface_hist.csv", {{"F", &hist_f}, {"M", &hist_m}});
    if (plot) {
        svg::render_csv("hist-overlay", out / "pface_hist.csv", out / "pface_hist.svg",
                        {"percent of image labelled face", ""});
    }
    write_run_json(out, "pface",
                   json{{"dataset", args.dataset}, {"cohort", args.cohort}, {"bins", bins}});
    return 0;
}

// ------------------------------------------------------------------ level-mask

int cmd_level_mask(const CommonArgs& args, double level) {
    const corpus::Dataset ds = load_or_die(args.dataset);
    CommonArgs effective = args;
    if (effective.gender.empty()) effective.gender = "F";
    const auto view = corpus::select(ds, make_filter(effective));
    if (view.empty()) throw Error(ErrorKind::invalid_input, "selection matched no records");
    const auto heat = maskmetrics::heatmap(view, {}, args.workers);
    const auto stencil = maskmetrics::level_mask(heat, level);
    const std::filesystem::path out(args.out);
    std::filesystem::create_directories(out);
    stencil.save(out / "stencil.msk");
    write_run_json(out, "level-mask",
                   json{{"dataset", args.dataset},
                        {"gender", effective.gender},
                        {"cohort", args.cohort},
                        {"level", level},
                        {"stencil_pixels", stencil.popcount()},
                        {"stencil_hash", equalize::stencil_hash(stencil)}});
    std::cout << "stencil pixels: " << stencil.popcount() << " / " << stencil.pixel_count()
              << '\n';
    return 0;
}

// -------------------------------------------------------------------- equalize

struct EqualizeArgs {
    CommonArgs common;
    double level = 0.10;
    std::string mode = "greedy";
    double budget = 0.05;
    bool with_replacement = false;
    bool plot = false;
};

int cmd_equalize(const EqualizeArgs& args) {
    const corpus::Dataset ds = load_or_die(args.common.dataset);
    corpus::Filter base = make_filter(args.common);
    base.gender.reset();
    corpus::Filter f_filter = base, m_filter = base;
    f_filter.gender = corpus::Gender::F;
    m_filter.gender = corpus::Gender::M;
    const auto f_view = corpus::select(ds, f_filter);
    const auto m_view = corpus::select(ds, m_filter);

    const auto heat_f = maskmetrics::heatmap(f_view, {}, args.common.workers);
    const auto stencil = maskmetrics::level_mask(heat_f, args.level);

    equalize::MatchOptions opts;
    opts.mode = args.mode == "exact" ? equalize::MatchMode::exact_assignment
                                     : equalize::MatchMode::greedy_global;
    opts.with_replacement = args.with_replacement;
    opts.workers = args.common.workers;
    const auto pairing = equalize::match_images(f_view, m_view, stencil, opts);

    corpus::Filter sel_filter;
    sel_filter.image_ids.emplace();
    for (const auto& e : pairing.entries) sel_filter.image_ids->push_back(e.male_image_id);
    const auto male_selected = corpus::select(ds, sel_filter);
    const auto report =
        equalize::equalization_report(f_view, male_selected, stencil, args.budget);

    const std::filesystem::path out(args.common.out);
    equalize::export_selection(pairing, stencil, out);
    maskmetrics::write_diff_heatmap_csv(out / "equalize_diff.csv", report.diff);
    if (args.plot) {
        svg::render_csv("diff-heatmap", out / "equalize_diff.csv", out / "equalize_diff.svg",
                        {"equalized male minus female", ""});
    }
    json rep{{"max_abs", report.max_abs},
             {"mean_abs", report.mean_abs},
             {"budget", report.budget},
             {"within_budget", report.within_budget},
             {"pairs", pairing.entries.size()}};
    std::ofstream(out / "report.json") << rep.dump(2) << '\n';
    write_run_json(out, "equalize",
                   json{{"dataset", args.common.dataset},
                        {"cohort", args.common.cohort},
                        {"level", args.level},
                        {"mode", args.mode},
                        {"with_replacement", args.with_replacement},
                        {"budget", args.budget}});
    std::cout << (report.within_budget ? "PASS" : "FAIL") << " residual max |diff| = "
              << report.max_abs << " (budget " << report.budget << ")\n";
    return 0;
}

// ------------------------------------------------------------------- facespace

struct FacespaceArgs {
    CommonArgs common;
    double target = 0.95;
    double level = 0.10;
    std::string stencil_file;
    std::uint64_t seed = 0;
    bool plot = false;
};

int cmd_facespace(const FacespaceArgs& args) {
    const corpus::Dataset ds = load_or_die(args.common.dataset);
    corpus::Filter base = make_filter(args.common);
    base.gender.reset();
    const pipeline::FacespaceOutcome fo = pipeline::run_facespace(
        ds, args.seed, args.level, args.target, args.common.workers, base);
    const std::filesystem::path out(args.common.out);
    std::filesystem::create_directories(out);
    facespace::write_variance_curve_csv(out / "variance_curve.csv",
                                        {{"F", fo.curve_f}, {"M", fo.curve_m}});
    if (args.plot) {
        svg::render_csv("curve", out / "variance_curve.csv", out / "variance_curve.svg",
                        {"cumulative variance by components", ""});
    }
    json result{{"n_f", fo.n_f}, {"n_m", fo.n_m}, {"k_target_f", fo.k_f}, {"k_target_m", fo.k_m}};
    std::ofstream(out / "facespace.json") << result.dump(2) << '\n';
    write_run_json(out, "facespace",
                   json{{"dataset", args.common.dataset},
                        {"cohort", args.common.cohort},
                        {"target", args.target},
                        {"level", args.level},
                        {"seed", args.seed}});
    std::cout << "components to " << args.target * 100 << "% variance: F=" << fo.k_f
              << " M=" << fo.k_m << " (n=" << fo.n_f << " per group)\n";
    return 0;
}

// ----------------------------------------------------------------- flip-select

struct FlipArgs {
    CommonArgs common;
    double variance_target = 0.80;
    double target = 0.95;
    double level = 0.10;
    std::size_t keep = 0;
};

int cmd_flip_select(const FlipArgs& args) {
    const corpus::Dataset ds = load_or_die(args.common.dataset);
    corpus::Filter base = make_filter(args.common);
    base.gender.reset();
    const pipeline::FlipOutcome fo =
        pipeline::run_flip(ds, args.variance_target, args.target, args.level,
                           args.common.workers, base, args.keep);
    const std::filesystem::path out(args.common.out);
    std::filesystem::create_directories(out);
    facespace::write_recon_errors_csv(out / "recon_errors.csv", fo.rank_k, fo.ranked);
    facespace::write_variance_curve_csv(out / "variance_curve.csv",
                                        {{"F", fo.curve_f},
                                         {"M-pool", fo.curve_m_pool},
                                         {"M-selected", fo.curve_m_selected}});
    std::ofstream sel(out / "selection.jsonl");
    for (std::size_t i = 0; i < fo.keep; ++i) {
        sel << json{{"image_id", fo.ranked[i].image_id}}.dump() << '\n';
    }
    json result{{"keep", fo.keep},
                {"rank_k", fo.rank_k},
                {"k95_female", fo.k95_female},
                {"k95_male_pool", fo.k95_male_pool},
                {"k95_male_selected", fo.k95_male_selected}};
    std::ofstream(out / "flip.json") << result.dump(2) << '\n';
    write_run_json(out, "flip-select",
                   json{{"dataset", args.common.dataset},
                        {"cohort", args.common.cohort},
                        {"variance_target", args.variance_target},
                        {"target", args.target},
                        {"level", args.level},
                        {"keep", args.keep}});
    std::cout << "k" << args.target * 100 << ": female=" << fo.k95_female
              << " male-pool=" << fo.k95_male_pool
              << " male-selected=" << fo.k95_male_selected << '\n';
    return 0;
}

// ------------------------------------------------------------------ demo-match

struct DemoMatchArgs {
    CommonArgs common;
    std::string ref_dataset;
    std::string ref_cohort;
    std::string age_bins = "18,30,45,60";
    std::uint64_t seed = 0;
};

int cmd_demo_match(const DemoMatchArgs& args) {
    const corpus::Dataset ds = load_or_die(args.common.dataset);
    const corpus::Dataset ref = load_or_die(args.ref_dataset);
    facespace::AgeBins bins;
    {
        std::stringstream ss(args.age_bins);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (!tok.empty()) bins.edges.push_back(std::stoi(tok));
        }
        if (bins.edges.empty()) {
            throw Error(ErrorKind::invalid_input, "age-bins must list at least one edge");
        }
    }
    const std::filesystem::path out(args.common.out);
    std::filesystem::create_directories(out);
    std::ofstream bins_csv(out / "age_bins.csv");
    bins_csv << "gender,bin,selected\n";
    for (corpus::Gender g : {corpus::Gender::F, corpus::Gender::M}) {
        corpus::Filter src_filter = make_filter(args.common);
        src_filter.gender = g;
        corpus::Filter ref_filter;
        ref_filter.gender = g;
        if (!args.ref_cohort.empty()) ref_filter.cohort = args.ref_cohort;
        const auto source = corpus::select(ds, src_filter);
        const auto reference = corpus::select(ref, ref_filter);
        const auto matched = facespace::match_demographics(source, reference, bins, args.seed);
        std::ofstream sel(out / (std::string("selection_") + corpus::to_string(g) + ".jsonl"));
        for (std::size_t i = 0; i < matched.size(); ++i) {
            sel << json{{"image_id", matched.record(i).image_id}}.dump() << '\n';
        }
        std::map<int, std::size_t> counts;
        for (std::size_t i = 0; i < matched.size(); ++i) {
            ++counts[bins.bin_of(matched.record(i).age)];
        }
        for (const auto& [bin, count] : counts) {
            bins_csv << corpus::to_string(g) << ',' << bins.bin_name(bin) << ',' << count << '\n';
        }
    }
    write_run_json(out, "demo-match",
                   json{{"dataset", args.common.dataset},
                        {"ref_dataset", args.ref_dataset},
                        {"age_bins", args.age_bins},
                        {"seed", args.seed}});
    return 0;
}

// ----------------------------------------------------------------------- synth

struct SynthArgs {
    std::string config;
    std::string out;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string regen_stencil;
    std::string regen_pairing;
};

int cmd_synth(const SynthArgs& args) {
    std::map<std::string, std::string> overrides;
    for (const auto& kv : args.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::invalid_input, "--set expects key=value, got " + kv);
        }
        overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    if (args.seed) overrides["seed"] = std::to_string(*args.seed);
    const synthlab::SynthConfig cfg = synthlab::parse_config(args.config, overrides);
    const std::filesystem::path out(args.out);
    std::filesystem::create_directories(out);
    if (!args.regen_stencil.empty() || !args.regen_pairing.empty()) {
        if (args.regen_stencil.empty() || args.regen_pairing.empty()) {
            throw Error(ErrorKind::invalid_input,
                        "--regen-stencil and --regen-pairing must be given together");
        }
        const auto stencil = maskmetrics::BinaryMask::load(args.regen_stencil);
        const auto pairing = equalize::load_pairing(args.regen_pairing);
        const auto ds = synthlab::regenerate_masked(cfg, stencil, pairing, out / "dataset");
        write_run_json(out, "synth",
                       json{{"config", args.config},
                            {"seed", cfg.seed},
                            {"regen_stencil", args.regen_stencil},
                            {"regen_pairing", args.regen_pairing},
                            {"records", ds.size()}});
    } else {
        const auto ds = synthlab::generate(cfg, out / "dataset");
        write_run_json(out, "synth",
                       json{{"config", args.config}, {"seed", cfg.seed}, {"records", ds.size()}});
    }
    return 0;
}

// ------------------------------------------------------------------------ plot

struct PlotArgs {
    std::string kind;
    std::string in;
    std::string out;
    std::string title;
};

int cmd_plot(const PlotArgs& args) {
    svg::render_csv(args.kind, args.in, args.out, {args.title, ""});
    return 0;
}

// ----------------------------------------------------------------------- repro

struct ReproArgs {
    std::string out;
    std::uint64_t seed = 1;
    std::string preset = "quick";
    int workers = 0;
};

int cmd_repro(const ReproArgs& args) {
    const pipeline::Preset preset =
        args.preset == "paper" ? pipeline::Preset::paper : pipeline::Preset::quick;
    const pipeline::ReproSummary s =
        pipeline::run_repro(args.seed, args.out, preset, args.workers);
    write_run_json(args.out, "repro",
                   json{{"seed", args.seed}, {"preset", args.preset}});
    std::cout << "impostor mean: F=" << s.impostor_mean_f << " M=" << s.impostor_mean_m << '\n'
              << "same-gender d': F=" << s.same_gender_dprime_f
              << " M=" << s.same_gender_dprime_m << '\n'
              << "genuine mean pre:  F=" << s.genuine_mean_f_pre
              << " M=" << s.genuine_mean_m_pre << '\n'
              << "genuine mean post: F=" << s.genuine_mean_f_post
              << " M=" << s.genuine_mean_m_post << '\n'
              << "equalization max |diff|: " << s.equalization_max_abs << '\n'
              << "k95: F=" << s.k95_f << " M=" << s.k95_m << '\n'
              << "flip k95: F=" << s.flip_k95_female
              << " M-selected=" << s.flip_k95_male_selected << '\n';
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"face-verification accuracy audit toolkit"};
    app.require_subcommand(1);

    CommonArgs ingest_args;
    auto* ingest = app.add_subcommand("ingest-check", "load and validate a dataset");
    ingest->add_option("--dataset", ingest_args.dataset, "dataset directory")->required();

    ScoresArgs scores_args;
    auto* scores = app.add_subcommand("scores", "genuine/impostor score distributions");
    add_common(scores, scores_args.common);
    scores->add_option("--scope", scores_args.scope, "impostor scope: within | cross");
    scores->add_option("--sampled", scores_args.sampled, "sample this many impostor pairs");
    scores->add_option("--seed", scores_args.seed, "seed for sampled mode");
    scores->add_option("--bins", scores_args.bins, "histogram bins");
    scores->add_flag("--plot", scores_args.plot, "emit SVG");

    CommonArgs dprime_args;
    bool dprime_plot = false;
    auto* dprime = app.add_subcommand("dprime", "female/male d-prime table");
    add_common(dprime, dprime_args);
    dprime->add_flag("--plot", dprime_plot, "emit SVG");

    CommonArgs heatmap_args;
    bool heatmap_plot = false;
    auto* heatmap = app.add_subcommand("heatmap", "face-visibility heatmaps and difference");
    add_common(heatmap, heatmap_args);
    heatmap->add_flag("--plot", heatmap_plot, "emit SVG");

    CommonArgs pface_args;
    std::size_t pface_bins = 100;
    bool pface_plot = false;
    auto* pface = app.add_subcommand("pface", "percent-face distributions");
    add_common(pface, pface_args);
    pface->add_option("--bins", pface_bins, "histogram bins");
    pface->add_flag("--plot", pface_plot, "emit SVG");

    CommonArgs level_args;
    double level_value = 0.10;
    auto* level = app.add_subcommand("level-mask", "stencil from a heatmap level set");
    add_common(level, level_args);
    level->add_option("--level", level_value, "frequency level (default 0.10)");

    EqualizeArgs eq_args;
    auto* eq = app.add_subcommand("equalize", "stencil + IoU pairing information equalization");
    add_common(eq, eq_args.common);
    eq->add_option("--level", eq_args.level, "female heatmap level for the stencil");
    eq->add_option("--mode", eq_args.mode, "greedy | exact");
    eq->add_option("--budget", eq_args.budget, "residual max-abs budget");
    eq->add_flag("--with-replacement", eq_args.with_replacement, "allow male image reuse");
    eq->add_flag("--plot", eq_args.plot, "emit SVG");

    FacespaceArgs fs_args;
    auto* facesp = app.add_subcommand("facespace", "eigenface variance curves per gender");
    add_common(facesp, fs_args.common);
    facesp->add_option("--target", fs_args.target, "variance target (default 0.95)");
    facesp->add_option("--level", fs_args.level, "female heatmap level for the stencil");
    facesp->add_option("--seed", fs_args.seed, "seed for count-matching subsample");
    facesp->add_flag("--plot", fs_args.plot, "emit SVG");

    FlipArgs flip_args;
    auto* flip = app.add_subcommand("flip-select", "low-reconstruction-error male selection");
    add_common(flip, flip_args.common);
    flip->add_option("--variance-target", flip_args.variance_target,
                     "ranking variance level (default 0.80)");
    flip->add_option("--target", flip_args.target, "curve comparison target (default 0.95)");
    flip->add_option("--level", flip_args.level, "female heatmap level for the stencil");
    flip->add_option("--keep", flip_args.keep, "males to keep (default: female count)");

    DemoMatchArgs dm_args;
    auto* dm = app.add_subcommand("demo-match", "match age distribution to a reference dataset");
    add_common(dm, dm_args.common);
    dm->add_option("--ref-dataset", dm_args.ref_dataset, "reference dataset directory")
        ->required();
    dm->add_option("--ref-cohort", dm_args.ref_cohort, "reference cohort filter");
    dm->add_option("--age-bins", dm_args.age_bins, "comma-separated lower bin edges");
    dm->add_option("--seed", dm_args.seed, "sampling seed");

    SynthArgs synth_args;
    std::uint64_t synth_seed = 0;
    bool synth_seed_set = false;
    auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
    synth->add_option("--config", synth_args.config, "key=value config file")->required();
    synth->add_option("--out", synth_args.out, "output directory")->required();
    synth->add_option("--set", synth_args.sets, "override config entries (key=value)");
    synth->add_option("--seed", synth_seed, "override config seed")
        ->each([&](const std::string&) { synth_seed_set = true; });
    synth->add_option("--regen-stencil", synth_args.regen_stencil,
                      "stencil.msk for masked regeneration");
    synth->add_option("--regen-pairing", synth_args.regen_pairing,
                      "pairing.jsonl for masked regeneration");

    PlotArgs plot_args;
    auto* plot = app.add_subcommand("plot", "render a CSV artifact as SVG");
    plot->add_option("--kind", plot_args.kind,
                     "hist-overlay | heatmap | diff-heatmap | curve")->required();
    plot->add_option("--in", plot_args.in, "input CSV")->required();
    plot->add_option("--out", plot_args.out, "output SVG")->required();
    plot->add_option("--title", plot_args.title, "plot title");

    ReproArgs repro_args;
    auto* repro = app.add_subcommand("repro", "full synthetic replica pipeline");
    repro->add_option("--out", repro_args.out, "output directory")->required();
    repro->add_option("--seed", repro_args.seed, "base seed");
    repro->add_option("--preset", repro_args.preset, "quick | paper");
    repro->add_option("--workers", repro_args.workers, "worker threads (0 = auto)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (ingest->parsed()) return cmd_ingest_check(ingest_args);
        if (scores->parsed()) return cmd_scores(scores_args);
        if (dprime->parsed()) return cmd_dprime(dprime_args, dprime_plot);
        if (heatmap->parsed()) return cmd_heatmap(heatmap_args, heatmap_plot);
        if (pface->parsed()) return cmd_pface(pface_args, pface_bins, pface_plot);
        if (level->parsed()) return cmd_level_mask(level_args, level_value);
        if (eq->parsed()) return cmd_equalize(eq_args);
        if (facesp->parsed()) return cmd_facespace(fs_args);
        if (flip->parsed()) return cmd_flip_select(flip_args);
        if (dm->parsed()) return cmd_demo_match(dm_args);
        if (synth->parsed()) {
            if (synth_seed_set) synth_args.seed = synth_seed;
            return cmd_synth(synth_args);
        }
        if (plot->parsed()) return cmd_plot(plot_args);
        if (repro->parsed()) return cmd_repro(repro_args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

int run(const std::vector<std::string>& args) {
    std::vector<std::string> full;
    full.reserve(args.size() + 1);
    full.push_back("faceaudit");
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(full.size());
    for (const auto& s : full) argv.push_back(s.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace faceaudit::cli
