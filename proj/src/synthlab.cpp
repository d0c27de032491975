#include "faceaudit/synthlab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "faceaudit/rng.hpp"

namespace faceaudit::synthlab {

using corpus::Dataset;
using corpus::Gender;
using corpus::ImageRecord;

namespace {

// Stream tags for stateless sub-seed derivation.
constexpr std::uint64_t kTagIdentity = 1;
constexpr std::uint64_t kTagNoise = 2;
constexpr std::uint64_t kTagBand = 3;
constexpr std::uint64_t kTagAge = 4;

struct FaceGeometry {
    int h, w;
    double cx, cy, rx, ry;
    int ellipse_top;
    std::vector<std::uint8_t> inside;  // 1 if pixel is in the face ellipse
    std::size_t ellipse_count = 0;

    FaceGeometry(int height, int width) : h(height), w(width) {
        cx = (width - 1) / 2.0;
        cy = (height - 1) / 2.0;
        rx = 0.34 * width;
        ry = 0.42 * height;
        ellipse_top = static_cast<int>(std::ceil(cy - ry));
        inside.assign(static_cast<std::size_t>(h) * w, 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double nx = (x - cx) / rx;
                const double ny = (y - cy) / ry;
                if (nx * nx + ny * ny <= 1.0) {
                    inside[static_cast<std::size_t>(y) * w + x] = 1;
                    ++ellipse_count;
                }
            }
        }
    }
};

// Smooth spatial modes for the phase pattern; evaluated on ellipse-normalized
// coordinates in [-1,1].
double phase_mode(std::size_t j, double nx, double ny) {
    switch (j) {
    case 0: return 1.2 * nx;
    case 1: return 1.2 * ny;
    case 2: return 2.0 * nx * ny;
    case 3: return 1.5 * (nx * nx - ny * ny);
    case 4: return 0.8 * std::sin(2.3 * nx + 1.1 * ny);
    case 5: return 0.8 * std::cos(1.7 * nx - 2.1 * ny);
    case 6: return 1.4 * (nx * nx + ny * ny - 0.5);
    default: return 0.9 * nx * (3.0 * ny * ny - 1.0);
    }
}

constexpr std::size_t kPhaseModes = 8;
constexpr double kRadialFrequency = 6.0;
// Every identity shares this per-dimension mean-face amplitude; it is what
// centers impostor cosines above zero and makes them rise as sigma_between
// shrinks.
constexpr double kMeanFaceAmplitude = 1.0;

struct ImageAddress {
    Gender gender;
    std::size_t subject;
    std::size_t image;
};

const GroupConfig& group_of(const SynthConfig& cfg, Gender g) {
    return g == Gender::F ? cfg.f : cfg.m;
}

std::string subject_name(Gender g, std::size_t s) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%04zu", corpus::to_string(g), s);
    return buf;
}

std::string image_name(Gender g, std::size_t s, std::size_t i) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%s-%04zu-%02zu", corpus::to_string(g), s, i);
    return buf;
}

std::vector<double> identity_vector(const SynthConfig& cfg, Gender g, std::size_t subject) {
    const GroupConfig& gc = group_of(cfg, g);
    Rng rng(derive_seed(cfg.seed, {kTagIdentity, static_cast<std::uint64_t>(g), subject}));
    std::vector<double> id(cfg.dim);
    for (double& v : id) v = kMeanFaceAmplitude + gc.sigma_between * rng.next_gaussian();
    return id;
}

int band_height(const SynthConfig& cfg, Gender g, std::size_t subject, std::size_t image) {
    const GroupConfig& gc = group_of(cfg, g);
    Rng rng(derive_seed(cfg.seed,
                        {kTagBand, static_cast<std::uint64_t>(g), subject, image}));
    const int band = static_cast<int>(
        rng.bounded_range(gc.occlusion_rows - gc.occlusion_jitter,
                          gc.occlusion_rows + gc.occlusion_jitter));
    return std::clamp(band, 0, cfg.height);
}

int subject_age(const SynthConfig& cfg, Gender g, std::size_t subject) {
    Rng rng(derive_seed(cfg.seed, {kTagAge, static_cast<std::uint64_t>(g), subject}));
    return 18 + static_cast<int>(rng.bounded(48));
}

std::vector<float> make_embedding(const SynthConfig& cfg, Gender g, std::size_t subject,
                                  std::size_t image, const std::vector<double>& identity,
                                  double occluded_fraction) {
    const GroupConfig& gc = group_of(cfg, g);
    Rng rng(derive_seed(cfg.seed,
                        {kTagNoise, static_cast<std::uint64_t>(g), subject, image}));
    const double scale = gc.sigma_within * (1.0 + cfg.lambda * occluded_fraction);
    std::vector<double> v(cfg.dim);
    double ss = 0.0;
    for (std::size_t j = 0; j < cfg.dim; ++j) {
        v[j] = identity[j] + scale * rng.next_gaussian();
        ss += v[j] * v[j];
    }
    const double inv = 1.0 / std::sqrt(ss);
    std::vector<float> out(cfg.dim);
    for (std::size_t j = 0; j < cfg.dim; ++j) out[j] = static_cast<float>(v[j] * inv);
    return out;
}

void render_labels_and_image(const SynthConfig& cfg, const FaceGeometry& geo, int band,
                             const std::vector<double>& identity,
                             std::uint8_t* labels, std::uint8_t* image) {
    const int occl_limit = geo.ellipse_top + band;  // rows above are hair
    std::vector<double> dev(kPhaseModes, 0.0);
    for (std::size_t j = 0; j < kPhaseModes && j < cfg.dim; ++j) {
        dev[j] = identity[j] - kMeanFaceAmplitude;
    }
    for (int y = 0; y < geo.h; ++y) {
        for (int x = 0; x < geo.w; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * geo.w + x;
            if (!geo.inside[p]) {
                labels[p] = 0;
                if (image) image[p] = 0;
                continue;
            }
            if (y < occl_limit) {
                labels[p] = 17;  // hair
                if (image) image[p] = 0;
                continue;
            }
            labels[p] = 1;  // skin
            if (image) {
                const double nx = (x - geo.cx) / geo.rx;
                const double ny = (y - geo.cy) / geo.ry;
                const double rho = std::sqrt(nx * nx + ny * ny);
                double phase = 0.0;
                for (std::size_t j = 0; j < kPhaseModes && j < cfg.dim; ++j) {
                    phase += dev[j] * phase_mode(j, nx, ny);
                }
                const double val = 0.5 + 0.45 * std::cos(kRadialFrequency * rho + phase);
                image[p] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(val, 0.0, 1.0)));
            }
        }
    }
}

std::size_t occluded_pixels(const FaceGeometry& geo, int band) {
    const int occl_limit = geo.ellipse_top + band;
    std::size_t count = 0;
    for (int y = 0; y < std::min(occl_limit, geo.h); ++y) {
        for (int x = 0; x < geo.w; ++x) {
            if (geo.inside[static_cast<std::size_t>(y) * geo.w + x]) ++count;
        }
    }
    return count;
}

}  // namespace

void SynthConfig::validate() const {
    auto check_group = [&](const GroupConfig& g, const char* name) {
        if (g.subjects == 0 || g.images_per_subject == 0) {
            throw Error(ErrorKind::invalid_input,
                        std::string("synth config: ") + name + " needs subjects and images");
        }
        if (!(g.sigma_between > 0.0) || !(g.sigma_within > 0.0)) {
            throw Error(ErrorKind::invalid_input,
                        std::string("synth config: ") + name + " sigmas must be > 0");
        }
        if (g.occlusion_rows < 0 || g.occlusion_rows >= height) {
            throw Error(ErrorKind::invalid_input,
                        std::string("synth config: ") + name + " occlusion_rows must be in [0, H)");
        }
        if (g.occlusion_jitter < 0) {
            throw Error(ErrorKind::invalid_input,
                        std::string("synth config: ") + name + " occlusion_jitter must be >= 0");
        }
    };
    check_group(f, "group F");
    check_group(m, "group M");
    if (dim < 2) throw Error(ErrorKind::invalid_input, "synth config: dim must be >= 2");
    if (height < 8 || width < 8) {
        throw Error(ErrorKind::invalid_input, "synth config: grid must be at least 8x8");
    }
    if (lambda < 0.0) throw Error(ErrorKind::invalid_input, "synth config: lambda must be >= 0");
    if (cohort.empty()) throw Error(ErrorKind::invalid_input, "synth config: cohort must be non-empty");
}

corpus::Dataset generate(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    const FaceGeometry geo(cfg.height, cfg.width);
    const std::size_t px = geo.inside.size();
    const std::size_t total = cfg.f.subjects * cfg.f.images_per_subject +
                              cfg.m.subjects * cfg.m.images_per_subject;

    Dataset ds;
    ds.dim = cfg.dim;
    ds.height = cfg.height;
    ds.width = cfg.width;
    ds.records.reserve(total);
    ds.embeddings.resize(total * cfg.dim);
    ds.labels.resize(total * px);
    if (cfg.emit_images) ds.images.emplace(total * px, 0);

    std::size_t row = 0;
    for (Gender g : {Gender::F, Gender::M}) {
        const GroupConfig& gc = group_of(cfg, g);
        for (std::size_t s = 0; s < gc.subjects; ++s) {
            const std::vector<double> identity = identity_vector(cfg, g, s);
            const int age = subject_age(cfg, g, s);
            for (std::size_t i = 0; i < gc.images_per_subject; ++i) {
                const int band = band_height(cfg, g, s, i);
                const double f = static_cast<double>(occluded_pixels(geo, band)) /
                                 static_cast<double>(geo.ellipse_count);
                const auto emb = make_embedding(cfg, g, s, i, identity, f);
                std::copy(emb.begin(), emb.end(), ds.embeddings.begin() + row * cfg.dim);
                render_labels_and_image(cfg, geo, band, identity,
                                        ds.labels.data() + row * px,
                                        cfg.emit_images ? ds.images->data() + row * px : nullptr);
                ImageRecord rec;
                rec.image_id = image_name(g, s, i);
                rec.subject_id = subject_name(g, s);
                rec.gender = g;
                rec.cohort = cfg.cohort;
                rec.age = age;
                rec.row = row;
                ds.records.push_back(std::move(rec));
                ++row;
            }
        }
    }

    if (!out_dir.empty()) corpus::save_dataset(ds, out_dir);
    return ds;
}

corpus::Dataset regenerate_masked(const SynthConfig& cfg,
                                  const maskmetrics::BinaryMask& stencil,
                                  const equalize::Pairing& pairing,
                                  const std::filesystem::path& out_dir) {
    cfg.validate();
    if (stencil.height() != cfg.height || stencil.width() != cfg.width) {
        throw Error(ErrorKind::invalid_input, "regenerate_masked: stencil dimensions mismatch");
    }
    const FaceGeometry geo(cfg.height, cfg.width);
    const std::size_t px = geo.inside.size();

    // Address book over the configured id space.
    std::unordered_map<std::string, ImageAddress> addresses;
    for (Gender g : {Gender::F, Gender::M}) {
        const GroupConfig& gc = group_of(cfg, g);
        for (std::size_t s = 0; s < gc.subjects; ++s) {
            for (std::size_t i = 0; i < gc.images_per_subject; ++i) {
                addresses.emplace(image_name(g, s, i), ImageAddress{g, s, i});
            }
        }
    }

    std::vector<std::string> selected;
    selected.reserve(pairing.entries.size() * 2);
    for (const auto& e : pairing.entries) selected.push_back(e.female_image_id);
    for (const auto& e : pairing.entries) selected.push_back(e.male_image_id);

    // Information reference after stenciling: the face region visible through
    // the stencil, relative to the stenciled ellipse.
    std::size_t ellipse_in_stencil = 0;
    for (std::size_t p = 0; p < px; ++p) {
        if (geo.inside[p] && stencil.get(p)) ++ellipse_in_stencil;
    }
    if (ellipse_in_stencil == 0) {
        throw Error(ErrorKind::invalid_input, "regenerate_masked: stencil excludes the whole face");
    }

    Dataset ds;
    ds.dim = cfg.dim;
    ds.height = cfg.height;
    ds.width = cfg.width;
    ds.records.reserve(selected.size());
    ds.embeddings.resize(selected.size() * cfg.dim);
    ds.labels.resize(selected.size() * px);
    if (cfg.emit_images) ds.images.emplace(selected.size() * px, 0);

    std::vector<std::uint8_t> labels(px), image(px);
    std::size_t row = 0;
    for (const std::string& id : selected) {
        const auto it = addresses.find(id);
        if (it == addresses.end()) {
            throw Error(ErrorKind::invalid_record,
                        "pairing references unknown image_id " + id);
        }
        const ImageAddress& addr = it->second;
        const std::vector<double> identity = identity_vector(cfg, addr.gender, addr.subject);
        const int band = band_height(cfg, addr.gender, addr.subject, addr.image);
        render_labels_and_image(cfg, geo, band, identity, labels.data(),
                                cfg.emit_images ? image.data() : nullptr);

        std::size_t visible_in_stencil = 0;
        for (std::size_t p = 0; p < px; ++p) {
            if (labels[p] == 1 && stencil.get(p)) ++visible_in_stencil;
        }
        const double f = 1.0 - static_cast<double>(visible_in_stencil) /
                                   static_cast<double>(ellipse_in_stencil);
        const auto emb = make_embedding(cfg, addr.gender, addr.subject, addr.image, identity, f);
        std::copy(emb.begin(), emb.end(), ds.embeddings.begin() + row * cfg.dim);

        std::uint8_t* out_labels = ds.labels.data() + row * px;
        for (std::size_t p = 0; p < px; ++p) {
            out_labels[p] = stencil.get(p) ? labels[p] : 0;
        }
        if (cfg.emit_images) {
            std::uint8_t* out_image = ds.images->data() + row * px;
            for (std::size_t p = 0; p < px; ++p) {
                out_image[p] = stencil.get(p) ? image[p] : 0;
            }
        }

        ImageRecord rec;
        rec.image_id = id;
        rec.subject_id = subject_name(addr.gender, addr.subject);
        rec.gender = addr.gender;
        rec.cohort = cfg.cohort;
        rec.age = subject_age(cfg, addr.gender, addr.subject);
        rec.row = row;
        ds.records.push_back(std::move(rec));
        ++row;
    }

    if (!out_dir.empty()) corpus::save_dataset(ds, out_dir);
    return ds;
}

namespace {

std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open config " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::invalid_input,
                        path.string() + ":" + std::to_string(line_no) + ": expected key=value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

}  // namespace

SynthConfig config_from_map(const std::map<std::string, std::string>& kv) {
    SynthConfig cfg;
    auto get_u = [&](const char* key, std::size_t& out) {
        if (auto it = kv.find(key); it != kv.end()) out = std::stoull(it->second);
    };
    auto get_i = [&](const char* key, int& out) {
        if (auto it = kv.find(key); it != kv.end()) out = std::stoi(it->second);
    };
    auto get_d = [&](const char* key, double& out) {
        if (auto it = kv.find(key); it != kv.end()) out = std::stod(it->second);
    };
    try {
        get_u("dim", cfg.dim);
        get_i("height", cfg.height);
        get_i("width", cfg.width);
        if (auto it = kv.find("seed"); it != kv.end()) cfg.seed = std::stoull(it->second);
        get_d("lambda", cfg.lambda);
        if (auto it = kv.find("cohort"); it != kv.end()) cfg.cohort = it->second;
        if (auto it = kv.find("emit_images"); it != kv.end()) {
            cfg.emit_images = it->second == "1" || it->second == "true";
        }
        get_u("subjects_f", cfg.f.subjects);
        get_u("subjects_m", cfg.m.subjects);
        get_u("images_per_subject_f", cfg.f.images_per_subject);
        get_u("images_per_subject_m", cfg.m.images_per_subject);
        get_d("sigma_between_f", cfg.f.sigma_between);
        get_d("sigma_between_m", cfg.m.sigma_between);
        get_d("sigma_within_f", cfg.f.sigma_within);
        get_d("sigma_within_m", cfg.m.sigma_within);
        get_i("occlusion_rows_f", cfg.f.occlusion_rows);
        get_i("occlusion_rows_m", cfg.m.occlusion_rows);
        get_i("occlusion_jitter_f", cfg.f.occlusion_jitter);
        get_i("occlusion_jitter_m", cfg.m.occlusion_jitter);
    } catch (const std::exception& e) {
        throw Error(ErrorKind::invalid_input, std::string("synth config: ") + e.what());
    }
    for (const auto& [key, value] : kv) {
        static const char* known[] = {
            "dim", "height", "width", "seed", "lambda", "cohort", "emit_images",
            "subjects_f", "subjects_m", "images_per_subject_f", "images_per_subject_m",
            "sigma_between_f", "sigma_between_m", "sigma_within_f", "sigma_within_m",
            "occlusion_rows_f", "occlusion_rows_m", "occlusion_jitter_f", "occlusion_jitter_m"};
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw Error(ErrorKind::invalid_input, "synth config: unknown key " + key);
    }
    return cfg;
}

SynthConfig parse_config(const std::filesystem::path& path,
                         const std::map<std::string, std::string>& overrides) {
    auto kv = read_kv_file(path);
    for (const auto& [k, v] : overrides) kv[k] = v;
    return config_from_map(kv);
}

void write_config(const SynthConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    char buf[64];
    auto put_d = [&](const char* key, double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << key << '=' << buf << '\n';
    };
    out << "dim=" << cfg.dim << '\n';
    out << "height=" << cfg.height << '\n';
    out << "width=" << cfg.width << '\n';
    out << "seed=" << cfg.seed << '\n';
    put_d("lambda", cfg.lambda);
    out << "cohort=" << cfg.cohort << '\n';
    out << "emit_images=" << (cfg.emit_images ? 1 : 0) << '\n';
    out << "subjects_f=" << cfg.f.subjects << '\n';
    out << "subjects_m=" << cfg.m.subjects << '\n';
    out << "images_per_subject_f=" << cfg.f.images_per_subject << '\n';
    out << "images_per_subject_m=" << cfg.m.images_per_subject << '\n';
    put_d("sigma_between_f", cfg.f.sigma_between);
    put_d("sigma_between_m", cfg.m.sigma_between);
    put_d("sigma_within_f", cfg.f.sigma_within);
    put_d("sigma_within_m", cfg.m.sigma_within);
    out << "occlusion_rows_f=" << cfg.f.occlusion_rows << '\n';
    out << "occlusion_rows_m=" << cfg.m.occlusion_rows << '\n';
    out << "occlusion_jitter_f=" << cfg.f.occlusion_jitter << '\n';
    out << "occlusion_jitter_m=" << cfg.m.occlusion_jitter << '\n';
}

}  // namespace faceaudit::synthlab
