#include "fasw/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_set>

#include "fasw/error.hpp"
#include "fasw/io.hpp"

namespace fasw {

namespace fs = std::filesystem;

const char* const kManifestHeader =
    "sample_id,path,label,spoof_macro,spoof_micro,ethnicity,age,illum_cluster,domain_id,gt_mask_path";

const char* to_string(Label l) { return l == Label::live ? "live" : "spoof"; }

const char* to_string(SpoofMacro m) {
    switch (m) {
        case SpoofMacro::none: return "none";
        case SpoofMacro::print: return "print";
        case SpoofMacro::replay: return "replay";
        case SpoofMacro::mask3d: return "mask3d";
        case SpoofMacro::makeup: return "makeup";
        case SpoofMacro::partial: return "partial";
    }
    return "none";
}

const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

Label parse_label(const std::string& s) {
    if (s == "live") return Label::live;
    if (s == "spoof") return Label::spoof;
    fail(ErrorKind::schema, "unknown label '" + s + "'");
}

SpoofMacro parse_macro(const std::string& s) {
    for (SpoofMacro m : {SpoofMacro::none, SpoofMacro::print, SpoofMacro::replay, SpoofMacro::mask3d,
                         SpoofMacro::makeup, SpoofMacro::partial}) {
        if (s == to_string(m)) return m;
    }
    fail(ErrorKind::schema, "unknown spoof_macro '" + s + "'");
}

std::string subject_of(const std::string& sample_id) {
    const auto pos = sample_id.rfind('-');
    return pos == std::string::npos ? sample_id : sample_id.substr(0, pos);
}

std::string ImageSample::subject() const { return subject_of(sample_id); }

std::size_t DatasetManifest::count(Label l) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [l](const ImageSample& s) { return s.label == l; }));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    // splitmix64 over the combined words
    auto mix = [](std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(base) ^ a) ^ (b * 0xD1B54A32D192ED03ULL));
}

void validate_manifest(const DatasetManifest& m) {
    std::unordered_set<std::string> ids;
    for (std::size_t row = 0; row < m.samples.size(); ++row) {
        const ImageSample& s = m.samples[row];
        const std::string where = "row " + std::to_string(row + 1) + " (" + s.sample_id + ")";
        require(!s.sample_id.empty(), ErrorKind::schema, where + ": empty sample_id");
        require(ids.insert(s.sample_id).second, ErrorKind::schema, where + ": duplicate sample_id");
        if (s.label == Label::live) {
            require(s.spoof_macro == SpoofMacro::none, ErrorKind::schema,
                    where + ": live sample with spoof_macro " + to_string(s.spoof_macro));
        }
        if (!s.image.empty()) {
            require(s.image.rank() == 3 && s.image.dim(0) == 3, ErrorKind::schema, where + ": image must be 3xHxW");
            for (double v : s.image.storage()) {
                require(v >= 0.0 && v <= 1.0, ErrorKind::schema, where + ": pixel outside [0,1]");
            }
        }
        if (s.gt_mask) {
            double total = 0.0;
            for (double v : s.gt_mask->storage()) {
                require(v == 0.0 || v == 1.0, ErrorKind::schema, where + ": gt_mask is not binary");
                total += v;
            }
            if (s.label == Label::live) {
                require(total == 0.0, ErrorKind::schema, where + ": live sample with nonzero gt_mask");
            } else {
                require(total > 0.0, ErrorKind::schema, where + ": spoof sample with empty gt_mask");
            }
        }
    }
}

void check_subject_disjoint(const DatasetManifest& a, const DatasetManifest& b) {
    std::set<std::string> subjects;
    for (const auto& s : a.samples) subjects.insert(s.subject());
    for (const auto& s : b.samples) {
        require(!subjects.count(s.subject()), ErrorKind::protocol_violation,
                "subject " + s.subject() + " appears in both splits");
    }
}

// ---------------------------------------------------------------------------
// Procedural faces and spoof perturbations.

namespace {

using Rgb = std::array<double, 3>;


constexpr double kGrain = 0.25;
struct SubjectLook {
    Rgb skin;
    Rgb background;
    double cx, cy, rx, ry;
    double eye_dx, eye_y, mouth_y;
    std::string ethnicity;
    int age;
};

Rgb skin_for(const std::string& eth) {
    if (eth == "eth_a") return {0.86, 0.70, 0.60};
    if (eth == "eth_b") return {0.50, 0.36, 0.28};
    if (eth == "eth_c") return {0.78, 0.64, 0.46};
    if (eth == "eth_d") return {0.66, 0.50, 0.40};
    const auto h = std::hash<std::string>{}(eth);
    return {0.5 + 0.35 * ((h % 97) / 97.0), 0.35 + 0.3 * ((h / 97 % 89) / 89.0),
            0.25 + 0.3 * ((h / 8633 % 83) / 83.0)};
}

SubjectLook make_subject(const SyntheticDomainSpec& spec, int subject) {
    Rng rng(derive_seed(spec.seed, 0x5B1EC7, static_cast<std::uint64_t>(subject)));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double total = 0.0;
    for (const auto& [_, w] : spec.ethnicity_mix) total += w;
    double pick = u(rng) * total;
    std::string eth = spec.ethnicity_mix.empty() ? "eth_a" : spec.ethnicity_mix.back().first;
    for (const auto& [name, w] : spec.ethnicity_mix) {
        if (pick < w) {
            eth = name;
            break;
        }
        pick -= w;
    }
    SubjectLook s;
    s.ethnicity = eth;
    s.skin = skin_for(eth);
    for (double& c : s.skin) c = std::clamp(c + 0.04 * (u(rng) - 0.5), 0.0, 1.0);
    s.background = {0.25 + 0.3 * u(rng), 0.25 + 0.3 * u(rng), 0.25 + 0.3 * u(rng)};
    s.cx = 0.5 + 0.04 * (u(rng) - 0.5);
    s.cy = 0.52 + 0.04 * (u(rng) - 0.5);
    s.rx = 0.30 + 0.05 * (u(rng) - 0.5);
    s.ry = 0.38 + 0.05 * (u(rng) - 0.5);
    s.eye_dx = 0.12 + 0.03 * (u(rng) - 0.5);
    s.eye_y = -0.10 + 0.03 * (u(rng) - 0.5);
    s.mouth_y = 0.18 + 0.03 * (u(rng) - 0.5);
    const int lo = std::min(spec.age_min, spec.age_max), hi = std::max(spec.age_min, spec.age_max);
    s.age = std::uniform_int_distribution<int>(lo, hi)(rng);
    return s;
}

double smooth_inside(double d, double softness) {
    // d < 1 inside an ellipse in normalised units
    return 1.0 / (1.0 + std::exp((d - 1.0) / softness));
}

void gaussian_blur(Tensor& img, double sigma) {
    if (sigma <= 0.0) return;
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double ks = 0.0;
    for (int i = -r; i <= r; ++i) ks += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& v : k) v /= ks;
    Tensor tmp = img;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i) {
                    const int xx = std::clamp(x + i, 0, w - 1);
                    acc += k[static_cast<std::size_t>(i + r)] * img[(static_cast<std::size_t>(ch) * h + y) * w + xx];
                }
                tmp[(static_cast<std::size_t>(ch) * h + y) * w + x] = acc;
            }
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i) {
                    const int yy = std::clamp(y + i, 0, h - 1);
                    acc += k[static_cast<std::size_t>(i + r)] * tmp[(static_cast<std::size_t>(ch) * h + yy) * w + x];
                }
                img[(static_cast<std::size_t>(ch) * h + y) * w + x] = acc;
            }
}

Tensor render_face(const SyntheticDomainSpec& spec, const SubjectLook& s, Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int h = spec.height, w = spec.width;
    const double jx = 0.02 * u(rng), jy = 0.02 * u(rng);
    const double shade = 0.5 * u(rng);
    Tensor img({3, h, w});
    const double soft = 1.5 / std::min(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double px = (x + 0.5) / w, py = (y + 0.5) / h;
            const double fx = (px - s.cx - jx) / s.rx, fy = (py - s.cy - jy) / s.ry;
            const double r2 = fx * fx + fy * fy;
            const double face = smooth_inside(std::sqrt(r2), soft / s.rx * 2.0);
            const double light = 0.82 + 0.18 * std::max(0.0, 1.0 - r2) + 0.06 * shade * fx;
            auto blob = [&](double ex, double ey, double ax, double ay) {
                const double dx = (px - s.cx - jx - ex) / ax, dy = (py - s.cy - jy - ey) / ay;
                return smooth_inside(std::sqrt(dx * dx + dy * dy), 0.15);
            };
            const double eyes = std::max(blob(-s.eye_dx, s.eye_y, 0.05, 0.03), blob(s.eye_dx, s.eye_y, 0.05, 0.03));
            const double mouth = blob(0.0, s.mouth_y, 0.09, 0.03);
            for (int c = 0; c < 3; ++c) {
                const double bg = s.background[static_cast<std::size_t>(c)] + 0.12 * (py - 0.5);
                double skin = s.skin[static_cast<std::size_t>(c)] * light;
                const Rgb eye_col{0.18, 0.14, 0.12};
                const Rgb lip_col{0.62, 0.28, 0.30};
                skin = skin * (1.0 - eyes) + eye_col[static_cast<std::size_t>(c)] * eyes;
                skin = skin * (1.0 - mouth) + lip_col[static_cast<std::size_t>(c)] * mouth;
                img[(static_cast<std::size_t>(c) * h + y) * w + x] = bg * (1.0 - face) + skin * face;
            }
        }
    }
    gaussian_blur(img, spec.blur_sigma);
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < h * w; ++i) {
            double& v = img[static_cast<std::size_t>(c) * h * w + i];
            v = io::quantize8(v + spec.brightness + spec.tint[static_cast<std::size_t>(c)]);
        }
    }
    return img;
}

struct Perturbation {
    // Per-pixel delta (3 x H x W) and exact footprint (1 x H x W).
    Tensor delta;
    Tensor mask;
};

Perturbation make_perturbation(const std::string& gen, const SyntheticDomainSpec& spec, const SubjectLook& s,
                               Rng& rng) {
    const int h = spec.height, w = spec.width;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Perturbation p{Tensor({3, h, w}), Tensor({1, h, w})};
    const double phase = 2.0 * std::numbers::pi * u(rng);
    const double jitter_x = 0.03 * (u(rng) - 0.5), jitter_y = 0.03 * (u(rng) - 0.5);

    auto set = [&](int y, int x, const Rgb& d) {
        p.mask[static_cast<std::size_t>(y) * w + x] = 1.0;
        for (int c = 0; c < 3; ++c) p.delta[(static_cast<std::size_t>(c) * h + y) * w + x] = d[static_cast<std::size_t>(c)];
    };
    auto in_ellipse = [&](double px, double py, double ex, double ey, double ax, double ay) {
        const double dx = (px - ex) / ax, dy = (py - ey) / ay;
        return dx * dx + dy * dy <= 1.0;
    };
    auto texture = [&](double px, double py, double f) {
        return std::fabs(std::sin(2.0 * std::numbers::pi * f * (px + 0.7 * py) + phase));
    };
    // Pixel-scale material grain of the mannequin, cosmetic and funny-eye
    // materials; a flat colour shift alone is indistinguishable from natural
    // skin-tone spread, so these patches need a local texture to be found.
    auto grain = [&](int y, int x, const Rgb& d) {
        const double g = ((x + y) % 2 == 0 ? 1.0 : -1.0) * kGrain;
        return Rgb{d[0] + g, d[1] + g, d[2] + g};
    };

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double px = (x + 0.5) / w, py = (y + 0.5) / h;
            const double fx = s.cx + jitter_x, fy = s.cy + jitter_y;
            if (gen == "fullframe_tint") {
                const double t = 1.0 + 0.5 * texture(px, py, 3.0);
                set(y, x, {0.09 * t, 0.06 * t, -0.06 * t});
            } else if (gen == "fullframe_moire") {
                const double stripes = std::sin(2.0 * std::numbers::pi * (w / 5.0) * (0.8 * px + 0.6 * py) + phase);
                const double sign = stripes >= 0.0 ? 1.0 : -1.0;
                const double mag = 0.06 + 0.04 * texture(px, py, w / 3.0);
                set(y, x, {sign * mag, sign * mag, sign * mag});
            } else if (gen == "ellipse_face") {
                if (in_ellipse(px, py, fx, fy + 0.02, 0.8 * s.rx, 0.7 * s.ry)) {
                    const double t = 1.0 + 0.3 * texture(px, py, 2.0);
                    set(y, x, grain(y, x, {-0.08 * t, 0.07 * t, 0.10 * t}));
                }
            } else if (gen == "ellipse_full_mask") {
                if (in_ellipse(px, py, fx, fy, 0.95 * s.rx, 0.9 * s.ry)) {
                    const double t = 1.0 + 0.3 * texture(px, py, 1.5);
                    set(y, x, {0.08 * t, 0.08 * t, 0.08 * t});
                }
            } else if (gen == "stroke_eyes_lips") {
                const bool shadow = in_ellipse(px, py, fx - s.eye_dx, fy + s.eye_y - 0.03, 0.10, 0.06) ||
                                    in_ellipse(px, py, fx + s.eye_dx, fy + s.eye_y - 0.03, 0.10, 0.06);
                const bool lips = in_ellipse(px, py, fx, fy + s.mouth_y, 0.14, 0.065);
                if (shadow || lips) {
                    const double t = 1.0 + 0.4 * texture(px, py, 4.0);
                    set(y, x, grain(y, x, shadow ? Rgb{0.10 * t, -0.05 * t, 0.09 * t} : Rgb{0.12 * t, -0.06 * t, -0.05 * t}));
                }
            } else if (gen == "stroke_obfuscation") {
                const bool band = std::fabs(py - (fy + 0.05)) < 0.05 && std::fabs(px - fx) < 0.9 * s.rx;
                if (band) {
                    const double t = 1.0 + 0.3 * texture(px, py, 3.0);
                    set(y, x, {-0.07 * t, -0.07 * t, 0.09 * t});
                }
            } else if (gen == "rect_eyes") {
                const bool left = std::fabs(px - (fx - s.eye_dx)) < 0.095 && std::fabs(py - (fy + s.eye_y)) < 0.08;
                const bool right = std::fabs(px - (fx + s.eye_dx)) < 0.095 && std::fabs(py - (fy + s.eye_y)) < 0.08;
                if (left || right) {
                    const int cx = static_cast<int>(std::floor(px * w / 3.0)), cy = static_cast<int>(std::floor(py * h / 3.0));
                    const double sign = ((cx + cy) % 2 == 0) ? 1.0 : -1.0;
                    set(y, x, grain(y, x, {0.15 * sign, 0.15 * sign, 0.15 * sign}));
                }
            } else if (gen == "rect_glasses") {
                const bool bar = std::fabs(px - fx) < 0.85 * s.rx && std::fabs(py - (fy + s.eye_y)) < 0.04;
                if (bar) set(y, x, {-0.10, -0.10, -0.10});
            } else {
                fail(ErrorKind::config, "unknown patch generator '" + gen + "'");
            }
        }
    }
    return p;
}

Tensor apply_perturbation(const Tensor& base, const Perturbation& p) {
    Tensor out = base;
    const std::size_t plane = p.mask.size();
    for (std::size_t i = 0; i < plane; ++i) {
        if (p.mask[i] == 0.0) continue;
        for (std::size_t c = 0; c < 3; ++c) {
            const double b = base[c * plane + i];
            double d = p.delta[c * plane + i];
            // Flip the push direction instead of clipping so every covered
            // pixel keeps a nonzero difference after quantisation.
            if (b + d > 1.0 || b + d < 0.0) d = -d;
            out[c * plane + i] = io::quantize8(b + d);
        }
    }
    return out;
}

void validate_spec(const std::string& id, const SyntheticDomainSpec& spec) {
    require(spec.height >= 8 && spec.width >= 8 && spec.height <= 2048 && spec.width <= 2048, ErrorKind::config,
            "subset " + id + ": invalid image size " + std::to_string(spec.height) + "x" + std::to_string(spec.width));
    require(spec.n_live >= 0 && spec.n_spoof >= 0, ErrorKind::config, "subset " + id + ": negative sample count");
    require(spec.n_spoof == 0 || !spec.spoof_types.empty(), ErrorKind::config,
            "subset " + id + ": spoof samples requested without spoof types");
    require(spec.n_subjects >= 1, ErrorKind::config, "subset " + id + ": need at least one subject");
    require(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0, ErrorKind::config,
            "subset " + id + ": test_fraction must be in [0,1)");
    for (const auto& t : spec.spoof_types) {
        const auto& ids = patch_generator_ids();
        require(std::find(ids.begin(), ids.end(), t.patch_generator_id) != ids.end(), ErrorKind::config,
                "subset " + id + ": unknown patch generator '" + t.patch_generator_id + "'");
        require(t.macro != SpoofMacro::none, ErrorKind::config, "subset " + id + ": spoof type with macro none");
    }
}

std::string padded(int v, int width) {
    std::string s = std::to_string(v);
    return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

SubsetSplits generate_subset(const std::string& id, const SyntheticDomainSpec& spec) {
    std::vector<SubjectLook> subjects;
    for (int i = 0; i < spec.n_subjects; ++i) subjects.push_back(make_subject(spec, i));

    std::vector<int> order(static_cast<std::size_t>(spec.n_subjects));
    for (int i = 0; i < spec.n_subjects; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng split_rng(derive_seed(spec.seed, 0x5911));
    std::shuffle(order.begin(), order.end(), split_rng);
    int n_test = static_cast<int>(std::lround(spec.test_fraction * spec.n_subjects));
    if (spec.test_fraction > 0.0 && spec.n_subjects >= 2) n_test = std::clamp(n_test, 1, spec.n_subjects - 1);
    std::set<int> test_subjects(order.begin(), order.begin() + n_test);

    SubsetSplits out;
    out.train.split = Split::train;
    out.test.split = Split::test;
    out.train.subset_id = out.test.subset_id = id;

    auto emit = [&](bool spoof, int idx) {
        const int subj = idx % spec.n_subjects;
        const SubjectLook& look = subjects[static_cast<std::size_t>(subj)];
        Rng rng(derive_seed(spec.seed, spoof ? 0x5B00F : 0x11FE, static_cast<std::uint64_t>(idx)));
        ImageSample s;
        s.sample_id = id + "-s" + padded(subj, 3) + "-" + (spoof ? "S" : "L") + padded(idx, 4);
        s.ethnicity = look.ethnicity;
        s.age = look.age;
        s.domain_id = id;
        Tensor base = render_face(spec, look, rng);
        if (spoof) {
            const SpoofType& t = spec.spoof_types[static_cast<std::size_t>(idx) % spec.spoof_types.size()];
            Perturbation p = make_perturbation(t.patch_generator_id, spec, look, rng);
            s.label = Label::spoof;
            s.spoof_macro = t.macro;
            s.spoof_micro = t.micro;
            s.image = apply_perturbation(base, p);
            s.gt_mask = p.mask;
        } else {
            s.label = Label::live;
            s.spoof_macro = SpoofMacro::none;
            s.image = base;
            s.gt_mask = Tensor({1, spec.height, spec.width}, 0.0);
        }
        s.base_live = std::move(base);
        (test_subjects.count(subj) ? out.test : out.train).samples.push_back(std::move(s));
    };
    for (int i = 0; i < spec.n_live; ++i) emit(false, i);
    for (int i = 0; i < spec.n_spoof; ++i) emit(true, i);
    return out;
}

}  // namespace

const std::vector<std::string>& patch_generator_ids() {
    static const std::vector<std::string> ids{"fullframe_tint",   "fullframe_moire",   "ellipse_face",
                                              "ellipse_full_mask", "stroke_eyes_lips", "stroke_obfuscation",
                                              "rect_eyes",        "rect_glasses"};
    return ids;
}

SpoofMacro default_macro_for(const std::string& micro) {
    if (micro == "print") return SpoofMacro::print;
    if (micro == "replay") return SpoofMacro::replay;
    if (micro == "mannequin" || micro == "full_mask") return SpoofMacro::mask3d;
    if (micro == "cosmetic" || micro == "obfuscation") return SpoofMacro::makeup;
    if (micro == "funny_eyes" || micro == "paper_glasses") return SpoofMacro::partial;
    fail(ErrorKind::config, "unknown spoof micro type '" + micro + "'");
}

Benchmark generate_synthetic_benchmark(const std::map<std::string, SyntheticDomainSpec>& specs) {
    require(specs.count("A") == 1, ErrorKind::config, "subset A spec is required");
    for (const auto& [id, spec] : specs) validate_spec(id, spec);
    if (auto b = specs.find("B"); b != specs.end()) {
        std::set<std::string> a_micro;
        for (const auto& t : specs.at("A").spoof_types) a_micro.insert(t.micro);
        for (const auto& t : b->second.spoof_types) {
            require(!a_micro.count(t.micro), ErrorKind::protocol_violation,
                    "spoof type '" + t.micro + "' appears in both subset A and subset B");
        }
    }
    Benchmark bench;
    for (const auto& [id, spec] : specs) {
        SubsetSplits s = generate_subset(id, spec);
        check_subject_disjoint(s.train, s.test);
        validate_manifest(s.train);
        validate_manifest(s.test);
        bench.emplace(id, std::move(s));
    }
    return bench;
}

void write_benchmark(const fs::path& dir, Benchmark& bench) {
    for (auto& [id, splits] : bench) {
        const fs::path sub = dir / id;
        for (DatasetManifest* m : {&splits.train, &splits.test}) {
            m->root = sub;
            for (ImageSample& s : m->samples) {
                s.path = "images/" + s.sample_id + ".png";
                io::write_png(sub / s.path, s.image);
                if (s.gt_mask) {
                    s.gt_mask_path = "masks/" + s.sample_id + ".png";
                    io::write_png(sub / s.gt_mask_path, *s.gt_mask);
                }
                if (s.base_live) io::write_png(sub / "base" / (s.sample_id + ".png"), *s.base_live);
            }
            write_manifest(sub / (std::string(to_string(m->split)) + ".csv"), *m);
        }
    }
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
    validate_manifest(m);
    std::ostringstream out;
    out << kManifestHeader << '\n';
    for (const ImageSample& s : m.samples) {
        std::vector<std::string> f{s.sample_id,
                                   s.path,
                                   to_string(s.label),
                                   to_string(s.spoof_macro),
                                   s.spoof_micro,
                                   s.ethnicity,
                                   std::to_string(s.age),
                                   s.illum_cluster ? std::to_string(*s.illum_cluster) : std::string(),
                                   s.domain_id,
                                   s.gt_mask_path};
        for (const auto& field : f) {
            require(field.find_first_of(",\n\r\"") == std::string::npos, ErrorKind::schema,
                    "field '" + field + "' of " + s.sample_id + " contains a reserved character");
        }
        out << io::join(f, ',') << '\n';
    }
    io::write_text(path, out.str());
}

DatasetManifest load_manifest(const fs::path& path) {
    const std::string text = io::read_text(path);
    std::vector<std::string> lines = io::split(text, '\n');
    while (!lines.empty() && io::trim(lines.back()).empty()) lines.pop_back();
    require(!lines.empty(), ErrorKind::schema, path.string() + ": missing header");

    const std::vector<std::string> expected = io::split(kManifestHeader, ',');
    std::vector<std::string> header = io::split(io::trim(lines[0]), ',');
    for (auto& h : header) h = io::trim(h);
    for (const auto& col : expected) {
        require(std::find(header.begin(), header.end(), col) != header.end(), ErrorKind::schema,
                path.string() + ": missing column '" + col + "'");
    }
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;

    DatasetManifest m;
    m.root = fs::absolute(path).parent_path();
    m.subset_id = path.parent_path().filename().string();
    m.split = path.stem().string().find("test") != std::string::npos ? Split::test : Split::train;
    std::unordered_set<std::string> ids;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::string line = io::trim(lines[li]);
        const std::string where = path.string() + " row " + std::to_string(li);
        if (line.empty()) continue;
        const std::vector<std::string> f = io::split(line, ',');
        require(f.size() == header.size(), ErrorKind::schema,
                where + ": expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
        auto get = [&](const char* name) { return io::trim(f[col.at(name)]); };
        ImageSample s;
        s.sample_id = get("sample_id");
        require(!s.sample_id.empty(), ErrorKind::schema, where + ": empty sample_id");
        require(ids.insert(s.sample_id).second, ErrorKind::schema, where + ": duplicate sample_id '" + s.sample_id + "'");
        s.path = get("path");
        try {
            s.label = parse_label(get("label"));
            s.spoof_macro = parse_macro(get("spoof_macro"));
        } catch (const Error& e) {
            fail(ErrorKind::schema, where + ": " + e.what());
        }
        s.spoof_micro = get("spoof_micro");
        s.ethnicity = get("ethnicity");
        try {
            s.age = std::stoi(get("age"));
            const std::string ic = get("illum_cluster");
            if (!ic.empty()) s.illum_cluster = std::stoi(ic);
        } catch (const std::exception&) {
            fail(ErrorKind::schema, where + ": malformed integer field");
        }
        s.domain_id = get("domain_id");
        s.gt_mask_path = get("gt_mask_path");
        if (s.label == Label::live) {
            require(s.spoof_macro == SpoofMacro::none, ErrorKind::schema, where + ": live sample with spoof_macro");
        }
        m.samples.push_back(std::move(s));
    }
    return m;
}

void load_images(DatasetManifest& m) {
    for (ImageSample& s : m.samples) {
        if (s.image.empty()) {
            require(!s.path.empty(), ErrorKind::data, s.sample_id + ": no image path");
            Tensor img = io::read_png(m.root / s.path);
            require(img.dim(0) == 3, ErrorKind::data, s.sample_id + ": image is not RGB");
            s.image = std::move(img);
        }
        if (!s.gt_mask && !s.gt_mask_path.empty()) {
            Tensor mask = io::read_png(m.root / s.gt_mask_path);
            require(mask.dim(0) == 1, ErrorKind::data, s.sample_id + ": mask is not single-channel");
            for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = mask[i] > 0.5 ? 1.0 : 0.0;
            s.gt_mask = std::move(mask);
        }
    }
    validate_manifest(m);
}

void load_base_faces(DatasetManifest& m) {
    for (ImageSample& s : m.samples) {
        if (s.base_live) continue;
        fs::path p = m.root / "base" / (s.sample_id + ".png");
        // Manifests assembled from several subsets point into <subset>/images/.
        if (!fs::exists(p) && !s.path.empty()) p = (m.root / s.path).parent_path().parent_path() / "base" / p.filename();
        if (fs::exists(p)) s.base_live = io::read_png(p);
    }
}

Tensor Batch::live_targets() const {
    Tensor t({size(), 1});
    for (int i = 0; i < size(); ++i) t[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] == Label::live ? 1.0 : 0.0;
    return t;
}

Batch make_batch(const DatasetManifest& m, const std::vector<std::size_t>& rows) {
    require(!rows.empty(), ErrorKind::data, "empty batch");
    Batch b;
    std::vector<Tensor> imgs, masks;
    for (std::size_t r : rows) {
        const ImageSample& s = m.samples.at(r);
        require(!s.image.empty(), ErrorKind::data, s.sample_id + ": image not loaded");
        imgs.push_back(s.image);
        masks.push_back(s.gt_mask ? *s.gt_mask : Tensor({1, s.image.dim(1), s.image.dim(2)}, 0.0));
        b.labels.push_back(s.label);
        b.indices.push_back(r);
        b.sample_ids.push_back(s.sample_id);
    }
    b.images = stack(imgs);
    b.masks = stack(masks);
    return b;
}

Batch sample_batch(const DatasetManifest& m, int batch_size, double live_fraction, Rng& rng) {
    require(batch_size > 0, ErrorKind::config, "batch_size must be positive");
    require(live_fraction >= 0.0 && live_fraction <= 1.0, ErrorKind::config, "live_fraction must be in [0,1]");
    const int n_live = static_cast<int>(std::lround(batch_size * live_fraction));
    const int n_spoof = batch_size - n_live;
    std::vector<std::size_t> live, spoof;
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
        (m.samples[i].label == Label::live ? live : spoof).push_back(i);
    }
    require(static_cast<int>(live.size()) >= n_live, ErrorKind::data,
            "manifest has " + std::to_string(live.size()) + " live samples, batch needs " + std::to_string(n_live));
    require(static_cast<int>(spoof.size()) >= n_spoof, ErrorKind::data,
            "manifest has " + std::to_string(spoof.size()) + " spoof samples, batch needs " + std::to_string(n_spoof));
    // Partial Fisher-Yates: draws without replacement, consuming a fixed amount of rng.
    auto draw = [&rng](std::vector<std::size_t>& pool, int k, std::vector<std::size_t>& out) {
        for (int i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> d(static_cast<std::size_t>(i), pool.size() - 1);
            std::swap(pool[static_cast<std::size_t>(i)], pool[d(rng)]);
            out.push_back(pool[static_cast<std::size_t>(i)]);
        }
    };
    std::vector<std::size_t> rows;
    draw(live, n_live, rows);
    draw(spoof, n_spoof, rows);
    return make_batch(m, rows);
}

DatasetManifest concat_manifests(const DatasetManifest& a, const DatasetManifest& b, std::string subset_id) {
    DatasetManifest out;
    out.split = a.split;
    out.subset_id = std::move(subset_id);
    out.root = a.root;
    out.samples = a.samples;
    for (ImageSample s : b.samples) {
        // keep paths resolvable when the roots differ
        if (!s.path.empty() && b.root != a.root) s.path = (b.root / s.path).string();
        if (!s.gt_mask_path.empty() && b.root != a.root) s.gt_mask_path = (b.root / s.gt_mask_path).string();
        out.samples.push_back(std::move(s));
    }
    validate_manifest(out);
    return out;
}

}  // namespace fasw
