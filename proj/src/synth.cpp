#include "par/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "par/errors.hpp"
#include "par/manifest.hpp"
#include "par/rng.hpp"

namespace par {

namespace {

using Color = std::array<float, 3>;

constexpr Color kRed{0.85f, 0.15f, 0.15f};
constexpr Color kBlue{0.15f, 0.25f, 0.85f};
constexpr Color kGreen{0.15f, 0.70f, 0.20f};
constexpr Color kSkin{0.90f, 0.75f, 0.60f};
constexpr Color kHat{0.95f, 0.85f, 0.10f};
constexpr Color kDarkLegs{0.12f, 0.12f, 0.18f};
constexpr Color kLightLegs{0.85f, 0.80f, 0.65f};

constexpr double kHalfWidth[3] = {0.16, 0.22, 0.30};  // of image width

Color torso_color(TorsoColor c) {
    switch (c) {
        case TorsoColor::red: return kRed;
        case TorsoColor::blue: return kBlue;
        case TorsoColor::green: return kGreen;
    }
    return kRed;
}

class Canvas {
public:
    Canvas(std::size_t h, std::size_t w) : image(h, w, 3), figure(h, w, 1) {}

    void fill(const Color& c) {
        for (std::size_t i = 0; i < image.height * image.width; ++i) {
            for (std::size_t k = 0; k < 3; ++k) image.pixels[i * 3 + k] = c[k];
        }
    }

    // Coordinates are in pixels; a pixel is covered when its center is inside.
    void rect(double x0, double y0, double x1, double y1, const Color& c, float figure_value) {
        for_pixels([&](double x, double y) { return x >= x0 && x < x1 && y >= y0 && y < y1; }, c, figure_value);
    }

    void ellipse(double cx, double cy, double rx, double ry, const Color& c, float figure_value) {
        for_pixels(
            [&](double x, double y) {
                const double dx = (x - cx) / rx, dy = (y - cy) / ry;
                return dx * dx + dy * dy <= 1.0;
            },
            c, figure_value);
    }

    Image image;
    Image figure;

private:
    template <typename Inside>
    void for_pixels(Inside inside, const Color& c, float figure_value) {
        for (std::size_t y = 0; y < image.height; ++y) {
            for (std::size_t x = 0; x < image.width; ++x) {
                if (!inside(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) continue;
                for (std::size_t k = 0; k < 3; ++k) image.at(y, x, k) = c[k];
                if (figure_value >= 0.0f) figure.at(y, x) = figure_value;
            }
        }
    }
};

// Per-scene random draws, made in a fixed order independent of attributes.
struct Scene {
    float background = 0.5f;
    struct Shape {
        bool ellipse;
        double x, y, w, h;
        Color color;
    };
    std::vector<Shape> clutter;
    bool distractor = false;
    double distractor_side = 0.0;
    FigureAttributes distractor_attributes;
    double dx = 0.0, dy = 0.0, scale = 1.0;
    std::array<float, 3> jitter{};
    bool occluded = false;
    bool occluder_bottom = false;
    bool occluder_left = false;
    double occluder_extent = 0.0;
    double occluder_start = 0.0;
    Color occluder_color{};
    std::vector<float> noise;
};

Scene draw_scene(const SynthSpec& spec, std::uint64_t scene_seed) {
    std::mt19937_64 gen(scene_seed);
    auto u = [&](double lo = 0.0, double hi = 1.0) { return lo + (hi - lo) * unit_interval(gen()); };
    Scene s;
    s.background = static_cast<float>(u(0.35, 0.65));
    const auto shapes = static_cast<std::size_t>(std::lround(spec.clutter * 10.0));
    static const std::array<Color, 3> kSaturated{kRed, kBlue, kGreen};
    for (std::size_t i = 0; i < shapes; ++i) {
        Scene::Shape sh;
        sh.ellipse = u() < 0.5;
        sh.x = u(-0.1, 1.0);
        sh.y = u(-0.1, 1.0);
        sh.w = u(0.1, 0.4);
        sh.h = u(0.05, 0.3);
        if (u() < 0.5) {
            sh.color = kSaturated[static_cast<std::size_t>(u(0.0, 2.999))];
        } else {
            sh.color = {static_cast<float>(u()), static_cast<float>(u()), static_cast<float>(u())};
        }
        s.clutter.push_back(sh);
    }
    s.distractor = u() < spec.clutter;
    s.distractor_side = u() < 0.5 ? 0.02 : 0.98;
    s.distractor_attributes = sample_attributes(SynthGrammar{}, gen());
    s.dx = u(-0.04, 0.04);
    s.dy = u(-0.02, 0.02);
    s.scale = u(0.95, 1.05);
    for (auto& j : s.jitter) j = static_cast<float>(u(-0.06, 0.06));
    s.occluded = u() < spec.occluder_probability;
    s.occluder_bottom = u() < 0.5;
    s.occluder_left = u() < 0.5;
    s.occluder_extent = u(0.12, 0.22);
    s.occluder_start = u(0.25, 0.6);
    const float g = static_cast<float>(u(0.2, 0.8));
    s.occluder_color = {g, g * 0.8f, g * 0.6f};
    if (spec.clutter > 0.0) {
        s.noise.resize(spec.height * spec.width * 3);
        for (auto& n : s.noise) n = static_cast<float>(u(-0.08, 0.08) * spec.clutter);
    }
    return s;
}

Color jittered(const Color& c, const std::array<float, 3>& j) {
    return {std::clamp(c[0] + j[0], 0.0f, 1.0f), std::clamp(c[1] + j[1], 0.0f, 1.0f),
            std::clamp(c[2] + j[2], 0.0f, 1.0f)};
}

// figure_value 1 marks the person of interest, -1 leaves the mask untouched.
void draw_figure(Canvas& canvas, const FigureAttributes& a, double cx, double cy_offset, double scale,
                 const std::array<float, 3>& jitter, float figure_value) {
    const double H = static_cast<double>(canvas.image.height);
    const double W = static_cast<double>(canvas.image.width);
    const double hw = kHalfWidth[static_cast<int>(a.size)] * W * scale;
    const double oy = cy_offset * H;

    const Color legs = jittered(a.dark_legs ? kDarkLegs : kLightLegs, jitter);
    const double leg_w = 0.09 * W;
    canvas.rect(cx - 0.02 * W - leg_w, 0.52 * H + oy, cx - 0.02 * W, 0.97 * H + oy, legs, figure_value);
    canvas.rect(cx + 0.02 * W, 0.52 * H + oy, cx + 0.02 * W + leg_w, 0.97 * H + oy, legs, figure_value);

    const double arm_w = 0.07 * W;
    const Color skin = jittered(kSkin, jitter);
    canvas.rect(cx - hw - arm_w, 0.27 * H + oy, cx - hw + 0.02 * W, 0.56 * H + oy, skin, figure_value);
    if (a.arm_raised) {
        canvas.rect(cx + hw - 0.02 * W, 0.03 * H + oy, cx + hw + arm_w, 0.33 * H + oy, skin, figure_value);
    } else {
        canvas.rect(cx + hw - 0.02 * W, 0.27 * H + oy, cx + hw + arm_w, 0.56 * H + oy, skin, figure_value);
    }

    canvas.ellipse(cx, 0.40 * H + oy, hw, 0.16 * H, jittered(torso_color(a.torso), jitter), figure_value);

    const double head_y = 0.14 * H + oy;
    const double r = 0.085 * H;
    canvas.ellipse(cx, head_y, r, r, skin, figure_value);
    if (a.hat) {
        const Color hat = jittered(kHat, jitter);
        canvas.rect(cx - 0.9 * r, head_y - 1.6 * r, cx + 0.9 * r, head_y - 0.3 * r, hat, figure_value);
        canvas.rect(cx - 1.5 * r, head_y - 0.5 * r, cx + 1.5 * r, head_y - 0.2 * r, hat, figure_value);
    }
}

float quantize(float v) { return static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f; }

std::size_t pick(const std::array<double, 3>& probabilities, double u) {
    const double total = probabilities[0] + probabilities[1] + probabilities[2];
    double acc = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
        acc += probabilities[i] / total;
        if (u < acc) return i;
    }
    return 2;
}

}  // namespace

void SynthSpec::validate() const {
    if (num_samples == 0) throw ValidationError("synth: zero samples requested");
    if (val_count + test_count > num_samples) {
        throw ValidationError("synth: val_count + test_count exceeds num_samples");
    }
    if (clutter < 0.0 || clutter > 1.0) throw ValidationError("synth: clutter must lie in [0, 1]");
    if (occluder_probability < 0.0 || occluder_probability > 1.0) {
        throw ValidationError("synth: occluder_probability must lie in [0, 1]");
    }
    if (height < 16 || width < 16) throw ValidationError("synth: image must be at least 16 x 16");
    auto check_probability = [](double p, const char* what) {
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string("synth: grammar.") + what + " outside [0, 1]");
    };
    check_probability(grammar.hat, "hat");
    check_probability(grammar.dark_legs, "dark_legs");
    check_probability(grammar.arm_raised, "arm_raised");
    for (const auto* dist : {&grammar.figure, &grammar.torso}) {
        double sum = 0.0;
        for (double p : *dist) {
            check_probability(p, "figure/torso");
            sum += p;
        }
        if (sum <= 0.0) throw ValidationError("synth: categorical grammar entry sums to zero");
    }
}

nlohmann::json to_json(const SynthSpec& spec) {
    return {{"num_samples", spec.num_samples},
            {"val_count", spec.val_count},
            {"test_count", spec.test_count},
            {"clutter", spec.clutter},
            {"occluder_probability", spec.occluder_probability},
            {"seed", spec.seed},
            {"height", spec.height},
            {"width", spec.width},
            {"grammar",
             {{"figure", spec.grammar.figure},
              {"hat", spec.grammar.hat},
              {"torso", spec.grammar.torso},
              {"dark_legs", spec.grammar.dark_legs},
              {"arm_raised", spec.grammar.arm_raised}}}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& document) {
    SynthSpec spec;
    try {
        spec.num_samples = document.value("num_samples", spec.num_samples);
        spec.val_count = document.value("val_count", spec.val_count);
        spec.test_count = document.value("test_count", spec.test_count);
        spec.clutter = document.value("clutter", spec.clutter);
        spec.occluder_probability = document.value("occluder_probability", spec.occluder_probability);
        spec.seed = document.value("seed", spec.seed);
        spec.height = document.value("height", spec.height);
        spec.width = document.value("width", spec.width);
        if (document.contains("grammar")) {
            const auto& g = document.at("grammar");
            spec.grammar.figure = g.value("figure", spec.grammar.figure);
            spec.grammar.hat = g.value("hat", spec.grammar.hat);
            spec.grammar.torso = g.value("torso", spec.grammar.torso);
            spec.grammar.dark_legs = g.value("dark_legs", spec.grammar.dark_legs);
            spec.grammar.arm_raised = g.value("arm_raised", spec.grammar.arm_raised);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("synth spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

std::vector<std::uint8_t> attribute_labels(const FigureAttributes& a) {
    std::vector<std::uint8_t> y(12, 0);
    y[static_cast<std::size_t>(a.size)] = 1;
    y[a.hat ? 3 : 4] = 1;
    y[5 + static_cast<std::size_t>(a.torso)] = 1;
    y[a.dark_legs ? 8 : 9] = 1;
    y[a.arm_raised ? 10 : 11] = 1;
    return y;
}

TaskPolicy synthetic_policy() {
    return TaskPolicy("Synthetic", {
                                       {"FullBody", {{"Figure", {"Thin", "Normal", "Fat"}}}},
                                       {"Head", {{"Headwear", {"Hat", "Bareheaded"}}}},
                                       {"UpperBody", {{"TorsoColor", {"RedTorso", "BlueTorso", "GreenTorso"}}}},
                                       {"LowerBody", {{"LegColor", {"DarkLegs", "LightLegs"}}}},
                                       {"Action", {{"Arm", {"ArmRaised", "ArmsDown"}}}},
                                   });
}

FigureAttributes sample_attributes(const SynthGrammar& grammar, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    FigureAttributes a;
    a.size = static_cast<FigureSize>(pick(grammar.figure, unit_interval(gen())));
    a.hat = unit_interval(gen()) < grammar.hat;
    a.torso = static_cast<TorsoColor>(pick(grammar.torso, unit_interval(gen())));
    a.dark_legs = unit_interval(gen()) < grammar.dark_legs;
    a.arm_raised = unit_interval(gen()) < grammar.arm_raised;
    return a;
}

Sample render_sample(const SynthSpec& spec, const FigureAttributes& attributes, std::uint64_t scene_seed) {
    const Scene scene = draw_scene(spec, scene_seed);
    const double H = static_cast<double>(spec.height);
    const double W = static_cast<double>(spec.width);
    Canvas canvas(spec.height, spec.width);
    canvas.fill({scene.background, scene.background, scene.background});

    for (const auto& sh : scene.clutter) {
        if (sh.ellipse) {
            canvas.ellipse(sh.x * W, sh.y * H, sh.w * W / 2, sh.h * H / 2, sh.color, -1.0f);
        } else {
            canvas.rect(sh.x * W, sh.y * H, (sh.x + sh.w) * W, (sh.y + sh.h) * H, sh.color, -1.0f);
        }
    }
    if (scene.distractor) {
        draw_figure(canvas, scene.distractor_attributes, scene.distractor_side * W, 0.0, 1.0, {}, -1.0f);
    }

    draw_figure(canvas, attributes, W / 2 + scene.dx * W, scene.dy, scene.scale, scene.jitter, 1.0f);

    if (scene.occluded) {
        if (scene.occluder_bottom) {
            const double top = (1.0 - scene.occluder_extent) * H;
            canvas.rect(0.0, top, W, H, scene.occluder_color, 0.0f);
        } else {
            const double cx = W / 2 + scene.dx * W;
            const double band = scene.occluder_extent * W;
            const double x0 = scene.occluder_left ? cx - 0.35 * W : cx + 0.35 * W - band;
            canvas.rect(x0, scene.occluder_start * H, x0 + band, H, scene.occluder_color, 0.0f);
        }
    }

    for (std::size_t i = 0; i < canvas.image.pixels.size(); ++i) {
        float v = canvas.image.pixels[i];
        if (!scene.noise.empty()) v += scene.noise[i];
        canvas.image.pixels[i] = quantize(v);
    }

    Sample s;
    s.image = std::move(canvas.image);
    s.mask = std::move(canvas.figure);
    s.labels = attribute_labels(attributes);
    return s;
}

std::vector<Sample> synth_generate(const SynthSpec& spec) {
    spec.validate();
    std::vector<Sample> out;
    out.reserve(spec.num_samples);
    const std::size_t train_count = spec.num_samples - spec.val_count - spec.test_count;
    for (std::size_t i = 0; i < spec.num_samples; ++i) {
        const auto stream = combine_seed(spec.seed, i);
        const auto attributes = sample_attributes(spec.grammar, combine_seed(stream, 1));
        Sample s = render_sample(spec, attributes, combine_seed(stream, 2));
        char id[16];
        std::snprintf(id, sizeof id, "s%05zu", i);
        s.id = id;
        s.split = i < train_count ? Split::train : (i < train_count + spec.val_count ? Split::val : Split::test);
        out.push_back(std::move(s));
    }
    return out;
}

std::filesystem::path write_dataset(const std::vector<Sample>& samples, const TaskPolicy& policy,
                                    const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    std::vector<ManifestRecord> records;
    records.reserve(samples.size());
    for (const auto& s : samples) {
        ManifestRecord r;
        r.id = s.id;
        r.split = s.split;
        r.image = fs::path("images") / (s.id + ".png");
        r.mask = fs::path("masks") / (s.id + ".png");
        r.labels = s.labels;
        write_png(dir / r.image, s.image);
        write_png(dir / r.mask, s.mask);
        records.push_back(std::move(r));
    }
    const auto manifest = dir / "manifest.jsonl";
    write_manifest(manifest, records, policy);
    return manifest;
}

}  // namespace par
