#pragma once

// Procedural pedestrians: a stylized figure whose geometry and colours encode
// the attributes of the synthetic task policy, drawn over a cluttered
// background with optional occluders. The foreground mask covers exactly the
// visible figure pixels.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "par/policy.hpp"
#include "par/sample.hpp"

namespace par {

struct SynthGrammar {
    std::array<double, 3> figure{1.0 / 3, 1.0 / 3, 1.0 / 3};  // thin, normal, fat
    double hat = 0.5;
    std::array<double, 3> torso{1.0 / 3, 1.0 / 3, 1.0 / 3};  // red, blue, green
    double dark_legs = 0.5;
    double arm_raised = 0.5;

    bool operator==(const SynthGrammar&) const = default;
};

struct SynthSpec {
    std::size_t num_samples = 64;
    std::size_t val_count = 0;   // taken after the training samples
    std::size_t test_count = 0;  // taken last
    double clutter = 0.0;        // 0 gives a uniform background
    double occluder_probability = 0.0;
    std::uint64_t seed = 0;
    std::size_t height = 64;
    std::size_t width = 48;
    SynthGrammar grammar;

    // Throws ValidationError.
    void validate() const;
    bool operator==(const SynthSpec&) const = default;
};

nlohmann::json to_json(const SynthSpec& spec);
// Missing keys keep their defaults.
SynthSpec synth_spec_from_json(const nlohmann::json& document);

enum class FigureSize { thin, normal, fat };
enum class TorsoColor { red, blue, green };

struct FigureAttributes {
    FigureSize size = FigureSize::normal;
    bool hat = false;
    TorsoColor torso = TorsoColor::red;
    bool dark_legs = false;
    bool arm_raised = false;

    bool operator==(const FigureAttributes&) const = default;
};

// Multi-hot vector in synthetic_policy() order.
std::vector<std::uint8_t> attribute_labels(const FigureAttributes& attributes);

// Five tasks, one category each: Figure(3), Headwear(2), TorsoColor(3),
// LegColor(2), Arm(2).
TaskPolicy synthetic_policy();

// Draws one sample. Everything except `attributes` (placement jitter,
// background, clutter, occluder) comes from `scene_seed`, so two calls that
// differ only in the attributes share the same scene.
Sample render_sample(const SynthSpec& spec, const FigureAttributes& attributes, std::uint64_t scene_seed);

FigureAttributes sample_attributes(const SynthGrammar& grammar, std::uint64_t seed);

// Sample i uses the stream combine_seed(spec.seed, i); ids are "s00000"...
// Throws ValidationError for zero samples.
std::vector<Sample> synth_generate(const SynthSpec& spec);

// Writes images/<id>.png, masks/<id>.png and manifest.jsonl under `dir`.
// Returns the manifest path.
std::filesystem::path write_dataset(const std::vector<Sample>& samples, const TaskPolicy& policy,
                                    const std::filesystem::path& dir);

}  // namespace par
