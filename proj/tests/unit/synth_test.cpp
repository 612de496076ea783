#include <gtest/gtest.h>

#include <set>

#include "par/errors.hpp"
#include "par/synth.hpp"

using namespace par;

TEST(Synth, LabelsFollowAttributes) {
    FigureAttributes a;
    a.size = FigureSize::fat;
    a.hat = true;
    a.torso = TorsoColor::green;
    a.dark_legs = false;
    a.arm_raised = true;
    EXPECT_EQ(attribute_labels(a), (std::vector<std::uint8_t>{0, 0, 1, 1, 0, 0, 0, 1, 0, 1, 1, 0}));
    EXPECT_EQ(synthetic_policy().attribute_count(), 12u);
}

TEST(Synth, SameSpecSameDataset) {
    SynthSpec spec;
    spec.num_samples = 24;
    spec.clutter = 0.7;
    spec.occluder_probability = 0.5;
    spec.seed = 99;
    const auto a = synth_generate(spec);
    const auto b = synth_generate(spec);
    ASSERT_EQ(a.size(), 24u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].id, b[i].id);
        EXPECT_EQ(a[i].image, b[i].image);
        EXPECT_EQ(a[i].mask, b[i].mask);
        EXPECT_EQ(a[i].labels, b[i].labels);
    }
    spec.seed = 100;
    EXPECT_NE(synth_generate(spec)[0].image, a[0].image);
}

TEST(Synth, SampleShapesAndMask) {
    SynthSpec spec;
    spec.num_samples = 40;
    spec.clutter = 1.0;
    spec.occluder_probability = 1.0;
    for (const auto& s : synth_generate(spec)) {
        EXPECT_EQ(s.image.height, spec.height);
        EXPECT_EQ(s.image.width, spec.width);
        EXPECT_EQ(s.image.channels, 3u);
        EXPECT_EQ(s.mask.channels, 1u);
        EXPECT_TRUE(is_binary(s.mask));
        EXPECT_GT(foreground_fraction(s.mask), 0.0);
        for (float v : s.image.pixels) {
            const float q = v * 255.0f;
            EXPECT_NEAR(q, std::round(q), 1e-3f);
        }
    }
}

TEST(Synth, ZeroClutterGivesUniformBackground) {
    SynthSpec spec;
    spec.num_samples = 20;
    for (const auto& s : synth_generate(spec)) {
        std::set<std::array<float, 3>> colours;
        for (std::size_t y = 0; y < s.image.height; ++y) {
            for (std::size_t x = 0; x < s.image.width; ++x) {
                if (s.mask.at(y, x) == 0.0f) {
                    colours.insert({s.image.at(y, x, 0), s.image.at(y, x, 1), s.image.at(y, x, 2)});
                }
            }
        }
        EXPECT_EQ(colours.size(), 1u) << s.id;
    }
}

TEST(Synth, MarginalsMatchGrammar) {
    SynthSpec spec;
    spec.num_samples = 1000;
    spec.grammar.figure = {0.2, 0.5, 0.3};
    spec.grammar.hat = 0.3;
    spec.grammar.torso = {0.6, 0.25, 0.15};
    spec.grammar.dark_legs = 0.7;
    spec.grammar.arm_raised = 0.4;
    spec.height = 16;
    spec.width = 16;
    std::vector<double> counts(12, 0.0);
    for (const auto& s : synth_generate(spec)) {
        for (std::size_t a = 0; a < 12; ++a) counts[a] += s.labels[a];
    }
    const std::vector<double> expected{0.2, 0.5, 0.3, 0.3, 0.7, 0.6, 0.25, 0.15, 0.7, 0.3, 0.4, 0.6};
    for (std::size_t a = 0; a < 12; ++a) EXPECT_NEAR(counts[a] / 1000.0, expected[a], 0.03) << a;
}

TEST(Synth, EachAttributeValueRendersDistinctly) {
    SynthSpec spec;
    spec.clutter = 0.5;
    for (std::uint64_t scene = 0; scene < 10; ++scene) {
        FigureAttributes base;
        const auto ref = render_sample(spec, base, scene).image;
        auto differs = [&](FigureAttributes changed) { return render_sample(spec, changed, scene).image != ref; };
        for (auto size : {FigureSize::thin, FigureSize::fat}) {
            auto a = base;
            a.size = size;
            EXPECT_TRUE(differs(a));
        }
        for (auto torso : {TorsoColor::blue, TorsoColor::green}) {
            auto a = base;
            a.torso = torso;
            EXPECT_TRUE(differs(a));
        }
        auto hat = base;
        hat.hat = true;
        EXPECT_TRUE(differs(hat));
        auto legs = base;
        legs.dark_legs = true;
        EXPECT_TRUE(differs(legs));
        auto arm = base;
        arm.arm_raised = true;
        EXPECT_TRUE(differs(arm));
    }
}

TEST(Synth, SplitsAndIds) {
    SynthSpec spec;
    spec.num_samples = 10;
    spec.val_count = 2;
    spec.test_count = 3;
    const auto data = synth_generate(spec);
    EXPECT_EQ(data[0].id, "s00000");
    EXPECT_EQ(data[4].split, Split::train);
    EXPECT_EQ(data[5].split, Split::val);
    EXPECT_EQ(data[7].split, Split::test);
    EXPECT_EQ(data[9].split, Split::test);
}

TEST(Synth, InvalidSpecs) {
    SynthSpec spec;
    spec.num_samples = 0;
    EXPECT_THROW(synth_generate(spec), ValidationError);
    spec.num_samples = 4;
    spec.clutter = 1.5;
    EXPECT_THROW(synth_generate(spec), ValidationError);
    spec.clutter = 0.0;
    spec.test_count = 5;
    EXPECT_THROW(synth_generate(spec), ValidationError);
}

TEST(Synth, SpecJsonRoundTrip) {
    SynthSpec spec;
    spec.num_samples = 77;
    spec.clutter = 0.25;
    spec.grammar.hat = 0.1;
    EXPECT_EQ(synth_spec_from_json(to_json(spec)), spec);
    EXPECT_EQ(synth_spec_from_json(nlohmann::json::object()), SynthSpec{});
}
