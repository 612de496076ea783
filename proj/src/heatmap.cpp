#include "par/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "par/errors.hpp"

namespace par {

namespace {

Tensor<float> single(const Image& img) { return stack_images<float>({&img}); }

// g x g x D map reduced with channel weights, upsampled to S x S.
Image weighted_map(std::span<const float> features, std::size_t g, std::size_t depth,
                   const std::vector<double>& weights, std::size_t size) {
    std::vector<double> cells(g * g, 0.0);
    for (std::size_t c = 0; c < g * g; ++c) {
        double acc = 0.0;
        for (std::size_t d = 0; d < depth; ++d) acc += weights[d] * features[c * depth + d];
        cells[c] = std::max(acc, 0.0);
    }
    Image out(size, size, 1);
    const std::size_t cell = size / g;
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            out.at(y, x) = static_cast<float>(cells[(y / cell) * g + x / cell]);
        }
    }
    return out;
}

}  // namespace

std::vector<TaskHeatmap> compute_heatmaps(Model<float>& model, const ProcessedSample& sample) {
    const auto& config = model.config();
    const auto& policy = model.policy();
    const auto g = config.mask_grid();
    const auto depth = config.feature_depth();
    const auto S = config.input_size;
    if (sample.image.height != S || sample.mask.height != g) {
        throw DimensionError("compute_heatmaps: sample is not preprocessed for this model");
    }

    typename Model<float>::Output out;
    {
        NoTapeScope<float> no_tape;
        out = model.forward(single(sample.image), single(sample.mask), Mode::eval);
    }

    std::vector<TaskHeatmap> maps;
    for (std::size_t t = 0; t < policy.task_count(); ++t) {
        Tensor<float> pooled = out.pooled.detach();
        pooled.set_requires_grad(true);
        GradientTape<float> tape;
        {
            TapeScope<float> scope(tape);
            const auto probabilities = model.heads_forward(pooled, Mode::eval, 0);
            const auto begin = policy.task_offset(t);
            auto objective = ops::sum(ops::slice_last(probabilities, begin, begin + policy.task_width(t)));
            tape.backward(objective);
        }
        std::vector<double> weights(depth, 0.0);
        double total = 0.0;
        for (std::size_t d = 0; d < depth; ++d) {
            weights[d] = std::max(0.0, static_cast<double>(pooled.grad()[d]));
            total += weights[d];
        }
        if (total == 0.0) std::fill(weights.begin(), weights.end(), 1.0 / static_cast<double>(depth));
        for (auto& p : model.parameters()) p.tensor.zero_grad();

        TaskHeatmap map;
        map.task = policy.tasks()[t].name;
        map.before = weighted_map(out.features.values(), g, depth, weights, S);
        map.after = weighted_map(out.glimpses.values(), g, depth, weights, S);
        float peak = 0.0f;
        for (float v : map.before.pixels) peak = std::max(peak, v);
        for (float v : map.after.pixels) peak = std::max(peak, v);
        if (peak > 0.0f) {
            for (auto& v : map.before.pixels) v /= peak;
            for (auto& v : map.after.pixels) v /= peak;
        }
        maps.push_back(std::move(map));
    }
    return maps;
}

Image colorize(const Image& heat) {
    Image out(heat.height, heat.width, 3);
    for (std::size_t i = 0; i < heat.height * heat.width; ++i) {
        const float v = std::clamp(heat.pixels[i], 0.0f, 1.0f);
        out.pixels[i * 3 + 0] = std::clamp(1.5f - std::abs(4.0f * v - 3.0f), 0.0f, 1.0f);
        out.pixels[i * 3 + 1] = std::clamp(1.5f - std::abs(4.0f * v - 2.0f), 0.0f, 1.0f);
        out.pixels[i * 3 + 2] = std::clamp(1.5f - std::abs(4.0f * v - 1.0f), 0.0f, 1.0f);
    }
    return out;
}

std::vector<std::filesystem::path> emit_heatmaps(Model<float>& model, const ProcessedSample& sample,
                                                 const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> files;
    const auto S = model.config().input_size;
    const auto g = model.config().mask_grid();

    files.push_back(out_dir / (sample.id + "_input.png"));
    write_png(files.back(), sample.image);

    Image mask(S, S, 1);
    for (std::size_t y = 0; y < S; ++y) {
        for (std::size_t x = 0; x < S; ++x) mask.at(y, x) = sample.mask.at(y * g / S, x * g / S);
    }
    files.push_back(out_dir / (sample.id + "_mask.png"));
    write_png(files.back(), mask);

    for (const auto& map : compute_heatmaps(model, sample)) {
        files.push_back(out_dir / (sample.id + "_" + map.task + "_before.png"));
        write_png(files.back(), colorize(map.before));
        files.push_back(out_dir / (sample.id + "_" + map.task + "_after.png"));
        write_png(files.back(), colorize(map.after));
    }
    return files;
}

}  // namespace par
