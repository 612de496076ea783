#include "par/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "par/errors.hpp"

namespace par {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'R', 'C', 'K', 'P', 'T', '\0'};

void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw ConfigurationError("checkpoint truncated");
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

std::string get_bytes(std::istream& is, std::size_t n) {
    std::string s(n, '\0');
    if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) throw ConfigurationError("checkpoint truncated");
    return s;
}

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigurationError("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof kMagic);
    put_u32(os, Checkpoint::kVersion);
    const nlohmann::json meta{
        {"model", to_json(checkpoint.model_config)}, {"policy", to_json(checkpoint.policy)}, {"state", checkpoint.state}};
    const std::string text = meta.dump();
    put_u32(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    put_u32(os, static_cast<std::uint32_t>(checkpoint.entries.size()));
    for (const auto& e : checkpoint.entries) {
        if (shape_numel(e.shape) != e.values.size()) {
            throw DimensionError("checkpoint entry '" + e.name + "' shape does not match its values");
        }
        put_u32(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put_u32(os, static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) put_u32(os, static_cast<std::uint32_t>(d));
        for (float v : e.values) put_u32(os, std::bit_cast<std::uint32_t>(v));
    }
    if (!os) throw ConfigurationError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigurationError("cannot open checkpoint " + path.string());
    if (get_bytes(is, sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
        throw ConfigurationError(path.string() + " is not a checkpoint");
    }
    const auto version = get_u32(is);
    if (version != Checkpoint::kVersion) {
        throw ConfigurationError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ck;
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(get_bytes(is, get_u32(is)));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("checkpoint metadata: ") + e.what());
    }
    ck.model_config = model_config_from_json(meta.at("model"));
    ck.policy = parse_task_policy(meta.at("policy"));
    ck.state = meta.value("state", nlohmann::json::object());
    const auto count = get_u32(is);
    for (std::uint32_t k = 0; k < count; ++k) {
        CheckpointEntry e;
        e.name = get_bytes(is, get_u32(is));
        const auto rank = get_u32(is);
        for (std::uint32_t r = 0; r < rank; ++r) e.shape.push_back(get_u32(is));
        e.values.resize(shape_numel(e.shape));
        for (auto& v : e.values) v = std::bit_cast<float>(get_u32(is));
        ck.entries.push_back(std::move(e));
    }
    return ck;
}

template <typename T>
Checkpoint capture_checkpoint(Model<T>& model, nlohmann::json state) {
    Checkpoint ck;
    ck.model_config = model.config();
    ck.policy = model.policy();
    ck.state = std::move(state);
    auto to_float = [](auto span) { return std::vector<float>(span.begin(), span.end()); };
    for (const auto& p : model.parameters()) ck.entries.push_back({p.name, p.tensor.shape(), to_float(p.tensor.values())});
    for (const auto& [name, bn] : model.buffers()) {
        const Shape shape{bn->running_mean.size()};
        ck.entries.push_back({name + ".running_mean", shape, to_float(std::span<const T>(bn->running_mean))});
        ck.entries.push_back({name + ".running_var", shape, to_float(std::span<const T>(bn->running_var))});
    }
    return ck;
}

template <typename T>
void restore_model(Model<T>& model, const Checkpoint& ck) {
    if (!(ck.model_config == model.config())) throw ConfigurationError("checkpoint model config differs from model");
    if (!(ck.policy == model.policy())) throw ConfigurationError("checkpoint task policy differs from model");
    std::set<std::string> used;
    auto take = [&](const std::string& name, const Shape& shape) -> const CheckpointEntry& {
        const auto* e = ck.find(name);
        if (!e) throw ConfigurationError("checkpoint lacks '" + name + "'");
        if (e->shape != shape) {
            throw ConfigurationError("checkpoint entry '" + name + "' has shape " + shape_str(e->shape) +
                                     ", model expects " + shape_str(shape));
        }
        used.insert(name);
        return *e;
    };
    for (auto& p : model.parameters()) {
        const auto& e = take(p.name, p.tensor.shape());
        std::copy(e.values.begin(), e.values.end(), p.tensor.mutable_values().begin());
    }
    for (auto& [name, bn] : model.buffers()) {
        const Shape shape{bn->running_mean.size()};
        const auto& m = take(name + ".running_mean", shape);
        const auto& v = take(name + ".running_var", shape);
        std::copy(m.values.begin(), m.values.end(), bn->running_mean.begin());
        std::copy(v.values.begin(), v.values.end(), bn->running_var.begin());
    }
    for (const auto& e : ck.entries) {
        if (!used.count(e.name) && e.name.rfind("optimizer.", 0) != 0) {
            throw ConfigurationError("checkpoint entry '" + e.name + "' has no counterpart in the model");
        }
    }
}

template <typename T>
Model<T> model_from_checkpoint(const Checkpoint& ck) {
    Model<T> model(ck.model_config, ck.policy, 0);
    restore_model(model, ck);
    return model;
}

template Checkpoint capture_checkpoint(Model<float>&, nlohmann::json);
template Checkpoint capture_checkpoint(Model<double>&, nlohmann::json);
template void restore_model(Model<float>&, const Checkpoint&);
template void restore_model(Model<double>&, const Checkpoint&);
template Model<float> model_from_checkpoint<float>(const Checkpoint&);
template Model<double> model_from_checkpoint<double>(const Checkpoint&);

}  // namespace par
