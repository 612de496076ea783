#include "par/manifest.hpp"

#include <fstream>

#include "par/errors.hpp"

namespace par {

ManifestRecord parse_manifest_record(const nlohmann::json& record, const TaskPolicy& policy) {
    ManifestRecord r;
    r.id = record.value("id", std::string{});
    const std::string who = r.id.empty() ? std::string("<unnamed>") : r.id;
    try {
        if (r.id.empty()) throw ConfigurationError("manifest record without id");
        r.split = split_from_string(record.value("split", std::string("train")));
        r.image = record.at("image").get<std::string>();
        r.mask = record.at("mask").get<std::string>();
        r.labels.assign(policy.attribute_count(), 0);
        for (const auto& [task, categories] : record.at("labels").items()) {
            for (const auto& [category, classes] : categories.items()) {
                for (const auto& cls : classes) {
                    const auto name = cls.get<std::string>();
                    const auto index = policy.find(task, category, name);
                    if (!index) {
                        throw ConfigurationError("unknown label " + task + "/" + category + "/" + name);
                    }
                    r.labels[*index] = 1;
                }
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError("manifest record '" + who + "': " + e.what());
    } catch (const ConfigurationError& e) {
        throw ConfigurationError("manifest record '" + who + "': " + e.what());
    }
    return r;
}

nlohmann::json to_json(const ManifestRecord& record, const TaskPolicy& policy) {
    nlohmann::json labels = nlohmann::json::object();
    for (std::size_t a = 0; a < policy.attribute_count(); ++a) {
        if (!record.labels.at(a)) continue;
        const auto& info = policy.attributes()[a];
        const auto& task = policy.tasks()[info.task];
        labels[task.name][task.categories[info.category].name].push_back(info.name);
    }
    return {{"id", record.id},
            {"split", to_string(record.split)},
            {"image", record.image.generic_string()},
            {"mask", record.mask.generic_string()},
            {"labels", labels}};
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path, const TaskPolicy& policy) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot open manifest " + path.string());
    std::vector<ManifestRecord> records;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigurationError(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
        }
        records.push_back(parse_manifest_record(record, policy));
    }
    return records;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records,
                    const TaskPolicy& policy) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& r : records) out << to_json(r, policy).dump() << '\n';
}

std::vector<Sample> load_manifest(const std::filesystem::path& path, const TaskPolicy& policy) {
    const auto base = path.parent_path();
    std::vector<Sample> samples;
    for (auto& r : read_manifest(path, policy)) {
        const auto image_path = r.image.is_absolute() ? r.image : base / r.image;
        const auto mask_path = r.mask.is_absolute() ? r.mask : base / r.mask;
        for (const auto& p : {image_path, mask_path}) {
            if (!std::filesystem::exists(p)) throw DataError(r.id, "missing file " + p.string());
        }
        Sample s;
        s.id = r.id;
        s.split = r.split;
        s.labels = std::move(r.labels);
        try {
            s.image = read_png(image_path, 3);
            s.mask = read_mask_png(mask_path);
        } catch (const std::runtime_error& e) {
            throw DataError(s.id, e.what());
        }
        if (s.image.height != s.mask.height || s.image.width != s.mask.width) {
            throw DataError(s.id, "image and mask sizes differ");
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<Sample> filter_split(const std::vector<Sample>& samples, Split split) {
    std::vector<Sample> out;
    for (const auto& s : samples) {
        if (s.split == split) out.push_back(s);
    }
    return out;
}

}  // namespace par
