#include "par/policy.hpp"

#include <fstream>
#include <set>

#include "par/errors.hpp"

namespace par {

TaskPolicy::TaskPolicy(std::string name, std::vector<Task> tasks) : name_(std::move(name)), tasks_(std::move(tasks)) {
    if (tasks_.empty()) throw ConfigurationError("task policy '" + name_ + "' has no tasks");
    std::set<std::string> task_names, attribute_names;
    for (std::size_t t = 0; t < tasks_.size(); ++t) {
        const auto& task = tasks_[t];
        if (!task_names.insert(task.name).second) throw ConfigurationError("duplicate task name '" + task.name + "'");
        if (task.categories.empty()) throw ConfigurationError("task '" + task.name + "' has no categories");
        task_offsets_.push_back(attributes_.size());
        std::set<std::string> category_names;
        for (std::size_t c = 0; c < task.categories.size(); ++c) {
            const auto& category = task.categories[c];
            if (!category_names.insert(category.name).second) {
                throw ConfigurationError("duplicate category '" + category.name + "' in task '" + task.name + "'");
            }
            if (category.classes.empty()) {
                throw ConfigurationError("category '" + category.name + "' in task '" + task.name + "' is empty");
            }
            for (const auto& cls : category.classes) {
                if (!attribute_names.insert(cls).second) {
                    throw ConfigurationError("duplicate attribute name '" + cls + "'");
                }
                attributes_.push_back(AttributeInfo{cls, t, c, category.classes.size(), category_count_});
            }
            ++category_count_;
        }
    }
}

std::size_t TaskPolicy::task_width(std::size_t task) const {
    const std::size_t end = task + 1 < tasks_.size() ? task_offsets_.at(task + 1) : attributes_.size();
    return end - task_offsets_.at(task);
}

std::optional<std::size_t> TaskPolicy::find(const std::string& task, const std::string& category,
                                            const std::string& cls) const {
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
        const auto& a = attributes_[i];
        if (a.name == cls && tasks_[a.task].name == task && tasks_[a.task].categories[a.category].name == category) {
            return i;
        }
    }
    return std::nullopt;
}

std::optional<std::size_t> TaskPolicy::find_attribute(const std::string& name) const {
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
        if (attributes_[i].name == name) return i;
    }
    return std::nullopt;
}

std::vector<double> TaskPolicy::inverse_category_sizes() const {
    std::vector<double> w;
    w.reserve(attributes_.size());
    for (const auto& a : attributes_) w.push_back(1.0 / static_cast<double>(a.category_size));
    return w;
}

bool TaskPolicy::operator==(const TaskPolicy& other) const {
    return to_json(*this) == to_json(other);
}

TaskPolicy parse_task_policy(const nlohmann::json& document) {
    try {
        std::vector<Task> tasks;
        for (const auto& jt : document.at("tasks")) {
            Task task{jt.at("name").get<std::string>(), {}};
            for (const auto& jc : jt.at("categories")) {
                task.categories.push_back(
                    Category{jc.at("name").get<std::string>(), jc.at("classes").get<std::vector<std::string>>()});
            }
            tasks.push_back(std::move(task));
        }
        return TaskPolicy(document.value("name", std::string("unnamed")), std::move(tasks));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("malformed task policy: ") + e.what());
    }
}

TaskPolicy load_task_policy(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot open task policy " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError("task policy " + path.string() + ": " + e.what());
    }
    return parse_task_policy(doc);
}

nlohmann::json to_json(const TaskPolicy& policy) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& t : policy.tasks()) {
        nlohmann::json cats = nlohmann::json::array();
        for (const auto& c : t.categories) cats.push_back({{"name", c.name}, {"classes", c.classes}});
        tasks.push_back({{"name", t.name}, {"categories", cats}});
    }
    return {{"name", policy.name()}, {"tasks", tasks}};
}

}  // namespace par
