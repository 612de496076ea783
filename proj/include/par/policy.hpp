#pragma once

// Task specification policy: tasks -> categories -> classes. Each class is one
// binary attribute; attributes are numbered in policy order, which is also the
// column order of every prediction and label vector.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace par {

struct Category {
    std::string name;
    std::vector<std::string> classes;

    // R_c: the number of classes in the category.
    std::size_t weight_divisor() const { return classes.size(); }
};

struct Task {
    std::string name;
    std::vector<Category> categories;
};

struct AttributeInfo {
    std::string name;
    std::size_t task = 0;
    std::size_t category = 0;       // index within the task
    std::size_t category_size = 0;  // R_c
    std::size_t global_category = 0;
};

class TaskPolicy {
public:
    TaskPolicy() = default;
    // Throws ConfigurationError on empty tasks/categories or duplicate names.
    TaskPolicy(std::string name, std::vector<Task> tasks);

    const std::string& name() const { return name_; }
    const std::vector<Task>& tasks() const { return tasks_; }
    std::size_t task_count() const { return tasks_.size(); }
    std::size_t category_count() const { return category_count_; }
    std::size_t attribute_count() const { return attributes_.size(); }
    const std::vector<AttributeInfo>& attributes() const { return attributes_; }

    // First attribute column and width of a task's block.
    std::size_t task_offset(std::size_t task) const { return task_offsets_.at(task); }
    std::size_t task_width(std::size_t task) const;

    std::optional<std::size_t> find(const std::string& task, const std::string& category,
                                     const std::string& cls) const;
    std::optional<std::size_t> find_attribute(const std::string& name) const;

    // 1 / R_c for every attribute, in column order.
    std::vector<double> inverse_category_sizes() const;

    bool operator==(const TaskPolicy& other) const;

private:
    std::string name_;
    std::vector<Task> tasks_;
    std::vector<AttributeInfo> attributes_;
    std::vector<std::size_t> task_offsets_;
    std::size_t category_count_ = 0;
};

// Document form: {"name": ..., "tasks": [{"name": ..., "categories":
// [{"name": ..., "classes": [...]}]}]}.
TaskPolicy parse_task_policy(const nlohmann::json& document);
TaskPolicy load_task_policy(const std::filesystem::path& path);
nlohmann::json to_json(const TaskPolicy& policy);

}  // namespace par
