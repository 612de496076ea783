#include "par/metrics.hpp"

#include <iomanip>
#include <sstream>

#include "par/errors.hpp"

namespace par {

MetricReport mean_accuracy(const LabelMatrix& predictions, const LabelMatrix& targets, const TaskPolicy* policy) {
    if (predictions.samples != targets.samples || predictions.attributes != targets.attributes ||
        predictions.values.size() != targets.values.size() ||
        predictions.values.size() != predictions.samples * predictions.attributes) {
        throw DimensionError("mean_accuracy: prediction and target matrices differ in shape");
    }
    if (targets.samples == 0) throw ValidationError("mean_accuracy: no samples to evaluate");
    if (targets.attributes == 0) throw ValidationError("mean_accuracy: no attributes to evaluate");
    if (policy && policy->attribute_count() != targets.attributes) {
        throw DimensionError("mean_accuracy: policy has " + std::to_string(policy->attribute_count()) +
                             " attributes, labels have " + std::to_string(targets.attributes));
    }
    for (std::size_t i = 0; i < targets.values.size(); ++i) {
        if (targets.values[i] > 1 || predictions.values[i] > 1) {
            throw ValidationError("mean_accuracy: entries must be 0 or 1");
        }
    }

    MetricReport report;
    report.samples = targets.samples;
    report.attributes.resize(targets.attributes);
    for (std::size_t a = 0; a < targets.attributes; ++a) {
        auto& s = report.attributes[a];
        s.name = policy ? policy->attributes()[a].name : "attr" + std::to_string(a);
        for (std::size_t n = 0; n < targets.samples; ++n) {
            const bool y = targets.at(n, a) == 1;
            const bool yhat = predictions.at(n, a) == 1;
            if (y) {
                ++s.positives;
                if (yhat) ++s.true_positives;
            } else {
                ++s.negatives;
                if (!yhat) ++s.true_negatives;
            }
        }
        const double tpr = s.positives ? static_cast<double>(s.true_positives) / static_cast<double>(s.positives) : 0.0;
        const double tnr = s.negatives ? static_cast<double>(s.true_negatives) / static_cast<double>(s.negatives) : 0.0;
        if (s.positives == 0 || s.negatives == 0) {
            s.undefined_ratio = true;
            s.mean_accuracy = s.positives ? tpr : tnr;
        } else {
            // (P^ N + N^ P) / 2PN: one rounding of the exact ratio
            const auto num = s.true_positives * s.negatives + s.true_negatives * s.positives;
            s.mean_accuracy = static_cast<double>(num) / static_cast<double>(2 * s.positives * s.negatives);
        }
        s.accuracy = static_cast<double>(s.true_positives + s.true_negatives) / static_cast<double>(targets.samples);
        report.mean_accuracy += s.mean_accuracy;
    }
    report.mean_accuracy /= static_cast<double>(targets.attributes);

    if (policy) {
        std::vector<double> task_sum(policy->task_count(), 0.0), cat_sum(policy->category_count(), 0.0);
        std::vector<std::size_t> task_n(policy->task_count(), 0), cat_n(policy->category_count(), 0);
        for (std::size_t a = 0; a < targets.attributes; ++a) {
            const auto& info = policy->attributes()[a];
            task_sum[info.task] += report.attributes[a].mean_accuracy;
            ++task_n[info.task];
            cat_sum[info.global_category] += report.attributes[a].mean_accuracy;
            ++cat_n[info.global_category];
        }
        std::size_t g = 0;
        for (std::size_t t = 0; t < policy->task_count(); ++t) {
            const auto& task = policy->tasks()[t];
            report.tasks.push_back({task.name, task_sum[t] / static_cast<double>(task_n[t])});
            for (const auto& c : task.categories) {
                report.categories.push_back({task.name + "/" + c.name, cat_sum[g] / static_cast<double>(cat_n[g])});
                ++g;
            }
        }
    }
    return report;
}

std::string MetricReport::to_text() const {
    std::ostringstream os;
    os << std::left << std::setw(22) << "attribute" << std::right << std::setw(7) << "P" << std::setw(7) << "N"
       << std::setw(7) << "P^" << std::setw(7) << "N^" << std::setw(10) << "mA" << '\n';
    os << std::fixed << std::setprecision(4);
    for (const auto& a : attributes) {
        os << std::left << std::setw(22) << a.name << std::right << std::setw(7) << a.positives << std::setw(7)
           << a.negatives << std::setw(7) << a.true_positives << std::setw(7) << a.true_negatives << std::setw(10)
           << a.mean_accuracy << (a.undefined_ratio ? "  *" : "") << '\n';
    }
    for (const auto& t : tasks) os << std::left << std::setw(50) << ("task " + t.name) << std::right << t.mean_accuracy << '\n';
    os << std::left << std::setw(50) << "mean accuracy (mA)" << std::right << mean_accuracy << '\n';
    bool flagged = false;
    for (const auto& a : attributes) flagged = flagged || a.undefined_ratio;
    if (flagged) os << "* only one class present; mA uses the defined ratio alone\n";
    return os.str();
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& a : attributes) {
        rows.push_back({{"attribute", a.name},
                        {"P", a.positives},
                        {"N", a.negatives},
                        {"P_hat", a.true_positives},
                        {"N_hat", a.true_negatives},
                        {"mA", a.mean_accuracy},
                        {"accuracy", a.accuracy},
                        {"undefined_ratio", a.undefined_ratio}});
    }
    nlohmann::json task_rows = nlohmann::json::array();
    for (const auto& t : tasks) task_rows.push_back({{"task", t.name}, {"mA", t.mean_accuracy}});
    nlohmann::json cat_rows = nlohmann::json::array();
    for (const auto& c : categories) cat_rows.push_back({{"category", c.name}, {"mA", c.mean_accuracy}});
    return {{"samples", samples},
            {"attributes", rows},
            {"tasks", task_rows},
            {"categories", cat_rows},
            {"mean_accuracy", mean_accuracy}};
}

}  // namespace par
