#include "podmtl/tasks.hpp"

namespace podmtl {

TaskSpec TaskSpec::standard_five() {
    TaskSpec s;
    s.tasks = {task::kPromotionStream, task::kAdStream, task::kClick, task::kLike,
               task::kFollow};
    s.promo_tasks = {task::kPromotionStream, task::kClick, task::kLike, task::kFollow};
    s.ad_tasks = {task::kAdStream, task::kClick};
    for (const auto& t : s.tasks) s.weights[t] = 1.0;
    return s;
}

bool TaskSpec::has(const std::string& t) const {
    for (const auto& name : tasks) {
        if (name == t) return true;
    }
    return false;
}

double TaskSpec::weight(const std::string& t) const {
    auto it = weights.find(t);
    return it == weights.end() ? 1.0 : it->second;
}

void TaskSpec::validate() const {
    if (tasks.empty()) throw config_error("TaskSpec: empty task list");
    for (const auto& t : promo_tasks) {
        if (!has(t)) throw config_error("TaskSpec: promo task '" + t + "' not in task list");
    }
    for (const auto& t : ad_tasks) {
        if (!has(t)) throw config_error("TaskSpec: ad task '" + t + "' not in task list");
    }
    for (const auto& t : tasks) {
        if (!in_promo(t) && !in_ad(t)) {
            throw config_error("TaskSpec: task '" + t +
                               "' belongs to neither the promotion nor the ad set");
        }
    }
    for (const auto& [t, w] : weights) {
        if (!has(t)) throw config_error("TaskSpec: weight for unknown task '" + t + "'");
        if (w < 0.0) throw config_error("TaskSpec: negative weight for task '" + t + "'");
    }
}

MaskPolicy MaskPolicy::directional_default(const TaskSpec& spec) {
    MaskPolicy m;
    for (const auto& t : spec.tasks) {
        m.allowed[static_cast<int>(Source::kPromotion)][t] = true;
        m.allowed[static_cast<int>(Source::kAd)][t] = !spec.promo_only(t);
    }
    return m;
}

bool MaskPolicy::allows(Source s, const std::string& t) const {
    const auto& m = allowed[static_cast<int>(s)];
    auto it = m.find(t);
    if (it == m.end()) throw config_error("MaskPolicy: no entry for task '" + t + "'");
    return it->second;
}

void MaskPolicy::set(Source s, const std::string& t, bool value) {
    allowed[static_cast<int>(s)][t] = value;
}

}  // namespace podmtl
