#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "podmtl/errors.hpp"

namespace podmtl {

/// Impression source channel.
enum class Source : std::uint8_t { kPromotion = 0, kAd = 1 };

inline char source_code(Source s) { return s == Source::kPromotion ? 'P' : 'A'; }

inline Source source_from_code(const std::string& code) {
    if (code == "P") return Source::kPromotion;
    if (code == "A") return Source::kAd;
    throw data_error("unknown source code '" + code + "' (expected P or A)");
}

namespace task {
inline const std::string kPromotionStream = "PromotionStream";
inline const std::string kAdStream = "AdStream";
inline const std::string kClick = "Click";
inline const std::string kLike = "Like";
inline const std::string kFollow = "Follow";
}  // namespace task

/// The task universe: an ordered list of binary prediction tasks, its
/// partition into promotion and ad tasks (a task may belong to both), and
/// per-task loss weights.
struct TaskSpec {
    std::vector<std::string> tasks;
    std::set<std::string> promo_tasks;
    std::set<std::string> ad_tasks;
    std::map<std::string, double> weights;  // default 1.0

    /// The production five-task universe. Click is a member of both
    /// channels; Like and Follow are promotion tasks.
    static TaskSpec standard_five();

    bool has(const std::string& t) const;
    double weight(const std::string& t) const;
    bool in_promo(const std::string& t) const { return promo_tasks.count(t) > 0; }
    bool in_ad(const std::string& t) const { return ad_tasks.count(t) > 0; }
    /// Tasks in T^P but not T^A; these receive no loss from ad impressions
    /// under the default mask.
    bool promo_only(const std::string& t) const { return in_promo(t) && !in_ad(t); }

    /// Throws config_error when the partition does not cover the task list,
    /// a member is unknown, or a weight is negative.
    void validate() const;
};

/// Binary matrix over (source, task) deciding which impressions contribute
/// loss to which towers.
struct MaskPolicy {
    // allowed[source][task]
    std::array<std::map<std::string, bool>, 2> allowed;

    /// The directional-transfer default: ad impressions do not update
    /// promotion-only towers; everything else contributes.
    static MaskPolicy directional_default(const TaskSpec& spec);

    bool allows(Source s, const std::string& t) const;
    void set(Source s, const std::string& t, bool value);
};

}  // namespace podmtl
