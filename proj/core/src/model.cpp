#include "cifuv/model.hpp"

#include <cmath>
#include <stdexcept>

namespace cifuv::model {

namespace {

void require_valid_profile(const SystemProfile& p) {
    if (!(p.ltpa > 0.0))
        throw std::invalid_argument("invalid profile '" + p.id +
                                    "': ltpa must be positive");
    if (p.select_prob < 0.0 || p.select_prob > 1.0)
        throw std::invalid_argument("invalid profile '" + p.id +
                                    "': select_prob must be in [0,1]");
}

} // namespace

void validate_select_distribution(std::span<const SystemProfile> profiles) {
    if (profiles.empty())
        throw std::invalid_argument("profile set is empty");
    double sum = 0.0;
    bool any_positive = false;
    for (const auto& p : profiles) {
        require_valid_profile(p);
        sum += p.select_prob;
        any_positive = any_positive || p.select_prob > 0.0;
    }
    if (!any_positive)
        throw std::invalid_argument("select distribution is all zero");
    if (std::fabs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("select probabilities must sum to 1");
}

double broken_possibility(const SystemProfile& profile) {
    require_valid_profile(profile);
    return 1.0 / profile.ltpa;
}

double p_all_chosen(std::span<const SystemProfile> profiles) {
    validate_select_distribution(profiles);
    double worst = 0.0;
    for (const auto& p : profiles) {
        if (p.select_prob <= 0.0) continue; // never attacked, never first broken
        worst = std::max(worst, broken_possibility(p) * p.select_prob);
    }
    return worst;
}

double p_all_equal(std::span<const SystemProfile> profiles) {
    if (profiles.empty())
        throw std::invalid_argument("profile set is empty");
    // The equal model is the chosen model with a uniform select distribution;
    // evaluating it that way keeps the reduction exact, bit for bit.
    std::vector<SystemProfile> uniform(profiles.begin(), profiles.end());
    const double share = 1.0 / static_cast<double>(uniform.size());
    for (auto& p : uniform) p.select_prob = share;
    return p_all_chosen(uniform);
}

AttackEquationState attack_equation_remaining(std::int64_t attempts_done,
                                              std::span<const SystemProfile> profiles) {
    if (attempts_done < 0)
        throw std::invalid_argument("attempts_done must be non-negative");
    AttackEquationState state;
    state.attempts_done = attempts_done;
    state.remaining.reserve(profiles.size());
    for (const auto& p : profiles) {
        require_valid_profile(p);
        state.remaining.push_back(
            static_cast<double>(attempts_done) * p.select_prob - p.ltpa);
    }
    return state;
}

bool is_downgraded(const SystemProfile& weaker, const SystemProfile& other) {
    require_valid_profile(weaker);
    require_valid_profile(other);
    if (weaker.select_prob <= 0.0)
        throw std::invalid_argument("downgrade undefined: '" + weaker.id +
                                    "' is never attacked (select_prob 0)");
    return broken_possibility(weaker) * weaker.select_prob > broken_possibility(other);
}

DowngradeReport downgrade_report(std::span<const SystemProfile> profiles) {
    DowngradeReport report;
    report.p_all = p_all_chosen(profiles);
    for (const auto& weaker : profiles) {
        if (weaker.select_prob <= 0.0) continue;
        for (const auto& other : profiles) {
            if (&weaker == &other) continue;
            if (is_downgraded(weaker, other))
                report.downgraded_pairs.emplace_back(weaker.id, other.id);
        }
    }
    return report;
}

double cascade_exposure(std::span<const SystemProfile> chain, std::size_t stage) {
    if (chain.empty())
        throw std::invalid_argument("cascade chain is empty");
    if (stage > chain.size())
        throw std::invalid_argument("cascade stage out of bounds");
    double all_clean = 1.0;
    for (std::size_t j = 0; j < stage; ++j)
        all_clean *= 1.0 - broken_possibility(chain[j]);
    return 1.0 - all_clean;
}

ThirdPartyVerdict third_party_check(const SystemProfile& profile, bool logic_public,
                                    bool logic_verifiable, double max_broken) {
    if (!(max_broken > 0.0) || max_broken > 1.0)
        throw std::invalid_argument("max_broken must be in (0,1]");
    ThirdPartyVerdict verdict;
    verdict.logic_rule_violated = !(logic_public && logic_verifiable);
    verdict.strength_rule_violated = broken_possibility(profile) > max_broken;
    verdict.secure = !verdict.logic_rule_violated && !verdict.strength_rule_violated;
    return verdict;
}

} // namespace cifuv::model
