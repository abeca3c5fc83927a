#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

// Analytic security-interaction calculus: per-system broken possibilities,
// whole-system broken possibility under the equal and chosen attack models,
// attack equations, downgrade and third-party rules.
//
// Conventions used throughout:
//   ltpa        expected number of attack attempts for one successful break
//               (long-term predicted attempts); broken possibility = 1/ltpa.
//   select_prob probability that the attacker targets this system on any
//               single attempt (chosen possibility). Across a profile set
//               used for chosen-attack analysis these sum to 1.

namespace cifuv::model {

struct SystemProfile {
    std::string id;
    double ltpa = 1.0;
    double select_prob = 0.0;

    friend bool operator==(const SystemProfile&, const SystemProfile&) = default;
};

// Validation method + validation data of a system; either part may be empty
// (method-only and data-only forms are both meaningful).
struct VerificationSpec {
    std::string method_name;
    std::string data;

    bool empty() const { return method_name.empty() && data.empty(); }
    friend bool operator==(const VerificationSpec&, const VerificationSpec&) = default;
};

// State of the attack equation after `attempts_done` total attempts:
// remaining[i] = attempts_done * select_prob_i - ltpa_i. A system is broken
// once its entry reaches zero.
struct AttackEquationState {
    std::int64_t attempts_done = 0;
    std::vector<double> remaining;

    bool is_broken(std::size_t i) const { return remaining.at(i) >= 0.0; }
};

struct ThirdPartyVerdict {
    bool secure = false;
    // Rule 1: logic publicly available and verifiable. Rule 2: strong enough.
    bool logic_rule_violated = false;
    bool strength_rule_violated = false;
};

struct DowngradeReport {
    // (weaker id, downgraded id) for every ordered pair where the weaker
    // system drags the whole interaction below the other's security.
    std::vector<std::pair<std::string, std::string>> downgraded_pairs;
    double p_all = 0.0;
};

// Probability that one attempt breaks the system: 1/ltpa.
// Throws std::invalid_argument for non-positive ltpa.
double broken_possibility(const SystemProfile& profile);

// Whole-system broken possibility when the attacker cannot tell systems
// apart and targets each with probability 1/n: max_i(p_i^broken) / n.
double p_all_equal(std::span<const SystemProfile> profiles);

// Whole-system broken possibility when the attacker targets system i with
// probability select_prob_i: max_i(p_i^broken * select_prob_i). The max is
// the system expected to fall first (at 1/(p^broken * select) attempts);
// never-attacked systems (select 0) cannot attain it. Requires the select
// distribution to sum to 1 (1e-9 tolerance) with at least one entry > 0.
double p_all_chosen(std::span<const SystemProfile> profiles);

// Attack equation after `attempts_done` attempts distributed per select_prob.
AttackEquationState attack_equation_remaining(std::int64_t attempts_done,
                                              std::span<const SystemProfile> profiles);

// True iff `other` is security-downgraded by `weaker`: attacking `weaker`
// with its chosen possibility breaks the interaction more easily than
// attacking `other` ever could (strict comparison).
// Throws std::invalid_argument when weaker.select_prob == 0.
bool is_downgraded(const SystemProfile& weaker, const SystemProfile& other);

// All downgraded pairs over a profile set plus the chosen-model p_all.
DowngradeReport downgrade_report(std::span<const SystemProfile> profiles);

// Probability that stage `stage` of a cascade receives corrupted input:
// 1 - prod_{j<stage}(1 - p_j^broken), independent per-stage compromise.
// `stage` may equal chain.size() (the consumer after the last system).
double cascade_exposure(std::span<const SystemProfile> chain, std::size_t stage);

// Secure-third-party rules: logic public and verifiable, and broken
// possibility no worse than max_broken.
ThirdPartyVerdict third_party_check(const SystemProfile& profile, bool logic_public,
                                    bool logic_verifiable, double max_broken);

// Shared validation: select_probs sum to 1 within 1e-9, at least one > 0,
// all within [0,1]. Throws std::invalid_argument otherwise.
void validate_select_distribution(std::span<const SystemProfile> profiles);

} // namespace cifuv::model
