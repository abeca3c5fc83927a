#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cifuv/model.hpp"
#include "cifuv/rng.hpp"

// Seeded Monte Carlo attack experiments: in each round the attacker picks a
// target system per attempt (by chosen possibility) and keeps attempting
// until one system's attempt counter reaches its one-time predicted attempt
// threshold (otpa), sampled per round as a jittered ltpa.

namespace cifuv::attack {

enum class SuccessRule {
    AtLeast,         // broken when attempts >= otpa
    StrictlyGreater, // broken when attempts > otpa
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::int64_t rounds = 1;
    std::vector<model::SystemProfile> profiles;
    double jitter_low = 0.8;  // otpa sampled in [jitter_low*ltpa, jitter_high*ltpa]
    double jitter_high = 1.2;
    SuccessRule success_rule = SuccessRule::AtLeast;

    // Throws std::invalid_argument on violated invariants
    // (rounds >= 1, 0 < jitter_low <= 1 <= jitter_high, valid select dist).
    void validate() const;
};

struct RoundOutcome {
    std::vector<std::int64_t> per_system_attempts; // ra_i
    std::int64_t total_attempts = 0;               // ra == sum(ra_i)
    std::vector<std::int64_t> sampled_otpa;        // this round's thresholds
    int broken_system = -1;                        // index of the broken system

    friend bool operator==(const RoundOutcome&, const RoundOutcome&) = default;
};

struct ExperimentReport {
    std::string generator;  // PRNG algorithm, recorded for reproducibility
    std::uint64_t seed = 0;
    std::vector<RoundOutcome> outcomes;
    double mean_ra = 0.0;                   // mean of total_attempts
    double ratio_to_strong = 0.0;           // mean_ra / ltpa of strongest system
    double fraction_above_strong_ltpa = 0.0;

    friend bool operator==(const ExperimentReport&, const ExperimentReport&) = default;
};

enum class ReportFormat { Csv, Json };

// Rounds that exceed this many attempts abort with std::runtime_error;
// honest configurations terminate with probability 1 long before it.
inline constexpr std::int64_t kRoundAttemptCap = 1'000'000'000;

// One-time predicted attempts for a round: uniform integer in
// [round(jitter_low*ltpa), round(jitter_high*ltpa)], floored at 1.
std::int64_t sample_otpa(double ltpa, double jitter_low, double jitter_high,
                         SplitMix64& rng);

// Index i with probability profiles[i].select_prob.
std::size_t choose_target(SplitMix64& rng, std::span<const model::SystemProfile> profiles);

RoundOutcome run_round(const ExperimentConfig& config, SplitMix64& rng);

// `rounds` independent rounds from per-round sub-seeds derived from
// config.seed; identical (seed, config) gives a bit-identical report.
ExperimentReport run_experiment(const ExperimentConfig& config);

std::string emit_report(const ExperimentReport& report, ReportFormat format);
ExperimentReport parse_report_json(const std::string& text);

} // namespace cifuv::attack
