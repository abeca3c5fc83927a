#include "cifuv/attack_sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace cifuv::attack {

namespace {

const char* kGeneratorName = "splitmix64";

double strongest_ltpa(std::span<const model::SystemProfile> profiles) {
    double strongest = 0.0;
    for (const auto& p : profiles) strongest = std::max(strongest, p.ltpa);
    return strongest;
}

bool rule_satisfied(SuccessRule rule, std::int64_t attempts, std::int64_t otpa) {
    return rule == SuccessRule::AtLeast ? attempts >= otpa : attempts > otpa;
}

} // namespace

void ExperimentConfig::validate() const {
    if (rounds < 1)
        throw std::invalid_argument("rounds must be >= 1");
    if (!(jitter_low > 0.0) || jitter_low > 1.0 || jitter_high < 1.0)
        throw std::invalid_argument("jitter bounds must satisfy 0 < low <= 1 <= high");
    model::validate_select_distribution(profiles);
    for (const auto& p : profiles)
        if (p.ltpa < 1.0)
            throw std::invalid_argument("ltpa must be >= 1 for simulation");
}

std::int64_t sample_otpa(double ltpa, double jitter_low, double jitter_high,
                         SplitMix64& rng) {
    if (ltpa < 1.0)
        throw std::invalid_argument("ltpa must be >= 1");
    if (jitter_low > jitter_high)
        throw std::invalid_argument("inverted jitter bounds");
    std::int64_t lo = std::llround(jitter_low * ltpa);
    std::int64_t hi = std::llround(jitter_high * ltpa);
    lo = std::max<std::int64_t>(1, lo); // a 0-attempt threshold would break before any attempt
    hi = std::max(lo, hi);
    return rng.next_in_range(lo, hi);
}

std::size_t choose_target(SplitMix64& rng, std::span<const model::SystemProfile> profiles) {
    double u = rng.next_double();
    double cumulative = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        if (profiles[i].select_prob <= 0.0) continue;
        cumulative += profiles[i].select_prob;
        last_positive = i;
        if (u < cumulative) return i;
    }
    return last_positive; // guards the fp edge where cumulative < 1
}

RoundOutcome run_round(const ExperimentConfig& config, SplitMix64& rng) {
    const std::size_t n = config.profiles.size();
    RoundOutcome outcome;
    outcome.per_system_attempts.assign(n, 0);
    outcome.sampled_otpa.reserve(n);
    for (const auto& p : config.profiles)
        outcome.sampled_otpa.push_back(
            sample_otpa(p.ltpa, config.jitter_low, config.jitter_high, rng));

    for (;;) {
        if (outcome.total_attempts >= kRoundAttemptCap)
            throw std::runtime_error("attack round exceeded the attempt cap");
        std::size_t target = choose_target(rng, config.profiles);
        ++outcome.per_system_attempts[target];
        ++outcome.total_attempts;
        if (rule_satisfied(config.success_rule, outcome.per_system_attempts[target],
                           outcome.sampled_otpa[target])) {
            outcome.broken_system = static_cast<int>(target);
            return outcome;
        }
    }
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
    config.validate();

    ExperimentReport report;
    report.generator = kGeneratorName;
    report.seed = config.seed;
    report.outcomes.reserve(static_cast<std::size_t>(config.rounds));

    const double strong = strongest_ltpa(config.profiles);
    std::int64_t sum_ra = 0;
    std::int64_t above_strong = 0;
    for (std::int64_t r = 0; r < config.rounds; ++r) {
        SplitMix64 rng(SplitMix64::stream_seed(config.seed, static_cast<std::uint64_t>(r)));
        RoundOutcome outcome = run_round(config, rng);
        sum_ra += outcome.total_attempts;
        if (static_cast<double>(outcome.total_attempts) > strong) ++above_strong;
        report.outcomes.push_back(std::move(outcome));
    }

    report.mean_ra = static_cast<double>(sum_ra) / static_cast<double>(config.rounds);
    report.ratio_to_strong = report.mean_ra / strong;
    report.fraction_above_strong_ltpa =
        static_cast<double>(above_strong) / static_cast<double>(config.rounds);
    return report;
}

std::string emit_report(const ExperimentReport& report, ReportFormat format) {
    if (format == ReportFormat::Csv) {
        std::ostringstream out;
        const std::size_t n =
            report.outcomes.empty() ? 0 : report.outcomes.front().per_system_attempts.size();
        out << "round,ra";
        for (std::size_t i = 0; i < n; ++i) out << ",ra_" << (i + 1);
        for (std::size_t i = 0; i < n; ++i) out << ",otpa_" << (i + 1);
        out << ",broken_system\n";
        for (std::size_t r = 0; r < report.outcomes.size(); ++r) {
            const auto& o = report.outcomes[r];
            out << r << ',' << o.total_attempts;
            for (auto ra : o.per_system_attempts) out << ',' << ra;
            for (auto otpa : o.sampled_otpa) out << ',' << otpa;
            out << ',' << o.broken_system << '\n';
        }
        return out.str();
    }

    nlohmann::ordered_json j;
    j["generator"] = report.generator;
    j["seed"] = report.seed;
    j["mean_ra"] = report.mean_ra;
    j["ratio_to_strong"] = report.ratio_to_strong;
    j["fraction_above_strong_ltpa"] = report.fraction_above_strong_ltpa;
    auto rounds = nlohmann::ordered_json::array();
    for (const auto& o : report.outcomes) {
        nlohmann::ordered_json r;
        r["ra"] = o.total_attempts;
        r["ra_i"] = o.per_system_attempts;
        r["otpa_i"] = o.sampled_otpa;
        r["broken_system"] = o.broken_system;
        rounds.push_back(std::move(r));
    }
    j["rounds"] = std::move(rounds);
    return j.dump(2) + "\n";
}

ExperimentReport parse_report_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ExperimentReport report;
    report.generator = j.at("generator").get<std::string>();
    report.seed = j.at("seed").get<std::uint64_t>();
    report.mean_ra = j.at("mean_ra").get<double>();
    report.ratio_to_strong = j.at("ratio_to_strong").get<double>();
    report.fraction_above_strong_ltpa = j.at("fraction_above_strong_ltpa").get<double>();
    for (const auto& r : j.at("rounds")) {
        RoundOutcome o;
        o.total_attempts = r.at("ra").get<std::int64_t>();
        o.per_system_attempts = r.at("ra_i").get<std::vector<std::int64_t>>();
        o.sampled_otpa = r.at("otpa_i").get<std::vector<std::int64_t>>();
        o.broken_system = r.at("broken_system").get<int>();
        report.outcomes.push_back(std::move(o));
    }
    return report;
}

} // namespace cifuv::attack
