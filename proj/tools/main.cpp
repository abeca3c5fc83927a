// cifuv — experiment runner and report emitter.
//
//   cifuv attack-sim       seeded Monte Carlo attack experiments (csv/json)
//   cifuv analyze          analytic whole-system security of a profile set
//   cifuv crosschain-demo  cross-chain scenarios on the simulated network
//
// Exit codes: 0 success, 1 internal failure, 2 usage/config error.
// CIFUV_SEED sets the default seed for commands that take one.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cifuv/attack_sim.hpp"
#include "cifuv/model.hpp"
#include "cifuv/netsim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

std::uint64_t default_seed() {
    if (const char* env = std::getenv("CIFUV_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw CLI::ValidationError("CIFUV_SEED", "not a valid seed");
        }
    }
    return 1;
}

std::vector<double> parse_number_list(const std::string& text) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        values.push_back(std::stod(item));
    }
    return values;
}

void write_output(const std::string& path, const std::string& content) {
    if (path.empty()) {
        std::cout << content;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << content;
}

// ---- attack-sim -------------------------------------------------------------

struct AttackSimArgs {
    std::string preset;     // c1..c5
    std::string ltpa_list;  // alternative to a preset
    std::string model = "equal";
    std::string select_list;
    std::int64_t rounds = 10000;
    std::optional<std::uint64_t> seed;
    std::string out_path;
    std::string format = "csv";
    std::string rule = "at-least";
};

cifuv::attack::ExperimentConfig build_attack_config(const AttackSimArgs& args) {
    using cifuv::model::SystemProfile;
    cifuv::attack::ExperimentConfig config;

    std::vector<double> ltpas;
    if (!args.preset.empty()) {
        static const std::map<std::string, double> strong = {{"c1", 8192.0},
                                                             {"c2", 16384.0},
                                                             {"c3", 32768.0},
                                                             {"c4", 65536.0},
                                                             {"c5", 131072.0}};
        auto it = strong.find(args.preset);
        if (it == strong.end())
            throw CLI::ValidationError("--case", "expected one of c1..c5");
        ltpas = {4096.0, it->second};
    } else if (!args.ltpa_list.empty()) {
        ltpas = parse_number_list(args.ltpa_list);
    } else {
        throw CLI::ValidationError("attack-sim", "need --case or --ltpa");
    }
    if (ltpas.empty()) throw CLI::ValidationError("--ltpa", "empty system list");

    const std::size_t n = ltpas.size();
    std::vector<double> selects;
    if (args.model == "equal") {
        if (!args.select_list.empty())
            throw CLI::ValidationError("--select", "not applicable to the equal model");
        selects.assign(n, 1.0 / static_cast<double>(n));
    } else if (args.model == "chosen") {
        if (args.select_list.empty())
            throw CLI::ValidationError("--select", "the chosen model needs --select");
        selects = parse_number_list(args.select_list);
        if (selects.size() == 1 && n > 1) {
            // One value: the first (weak) system's share; the rest split evenly.
            const double s = selects.front();
            if (s < 0.0 || s > 1.0)
                throw CLI::ValidationError("--select", "must be within [0,1]");
            selects.assign(n, (1.0 - s) / static_cast<double>(n - 1));
            selects[0] = s;
        }
        if (selects.size() != n)
            throw CLI::ValidationError("--select", "need one value or one per system");
    } else {
        throw CLI::ValidationError("--model", "expected equal or chosen");
    }

    for (std::size_t i = 0; i < n; ++i)
        config.profiles.push_back(
            SystemProfile{"sys" + std::to_string(i + 1), ltpas[i], selects[i]});
    config.rounds = args.rounds;
    config.seed = args.seed ? *args.seed : default_seed();
    if (args.rule == "at-least")
        config.success_rule = cifuv::attack::SuccessRule::AtLeast;
    else if (args.rule == "strictly-greater")
        config.success_rule = cifuv::attack::SuccessRule::StrictlyGreater;
    else
        throw CLI::ValidationError("--success-rule", "expected at-least or strictly-greater");
    return config;
}

int run_attack_sim(const AttackSimArgs& args) {
    cifuv::attack::ExperimentConfig config;
    try {
        config = build_attack_config(args);
        config.validate();
    } catch (const CLI::Error&) {
        throw;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    }

    const auto report = cifuv::attack::run_experiment(config);
    const auto format = args.format == "json" ? cifuv::attack::ReportFormat::Json
                                              : cifuv::attack::ReportFormat::Csv;
    write_output(args.out_path, cifuv::attack::emit_report(report, format));
    if (!args.out_path.empty()) {
        nlohmann::ordered_json summary;
        summary["rounds"] = config.rounds;
        summary["seed"] = config.seed;
        summary["mean_ra"] = report.mean_ra;
        summary["ratio_to_strong"] = report.ratio_to_strong;
        summary["fraction_above_strong_ltpa"] = report.fraction_above_strong_ltpa;
        summary["out"] = args.out_path;
        std::cout << summary.dump(2) << "\n";
    }
    return kExitOk;
}

// ---- analyze ----------------------------------------------------------------

int run_analyze(const std::string& profiles_path) {
    using cifuv::model::SystemProfile;

    std::ifstream in(profiles_path);
    if (!in) {
        std::cerr << "cannot open profiles file: " << profiles_path << "\n";
        return kExitUsage;
    }
    nlohmann::json j;
    std::vector<SystemProfile> profiles;
    try {
        in >> j;
        for (const auto& p : j) {
            SystemProfile profile;
            profile.id = p.value("id", "sys" + std::to_string(profiles.size() + 1));
            profile.ltpa = p.at("ltpa").get<double>();
            profile.select_prob = p.value("select", 0.0);
            profiles.push_back(std::move(profile));
        }
    } catch (const std::exception& e) {
        std::cerr << "profile parse error: " << e.what() << "\n";
        return kExitUsage;
    }
    if (profiles.empty()) {
        std::cerr << "profile file holds no systems\n";
        return kExitUsage;
    }

    // A file without select values analyzes the equal-attack case.
    bool any_select = false;
    for (const auto& p : profiles) any_select = any_select || p.select_prob > 0.0;
    if (!any_select)
        for (auto& p : profiles)
            p.select_prob = 1.0 / static_cast<double>(profiles.size());

    try {
        const double equal = cifuv::model::p_all_equal(profiles);
        const auto report = cifuv::model::downgrade_report(profiles);

        nlohmann::ordered_json out;
        out["systems"] = profiles.size();
        out["p_all_equal"] = equal;
        out["p_all_chosen"] = report.p_all;
        auto pairs = nlohmann::ordered_json::array();
        for (const auto& [weaker, downgraded] : report.downgraded_pairs)
            pairs.push_back({{"weaker", weaker}, {"downgraded", downgraded}});
        out["downgrades"] = pairs;
        std::cout << out.dump(2) << "\n";
        return kExitOk;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid profiles: " << e.what() << "\n";
        return kExitUsage;
    }
}

// ---- crosschain-demo ----------------------------------------------------------

int run_crosschain_demo(const std::string& scenario_path, const std::string& mode_name,
                        const std::string& out_path) {
    std::ifstream in(scenario_path);
    if (!in) {
        std::cerr << "cannot open scenario file: " << scenario_path << "\n";
        return kExitUsage;
    }
    cifuv::netsim::ScenarioConfig config;
    try {
        nlohmann::json j;
        in >> j;
        config = cifuv::netsim::ScenarioConfig::from_json(j);
    } catch (const std::exception& e) {
        std::cerr << "scenario parse error: " << e.what() << "\n";
        return kExitUsage;
    }

    cifuv::netsim::VerifyMode mode;
    if (mode_name == "cifuv") mode = cifuv::netsim::VerifyMode::Cifuv;
    else if (mode_name == "relay-trust") mode = cifuv::netsim::VerifyMode::RelayTrust;
    else {
        std::cerr << "unknown mode: " << mode_name << "\n";
        return kExitUsage;
    }

    const auto result = cifuv::netsim::run_scenario(config, mode);
    if (!out_path.empty()) write_output(out_path, result.trace_json_lines);
    std::cout << result.summary.dump(2) << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-chain full-verification toolkit"};
    app.require_subcommand(1);

    AttackSimArgs attack_args;
    auto* attack = app.add_subcommand("attack-sim", "run a seeded attack experiment");
    attack->add_option("--case", attack_args.preset,
                       "built-in two-system case c1..c5 (4096 vs 8192..131072)");
    attack->add_option("--ltpa", attack_args.ltpa_list,
                       "comma-separated ltpa per system (alternative to --case)");
    attack->add_option("--model", attack_args.model, "equal or chosen")
        ->check(CLI::IsMember({"equal", "chosen"}));
    attack->add_option("--select", attack_args.select_list,
                       "chosen possibility of the first system, or one value per system");
    attack->add_option("--rounds", attack_args.rounds, "independent rounds")
        ->check(CLI::PositiveNumber);
    std::uint64_t seed_value = 0;
    auto* seed_opt = attack->add_option("--seed", seed_value, "experiment seed");
    attack->add_option("--out", attack_args.out_path, "output file (default stdout)");
    attack->add_option("--format", attack_args.format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    attack->add_option("--success-rule", attack_args.rule,
                       "at-least (default) or strictly-greater")
        ->check(CLI::IsMember({"at-least", "strictly-greater"}));

    std::string profiles_path;
    auto* analyze = app.add_subcommand("analyze", "analytic security of a profile set");
    analyze->add_option("--profiles", profiles_path, "profile JSON file")->required();

    std::string scenario_path, demo_mode = "cifuv", trace_path;
    auto* demo = app.add_subcommand("crosschain-demo", "run a cross-chain scenario");
    demo->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    demo->add_option("--mode", demo_mode, "cifuv or relay-trust")
        ->check(CLI::IsMember({"cifuv", "relay-trust"}));
    demo->add_option("--out", trace_path, "trace output file (JSON lines)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") {
            app.exit(e);
            return kExitOk;
        }
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (attack->parsed()) {
            if (*seed_opt) attack_args.seed = seed_value;
            return run_attack_sim(attack_args);
        }
        if (analyze->parsed()) return run_analyze(profiles_path);
        if (demo->parsed()) return run_crosschain_demo(scenario_path, demo_mode, trace_path);
        return kExitUsage;
    } catch (const CLI::Error& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    }
}
