#ifndef QACLAB_MANIFEST_HPP
#define QACLAB_MANIFEST_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qaclab/report.hpp"

namespace qaclab {

struct SuiteSpec {
    std::string name;
    bool negative_control = false;
    nlohmann::json options = nlohmann::json::object();
};

struct ExperimentManifest {
    std::string name = "experiment";
    std::string recipe_path;  // empty when the recipe is inline
    nlohmann::json recipe;
    double a = 0.0;
    std::vector<double> b;
    std::uint64_t seed = 1;
    // multipliers on the recipe's R_max; ladder suites use every level
    std::vector<double> truncation_levels{1.0};
    std::vector<SuiteSpec> suites;
    Tolerances tol;
    std::filesystem::path output = "qac-out";
    std::optional<double> probe_w1;
    std::optional<double> probe_rho;
};

// Suite names in execution order.
const std::vector<std::string>& known_suites();

// Throws domain_error on malformed input or an unreadable recipe file.
ExperimentManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir);
ExperimentManifest load_manifest(const std::filesystem::path& path);

// Canonical form: recipe inlined, suites sorted into execution order.
nlohmann::json manifest_json(const ExperimentManifest& m);
std::string manifest_hash(const ExperimentManifest& m);

// Recipe with every R_max / R entry scaled.
nlohmann::json scaled_recipe(const nlohmann::json& recipe, double factor);

struct SuiteResult {
    std::string name;
    bool negative_control = false;
    Verdict verdict = Verdict::inconclusive;
    bool expectation_met = false;
    bool numerical_failure = false;
    std::string note;
    nlohmann::ordered_json report;
    std::string csv;
};

struct RunResult {
    std::string hash;
    std::vector<SuiteResult> suites;
    // 0 all expectations met, 1 some not met, 3 a numerical failure
    int exit_code = 0;
};

// Runs every suite (plus gating dependencies), writes reports/, data/ and
// manifest.lock.json under m.output. Progress goes to log.
RunResult run_manifest(const ExperimentManifest& m, std::ostream& log);

}  // namespace qaclab

#endif
