// qac-lab run <manifest> [--seed N] [--out DIR] [--truncation-levels 1,2] [--probe-w1 EPS] [--probe-rho R]

#include <algorithm>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "qaclab/manifest.hpp"
#include "qaclab/spectral.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"qac-lab: weighted analysis experiments on discretised QAC spaces"};
    app.require_subcommand(1);
    auto* run = app.add_subcommand("run", "run the suites of a manifest");
    std::string manifest;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::vector<double> levels;
    std::optional<double> probe_w1, probe_rho;
    run->add_option("manifest", manifest, "experiment manifest (json)")->required();
    run->add_option("--seed", seed, "override the manifest seed");
    run->add_option("--out", out, "output directory");
    run->add_option("--truncation-levels", levels, "R_max multipliers, e.g. 1,2")->delimiter(',');
    run->add_option("--probe-w1", probe_w1, "place a Green probe at this w1");
    run->add_option("--probe-rho", probe_rho, "radius for the probe placement");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        auto m = qaclab::load_manifest(manifest);
        if (seed)
            m.seed = *seed;
        if (out)
            m.output = *out;
        if (!levels.empty()) {
            for (double l : levels)
                if (!(l > 0.0))
                    throw qaclab::domain_error("truncation levels must be positive");
            std::sort(levels.begin(), levels.end());
            levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
            m.truncation_levels = levels;
        }
        if (probe_w1)
            m.probe_w1 = probe_w1;
        if (probe_rho)
            m.probe_rho = probe_rho;
        auto r = qaclab::run_manifest(m, std::cout);
        std::cout << "manifest " << r.hash.substr(0, 16) << " -> " << m.output.string() << ", exit " << r.exit_code
                  << '\n';
        return r.exit_code;
    } catch (const qaclab::numerical_error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const qaclab::domain_error& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    }
}
