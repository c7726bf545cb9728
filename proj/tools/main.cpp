#include <cstdlib>
#include <string>

#include "CLI11.hpp"
#include "pipeline.hpp"

namespace {

using qnoise::pipeline::GlobalOptions;

GlobalOptions make_options(const std::string& subcommand, const std::string& config,
                           const std::string& out, bool quick, bool has_seed,
                           std::uint64_t seed) {
    GlobalOptions opts;
    if (!config.empty()) opts.config_path = config;
    if (!out.empty()) {
        opts.out_dir = out;
    } else {
        const char* root = std::getenv("QNOISE_OUT");
        opts.out_dir = (root ? std::filesystem::path(root) : std::filesystem::path("out")) /
                       subcommand;
    }
    opts.quick = quick;
    if (has_seed) opts.seed_override = seed;
    return opts;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"transmon charge-noise analysis pipelines"};
    app.require_subcommand(1);

    std::string config, out;
    bool quick = false;
    std::uint64_t seed = 0;
    bool has_seed = false;

    app.add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--out", out, "output directory (default: $QNOISE_OUT/<subcommand>)");
    app.add_flag("--quick", quick, "scaled-down runs with widened tolerances");
    auto* seed_opt = app.add_option("--seed", seed, "override the config seed");

    auto* spectrum = app.add_subcommand("spectrum", "charge-basis spectra and parity bands");
    auto* parity = app.add_subcommand("parity-pipeline",
                                      "telegraph shots -> GMM -> HMM -> PSD -> dwell report");
    auto* charge = app.add_subcommand(
        "charge-pipeline", "charge traces -> model selection -> transition matrices -> PSD fits");
    auto* fields = app.add_subcommand("fields", "induced-charge maps and sensitive volumes");
    auto* reproduce =
        app.add_subcommand("reproduce", "run every pipeline with the published anchor values");

    CLI11_PARSE(app, argc, argv);
    has_seed = seed_opt->count() > 0;

    if (spectrum->parsed())
        return qnoise::pipeline::cmd_spectrum(
            make_options("spectrum", config, out, quick, has_seed, seed));
    if (parity->parsed())
        return qnoise::pipeline::cmd_parity_pipeline(
            make_options("parity", config, out, quick, has_seed, seed));
    if (charge->parsed())
        return qnoise::pipeline::cmd_charge_pipeline(
            make_options("charge", config, out, quick, has_seed, seed));
    if (fields->parsed())
        return qnoise::pipeline::cmd_fields(
            make_options("fields", config, out, quick, has_seed, seed));
    if (reproduce->parsed())
        return qnoise::pipeline::cmd_reproduce(
            make_options("reproduce", config, out, quick, has_seed, seed));
    return qnoise::pipeline::kExitConfigError;
}
