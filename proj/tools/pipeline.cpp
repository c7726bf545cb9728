#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>

#include "json.hpp"
#include "manifest.hpp"
#include "qnoise/io.hpp"

namespace qnoise::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Rethrow with the failing stage's name attached.
template <typename F>
auto stage(const std::string& name, F&& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        throw std::runtime_error("stage '" + name + "': " + e.what());
    }
}

json parse_config(const GlobalOptions& opts) {
    if (opts.config_path.empty()) return json::object();
    std::ifstream in(opts.config_path);
    if (!in) throw std::invalid_argument("cannot open config: " + opts.config_path.string());
    json doc = json::parse(in);  // json::parse_error on malformed input
    if (!doc.is_object()) throw std::invalid_argument("config root must be a JSON object");
    return doc;
}

void ensure_dir(const fs::path& dir) { fs::create_directories(dir); }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << text;
    if (text.empty() || text.back() != '\n') out << '\n';
}

io::CsvTable psd_table(const spectral::PsdEstimate& est) {
    io::CsvTable t;
    t.columns = {"f_hz", "s_value"};
    for (std::size_t i = 0; i < est.freq_hz.size(); ++i)
        t.rows.push_back({est.freq_hz[i], est.values[i]});
    return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// configs
// ---------------------------------------------------------------------------

SpectrumJobConfig SpectrumJobConfig::from_json_text(const std::string& text) {
    json doc = json::parse(text);
    SpectrumJobConfig cfg;
    cfg.params.e_j = doc.value("e_j_ghz", cfg.params.e_j);
    cfg.params.e_c = doc.value("e_c_ghz", cfg.params.e_c);
    cfg.max_level = doc.value("max_level", cfg.max_level);
    cfg.grid_points = doc.value("grid_points", cfg.grid_points);
    cfg.seed = doc.value("seed", cfg.seed);
    if (cfg.grid_points < 3) throw std::invalid_argument("config field 'grid_points' must be >= 3");
    return cfg;
}

std::string SpectrumJobConfig::to_json_text() const {
    json doc;
    doc["e_j_ghz"] = params.e_j;
    doc["e_c_ghz"] = params.e_c;
    doc["max_level"] = max_level;
    doc["grid_points"] = grid_points;
    doc["seed"] = seed;
    return doc.dump(2);
}

ParityJobConfig ParityJobConfig::from_json_text(const std::string& text) {
    json doc = json::parse(text);
    ParityJobConfig cfg;
    cfg.process.dwell_time_s = doc.value("dwell_time_s", cfg.process.dwell_time_s);
    cfg.process.duty_cycle_s = doc.value("duty_cycle_s", cfg.process.duty_cycle_s);
    cfg.process.duration_s = doc.value("duration_s", cfg.process.duration_s);
    cfg.misassignment = doc.value("misassignment", cfg.misassignment);
    cfg.relax_2_to_1 = doc.value("relax_2_to_1", cfg.relax_2_to_1);
    cfg.gmm_train_cap = doc.value("gmm_train_cap", cfg.gmm_train_cap);
    cfg.psd_nperseg = doc.value("psd_nperseg", cfg.psd_nperseg);
    cfg.seed = doc.value("seed", cfg.seed);
    return cfg;
}

std::string ParityJobConfig::to_json_text() const {
    json doc;
    doc["dwell_time_s"] = process.dwell_time_s;
    doc["duty_cycle_s"] = process.duty_cycle_s;
    doc["duration_s"] = process.duration_s;
    doc["misassignment"] = misassignment;
    doc["relax_2_to_1"] = relax_2_to_1;
    doc["gmm_train_cap"] = gmm_train_cap;
    doc["psd_nperseg"] = psd_nperseg;
    doc["seed"] = seed;
    return doc.dump(2);
}

ChargeJobConfig ChargeJobConfig::from_json_text(const std::string& text) {
    json doc = json::parse(text);
    ChargeJobConfig cfg;
    if (doc.contains("env")) cfg.env = synth::ChargeEnvConfig::from_json(doc["env"].dump());
    cfg.run_selection = doc.value("run_selection", cfg.run_selection);
    cfg.selection.subsample = doc.value("selection_subsample", cfg.selection.subsample);
    cfg.selection.max_order = doc.value("selection_max_order", cfg.selection.max_order);
    cfg.offset_alpha = doc.value("offset_alpha", cfg.offset_alpha);
    cfg.offset_amp_1hz = doc.value("offset_amp_1hz", cfg.offset_amp_1hz);
    cfg.freq_alpha = doc.value("freq_alpha", cfg.freq_alpha);
    cfg.freq_amp_1hz = doc.value("freq_amp_1hz", cfg.freq_amp_1hz);
    cfg.surrogate_samples = doc.value("surrogate_samples", cfg.surrogate_samples);
    cfg.surrogate_interval_s = doc.value("surrogate_interval_s", cfg.surrogate_interval_s);
    cfg.fit_lo_hz = doc.value("fit_lo_hz", cfg.fit_lo_hz);
    cfg.fit_hi_hz = doc.value("fit_hi_hz", cfg.fit_hi_hz);
    cfg.seed = doc.value("seed", cfg.seed);
    return cfg;
}

std::string ChargeJobConfig::to_json_text() const {
    json doc;
    doc["env"] = json::parse(env.to_json());
    doc["run_selection"] = run_selection;
    doc["selection_subsample"] = selection.subsample;
    doc["selection_max_order"] = selection.max_order;
    doc["offset_alpha"] = offset_alpha;
    doc["offset_amp_1hz"] = offset_amp_1hz;
    doc["freq_alpha"] = freq_alpha;
    doc["freq_amp_1hz"] = freq_amp_1hz;
    doc["surrogate_samples"] = surrogate_samples;
    doc["surrogate_interval_s"] = surrogate_interval_s;
    doc["fit_lo_hz"] = fit_lo_hz;
    doc["fit_hi_hz"] = fit_hi_hz;
    doc["seed"] = seed;
    return doc.dump(2);
}

FieldsJobConfig FieldsJobConfig::from_json_text(const std::string& text) {
    json doc = json::parse(text);
    FieldsJobConfig cfg;
    if (doc.contains("device"))
        cfg.device = fields::DeviceScaleConfig::from_json(doc["device"].dump());
    cfg.sor.tolerance = doc.value("sor_tolerance", cfg.sor.tolerance);
    cfg.sor.max_sweeps = doc.value("sor_max_sweeps", cfg.sor.max_sweeps);
    cfg.thresholds = doc.value("thresholds", cfg.thresholds);
    if (cfg.thresholds.empty())
        throw std::invalid_argument("config field 'thresholds' must not be empty");
    return cfg;
}

std::string FieldsJobConfig::to_json_text() const {
    json doc;
    doc["device"] = json::parse(device.to_json());
    doc["sor_tolerance"] = sor.tolerance;
    doc["sor_max_sweeps"] = sor.max_sweeps;
    doc["thresholds"] = thresholds;
    return doc.dump(2);
}

// ---------------------------------------------------------------------------
// parity pipeline
// ---------------------------------------------------------------------------

ParityJobResult run_parity_pipeline(const ParityJobConfig& cfg) {
    ParityJobResult result;
    auto process = cfg.process;
    process.seed = io::derive_seed(cfg.seed, "parity/process");

    result.planted = stage("gen-parity-path", [&] { return synth::gen_parity_path(process); });
    result.planted_dwell_s = process.dwell_time_s;
    result.true_flips = result.planted.flips();
    result.undersampled = process.duty_cycle_s > process.dwell_time_s;

    const auto cluster_model =
        synth::IqClusterModel::paper_like(cfg.misassignment, cfg.relax_2_to_1);
    result.shots = stage("gen-parity-shots",
                         [&] { return synth::gen_parity_shots(result.planted, cluster_model, process); });

    // 3-state mixture trained on a stride subsample, classifying every shot
    const auto labels = stage("gmm-classify", [&] {
        const std::size_t n = result.shots.size();
        const std::size_t stride =
            std::max<std::size_t>(1, n / static_cast<std::size_t>(cfg.gmm_train_cap));
        Eigen::MatrixXd train(static_cast<Eigen::Index>((n + stride - 1) / stride), 2);
        Eigen::Index r = 0;
        for (std::size_t i = 0; i < n; i += stride) {
            train(r, 0) = result.shots[i].i_volt;
            train(r, 1) = result.shots[i].q_volt;
            ++r;
        }
        classify::GmmFitOptions gopts;
        gopts.seed = io::derive_seed(cfg.seed, "parity/gmm");
        auto mixture = classify::gmm_fit(train.topRows(r), 3, gopts);

        // components carry no state identity; recover it from the calibrated
        // cluster centers (states 0, 1, 2 participate in the parity protocol)
        std::vector<int> comp_state(3, 0);
        for (int c = 0; c < 3; ++c) {
            double best = std::numeric_limits<double>::infinity();
            for (int s = 0; s < 3; ++s) {
                const double d =
                    (mixture.means.row(c).transpose() - cluster_model.mean[static_cast<std::size_t>(s)]).norm();
                if (d < best) {
                    best = d;
                    comp_state[static_cast<std::size_t>(c)] = s;
                }
            }
        }

        Eigen::MatrixXd all(static_cast<Eigen::Index>(n), 2);
        for (std::size_t i = 0; i < n; ++i) {
            all(static_cast<Eigen::Index>(i), 0) = result.shots[i].i_volt;
            all(static_cast<Eigen::Index>(i), 1) = result.shots[i].q_volt;
        }
        auto cls = classify::gmm_classify(mixture, all);
        std::vector<int> mapped(n);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < n; ++i) {
            mapped[i] = comp_state[static_cast<std::size_t>(cls.labels[i])];
            correct += mapped[i] == result.shots[i].truth_state;
        }
        result.gmm_accuracy = static_cast<double>(correct) / static_cast<double>(n);
        return mapped;
    });

    // split into band streams and reduce to binary parity observables
    std::vector<int> sym_even, sym_odd;
    std::vector<double> t_even, t_odd;
    for (std::size_t i = 0; i < result.shots.size(); ++i) {
        if (result.shots[i].target_band == synth::Band::even) {
            sym_even.push_back(labels[i]);
            t_even.push_back(result.shots[i].t_s);
        } else {
            sym_odd.push_back(labels[i]);
            t_odd.push_back(result.shots[i].t_s);
        }
    }
    const auto reduced_even = classify::parity_band_reduce(sym_even);
    const auto reduced_odd = classify::parity_band_reduce(sym_odd);

    const auto decode_band = [&](const std::vector<int>& symbols, const std::vector<double>& times,
                                 const char* tag, classify::HiddenMarkov& out_model) {
        classify::HmmTrainOptions hopts;
        hopts.seed = io::derive_seed(cfg.seed, std::string("parity/hmm/") + tag);
        hopts.restarts = 2;
        hopts.max_iterations = 100;
        const std::size_t cap = 200000;  // train on a window, decode everything
        std::span<const int> window(symbols.data(), std::min(symbols.size(), cap));
        out_model = classify::hmm_train_categorical(window, 2, hopts);
        return classify::hmm_viterbi(out_model, std::span<const int>(symbols), times);
    };
    auto path_even = stage("hmm-even", [&] { return decode_band(reduced_even, t_even, "even", result.hmm_even); });
    auto path_odd = stage("hmm-odd", [&] { return decode_band(reduced_odd, t_odd, "odd", result.hmm_odd); });

    result.decoded =
        stage("fuse-paths", [&] { return classify::fuse_parity_paths(path_even, path_odd); });

    // flip accounting: decoded flips matched to planted flips within one duty
    // cycle, leftovers are spurious
    std::vector<double> decoded_flips;
    for (std::size_t i = 1; i < result.decoded.states.size(); ++i)
        if (result.decoded.states[i] != result.decoded.states[i - 1])
            decoded_flips.push_back(result.decoded.times_s[i]);
    result.decoded_flips = decoded_flips.size();
    {
        const double tol = process.duty_cycle_s;
        const auto& planted = result.planted.flip_times_s;
        std::size_t matched = 0;
        std::size_t pi = 0;
        std::vector<bool> used(planted.size(), false);
        for (double t : decoded_flips) {
            while (pi < planted.size() && planted[pi] < t - tol) ++pi;
            for (std::size_t j = pi; j < planted.size() && planted[j] <= t + tol; ++j) {
                if (!used[j]) {
                    used[j] = true;
                    ++matched;
                    break;
                }
            }
        }
        result.matched_flips = matched;
        result.spurious_flips = decoded_flips.size() - matched;
    }

    // parity occupation series at the probe rate, then PSD + Lorentzian
    result.psd = stage("psd", [&] {
        std::vector<double> series(result.decoded.states.size());
        for (std::size_t i = 0; i < series.size(); ++i)
            series[i] = result.decoded.states[i] == 0 ? 1.0 : -1.0;
        spectral::SegmentConfig scfg;
        scfg.nperseg = static_cast<int>(
            std::min<std::size_t>(static_cast<std::size_t>(cfg.psd_nperseg), series.size() / 4));
        return spectral::psd(series, 0.5 * process.duty_cycle_s, scfg);
    });
    result.lorentzian = stage("fit-lorentzian", [&] { return spectral::fit_lorentzian(result.psd); });
    result.recovered_dwell_s = result.lorentzian.dwell_rts_s();
    return result;
}

std::string ParityJobResult::summary_json() const {
    json doc;
    doc["planted"] = {{"dwell_s", planted_dwell_s}, {"flips", true_flips}};
    doc["recovered"] = {{"dwell_s", recovered_dwell_s},
                        {"knee_hz", lorentzian.knee_hz},
                        {"dwell_conventions_s",
                         {{"rts_1_over_pi_fc", lorentzian.dwell_rts_s()},
                          {"paper_1_over_fc", lorentzian.dwell_paper_s()},
                          {"angular_1_over_2pi_fc", lorentzian.dwell_angular_s()}}},
                        {"flips", decoded_flips},
                        {"spurious_flips", spurious_flips},
                        {"matched_flips", matched_flips}};
    doc["gmm_accuracy"] = gmm_accuracy;
    doc["dwell_error"] = std::abs(recovered_dwell_s - planted_dwell_s) / planted_dwell_s;
    doc["spurious_flip_fraction"] =
        true_flips ? static_cast<double>(spurious_flips) / static_cast<double>(true_flips) : 0.0;
    doc["undersampled_warning"] = undersampled;
    return doc.dump(2);
}

// ---------------------------------------------------------------------------
// charge pipeline
// ---------------------------------------------------------------------------

ChargeJobResult run_charge_pipeline(const ChargeJobConfig& cfg) {
    ChargeJobResult result;
    auto env = cfg.env;
    env.seed = io::derive_seed(cfg.seed, "charge/env");

    std::vector<synth::ChargeTrace> traces;
    stage("gen-charge-traces", [&] {
        for (double t : env.temperatures_k) traces.push_back(synth::gen_charge_trace(env, t));
        return 0;
    });

    // pooled offsets drive both model selection and the emission fit
    std::vector<double> pooled;
    for (const auto& tr : traces) pooled.insert(pooled.end(), tr.q_e.begin(), tr.q_e.end());

    if (cfg.run_selection) {
        result.selection = stage("model-selection", [&] {
            return classify::select_model_order(pooled, cfg.selection,
                                                io::derive_seed(cfg.seed, "charge/selection"));
        });
        result.order_used = result.selection.chosen;
    } else {
        result.order_used = static_cast<int>(env.offsets_e.size());
    }

    result.pooled_mixture = stage("pooled-gmm", [&] {
        const std::size_t cap = 120000;
        const std::size_t stride = std::max<std::size_t>(1, pooled.size() / cap);
        Eigen::MatrixXd obs(static_cast<Eigen::Index>((pooled.size() + stride - 1) / stride), 1);
        Eigen::Index r = 0;
        for (std::size_t i = 0; i < pooled.size(); i += stride) obs(r++, 0) = pooled[i];
        classify::GmmFitOptions gopts;
        gopts.seed = io::derive_seed(cfg.seed, "charge/pooled-gmm");
        return classify::gmm_fit(obs.topRows(r), result.order_used, gopts);
    });

    // per-temperature HMM: emissions pinned to the pooled fit (the paper's
    // "fixed across temperatures" analysis), transitions learned per dataset
    classify::HiddenMarkov init;
    init.kind = classify::EmissionKind::gaussian;
    init.n_states = result.order_used;
    init.initial = Eigen::VectorXd::Constant(result.order_used, 1.0 / result.order_used);
    init.transition = Eigen::MatrixXd::Constant(result.order_used, result.order_used,
                                                0.02 / std::max(1, result.order_used - 1));
    init.transition.diagonal().setConstant(0.98);
    init.emit_mean.resize(result.order_used);
    init.emit_var.resize(result.order_used);
    for (int s = 0; s < result.order_used; ++s) {
        init.emit_mean[s] = result.pooled_mixture.means(s, 0);
        init.emit_var[s] = result.pooled_mixture.covs[static_cast<std::size_t>(s)](0, 0);
    }

    for (auto& tr : traces) {
        ChargeTemperatureResult per;
        per.temperature_k = tr.temperature_k;
        const std::string tag = io::format_double(tr.temperature_k);
        stage("hmm@" + tag, [&] {
            classify::HmmTrainOptions hopts;
            hopts.init = &init;
            hopts.freeze_emissions = true;
            hopts.max_iterations = 100;
            hopts.seed = io::derive_seed(cfg.seed, "charge/hmm/" + tag);
            auto model = classify::hmm_train_gaussian(tr.q_e, result.order_used, hopts);
            per.decoded = classify::hmm_viterbi(model, std::span<const double>(tr.q_e), tr.t_s);
            per.matrix = classify::transition_matrix(per.decoded, result.order_used);
            per.matrix.temperature_k = tr.temperature_k;
            per.dwell = classify::dwell_times(per.decoded);
            return 0;
        });
        per.trace = std::move(tr);
        result.per_temperature.push_back(std::move(per));
    }

    // 1/f^alpha surrogates for the quoted offset- and frequency-noise spectra
    stage("offset-noise-fit", [&] {
        auto series = spectral::gen_power_law_noise(cfg.offset_alpha, cfg.offset_amp_1hz,
                                                    cfg.surrogate_samples, cfg.surrogate_interval_s,
                                                    io::derive_seed(cfg.seed, "charge/offset-noise"));
        spectral::SegmentConfig scfg;
        scfg.nperseg = static_cast<int>(std::min<std::size_t>(8192, cfg.surrogate_samples / 8));
        result.offset_psd = spectral::psd(series, cfg.surrogate_interval_s, scfg);
        result.offset_fit = spectral::fit_power_law(result.offset_psd, cfg.fit_lo_hz, cfg.fit_hi_hz);
        return 0;
    });
    stage("frequency-noise-fit", [&] {
        auto series = spectral::gen_power_law_noise(cfg.freq_alpha, cfg.freq_amp_1hz,
                                                    cfg.surrogate_samples, cfg.surrogate_interval_s,
                                                    io::derive_seed(cfg.seed, "charge/freq-noise"));
        spectral::SegmentConfig scfg;
        scfg.nperseg = static_cast<int>(std::min<std::size_t>(8192, cfg.surrogate_samples / 8));
        result.freq_psd = spectral::psd(series, cfg.surrogate_interval_s, scfg);
        result.freq_fit = spectral::fit_power_law(result.freq_psd, cfg.fit_lo_hz, cfg.fit_hi_hz);
        return 0;
    });
    return result;
}

std::string ChargeJobResult::summary_json(const ChargeJobConfig& cfg) const {
    json doc;
    doc["order_planted"] = cfg.env.offsets_e.size();
    doc["order_used"] = order_used;
    if (!selection.scores.empty()) doc["order_chosen"] = selection.chosen;
    json per = json::array();
    for (const auto& t : per_temperature) {
        json entry;
        entry["temperature_k"] = t.temperature_k;
        entry["neighbor_mass"] = t.matrix.neighbor_mass;
        entry["scramble_mass"] = t.matrix.scramble_mass;
        entry["mean_dwell_s"] = t.dwell.pooled.mean_s;
        entry["transitions"] = t.dwell.pooled.count;
        per.push_back(entry);
    }
    doc["per_temperature"] = per;
    doc["offset_noise"] = {{"alpha_planted", cfg.offset_alpha},
                           {"alpha", offset_fit.alpha},
                           {"amp_1hz_planted", cfg.offset_amp_1hz},
                           {"amp_1hz", offset_fit.amp_1hz}};
    doc["frequency_noise"] = {{"alpha_planted", cfg.freq_alpha},
                              {"alpha", freq_fit.alpha},
                              {"amp_1hz_planted", cfg.freq_amp_1hz},
                              {"amp_1hz", freq_fit.amp_1hz}};
    return doc.dump(2);
}

// ---------------------------------------------------------------------------
// fields pipeline
// ---------------------------------------------------------------------------

FieldsJobResult run_fields_pipeline(const FieldsJobConfig& cfg) {
    if (cfg.thresholds.empty()) throw std::invalid_argument("threshold list must not be empty");
    FieldsJobResult result;
    result.thresholds = cfg.thresholds;

    auto geoms = stage("build-geometries", [&] { return fields::build_paper_geometries(cfg.device); });
    result.differential = stage("solve-differential", [&] {
        return fields::induced_charge_map(geoms.differential,
                                          {{"paddle_a", +1.0}, {"paddle_b", -1.0}}, cfg.sor);
    });
    result.island = stage("solve-island", [&] {
        return fields::induced_charge_map(geoms.island, {{"island", +1.0}}, cfg.sor);
    });
    for (double th : cfg.thresholds) {
        result.differential_volume_m3.push_back(
            fields::sensitive_volume(result.differential, th).volume_m3);
        result.island_volume_m3.push_back(fields::sensitive_volume(result.island, th).volume_m3);
    }
    return result;
}

std::string FieldsJobResult::summary_json() const {
    json doc;
    json rows = json::array();
    bool ordered = true;
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        rows.push_back({{"threshold_e", thresholds[i]},
                        {"differential_m3", differential_volume_m3[i]},
                        {"island_m3", island_volume_m3[i]}});
        ordered &= differential_volume_m3[i] > island_volume_m3[i];
    }
    doc["volumes"] = rows;
    doc["differential_always_larger"] = ordered;
    return doc.dump(2);
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

namespace {

std::uint64_t effective_seed(const GlobalOptions& opts, std::uint64_t config_seed) {
    return opts.seed_override ? *opts.seed_override : config_seed;
}

int run_guarded(const GlobalOptions& opts, const std::string& name,
                int (*body)(const GlobalOptions&)) {
    try {
        return body(opts);
    } catch (const json::exception& e) {
        std::cerr << name << ": config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << name << ": config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << name << ": " << e.what() << '\n';
        return kExitNumericalError;
    }
}

int cmd_spectrum_impl(const GlobalOptions& opts) {
    auto cfg = SpectrumJobConfig::from_json_text(parse_config(opts).dump());
    cfg.seed = effective_seed(opts, cfg.seed);
    ensure_dir(opts.out_dir);
    RunManifest manifest("spectrum", cfg.to_json_text(), cfg.seed);

    std::vector<double> grid(static_cast<std::size_t>(cfg.grid_points));
    for (int i = 0; i < cfg.grid_points; ++i)
        grid[static_cast<std::size_t>(i)] = static_cast<double>(i) / (cfg.grid_points - 1);

    auto table = stage("spectrum-scan",
                       [&] { return spectrum::spectrum_scan(cfg.params, grid, cfg.max_level); });

    io::CsvTable csv;
    csv.columns = {"n_g"};
    for (int l = 0; l <= cfg.max_level; ++l) csv.columns.push_back("e" + std::to_string(l) + "_ghz");
    for (std::size_t g = 0; g < grid.size(); ++g) {
        std::vector<double> row{grid[g]};
        for (int l = 0; l <= cfg.max_level; ++l)
            row.push_back(table.levels[g][static_cast<std::size_t>(l)]);
        csv.rows.push_back(std::move(row));
    }
    io::write_csv(opts.out_dir / "spectrum.csv", csv);
    manifest.add_file("spectrum.csv");

    json bands = json::array();
    for (int l = 0; l + 1 <= cfg.max_level; ++l) {
        auto b = spectrum::parity_bands(table, l, l + 1);
        bands.push_back(json::parse(b.to_json()));
    }
    write_text(opts.out_dir / "parity_bands.json", bands.dump(2));
    manifest.add_file("parity_bands.json");
    write_text(opts.out_dir / "config.json", cfg.to_json_text());
    manifest.add_file("config.json");
    manifest.stage_ok("spectrum-scan");
    manifest.write(opts.out_dir);
    return kExitOk;
}

int cmd_parity_impl(const GlobalOptions& opts) {
    auto cfg = ParityJobConfig::from_json_text(parse_config(opts).dump());
    cfg.seed = effective_seed(opts, cfg.seed);
    if (opts.quick) {
        cfg.process.duration_s = std::max(0.6, cfg.process.duration_s / 100.0);
        cfg.psd_nperseg = 4096;
    }
    ensure_dir(opts.out_dir);
    RunManifest manifest("parity-pipeline", cfg.to_json_text(), cfg.seed);

    ParityJobResult result;
    try {
        result = run_parity_pipeline(cfg);
    } catch (const std::exception& e) {
        manifest.stage_failed("pipeline", e.what());
        manifest.write(opts.out_dir);
        throw;
    }
    if (result.undersampled)
        std::cerr << "warning: duty cycle exceeds the dwell time; flips will be missed\n";

    io::CsvTable shots;
    shots.columns = {"t_s", "i_volt", "q_volt", "band", "truth_state"};
    for (const auto& s : result.shots)
        shots.rows.push_back({s.t_s, s.i_volt, s.q_volt,
                              s.target_band == synth::Band::even ? 0.0 : 1.0,
                              static_cast<double>(s.truth_state)});
    io::write_csv(opts.out_dir / "shots.csv", shots);
    manifest.add_file("shots.csv");

    io::CsvTable path;
    path.columns = {"t_s", "parity"};
    for (std::size_t i = 0; i < result.decoded.states.size(); ++i)
        path.rows.push_back({result.decoded.times_s[i], static_cast<double>(result.decoded.states[i])});
    io::write_csv(opts.out_dir / "decoded_path.csv", path);
    manifest.add_file("decoded_path.csv");

    io::write_csv(opts.out_dir / "psd.csv", psd_table(result.psd));
    manifest.add_file("psd.csv");
    write_text(opts.out_dir / "lorentzian.json", result.lorentzian.to_json());
    manifest.add_file("lorentzian.json");
    write_text(opts.out_dir / "report.json", result.summary_json());
    manifest.add_file("report.json");
    write_text(opts.out_dir / "config.json", cfg.to_json_text());
    manifest.add_file("config.json");
    manifest.stage_ok("pipeline");
    manifest.write(opts.out_dir);
    if (opts.verbosity > 0)
        std::cout << "parity-pipeline: dwell " << result.recovered_dwell_s << " s (planted "
                  << result.planted_dwell_s << " s), " << result.decoded_flips << " flips decoded\n";
    return kExitOk;
}

int cmd_charge_impl(const GlobalOptions& opts) {
    auto cfg = ChargeJobConfig::from_json_text(parse_config(opts).dump());
    cfg.seed = effective_seed(opts, cfg.seed);
    if (opts.quick) {
        cfg.env.duration_s /= 100.0;
        cfg.surrogate_samples = 1 << 12;
        cfg.selection.subsample = 4000;
    }
    ensure_dir(opts.out_dir);
    RunManifest manifest("charge-pipeline", cfg.to_json_text(), cfg.seed);

    ChargeJobResult result;
    try {
        result = run_charge_pipeline(cfg);
    } catch (const std::exception& e) {
        manifest.stage_failed("pipeline", e.what());
        manifest.write(opts.out_dir);
        throw;
    }

    for (const auto& per : result.per_temperature) {
        const std::string tag = io::format_double(per.temperature_k * 1000.0) + "mK";
        io::CsvTable trace;
        trace.columns = {"t_s", "q_e", "temperature_k", "truth_label"};
        for (std::size_t i = 0; i < per.trace.t_s.size(); ++i)
            trace.rows.push_back({per.trace.t_s[i], per.trace.q_e[i], per.temperature_k,
                                  static_cast<double>(per.trace.truth[i])});
        io::write_csv(opts.out_dir / ("trace_" + tag + ".csv"), trace);
        manifest.add_file("trace_" + tag + ".csv");

        io::CsvTable matrix;
        matrix.columns = {"from", "to", "p", "count"};
        for (int i = 0; i < result.order_used; ++i)
            for (int j = 0; j < result.order_used; ++j)
                matrix.rows.push_back({static_cast<double>(i), static_cast<double>(j),
                                       per.matrix.p(i, j), per.matrix.counts(i, j)});
        io::write_csv(opts.out_dir / ("transitions_" + tag + ".csv"), matrix);
        manifest.add_file("transitions_" + tag + ".csv");
        write_text(opts.out_dir / ("dwell_" + tag + ".json"), per.dwell.to_json());
        manifest.add_file("dwell_" + tag + ".json");
    }

    if (!result.selection.scores.empty()) {
        write_text(opts.out_dir / "model_selection.json", result.selection.to_json());
        manifest.add_file("model_selection.json");
        io::CsvTable sel;
        sel.columns = {"order", "silhouette", "train_test_distance", "bic", "bic_gradient"};
        for (const auto& s : result.selection.scores)
            sel.rows.push_back({static_cast<double>(s.order), s.silhouette, s.train_test_distance,
                                s.bic, s.bic_gradient});
        io::write_csv(opts.out_dir / "model_selection.csv", sel);
        manifest.add_file("model_selection.csv");
    }
    write_text(opts.out_dir / "pooled_mixture.json", result.pooled_mixture.to_json());
    manifest.add_file("pooled_mixture.json");

    io::write_csv(opts.out_dir / "offset_psd.csv", psd_table(result.offset_psd));
    manifest.add_file("offset_psd.csv");
    write_text(opts.out_dir / "offset_fit.json", result.offset_fit.to_json());
    manifest.add_file("offset_fit.json");
    io::write_csv(opts.out_dir / "frequency_psd.csv", psd_table(result.freq_psd));
    manifest.add_file("frequency_psd.csv");
    write_text(opts.out_dir / "frequency_fit.json", result.freq_fit.to_json());
    manifest.add_file("frequency_fit.json");

    write_text(opts.out_dir / "report.json", result.summary_json(cfg));
    manifest.add_file("report.json");
    write_text(opts.out_dir / "config.json", cfg.to_json_text());
    manifest.add_file("config.json");
    manifest.stage_ok("pipeline");
    manifest.write(opts.out_dir);
    if (opts.verbosity > 0)
        std::cout << "charge-pipeline: order " << result.order_used << ", offset alpha "
                  << result.offset_fit.alpha << '\n';
    return kExitOk;
}

int cmd_fields_impl(const GlobalOptions& opts) {
    auto cfg = FieldsJobConfig::from_json_text(parse_config(opts).dump());
    if (opts.quick) {
        cfg.device.n = 32;
        cfg.device.scale = 0.5;
    }
    ensure_dir(opts.out_dir);
    RunManifest manifest("fields", cfg.to_json_text(), 0);

    FieldsJobResult result;
    try {
        result = run_fields_pipeline(cfg);
    } catch (const std::exception& e) {
        manifest.stage_failed("pipeline", e.what());
        manifest.write(opts.out_dir);
        throw;
    }

    fields::write_grid(opts.out_dir / "induced_differential.bin", result.differential);
    manifest.add_file("induced_differential.bin");
    manifest.add_file("induced_differential.bin.json");
    fields::write_grid(opts.out_dir / "induced_island.bin", result.island);
    manifest.add_file("induced_island.bin");
    manifest.add_file("induced_island.bin.json");
    fields::write_map_csv(opts.out_dir / "induced_differential.csv", result.differential);
    manifest.add_file("induced_differential.csv");
    fields::write_map_csv(opts.out_dir / "induced_island.csv", result.island);
    manifest.add_file("induced_island.csv");

    io::CsvTable volumes;
    volumes.columns = {"threshold_e", "differential_m3", "island_m3"};
    for (std::size_t i = 0; i < result.thresholds.size(); ++i)
        volumes.rows.push_back({result.thresholds[i], result.differential_volume_m3[i],
                                result.island_volume_m3[i]});
    io::write_csv(opts.out_dir / "sensitive_volume.csv", volumes);
    manifest.add_file("sensitive_volume.csv");
    write_text(opts.out_dir / "report.json", result.summary_json());
    manifest.add_file("report.json");
    write_text(opts.out_dir / "config.json", cfg.to_json_text());
    manifest.add_file("config.json");
    manifest.stage_ok("pipeline");
    manifest.write(opts.out_dir);
    return kExitOk;
}

int cmd_reproduce_impl(const GlobalOptions& opts) {
    json user = parse_config(opts);
    const std::uint64_t seed = opts.seed_override ? *opts.seed_override : user.value("seed", 1);
    ensure_dir(opts.out_dir);

    json config;
    config["seed"] = seed;
    config["quick"] = opts.quick;
    RunManifest manifest("reproduce", config.dump(2), seed);

    json summary = json::array();
    auto tol = [&](double full, double quick) { return opts.quick ? quick : full; };
    auto record = [&](const std::string& name, double planted, double recovered, double tolerance,
                      bool pass, const std::string& kind) {
        summary.push_back({{"quantity", name},
                           {"planted", planted},
                           {"recovered", recovered},
                           {"tolerance", tolerance},
                           {"tolerance_kind", kind},
                           {"pass", pass}});
    };

    auto sub = [&](const std::string& name) {
        GlobalOptions child = opts;
        child.config_path.clear();
        child.out_dir = opts.out_dir / name;
        child.seed_override = seed;
        child.verbosity = 0;
        return child;
    };

    // spectrum
    try {
        auto child = sub("spectrum");
        cmd_spectrum_impl(child);
        manifest.stage_ok("spectrum");
    } catch (const std::exception& e) {
        manifest.stage_failed("spectrum", e.what());
    }

    // parity
    try {
        auto child = sub("parity");
        cmd_parity_impl(child);
        std::ifstream in(child.out_dir / "report.json");
        json report = json::parse(in);
        const double planted = report["planted"]["dwell_s"].get<double>();
        const double recovered = report["recovered"]["dwell_s"].get<double>();
        const double t = tol(0.15, 0.50);
        record("parity_dwell_s", planted, recovered, t,
               std::abs(recovered - planted) <= t * planted, "relative");
        const double spurious = report["spurious_flip_fraction"].get<double>();
        record("spurious_flip_fraction", 0.0, spurious, tol(0.02, 0.10), spurious < tol(0.02, 0.10),
               "absolute");
        manifest.stage_ok("parity");
    } catch (const std::exception& e) {
        manifest.stage_failed("parity", e.what());
    }

    // charge
    try {
        auto child = sub("charge");
        cmd_charge_impl(child);
        std::ifstream in(child.out_dir / "report.json");
        json report = json::parse(in);
        const double planted_n = report["order_planted"].get<double>();
        const double chosen = report.value("order_chosen", 0);
        record("charge_configurations", planted_n, chosen, tol(0.0, 2.0),
               std::abs(chosen - planted_n) <= tol(0.0, 2.0), "absolute");
        const auto& per = report["per_temperature"];
        bool increasing = true;
        for (std::size_t i = 1; i < per.size(); ++i)
            increasing &= per[i]["neighbor_mass"].get<double>() >
                          per[i - 1]["neighbor_mass"].get<double>();
        record("neighbor_mass_monotone", 1.0, increasing ? 1.0 : 0.0, 0.0, increasing, "boolean");
        if (!per.empty()) {
            const double dwell = per[0]["mean_dwell_s"].get<double>();
            const double planted_dwell = 1320.0 * (opts.quick ? 1.0 : 1.0);
            const double transitions = std::max(1.0, per[0]["transitions"].get<double>());
            const double sigma = planted_dwell / std::sqrt(transitions);
            const double nsig = opts.quick ? 5.0 : 3.0;
            record("mean_dwell_10mk_s", planted_dwell, dwell, nsig * sigma,
                   std::abs(dwell - planted_dwell) <= nsig * sigma, "absolute");
        }
        const double alpha = report["offset_noise"]["alpha"].get<double>();
        const double alpha_planted = report["offset_noise"]["alpha_planted"].get<double>();
        record("offset_alpha", alpha_planted, alpha, tol(0.1, 0.3),
               std::abs(alpha - alpha_planted) <= tol(0.1, 0.3), "absolute");
        const double amp = report["offset_noise"]["amp_1hz"].get<double>();
        const double amp_planted = report["offset_noise"]["amp_1hz_planted"].get<double>();
        const double factor = tol(2.0, 4.0);
        record("offset_amp_1hz", amp_planted, amp, factor,
               amp >= amp_planted / factor && amp <= amp_planted * factor, "factor");
        const double falpha = report["frequency_noise"]["alpha"].get<double>();
        const double falpha_planted = report["frequency_noise"]["alpha_planted"].get<double>();
        record("frequency_alpha", falpha_planted, falpha, tol(0.1, 0.3),
               std::abs(falpha - falpha_planted) <= tol(0.1, 0.3), "absolute");
        manifest.stage_ok("charge");
    } catch (const std::exception& e) {
        manifest.stage_failed("charge", e.what());
    }

    // fields
    try {
        auto child = sub("fields");
        cmd_fields_impl(child);
        std::ifstream in(child.out_dir / "report.json");
        json report = json::parse(in);
        const bool ordered = report["differential_always_larger"].get<bool>();
        record("sensitive_volume_ordering", 1.0, ordered ? 1.0 : 0.0, 0.0, ordered, "boolean");
        manifest.stage_ok("fields");
    } catch (const std::exception& e) {
        manifest.stage_failed("fields", e.what());
    }

    write_text(opts.out_dir / "summary.json", summary.dump(2));
    manifest.add_file("summary.json");
    manifest.write(opts.out_dir);
    if (opts.verbosity > 0) {
        for (const auto& row : summary)
            std::cout << (row["pass"].get<bool>() ? "  ok  " : " MISS ") << row["quantity"].get<std::string>()
                      << ": planted " << row["planted"].dump() << ", recovered "
                      << row["recovered"].dump() << '\n';
    }
    return manifest.any_failed() ? kExitNumericalError : kExitOk;
}

}  // namespace

int cmd_spectrum(const GlobalOptions& opts) {
    return run_guarded(opts, "spectrum", cmd_spectrum_impl);
}
int cmd_parity_pipeline(const GlobalOptions& opts) {
    return run_guarded(opts, "parity-pipeline", cmd_parity_impl);
}
int cmd_charge_pipeline(const GlobalOptions& opts) {
    return run_guarded(opts, "charge-pipeline", cmd_charge_impl);
}
int cmd_fields(const GlobalOptions& opts) {
    return run_guarded(opts, "fields", cmd_fields_impl);
}
int cmd_reproduce(const GlobalOptions& opts) {
    return run_guarded(opts, "reproduce", cmd_reproduce_impl);
}

}  // namespace qnoise::pipeline
