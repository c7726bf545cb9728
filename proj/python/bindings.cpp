#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pipeline.hpp"
#include "qnoise/classify.hpp"
#include "qnoise/fields.hpp"
#include "qnoise/spectral.hpp"
#include "qnoise/spectrum.hpp"
#include "qnoise/synth.hpp"

namespace py = pybind11;
using namespace qnoise;

PYBIND11_MODULE(_qnoise, m) {
    m.doc() = "transmon charge-noise analysis: spectra, synthetic data, GMM/HMM inference, "
              "PSD fits, induced-charge electrostatics";

    // ------------------------------------------------------------ spectrum --
    py::class_<spectrum::TransmonParams>(m, "TransmonParams")
        .def(py::init<double, double>(), py::arg("e_j"), py::arg("e_c"))
        .def_readwrite("e_j", &spectrum::TransmonParams::e_j)
        .def_readwrite("e_c", &spectrum::TransmonParams::e_c)
        .def("in_transmon_regime", &spectrum::TransmonParams::in_transmon_regime);

    py::class_<spectrum::SpectrumTable>(m, "SpectrumTable")
        .def_readonly("n_g_grid", &spectrum::SpectrumTable::n_g_grid)
        .def_readonly("levels", &spectrum::SpectrumTable::levels)
        .def_readonly("n_cut", &spectrum::SpectrumTable::n_cut)
        .def("transition", &spectrum::SpectrumTable::transition)
        .def("to_json", &spectrum::SpectrumTable::to_json);

    py::class_<spectrum::ParityBands>(m, "ParityBands")
        .def(py::init<>())
        .def_readwrite("i", &spectrum::ParityBands::i)
        .def_readwrite("j", &spectrum::ParityBands::j)
        .def_readwrite("f_bar", &spectrum::ParityBands::f_bar)
        .def_readwrite("eps", &spectrum::ParityBands::eps)
        .def_readonly("cosine_residual_rms", &spectrum::ParityBands::cosine_residual_rms)
        .def("to_json", &spectrum::ParityBands::to_json);

    py::class_<spectrum::OffsetInversion>(m, "OffsetInversion")
        .def_readonly("q_e", &spectrum::OffsetInversion::q_e)
        .def_readonly("clamped", &spectrum::OffsetInversion::clamped);

    m.def("fold_offset_e", &spectrum::fold_offset_e, py::arg("q_e"));
    m.def(
        "spectrum_scan",
        [](const spectrum::TransmonParams& p, const std::vector<double>& grid, int max_level,
           int n_cut) {
            spectrum::ScanOptions opts;
            opts.n_cut = n_cut;
            return spectrum::spectrum_scan(p, grid, max_level, opts);
        },
        py::arg("params"), py::arg("n_g_grid"), py::arg("max_level"), py::arg("n_cut") = 15);
    m.def("parity_bands", &spectrum::parity_bands, py::arg("table"), py::arg("i"), py::arg("j"));
    m.def("band_splitting", &spectrum::band_splitting, py::arg("bands"), py::arg("q_e"));
    m.def("offset_from_splitting", &spectrum::offset_from_splitting, py::arg("delta_f_ghz"),
          py::arg("bands"));
    m.def(
        "correlate_offsets",
        [](const std::vector<double>& ta, const std::vector<double>& qa,
           const std::vector<double>& tb, const std::vector<double>& qb, double window) {
            auto corr = spectrum::correlate_offsets(ta, qa, tb, qb, window);
            return py::make_tuple(corr.pairs, corr.pearson);
        },
        py::arg("t_a"), py::arg("q_a"), py::arg("t_b"), py::arg("q_b"), py::arg("window_s"));

    // --------------------------------------------------------------- synth --
    py::enum_<synth::Band>(m, "Band").value("even", synth::Band::even).value("odd", synth::Band::odd);

    py::class_<synth::ParityProcessConfig>(m, "ParityProcessConfig")
        .def(py::init<>())
        .def_readwrite("dwell_time_s", &synth::ParityProcessConfig::dwell_time_s)
        .def_readwrite("duty_cycle_s", &synth::ParityProcessConfig::duty_cycle_s)
        .def_readwrite("duration_s", &synth::ParityProcessConfig::duration_s)
        .def_readwrite("seed", &synth::ParityProcessConfig::seed);

    py::class_<synth::ParityPath>(m, "ParityPath")
        .def_readonly("flip_times_s", &synth::ParityPath::flip_times_s)
        .def_readonly("initial_parity", &synth::ParityPath::initial_parity)
        .def("parity_at", &synth::ParityPath::parity_at)
        .def("flips", &synth::ParityPath::flips);

    py::class_<synth::ShotRecord>(m, "ShotRecord")
        .def_readonly("t_s", &synth::ShotRecord::t_s)
        .def_readonly("i_volt", &synth::ShotRecord::i_volt)
        .def_readonly("q_volt", &synth::ShotRecord::q_volt)
        .def_readonly("target_band", &synth::ShotRecord::target_band)
        .def_readonly("truth_state", &synth::ShotRecord::truth_state);

    py::class_<synth::IqClusterModel>(m, "IqClusterModel")
        .def_static("paper_like", &synth::IqClusterModel::paper_like,
                    py::arg("misassignment") = 0.015, py::arg("relax_2_to_1") = 0.10)
        .def("validate", &synth::IqClusterModel::validate);

    py::class_<synth::ChargeEnvConfig>(m, "ChargeEnvConfig")
        .def(py::init<>())
        .def_static("paper_like", &synth::ChargeEnvConfig::paper_like)
        .def_readwrite("offsets_e", &synth::ChargeEnvConfig::offsets_e)
        .def_readwrite("neighbor_base_rate_hz", &synth::ChargeEnvConfig::neighbor_base_rate_hz)
        .def_readwrite("scramble_rate_hz", &synth::ChargeEnvConfig::scramble_rate_hz)
        .def_readwrite("temperatures_k", &synth::ChargeEnvConfig::temperatures_k)
        .def_readwrite("sample_interval_s", &synth::ChargeEnvConfig::sample_interval_s)
        .def_readwrite("duration_s", &synth::ChargeEnvConfig::duration_s)
        .def_readwrite("noise_sigma_e", &synth::ChargeEnvConfig::noise_sigma_e)
        .def_readwrite("seed", &synth::ChargeEnvConfig::seed);

    py::class_<synth::ChargeTrace>(m, "ChargeTrace")
        .def_readonly("t_s", &synth::ChargeTrace::t_s)
        .def_readonly("q_e", &synth::ChargeTrace::q_e)
        .def_readonly("truth", &synth::ChargeTrace::truth)
        .def_readonly("temperature_k", &synth::ChargeTrace::temperature_k);

    m.def("gen_parity_path", &synth::gen_parity_path, py::arg("config"));
    m.def("gen_parity_shots", &synth::gen_parity_shots, py::arg("path"), py::arg("model"),
          py::arg("config"));
    m.def("charge_transition_matrix", &synth::charge_transition_matrix, py::arg("config"),
          py::arg("temperature_k"));
    m.def("gen_charge_trace", &synth::gen_charge_trace, py::arg("config"), py::arg("temperature_k"));
    m.def(
        "gen_spectroscopy_trace",
        [](const spectrum::ParityBands& b, double q, double pulse, const std::vector<double>& grid,
           double noise, std::uint64_t seed) {
            return synth::gen_spectroscopy_trace(b, q, pulse, grid, noise, seed);
        },
        py::arg("bands"), py::arg("q_e"), py::arg("pulse_len_s"), py::arg("freq_grid_ghz"),
        py::arg("noise_sigma") = 0.0, py::arg("seed") = 0);
    m.def(
        "gen_ramsey_trace",
        [](const spectrum::ParityBands& b, double q, double drive, double t2,
           const std::vector<double>& delays, double noise, std::uint64_t seed) {
            return synth::gen_ramsey_trace(b, q, drive, t2, delays, noise, seed);
        },
        py::arg("bands"), py::arg("q_e"), py::arg("drive_freq_ghz"), py::arg("t2_star_s"),
        py::arg("delays_s"), py::arg("noise_sigma") = 0.0, py::arg("seed") = 0);

    // ------------------------------------------------------------ classify --
    py::class_<classify::GaussianMixture>(m, "GaussianMixture")
        .def_readonly("dim", &classify::GaussianMixture::dim)
        .def_readonly("weights", &classify::GaussianMixture::weights)
        .def_readonly("means", &classify::GaussianMixture::means)
        .def_readonly("covs", &classify::GaussianMixture::covs)
        .def_readonly("log_likelihood", &classify::GaussianMixture::log_likelihood)
        .def_readonly("loglik_history", &classify::GaussianMixture::loglik_history)
        .def_readonly("converged", &classify::GaussianMixture::converged)
        .def("bic", &classify::GaussianMixture::bic)
        .def("to_json", &classify::GaussianMixture::to_json);

    py::enum_<classify::EmissionKind>(m, "EmissionKind")
        .value("categorical", classify::EmissionKind::categorical)
        .value("gaussian", classify::EmissionKind::gaussian);

    py::class_<classify::HiddenMarkov>(m, "HiddenMarkov")
        .def_readonly("kind", &classify::HiddenMarkov::kind)
        .def_readonly("n_states", &classify::HiddenMarkov::n_states)
        .def_readonly("initial", &classify::HiddenMarkov::initial)
        .def_readonly("transition", &classify::HiddenMarkov::transition)
        .def_readonly("emit_prob", &classify::HiddenMarkov::emit_prob)
        .def_readonly("emit_mean", &classify::HiddenMarkov::emit_mean)
        .def_readonly("emit_var", &classify::HiddenMarkov::emit_var)
        .def_readonly("log_likelihood", &classify::HiddenMarkov::log_likelihood)
        .def_readonly("converged", &classify::HiddenMarkov::converged)
        .def_readonly("iteration_cap_hit", &classify::HiddenMarkov::iteration_cap_hit)
        .def("to_json", &classify::HiddenMarkov::to_json);

    py::class_<classify::LabelPath>(m, "LabelPath")
        .def(py::init<>())
        .def_readwrite("times_s", &classify::LabelPath::times_s)
        .def_readwrite("states", &classify::LabelPath::states)
        .def_readonly("log_prob", &classify::LabelPath::log_prob);

    py::class_<classify::OrderScore>(m, "OrderScore")
        .def_readonly("order", &classify::OrderScore::order)
        .def_readonly("silhouette", &classify::OrderScore::silhouette)
        .def_readonly("train_test_distance", &classify::OrderScore::train_test_distance)
        .def_readonly("bic", &classify::OrderScore::bic)
        .def_readonly("bic_gradient", &classify::OrderScore::bic_gradient)
        .def_readonly("valid", &classify::OrderScore::valid);

    py::class_<classify::ModelSelectionReport>(m, "ModelSelectionReport")
        .def_readonly("scores", &classify::ModelSelectionReport::scores)
        .def_readonly("chosen", &classify::ModelSelectionReport::chosen)
        .def("to_json", &classify::ModelSelectionReport::to_json);

    py::class_<classify::TransitionMatrix>(m, "TransitionMatrix")
        .def_readonly("p", &classify::TransitionMatrix::p)
        .def_readonly("counts", &classify::TransitionMatrix::counts)
        .def_readonly("temperature_k", &classify::TransitionMatrix::temperature_k)
        .def_readonly("neighbor_mass", &classify::TransitionMatrix::neighbor_mass)
        .def_readonly("scramble_mass", &classify::TransitionMatrix::scramble_mass)
        .def_readonly("row_flagged", &classify::TransitionMatrix::row_flagged)
        .def("display", &classify::TransitionMatrix::display, py::arg("zero_diagonal") = true)
        .def("to_json", &classify::TransitionMatrix::to_json);

    py::class_<classify::DwellSummary>(m, "DwellSummary")
        .def_readonly("state", &classify::DwellSummary::state)
        .def_readonly("count", &classify::DwellSummary::count)
        .def_readonly("mean_s", &classify::DwellSummary::mean_s)
        .def_readonly("median_s", &classify::DwellSummary::median_s)
        .def_readonly("max_s", &classify::DwellSummary::max_s);

    py::class_<classify::DwellStats>(m, "DwellStats")
        .def_readonly("per_state", &classify::DwellStats::per_state)
        .def_readonly("pooled", &classify::DwellStats::pooled)
        .def("to_json", &classify::DwellStats::to_json);

    m.def(
        "gmm_fit",
        [](const Eigen::MatrixXd& obs, int k, int restarts, std::uint64_t seed) {
            classify::GmmFitOptions opts;
            opts.restarts = restarts;
            opts.seed = seed;
            return classify::gmm_fit(obs, k, opts);
        },
        py::arg("observations"), py::arg("k"), py::arg("restarts") = 3, py::arg("seed") = 0);
    m.def(
        "gmm_classify",
        [](const classify::GaussianMixture& g, const Eigen::MatrixXd& obs) {
            auto cls = classify::gmm_classify(g, obs);
            return py::make_tuple(cls.labels, cls.posteriors);
        },
        py::arg("model"), py::arg("observations"));
    m.def(
        "parity_band_reduce",
        [](const std::vector<int>& labels) { return classify::parity_band_reduce(labels); },
        py::arg("labels"));
    m.def(
        "hmm_train",
        [](const std::vector<double>& obs, int n_states, classify::EmissionKind kind,
           std::uint64_t seed, int restarts) {
            classify::HmmTrainOptions opts;
            opts.seed = seed;
            opts.restarts = restarts;
            if (kind == classify::EmissionKind::gaussian)
                return classify::hmm_train_gaussian(obs, n_states, opts);
            std::vector<int> symbols(obs.size());
            for (std::size_t i = 0; i < obs.size(); ++i) symbols[i] = static_cast<int>(obs[i]);
            return classify::hmm_train_categorical(symbols, n_states, opts);
        },
        py::arg("observations"), py::arg("n_states"), py::arg("kind"), py::arg("seed") = 0,
        py::arg("restarts") = 3);
    m.def(
        "hmm_viterbi",
        [](const classify::HiddenMarkov& h, const std::vector<double>& obs,
           const std::vector<double>& times) {
            if (h.kind == classify::EmissionKind::gaussian)
                return classify::hmm_viterbi(h, std::span<const double>(obs), times);
            std::vector<int> symbols(obs.size());
            for (std::size_t i = 0; i < obs.size(); ++i) symbols[i] = static_cast<int>(obs[i]);
            return classify::hmm_viterbi(h, std::span<const int>(symbols), times);
        },
        py::arg("model"), py::arg("observations"), py::arg("times_s") = std::vector<double>{});
    m.def("fuse_parity_paths", &classify::fuse_parity_paths, py::arg("even_band"),
          py::arg("odd_band"));
    m.def(
        "silhouette_1d",
        [](const std::vector<double>& values, const std::vector<int>& labels, int k) {
            return classify::silhouette_1d(values, labels, k);
        },
        py::arg("values"), py::arg("labels"), py::arg("k"));
    m.def(
        "select_model_order",
        [](const std::vector<double>& q, int max_order, int subsample, std::uint64_t seed) {
            classify::ModelSelectionOptions opts;
            opts.max_order = max_order;
            opts.subsample = subsample;
            return classify::select_model_order(q, opts, seed);
        },
        py::arg("q_values"), py::arg("max_order") = 19, py::arg("subsample") = 12000,
        py::arg("seed") = 0);
    m.def("transition_matrix", &classify::transition_matrix, py::arg("path"), py::arg("n_states"));
    m.def("dwell_times", &classify::dwell_times, py::arg("path"));

    // ------------------------------------------------------------ spectral --
    py::class_<spectral::PsdEstimate>(m, "PsdEstimate")
        .def_readonly("freq_hz", &spectral::PsdEstimate::freq_hz)
        .def_readonly("values", &spectral::PsdEstimate::values)
        .def_readonly("segments", &spectral::PsdEstimate::segments)
        .def_readonly("nperseg", &spectral::PsdEstimate::nperseg);

    py::class_<spectral::LorentzianFit>(m, "LorentzianFit")
        .def_readonly("amplitude", &spectral::LorentzianFit::amplitude)
        .def_readonly("knee_hz", &spectral::LorentzianFit::knee_hz)
        .def_readonly("floor_value", &spectral::LorentzianFit::floor_value)
        .def("dwell_paper_s", &spectral::LorentzianFit::dwell_paper_s)
        .def("dwell_rts_s", &spectral::LorentzianFit::dwell_rts_s)
        .def("dwell_angular_s", &spectral::LorentzianFit::dwell_angular_s)
        .def("eval", &spectral::LorentzianFit::eval)
        .def("to_json", &spectral::LorentzianFit::to_json);

    py::class_<spectral::PowerLawFit>(m, "PowerLawFit")
        .def_readonly("alpha", &spectral::PowerLawFit::alpha)
        .def_readonly("amp_1hz", &spectral::PowerLawFit::amp_1hz)
        .def_readonly("bins_used", &spectral::PowerLawFit::bins_used)
        .def_readonly("bins_excluded", &spectral::PowerLawFit::bins_excluded)
        .def("to_json", &spectral::PowerLawFit::to_json);

    m.def(
        "psd",
        [](const std::vector<double>& series, double dt, int nperseg, double overlap) {
            spectral::SegmentConfig cfg;
            cfg.nperseg = nperseg;
            cfg.overlap = overlap;
            return spectral::psd(series, dt, cfg);
        },
        py::arg("series"), py::arg("sample_interval_s"), py::arg("nperseg") = 0,
        py::arg("overlap") = 0.5);
    m.def("fit_lorentzian",
          [](const spectral::PsdEstimate& est) { return spectral::fit_lorentzian(est); },
          py::arg("psd"));
    m.def("fit_power_law", &spectral::fit_power_law, py::arg("psd"), py::arg("f_lo_hz"),
          py::arg("f_hi_hz"));
    m.def("gen_power_law_noise", &spectral::gen_power_law_noise, py::arg("alpha"),
          py::arg("amp_1hz"), py::arg("n"), py::arg("sample_interval_s"), py::arg("seed"));

    // -------------------------------------------------------------- fields --
    py::class_<fields::DeviceScaleConfig>(m, "DeviceScaleConfig")
        .def(py::init<>())
        .def_readwrite("n", &fields::DeviceScaleConfig::n)
        .def_readwrite("spacing_m", &fields::DeviceScaleConfig::spacing_m)
        .def_readwrite("scale", &fields::DeviceScaleConfig::scale);

    py::class_<fields::GridGeometry>(m, "GridGeometry")
        .def_readonly("nx", &fields::GridGeometry::nx)
        .def_readonly("ny", &fields::GridGeometry::ny)
        .def_readonly("nz", &fields::GridGeometry::nz)
        .def_readonly("substrate_top_k", &fields::GridGeometry::substrate_top_k)
        .def("to_json", &fields::GridGeometry::to_json);

    py::class_<fields::PaperGeometries>(m, "PaperGeometries")
        .def_readonly("differential", &fields::PaperGeometries::differential)
        .def_readonly("island", &fields::PaperGeometries::island);

    py::class_<fields::InducedChargeMap>(m, "InducedChargeMap")
        .def_readonly("nx", &fields::InducedChargeMap::nx)
        .def_readonly("ny", &fields::InducedChargeMap::ny)
        .def_readonly("nz", &fields::InducedChargeMap::nz)
        .def_readonly("value", &fields::InducedChargeMap::value)
        .def_readonly("spacing_m", &fields::InducedChargeMap::spacing_m);

    py::class_<fields::SensitiveVolume>(m, "SensitiveVolume")
        .def_readonly("volume_m3", &fields::SensitiveVolume::volume_m3)
        .def_readonly("slice_area_m2", &fields::SensitiveVolume::slice_area_m2);

    m.def("build_paper_geometries", &fields::build_paper_geometries,
          py::arg("config") = fields::DeviceScaleConfig{});
    m.def(
        "induced_charge_map",
        [](const fields::GridGeometry& g, const std::map<std::string, double>& combo) {
            return fields::induced_charge_map(g, combo);
        },
        py::arg("geometry"), py::arg("combination"));
    m.def("sensitive_volume", &fields::sensitive_volume, py::arg("map"), py::arg("threshold"));

    // ------------------------------------------------------------ pipeline --
    py::class_<pipeline::ParityJobConfig>(m, "ParityJobConfig")
        .def(py::init<>())
        .def_readwrite("process", &pipeline::ParityJobConfig::process)
        .def_readwrite("misassignment", &pipeline::ParityJobConfig::misassignment)
        .def_readwrite("seed", &pipeline::ParityJobConfig::seed);

    py::class_<pipeline::ParityJobResult>(m, "ParityJobResult")
        .def_readonly("true_flips", &pipeline::ParityJobResult::true_flips)
        .def_readonly("decoded_flips", &pipeline::ParityJobResult::decoded_flips)
        .def_readonly("spurious_flips", &pipeline::ParityJobResult::spurious_flips)
        .def_readonly("planted_dwell_s", &pipeline::ParityJobResult::planted_dwell_s)
        .def_readonly("recovered_dwell_s", &pipeline::ParityJobResult::recovered_dwell_s)
        .def_readonly("gmm_accuracy", &pipeline::ParityJobResult::gmm_accuracy)
        .def("summary_json", &pipeline::ParityJobResult::summary_json);

    m.def("run_parity_pipeline", &pipeline::run_parity_pipeline, py::arg("config"));
}
