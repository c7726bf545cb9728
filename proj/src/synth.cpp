#include "qnoise/synth.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "qnoise/io.hpp"

namespace qnoise::synth {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Parity telegraph
// ---------------------------------------------------------------------------

int ParityPath::parity_at(double t_s) const {
    // flips strictly increase; count how many happened before t
    const auto it = std::upper_bound(flip_times_s.begin(), flip_times_s.end(), t_s);
    const auto n = static_cast<std::size_t>(it - flip_times_s.begin());
    return (n % 2 == 0) ? initial_parity : -initial_parity;
}

ParityPath gen_parity_path(const ParityProcessConfig& cfg) {
    if (!(cfg.dwell_time_s > 0.0) || !(cfg.duration_s > 0.0))
        throw std::invalid_argument("gen_parity_path: dwell time and duration must be positive");

    std::mt19937_64 rng(cfg.seed);
    std::exponential_distribution<double> dwell(1.0 / cfg.dwell_time_s);

    ParityPath path;
    path.duration_s = cfg.duration_s;
    path.initial_parity = (rng() & 1) ? +1 : -1;
    double t = dwell(rng);
    while (t < cfg.duration_s) {
        path.flip_times_s.push_back(t);
        t += dwell(rng);
    }
    return path;
}

// ---------------------------------------------------------------------------
// IQ cluster model and shots
// ---------------------------------------------------------------------------

void IqClusterModel::validate() const {
    for (int s = 0; s < 4; ++s) {
        Eigen::LLT<Eigen::Matrix2d> llt(cov[static_cast<std::size_t>(s)]);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("IqClusterModel: covariance not positive definite");
    }
    for (int r = 0; r < 4; ++r) {
        double sum = 0.0;
        for (int c = 0; c < 4; ++c) {
            if (error(r, c) < 0.0) throw std::invalid_argument("IqClusterModel: negative error entry");
            sum += error(r, c);
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("IqClusterModel: error matrix row not stochastic");
    }
}

IqClusterModel IqClusterModel::paper_like(double misassignment, double relax_2_to_1) {
    if (!(misassignment >= 0.0 && misassignment < 0.5))
        throw std::invalid_argument("misassignment out of range");
    IqClusterModel m;
    // Blobs at four phases of the readout tone. Pairwise misassignment of two
    // isotropic Gaussians at distance d is Phi(-d / 2 sigma); solve for sigma
    // against the 0 <-> {1,2} distance.
    m.mean[0] = {1.0, 0.0};
    m.mean[1] = {0.0, 1.0};
    m.mean[2] = {-1.0, 0.0};
    m.mean[3] = {0.0, -1.0};
    const double d = std::numbers::sqrt2;  // closest pair distance
    double sigma = 0.25;
    if (misassignment > 0.0) {
        // invert Phi(-d / 2 sigma) = p via Newton on the standard normal cdf
        double z = 2.0;
        for (int it = 0; it < 60; ++it) {
            const double cdf = 0.5 * std::erfc(z / std::numbers::sqrt2);
            const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
            z -= (cdf - misassignment) / (-pdf);
        }
        sigma = d / (2.0 * z);
    } else {
        sigma = 1e-4;
    }
    for (auto& c : m.cov) c = Eigen::Matrix2d::Identity() * sigma * sigma;

    m.error = Eigen::Matrix4d::Identity();
    m.error(2, 2) = 1.0 - relax_2_to_1;
    m.error(2, 1) = relax_2_to_1;
    m.validate();
    return m;
}

std::vector<ShotRecord> gen_parity_shots(const ParityPath& path, const IqClusterModel& model,
                                         const ParityProcessConfig& cfg) {
    model.validate();
    if (!(cfg.duty_cycle_s > 0.0)) throw std::invalid_argument("duty cycle must be positive");
    if (path.duration_s + 1e-12 < cfg.duration_s)
        throw std::invalid_argument("parity path does not cover the run duration");

    std::mt19937_64 rng(cfg.seed ^ 0x5afe5eedULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::array<Eigen::Matrix2d, 4> chol;
    for (int s = 0; s < 4; ++s)
        chol[static_cast<std::size_t>(s)] =
            Eigen::LLT<Eigen::Matrix2d>(model.cov[static_cast<std::size_t>(s)]).matrixL();

    const std::size_t n_pairs = static_cast<std::size_t>(cfg.duration_s / cfg.duty_cycle_s);
    std::vector<ShotRecord> shots;
    shots.reserve(2 * n_pairs);
    for (std::size_t k = 0; k < n_pairs; ++k) {
        for (int half = 0; half < 2; ++half) {
            ShotRecord shot;
            shot.t_s = (static_cast<double>(k) + 0.5 * half) * cfg.duty_cycle_s;
            shot.target_band = half == 0 ? Band::even : Band::odd;
            const int parity = path.parity_at(shot.t_s);
            const bool match = (shot.target_band == Band::even) == (parity > 0);
            const int prepared = match ? 2 : 0;

            // emitted cluster via the misassignment row
            double u = unit(rng);
            int emitted = 3;
            for (int c = 0; c < 4; ++c) {
                u -= model.error(prepared, c);
                if (u <= 0.0) {
                    emitted = c;
                    break;
                }
            }
            shot.truth_state = emitted;
            const Eigen::Vector2d z{gauss(rng), gauss(rng)};
            const Eigen::Vector2d iq =
                model.mean[static_cast<std::size_t>(emitted)] +
                chol[static_cast<std::size_t>(emitted)] * z;
            shot.i_volt = iq[0];
            shot.q_volt = iq[1];
            shots.push_back(shot);
        }
    }
    return shots;
}

// ---------------------------------------------------------------------------
// Charge environment
// ---------------------------------------------------------------------------

ChargeEnvConfig ChargeEnvConfig::paper_like() {
    ChargeEnvConfig cfg;
    // Non-uniform configuration offsets in [0, 0.5], kept away from the fold
    // boundaries so the additive readout noise never reflects.
    cfg.offsets_e = {0.05, 0.09, 0.16, 0.24, 0.29, 0.35, 0.41, 0.46};
    return cfg;
}

Eigen::MatrixXd charge_transition_matrix(const ChargeEnvConfig& cfg, double temperature_k) {
    const int n = static_cast<int>(cfg.offsets_e.size());
    if (n < 2) throw std::invalid_argument("need at least two charge configurations");
    if (!(cfg.sample_interval_s > 0.0)) throw std::invalid_argument("bad sample interval");
    if (!(temperature_k > 0.0)) throw std::invalid_argument("bad temperature");

    const double neighbor_rate =
        cfg.neighbor_base_rate_hz * std::pow(temperature_k / cfg.t_ref_k, cfg.temperature_exponent);
    const double leave = (neighbor_rate + cfg.scramble_rate_hz) * cfg.sample_interval_s;
    if (leave >= 0.5)
        throw std::invalid_argument(
            "charge_transition_matrix: per-step leave probability too large; shrink the sample "
            "interval");

    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        // neighbor destinations: |d| = 1 weight 1, |d| = 2 weight next_neighbor_weight
        double wsum = 0.0;
        for (int j = 0; j < n; ++j) {
            const int d = std::abs(j - i);
            if (j == i || d > 2) continue;
            wsum += d == 1 ? 1.0 : cfg.next_neighbor_weight;
        }
        for (int j = 0; j < n; ++j) {
            const int d = std::abs(j - i);
            if (j == i || d > 2) continue;
            const double w = d == 1 ? 1.0 : cfg.next_neighbor_weight;
            p(i, j) += neighbor_rate * cfg.sample_interval_s * w / wsum;
        }
        // scramble: uniform over |d| > 2
        int far = 0;
        for (int j = 0; j < n; ++j)
            if (std::abs(j - i) > 2) ++far;
        if (far == 0)
            throw std::invalid_argument(
                "charge_transition_matrix: every state needs at least one scramble destination");
        for (int j = 0; j < n; ++j)
            if (std::abs(j - i) > 2)
                p(i, j) += cfg.scramble_rate_hz * cfg.sample_interval_s / far;
        p(i, i) = 1.0 - p.row(i).sum();
    }

    for (int i = 0; i < n; ++i) {
        if (p.row(i).minCoeff() < 0.0 || std::abs(p.row(i).sum() - 1.0) > 1e-12)
            throw std::runtime_error("charge_transition_matrix: row not stochastic");
    }
    return p;
}

ChargeTrace gen_charge_trace(const ChargeEnvConfig& cfg, double temperature_k) {
    bool known = false;
    for (double t : cfg.temperatures_k) known |= std::abs(t - temperature_k) < 1e-12;
    if (!known) throw std::invalid_argument("gen_charge_trace: temperature not in config");
    for (double q : cfg.offsets_e)
        if (!(q >= 0.0 && q <= 0.5))
            throw std::invalid_argument("gen_charge_trace: offsets must be folded into [0, 0.5]");

    const Eigen::MatrixXd p = charge_transition_matrix(cfg, temperature_k);
    const int n = static_cast<int>(cfg.offsets_e.size());
    const auto steps = static_cast<std::size_t>(cfg.duration_s / cfg.sample_interval_s);

    std::mt19937_64 rng(io::derive_seed(cfg.seed, "charge-trace/" + io::format_double(temperature_k)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // clip additive noise to keep every emitted sample nearest its own
    // configuration (the ground-truth consistency invariant)
    double min_gap = 1.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            min_gap = std::min(min_gap, std::abs(cfg.offsets_e[static_cast<std::size_t>(i)] -
                                                 cfg.offsets_e[static_cast<std::size_t>(j)]));
    const double clip = 0.45 * min_gap;

    ChargeTrace trace;
    trace.temperature_k = temperature_k;
    trace.t_s.reserve(steps);
    trace.q_e.reserve(steps);
    trace.truth.reserve(steps);

    int state = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    for (std::size_t k = 0; k < steps; ++k) {
        trace.t_s.push_back(static_cast<double>(k) * cfg.sample_interval_s);
        trace.truth.push_back(state);
        const double noise = std::clamp(gauss(rng) * cfg.noise_sigma_e, -clip, clip);
        trace.q_e.push_back(
            spectrum::fold_offset_e(cfg.offsets_e[static_cast<std::size_t>(state)] + noise));

        double u = unit(rng);
        int next = n - 1;
        for (int j = 0; j < n; ++j) {
            u -= p(state, j);
            if (u <= 0.0) {
                next = j;
                break;
            }
        }
        state = next;
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Spectroscopy / Ramsey
// ---------------------------------------------------------------------------

std::vector<double> gen_spectroscopy_trace(const spectrum::ParityBands& bands, double q_e,
                                           double pulse_len_s,
                                           std::span<const double> freq_grid_ghz,
                                           double noise_sigma, std::uint64_t seed) {
    if (!(pulse_len_s > 0.0)) throw std::invalid_argument("pulse length must be positive");

    // FWHM = 1/(pi * pulse_len) in Hz -> GHz
    const double fwhm_ghz = 1.0 / (std::numbers::pi * pulse_len_s) * 1e-9;
    const double hwhm = 0.5 * fwhm_ghz;
    const double half_split = bands.eps * std::cos(std::numbers::pi * q_e);
    const double f_plus = bands.f_bar + half_split;
    const double f_minus = bands.f_bar - half_split;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> out;
    out.reserve(freq_grid_ghz.size());
    for (double f : freq_grid_ghz) {
        auto line = [&](double f0) {
            const double x = (f - f0) / hwhm;
            return 1.0 / (1.0 + x * x);
        };
        out.push_back(line(f_plus) + line(f_minus) + noise_sigma * gauss(rng));
    }
    return out;
}

std::vector<double> gen_ramsey_trace(const spectrum::ParityBands& bands, double q_e,
                                     double drive_freq_ghz, double t2_star_s,
                                     std::span<const double> delays_s, double noise_sigma,
                                     std::uint64_t seed) {
    if (!(t2_star_s > 0.0)) throw std::invalid_argument("t2_star must be positive");

    const double half_split = bands.eps * std::cos(std::numbers::pi * q_e);
    const double df_plus_hz = (bands.f_bar + half_split - drive_freq_ghz) * 1e9;
    const double df_minus_hz = (bands.f_bar - half_split - drive_freq_ghz) * 1e9;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> out;
    out.reserve(delays_s.size());
    for (double t : delays_s) {
        const double beat = 0.5 * (std::cos(2.0 * std::numbers::pi * df_plus_hz * t) +
                                   std::cos(2.0 * std::numbers::pi * df_minus_hz * t));
        out.push_back(beat * std::exp(-t / t2_star_s) + noise_sigma * gauss(rng));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Active reset
// ---------------------------------------------------------------------------

ResetPulse reset_decision(const ShotRecord& shot, const QuadrantBoundaries& b) {
    const bool on_i = shot.i_volt == b.i_split;
    const bool on_q = shot.q_volt == b.q_split;
    int state;
    if (!on_i && !on_q) {
        state = b.state[shot.i_volt >= b.i_split ? 1 : 0][shot.q_volt >= b.q_split ? 1 : 0];
    } else {
        // boundary tie-break: lowest state index among the adjacent regions
        state = 4;
        for (int ih = 0; ih < 2; ++ih)
            for (int qh = 0; qh < 2; ++qh) {
                const bool i_ok = on_i || (shot.i_volt >= b.i_split) == (ih == 1);
                const bool q_ok = on_q || (shot.q_volt >= b.q_split) == (qh == 1);
                if (i_ok && q_ok) state = std::min(state, b.state[static_cast<std::size_t>(ih)][static_cast<std::size_t>(qh)]);
            }
    }
    switch (state) {
        case 0: return ResetPulse::none;
        case 1: return ResetPulse::pi01;
        default: return ResetPulse::pi12_pi01;
    }
}

// ---------------------------------------------------------------------------
// JSON round trips
// ---------------------------------------------------------------------------

std::string ParityProcessConfig::to_json() const {
    json doc;
    doc["dwell_time_s"] = dwell_time_s;
    doc["duty_cycle_s"] = duty_cycle_s;
    doc["duration_s"] = duration_s;
    doc["seed"] = seed;
    return doc.dump(2);
}

ParityProcessConfig ParityProcessConfig::from_json(const std::string& text) {
    json doc = json::parse(text);
    ParityProcessConfig cfg;
    cfg.dwell_time_s = doc.value("dwell_time_s", cfg.dwell_time_s);
    cfg.duty_cycle_s = doc.value("duty_cycle_s", cfg.duty_cycle_s);
    cfg.duration_s = doc.value("duration_s", cfg.duration_s);
    cfg.seed = doc.value("seed", cfg.seed);
    return cfg;
}

std::string ChargeEnvConfig::to_json() const {
    json doc;
    doc["offsets_e"] = offsets_e;
    doc["neighbor_base_rate_hz"] = neighbor_base_rate_hz;
    doc["t_ref_k"] = t_ref_k;
    doc["temperature_exponent"] = temperature_exponent;
    doc["scramble_rate_hz"] = scramble_rate_hz;
    doc["next_neighbor_weight"] = next_neighbor_weight;
    doc["temperatures_k"] = temperatures_k;
    doc["sample_interval_s"] = sample_interval_s;
    doc["duration_s"] = duration_s;
    doc["noise_sigma_e"] = noise_sigma_e;
    doc["seed"] = seed;
    return doc.dump(2);
}

ChargeEnvConfig ChargeEnvConfig::from_json(const std::string& text) {
    json doc = json::parse(text);
    ChargeEnvConfig cfg = ChargeEnvConfig::paper_like();
    cfg.offsets_e = doc.value("offsets_e", cfg.offsets_e);
    cfg.neighbor_base_rate_hz = doc.value("neighbor_base_rate_hz", cfg.neighbor_base_rate_hz);
    cfg.t_ref_k = doc.value("t_ref_k", cfg.t_ref_k);
    cfg.temperature_exponent = doc.value("temperature_exponent", cfg.temperature_exponent);
    cfg.scramble_rate_hz = doc.value("scramble_rate_hz", cfg.scramble_rate_hz);
    cfg.next_neighbor_weight = doc.value("next_neighbor_weight", cfg.next_neighbor_weight);
    cfg.temperatures_k = doc.value("temperatures_k", cfg.temperatures_k);
    cfg.sample_interval_s = doc.value("sample_interval_s", cfg.sample_interval_s);
    cfg.duration_s = doc.value("duration_s", cfg.duration_s);
    cfg.noise_sigma_e = doc.value("noise_sigma_e", cfg.noise_sigma_e);
    cfg.seed = doc.value("seed", cfg.seed);
    return cfg;
}

}  // namespace qnoise::synth
