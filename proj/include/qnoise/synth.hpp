#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qnoise/spectrum.hpp"

namespace qnoise::synth {

// ---------------------------------------------------------------------------
// Charge-parity telegraph process and single-shot readout
// ---------------------------------------------------------------------------

struct ParityProcessConfig {
    double dwell_time_s = 5.9e-3;   // mean time between parity flips
    double duty_cycle_s = 50e-6;    // one interleaved even/odd probe pair
    double duration_s = 60.0;
    std::uint64_t seed = 0;

    std::string to_json() const;
    static ParityProcessConfig from_json(const std::string& text);
};

/// Alternating-parity telegraph path. Parity is +1 (even) or -1 (odd);
/// flip times are exponential inter-arrivals with mean dwell_time.
struct ParityPath {
    std::vector<double> flip_times_s;  // strictly increasing, within [0, duration)
    int initial_parity = +1;
    double duration_s = 0.0;

    int parity_at(double t_s) const;
    std::size_t flips() const { return flip_times_s.size(); }
};

ParityPath gen_parity_path(const ParityProcessConfig& cfg);

enum class Band : int { even = 0, odd = 1 };

struct ShotRecord {
    double t_s = 0.0;
    double i_volt = 0.0;
    double q_volt = 0.0;
    Band target_band = Band::even;
    int truth_state = 0;  // qudit state the IQ point was drawn from
};

/// Readout model: per qudit state an IQ cluster, plus a row-stochastic
/// misassignment matrix folding in-readout relaxation (notably 2 -> 1) into
/// the emitted cluster choice.
struct IqClusterModel {
    std::array<Eigen::Vector2d, 4> mean;
    std::array<Eigen::Matrix2d, 4> cov;
    Eigen::Matrix4d error = Eigen::Matrix4d::Identity();  // P(read s' | prepared s)

    void validate() const;  // PD covariances, row-stochastic error matrix

    /// Cluster layout resembling the four readout blobs, tuned so that the
    /// 0 vs {1,2} misassignment probability is roughly `misassignment` and
    /// state 2 relaxes to 1 during readout with probability `relax_2_to_1`.
    static IqClusterModel paper_like(double misassignment = 0.015, double relax_2_to_1 = 0.10);
};

/// Interleaved parity probing: each duty cycle holds one even-band and one
/// odd-band probe, half a cycle apart. A probe whose band matches the current
/// parity excites the qudit (prepared state 2), otherwise it stays in the
/// ground state; the emitted IQ point is drawn from the cluster selected by
/// the error matrix.
std::vector<ShotRecord> gen_parity_shots(const ParityPath& path, const IqClusterModel& model,
                                         const ParityProcessConfig& cfg);

// ---------------------------------------------------------------------------
// Quasi-stable charge configurations
// ---------------------------------------------------------------------------

struct ChargeEnvConfig {
    std::vector<double> offsets_e;      // quasi-stable configuration offsets, folded units
    double neighbor_base_rate_hz = 5.84e-4;  // total neighbor-hop rate at t_ref
    double t_ref_k = 0.010;
    double temperature_exponent = 1.0;  // neighbor rate scales as (T / t_ref)^exponent
    double scramble_rate_hz = 1.74e-4;  // temperature independent
    double next_neighbor_weight = 0.5;  // relative weight of |d|=2 vs |d|=1 hops
    std::vector<double> temperatures_k{0.010, 0.050, 0.100, 0.150};
    double sample_interval_s = 4.0;
    double duration_s = 252000.0;       // ~70 h
    double noise_sigma_e = 0.006;
    std::uint64_t seed = 0;

    std::string to_json() const;
    static ChargeEnvConfig from_json(const std::string& text);

    /// Defaults above: 22-minute mean dwell at 10 mK split between
    /// temperature-scaled neighbor hops and a constant scramble rate.
    static ChargeEnvConfig paper_like();
};

/// Discrete-time transition matrix over configuration indices at the given
/// temperature. Every state leaves at rate neighbor(T) + scramble, so dwell
/// statistics are homogeneous; neighbor mass grows with temperature while
/// scramble mass stays constant.
Eigen::MatrixXd charge_transition_matrix(const ChargeEnvConfig& cfg, double temperature_k);

struct ChargeTrace {
    std::vector<double> t_s;
    std::vector<double> q_e;     // folded into [0, 0.5]
    std::vector<int> truth;      // configuration index per sample
    double temperature_k = 0.0;
};

ChargeTrace gen_charge_trace(const ChargeEnvConfig& cfg, double temperature_k);

// ---------------------------------------------------------------------------
// Spectroscopy / Ramsey traces
// ---------------------------------------------------------------------------

/// Two unit-height Lorentzian lines at the parity-band frequencies for offset
/// q, FWHM = 1/(pi * pulse_len), plus additive Gaussian noise. Frequencies in
/// GHz; a 40 us pulse gives a ~8 kHz linewidth.
std::vector<double> gen_spectroscopy_trace(const spectrum::ParityBands& bands, double q_e,
                                           double pulse_len_s,
                                           std::span<const double> freq_grid_ghz,
                                           double noise_sigma, std::uint64_t seed);

/// Ramsey beat: 0.5 [cos(2 pi df+ t) + cos(2 pi df- t)] exp(-t / t2_star),
/// where df+- are the two parity-band detunings from the drive (Hz).
std::vector<double> gen_ramsey_trace(const spectrum::ParityBands& bands, double q_e,
                                     double drive_freq_ghz, double t2_star_s,
                                     std::span<const double> delays_s, double noise_sigma,
                                     std::uint64_t seed);

// ---------------------------------------------------------------------------
// Active reset decisions
// ---------------------------------------------------------------------------

enum class ResetPulse { none, pi01, pi12_pi01 };

/// FPGA-style quadrant boundaries: two thresholds split the IQ plane into
/// four regions, each tagged with the qudit state read there.
struct QuadrantBoundaries {
    double i_split = 0.0;
    double q_split = 0.0;
    // state label per (i >= i_split, q >= q_split) quadrant, indexed
    // [i_high][q_high]
    std::array<std::array<int, 2>, 2> state{{{0, 1}, {2, 3}}};
};

/// Ground region: no pulse. State-1 region: pi01. State-2/3 regions: the
/// conditional ladder pi12 then pi01. A shot exactly on a boundary resolves
/// toward the adjacent region with the lowest state index.
ResetPulse reset_decision(const ShotRecord& shot, const QuadrantBoundaries& boundaries);

}  // namespace qnoise::synth
