#pragma once

#include <Eigen/Core>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace qnoise::spectrum {

/// Transmon energies in frequency units (GHz). The device of interest sits
/// deep in the transmon regime (e_j / e_c ~ 30).
struct TransmonParams {
    double e_j = 0.0;  // Josephson energy / h, GHz
    double e_c = 0.0;  // charging energy / h, GHz

    bool in_transmon_regime() const { return e_j / e_c >= 10.0; }
};

/// Throws std::invalid_argument on non-finite or non-positive energies.
/// e_j = 0 is allowed (charging-only limit used by test oracles).
void validate(const TransmonParams& p);

/// Fold an offset charge (single-electron units) into [0, 0.5]. The spectrum
/// is 1e-periodic and even, so this range carries all observable information.
double fold_offset_e(double q_e);

/// Symmetric tridiagonal charge-basis Hamiltonian. Charge states run
/// n = -n_cut ... +n_cut; diagonal(i) = 4 e_c (n - n_g)^2, off-diagonal -e_j/2.
struct ChargeBasisHamiltonian {
    Eigen::VectorXd diagonal;      // length 2 n_cut + 1, GHz
    Eigen::VectorXd off_diagonal;  // length 2 n_cut, GHz
    int n_cut = 0;

    int dimension() const { return static_cast<int>(diagonal.size()); }
};

ChargeBasisHamiltonian build_hamiltonian(const TransmonParams& p, double n_g, int n_cut);

/// Lowest `count` eigenvalues, ascending (GHz). Throws on solver failure.
std::vector<double> eigenvalues(const ChargeBasisHamiltonian& h, int count);

struct SpectrumTable {
    std::vector<double> n_g_grid;              // gate charge, 2e units
    std::vector<std::vector<double>> levels;   // [grid point][level], GHz, ascending
    int n_cut = 0;                             // truncation actually used
    int max_level = 0;

    /// Transition frequency E_j - E_i at grid index g.
    double transition(std::size_t g, int i, int j) const {
        return levels[g][static_cast<std::size_t>(j)] - levels[g][static_cast<std::size_t>(i)];
    }
    std::string to_json() const;
    static SpectrumTable from_json(const std::string& text);
};

struct ScanOptions {
    int n_cut = 15;
    double convergence_tol_ghz = 1e-6;  // 1 kHz: +5 truncation check
    int max_n_cut = 60;
};

/// Diagonalize over a gate-charge grid. The truncation is verified by
/// re-solving at n_cut + 5 and grown until every retained level moves by
/// less than the tolerance; the table records the converged n_cut.
SpectrumTable spectrum_scan(const TransmonParams& p, std::span<const double> n_g_grid,
                            int max_level, const ScanOptions& opts = {});

/// Parity-band description of one transition: the even/odd quasiparticle
/// branches sit at f_bar +/- eps cos(2 pi n_g). eps is reported >= 0 (which
/// parity is "+" is unobservable without charge control).
struct ParityBands {
    int i = 0;
    int j = 1;
    double f_bar = 0.0;                // GHz, (f(0) + f(0.5)) / 2
    double eps = 0.0;                  // GHz, |f(0) - f(0.5)| / 2
    double cosine_residual_rms = 0.0;  // GHz, cosine-model misfit over the grid

    std::string to_json() const;
    static ParityBands from_json(const std::string& text);
};

/// Requires the table to contain n_g = 0 and n_g = 0.5.
ParityBands parity_bands(const SpectrumTable& table, int i, int j);

/// Forward map: band splitting f+ - f- at offset charge q (electron units),
/// equal to 2 eps cos(pi q).
double band_splitting(const ParityBands& bands, double q_e);

struct OffsetInversion {
    double q_e = 0.0;  // folded into [0, 0.5]
    bool clamped = false;  // |delta_f| exceeded 2 eps and the ratio was clamped
};

/// Invert a measured band splitting to an offset charge:
/// q = fold(arccos(clamp(delta_f / (2 eps), -1, 1)) / pi).
OffsetInversion offset_from_splitting(double delta_f_ghz, const ParityBands& bands);

struct OffsetCorrelation {
    std::vector<std::pair<double, double>> pairs;  // (q_a, q_b) matched in time
    double pearson = 0.0;
    std::size_t clamp_count = 0;  // unused here; kept for symmetric reporting
};

/// Nearest-neighbor timestamp matching of two offset-charge series within
/// `window_s`, plus the Pearson correlation of the matched pairs.
OffsetCorrelation correlate_offsets(std::span<const double> t_a, std::span<const double> q_a,
                                    std::span<const double> t_b, std::span<const double> q_b,
                                    double window_s);

}  // namespace qnoise::spectrum
