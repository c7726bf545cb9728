#include "qnoise/spectrum.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace qnoise::spectrum {

using json = nlohmann::json;

void validate(const TransmonParams& p) {
    if (!std::isfinite(p.e_j) || !std::isfinite(p.e_c))
        throw std::invalid_argument("transmon params must be finite");
    if (p.e_j < 0.0 || p.e_c <= 0.0)
        throw std::invalid_argument("require e_j >= 0 and e_c > 0");
}

double fold_offset_e(double q_e) {
    double r = std::fmod(q_e, 1.0);
    if (r < 0.0) r += 1.0;
    return r <= 0.5 ? r : 1.0 - r;
}

ChargeBasisHamiltonian build_hamiltonian(const TransmonParams& p, double n_g, int n_cut) {
    validate(p);
    if (!std::isfinite(n_g)) throw std::invalid_argument("n_g must be finite");
    if (n_cut < 5) throw std::invalid_argument("n_cut must be at least 5");

    const int dim = 2 * n_cut + 1;
    ChargeBasisHamiltonian h;
    h.n_cut = n_cut;
    h.diagonal.resize(dim);
    h.off_diagonal = Eigen::VectorXd::Constant(dim - 1, -0.5 * p.e_j);
    for (int i = 0; i < dim; ++i) {
        const double n = static_cast<double>(i - n_cut);
        h.diagonal[i] = 4.0 * p.e_c * (n - n_g) * (n - n_g);
    }
    return h;
}

std::vector<double> eigenvalues(const ChargeBasisHamiltonian& h, int count) {
    const int dim = h.dimension();
    if (count < 1 || count > dim)
        throw std::invalid_argument("eigenvalue count out of range");
    if (h.off_diagonal.size() != dim - 1)
        throw std::invalid_argument("off-diagonal length mismatch");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(h.diagonal, h.off_diagonal, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("tridiagonal eigensolver did not converge");

    std::vector<double> out(solver.eigenvalues().data(), solver.eigenvalues().data() + count);
    return out;  // Eigen returns ascending order
}

SpectrumTable spectrum_scan(const TransmonParams& p, std::span<const double> n_g_grid,
                            int max_level, const ScanOptions& opts) {
    validate(p);
    if (n_g_grid.empty()) throw std::invalid_argument("empty gate-charge grid");
    for (double g : n_g_grid)
        if (!(g >= 0.0 && g <= 1.0)) throw std::invalid_argument("grid values must lie in [0, 1]");
    if (max_level < 0) throw std::invalid_argument("max_level must be >= 0");

    const int count = max_level + 1;
    auto solve_grid = [&](int n_cut) {
        if (max_level + 3 > 2 * n_cut + 1)
            throw std::invalid_argument("n_cut too small for requested max_level");
        std::vector<std::vector<double>> lv;
        lv.reserve(n_g_grid.size());
        for (std::size_t g = 0; g < n_g_grid.size(); ++g) {
            try {
                lv.push_back(eigenvalues(build_hamiltonian(p, n_g_grid[g], n_cut), count));
            } catch (const std::exception& e) {
                throw std::runtime_error("eigensolve failed at n_g = " +
                                         std::to_string(n_g_grid[g]) + ": " + e.what());
            }
        }
        return lv;
    };

    int n_cut = std::max(opts.n_cut, (max_level + 3) / 2 + 1);
    auto lv = solve_grid(n_cut);
    for (;;) {
        auto check = solve_grid(n_cut + 5);
        double worst = 0.0;
        for (std::size_t g = 0; g < lv.size(); ++g)
            for (int l = 0; l < count; ++l)
                worst = std::max(worst, std::abs(lv[g][static_cast<std::size_t>(l)] -
                                                 check[g][static_cast<std::size_t>(l)]));
        if (worst < opts.convergence_tol_ghz) break;
        n_cut += 5;
        lv = std::move(check);
        if (n_cut > opts.max_n_cut)
            throw std::runtime_error("spectrum_scan: truncation did not converge by n_cut = " +
                                     std::to_string(n_cut));
    }

    SpectrumTable table;
    table.n_g_grid.assign(n_g_grid.begin(), n_g_grid.end());
    table.levels = std::move(lv);
    table.n_cut = n_cut;
    table.max_level = max_level;
    return table;
}

namespace {

int grid_index_of(const SpectrumTable& table, double n_g) {
    for (std::size_t g = 0; g < table.n_g_grid.size(); ++g)
        if (std::abs(table.n_g_grid[g] - n_g) < 1e-12) return static_cast<int>(g);
    return -1;
}

}  // namespace

ParityBands parity_bands(const SpectrumTable& table, int i, int j) {
    if (i < 0 || i >= j) throw std::invalid_argument("require 0 <= i < j");
    if (j > table.max_level) throw std::invalid_argument("level j beyond table");
    const int g0 = grid_index_of(table, 0.0);
    const int g5 = grid_index_of(table, 0.5);
    if (g0 < 0 || g5 < 0)
        throw std::invalid_argument("parity_bands needs n_g = 0 and 0.5 in the table");

    const double f0 = table.transition(static_cast<std::size_t>(g0), i, j);
    const double f5 = table.transition(static_cast<std::size_t>(g5), i, j);

    ParityBands bands;
    bands.i = i;
    bands.j = j;
    bands.f_bar = 0.5 * (f0 + f5);
    const double eps_signed = 0.5 * (f0 - f5);
    bands.eps = std::abs(eps_signed);

    // Cosine-model misfit: f(n_g) vs f_bar + eps_signed cos(2 pi n_g).
    double ss = 0.0;
    for (std::size_t g = 0; g < table.n_g_grid.size(); ++g) {
        const double model =
            bands.f_bar + eps_signed * std::cos(2.0 * std::numbers::pi * table.n_g_grid[g]);
        const double r = table.transition(g, i, j) - model;
        ss += r * r;
    }
    bands.cosine_residual_rms = std::sqrt(ss / static_cast<double>(table.n_g_grid.size()));
    return bands;
}

double band_splitting(const ParityBands& bands, double q_e) {
    return 2.0 * bands.eps * std::cos(std::numbers::pi * q_e);
}

OffsetInversion offset_from_splitting(double delta_f_ghz, const ParityBands& bands) {
    if (bands.eps == 0.0)
        throw std::invalid_argument("offset_from_splitting: zero dispersion, no inversion");
    double ratio = delta_f_ghz / (2.0 * bands.eps);
    OffsetInversion inv;
    if (ratio > 1.0 || ratio < -1.0) {
        ratio = std::clamp(ratio, -1.0, 1.0);
        inv.clamped = true;
    }
    inv.q_e = fold_offset_e(std::acos(ratio) / std::numbers::pi);
    return inv;
}

OffsetCorrelation correlate_offsets(std::span<const double> t_a, std::span<const double> q_a,
                                    std::span<const double> t_b, std::span<const double> q_b,
                                    double window_s) {
    if (t_a.size() != q_a.size() || t_b.size() != q_b.size())
        throw std::invalid_argument("time/value length mismatch");
    if (window_s <= 0.0) throw std::invalid_argument("window must be positive");

    OffsetCorrelation corr;
    std::size_t k = 0;  // both series are time-ordered; advance a single cursor
    for (std::size_t idx = 0; idx < t_a.size(); ++idx) {
        const double t = t_a[idx];
        while (k + 1 < t_b.size() && std::abs(t_b[k + 1] - t) <= std::abs(t_b[k] - t)) ++k;
        if (t_b.empty() || std::abs(t_b[k] - t) > window_s) continue;
        corr.pairs.emplace_back(q_a[idx], q_b[k]);
    }
    if (corr.pairs.empty()) throw std::runtime_error("correlate_offsets: empty overlap window");

    double ma = 0.0, mb = 0.0;
    for (const auto& [a, b] : corr.pairs) {
        ma += a;
        mb += b;
    }
    const double n = static_cast<double>(corr.pairs.size());
    ma /= n;
    mb /= n;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (const auto& [a, b] : corr.pairs) {
        saa += (a - ma) * (a - ma);
        sbb += (b - mb) * (b - mb);
        sab += (a - ma) * (b - mb);
    }
    corr.pearson = (saa > 0.0 && sbb > 0.0) ? sab / std::sqrt(saa * sbb) : 0.0;
    return corr;
}

std::string SpectrumTable::to_json() const {
    json j;
    j["n_g_grid"] = n_g_grid;
    j["levels_ghz"] = levels;
    j["n_cut"] = n_cut;
    j["max_level"] = max_level;
    return j.dump(2);
}

SpectrumTable SpectrumTable::from_json(const std::string& text) {
    json j = json::parse(text);
    SpectrumTable t;
    t.n_g_grid = j.at("n_g_grid").get<std::vector<double>>();
    t.levels = j.at("levels_ghz").get<std::vector<std::vector<double>>>();
    t.n_cut = j.at("n_cut").get<int>();
    t.max_level = j.at("max_level").get<int>();
    return t;
}

std::string ParityBands::to_json() const {
    json doc;
    doc["i"] = i;
    doc["j"] = j;
    doc["f_bar_ghz"] = f_bar;
    doc["eps_ghz"] = eps;
    doc["cosine_residual_rms_ghz"] = cosine_residual_rms;
    return doc.dump(2);
}

ParityBands ParityBands::from_json(const std::string& text) {
    json doc = json::parse(text);
    ParityBands b;
    b.i = doc.at("i").get<int>();
    b.j = doc.at("j").get<int>();
    b.f_bar = doc.at("f_bar_ghz").get<double>();
    b.eps = doc.at("eps_ghz").get<double>();
    b.cosine_residual_rms = doc.at("cosine_residual_rms_ghz").get<double>();
    return b;
}

}  // namespace qnoise::spectrum
