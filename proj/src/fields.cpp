#include "qnoise/fields.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "qnoise/io.hpp"

namespace qnoise::fields {

using json = nlohmann::json;

void GridGeometry::validate() const {
    if (nx < 16 || ny < 16 || nz < 16)
        throw std::invalid_argument("grid must be at least 16^3");
    if (!(spacing_m > 0.0)) throw std::invalid_argument("spacing must be positive");
    if (eps_r.size() != cells()) throw std::invalid_argument("eps_r size mismatch");
    for (double e : eps_r)
        if (!(e >= 1.0)) throw std::invalid_argument("relative permittivity must be >= 1");
    if (substrate_top_k <= 0 || substrate_top_k >= nz)
        throw std::invalid_argument("substrate plane outside the grid");

    std::vector<std::uint8_t> seen(cells(), 0);
    for (const auto& [name, mask] : electrodes) {
        if (mask.empty()) throw std::invalid_argument("electrode '" + name + "' is empty");
        for (std::size_t c : mask) {
            if (c >= cells()) throw std::invalid_argument("electrode cell out of range");
            if (seen[c]) throw std::invalid_argument("electrode masks overlap");
            seen[c] = 1;
        }
    }
}

namespace {

enum CellKind : std::uint8_t { kFree = 0, kFixed = 1 };

struct SolveSetup {
    std::vector<std::uint8_t> kind;     // free vs fixed-potential
    std::vector<double> fixed_value;    // potential on fixed cells
};

SolveSetup make_setup(const GridGeometry& g, const std::string& excited) {
    SolveSetup s;
    s.kind.assign(g.cells(), kFree);
    s.fixed_value.assign(g.cells(), 0.0);
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i)
                if (g.on_boundary(i, j, k)) s.kind[g.idx(i, j, k)] = kFixed;
    bool found = excited.empty();
    for (const auto& [name, mask] : g.electrodes) {
        const double v = name == excited ? 1.0 : 0.0;
        if (name == excited) found = true;
        for (std::size_t c : mask) {
            s.kind[c] = kFixed;
            s.fixed_value[c] = v;
        }
    }
    if (!found) throw std::invalid_argument("unknown electrode '" + excited + "'");
    return s;
}

// Red-black SOR on the dielectric 7-point stencil. `source` may be empty
// (Laplace) or hold the discrete charge term q/(eps0 h) per cell.
PotentialField relax(const GridGeometry& g, const SolveSetup& setup,
                     const std::vector<double>& source, const std::string& label,
                     const SorOptions& opts, double excitation_scale) {
    const int nx = g.nx, ny = g.ny, nz = g.nz;
    PotentialField field;
    field.nx = nx;
    field.ny = ny;
    field.nz = nz;
    field.electrode = label;
    field.phi.assign(g.cells(), 0.0);
    for (std::size_t c = 0; c < g.cells(); ++c)
        if (setup.kind[c] == kFixed) field.phi[c] = setup.fixed_value[c];

    const double omega =
        opts.omega > 0.0 ? opts.omega
                         : 2.0 / (1.0 + std::numbers::pi / std::max({nx, ny, nz}));

    auto face_eps = [&](std::size_t a, std::size_t b) {
        const double ea = g.eps_r[a], eb = g.eps_r[b];
        return 2.0 * ea * eb / (ea + eb);
    };

    const int strides[6] = {-1, +1, -nx, +nx, -nx * ny, +nx * ny};
    auto neighbors_of = [&](int i, int j, int k, std::size_t c, double* eps, std::size_t* nb) {
        const int di[6] = {-1, 1, 0, 0, 0, 0};
        const int dj[6] = {0, 0, -1, 1, 0, 0};
        const int dk[6] = {0, 0, 0, 0, -1, 1};
        int count = 0;
        for (int f = 0; f < 6; ++f) {
            const int ii = i + di[f], jj = j + dj[f], kk = k + dk[f];
            if (ii < 0 || jj < 0 || kk < 0 || ii >= nx || jj >= ny || kk >= nz) continue;
            nb[count] = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(c) + strides[f]);
            eps[count] = face_eps(c, nb[count]);
            ++count;
        }
        return count;
    };

    double residual = 0.0;
    int sweep = 0;
    for (; sweep < opts.max_sweeps; ++sweep) {
        for (int color = 0; color < 2; ++color) {
            for (int k = 1; k < nz - 1; ++k)
                for (int j = 1; j < ny - 1; ++j)
                    for (int i = 1; i < nx - 1; ++i) {
                        if (((i + j + k) & 1) != color) continue;
                        const std::size_t c = g.idx(i, j, k);
                        if (setup.kind[c] == kFixed) continue;
                        double eps[6];
                        std::size_t nb[6];
                        const int n = neighbors_of(i, j, k, c, eps, nb);
                        double num = source.empty() ? 0.0 : source[c];
                        double den = 0.0;
                        for (int f = 0; f < n; ++f) {
                            num += eps[f] * field.phi[nb[f]];
                            den += eps[f];
                        }
                        const double gs = num / den;
                        field.phi[c] += omega * (gs - field.phi[c]);
                    }
        }

        if (sweep % 10 == 9 || sweep == opts.max_sweeps - 1) {
            residual = 0.0;
            for (int k = 1; k < nz - 1; ++k)
                for (int j = 1; j < ny - 1; ++j)
                    for (int i = 1; i < nx - 1; ++i) {
                        const std::size_t c = g.idx(i, j, k);
                        if (setup.kind[c] == kFixed) continue;
                        double eps[6];
                        std::size_t nb[6];
                        const int n = neighbors_of(i, j, k, c, eps, nb);
                        double num = source.empty() ? 0.0 : source[c];
                        double den = 0.0;
                        for (int f = 0; f < n; ++f) {
                            num += eps[f] * field.phi[nb[f]];
                            den += eps[f];
                        }
                        residual = std::max(residual, std::abs(num / den - field.phi[c]));
                    }
            field.residual_history.push_back(residual);
            if (residual < opts.tolerance * excitation_scale) {
                ++sweep;
                break;
            }
        }
    }
    field.sweeps = sweep;
    field.residual = residual;
    if (residual >= opts.tolerance * excitation_scale) {
        std::ostringstream msg;
        msg << "SOR did not converge in " << opts.max_sweeps << " sweeps; residuals:";
        const std::size_t tail =
            field.residual_history.size() > 8 ? field.residual_history.size() - 8 : 0;
        for (std::size_t i = tail; i < field.residual_history.size(); ++i)
            msg << ' ' << field.residual_history[i];
        throw std::runtime_error(msg.str());
    }
    return field;
}

}  // namespace

PotentialField solve_weighting_potential(const GridGeometry& geom, const std::string& electrode,
                                         const SorOptions& opts) {
    geom.validate();
    if (geom.electrodes.find(electrode) == geom.electrodes.end())
        throw std::invalid_argument("unknown electrode '" + electrode + "'");
    auto setup = make_setup(geom, electrode);
    return relax(geom, setup, {}, electrode, opts, 1.0);
}

PotentialField solve_point_charge(const GridGeometry& geom, std::size_t source_cell,
                                  const SorOptions& opts) {
    geom.validate();
    if (source_cell >= geom.cells()) throw std::invalid_argument("source cell out of range");
    auto setup = make_setup(geom, "");
    if (setup.kind[source_cell] == kFixed)
        throw std::invalid_argument("source cell lies on a conductor or boundary");
    std::vector<double> source(geom.cells(), 0.0);
    // unit charge, natural units: div(eps grad phi) integrated over the dual
    // cell gives sum eps_f (phi_f - phi_c) = -q / h
    source[source_cell] = 1.0 / geom.spacing_m;
    // scale for the convergence test: potential of a unit charge one cell away
    const double scale = 1.0 / (4.0 * std::numbers::pi * geom.spacing_m);
    return relax(geom, setup, source, "", opts, scale);
}

double electrode_surface_charge(const GridGeometry& geom, const PotentialField& field,
                                const std::string& electrode) {
    const auto it = geom.electrodes.find(electrode);
    if (it == geom.electrodes.end())
        throw std::invalid_argument("unknown electrode '" + electrode + "'");
    std::vector<std::uint8_t> in_mask(geom.cells(), 0);
    for (std::size_t c : it->second) in_mask[c] = 1;

    const int nx = geom.nx, ny = geom.ny, nz = geom.nz;
    double q = 0.0;
    for (std::size_t c : it->second) {
        const int i = static_cast<int>(c % static_cast<std::size_t>(nx));
        const int j = static_cast<int>((c / static_cast<std::size_t>(nx)) % static_cast<std::size_t>(ny));
        const int k = static_cast<int>(c / (static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny)));
        const int di[6] = {-1, 1, 0, 0, 0, 0};
        const int dj[6] = {0, 0, -1, 1, 0, 0};
        const int dk[6] = {0, 0, 0, 0, -1, 1};
        for (int f = 0; f < 6; ++f) {
            const int ii = i + di[f], jj = j + dj[f], kk = k + dk[f];
            if (ii < 0 || jj < 0 || kk < 0 || ii >= nx || jj >= ny || kk >= nz) continue;
            const std::size_t n = geom.idx(ii, jj, kk);
            if (in_mask[n]) continue;
            const double eps = 2.0 * geom.eps_r[c] * geom.eps_r[n] / (geom.eps_r[c] + geom.eps_r[n]);
            // Q = -eps0 sum eps_f (phi_out - phi_elec) h ; eps0 = 1
            q -= eps * (field.phi[n] - field.phi[c]) * geom.spacing_m;
        }
    }
    return q;
}

InducedChargeMap induced_charge_map(const GridGeometry& geom,
                                    const std::map<std::string, double>& combination,
                                    const SorOptions& opts) {
    if (combination.empty()) throw std::invalid_argument("empty electrode combination");
    InducedChargeMap map;
    map.nx = geom.nx;
    map.ny = geom.ny;
    map.nz = geom.nz;
    map.spacing_m = geom.spacing_m;
    map.substrate_top_k = geom.substrate_top_k;
    map.value.assign(geom.cells(), 0.0);

    for (const auto& [name, weight] : combination) {
        auto field = solve_weighting_potential(geom, name, opts);
        for (std::size_t c = 0; c < geom.cells(); ++c)
            map.value[c] -= weight * field.phi[c];  // reciprocity, unit source charge
    }

    auto setup = make_setup(geom, "");
    map.in_substrate.assign(geom.cells(), 0);
    for (int k = 0; k < geom.substrate_top_k; ++k)
        for (int j = 0; j < geom.ny; ++j)
            for (int i = 0; i < geom.nx; ++i) {
                const std::size_t c = geom.idx(i, j, k);
                if (setup.kind[c] == kFree) map.in_substrate[c] = 1;
            }
    return map;
}

SensitiveVolume sensitive_volume(const InducedChargeMap& map, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("threshold must lie in (0, 1)");
    SensitiveVolume sv;
    sv.slice_area_m2.assign(static_cast<std::size_t>(map.nz), 0.0);
    const double cell_area = map.spacing_m * map.spacing_m;
    std::size_t count = 0;
    for (int k = 0; k < map.nz; ++k) {
        std::size_t slice = 0;
        for (int j = 0; j < map.ny; ++j)
            for (int i = 0; i < map.nx; ++i) {
                const std::size_t c = map.idx(i, j, k);
                if (map.in_substrate[c] && std::abs(map.value[c]) >= threshold) ++slice;
            }
        sv.slice_area_m2[static_cast<std::size_t>(k)] = static_cast<double>(slice) * cell_area;
        count += slice;
    }
    sv.volume_m3 = static_cast<double>(count) * cell_area * map.spacing_m;
    return sv;
}

PaperGeometries build_paper_geometries(const DeviceScaleConfig& cfg) {
    if (cfg.n < 16) throw std::invalid_argument("grid too small");
    const double mem_gb = static_cast<double>(cfg.n) * cfg.n * cfg.n * 8.0 * 3.0 / 1e9;
    if (mem_gb > 4.0) throw std::invalid_argument("grid budget exceeds the memory bound");

    auto scaled = [&](int v) { return std::max(1, static_cast<int>(std::lround(v * cfg.scale))); };

    auto base = [&](double eps_substrate) {
        GridGeometry g;
        g.nx = g.ny = g.nz = cfg.n;
        g.spacing_m = cfg.spacing_m;
        g.substrate_top_k = static_cast<int>(std::lround(cfg.substrate_fraction * cfg.n));
        g.eps_r.assign(g.cells(), 1.0);
        for (int k = 0; k < g.substrate_top_k; ++k)
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i < g.nx; ++i) g.eps_r[g.idx(i, j, k)] = eps_substrate;
        return g;
    };

    // electrodes are one cell thick, sitting on the substrate surface
    auto add_pad = [](GridGeometry& g, const std::string& name, int i0, int i1, int j0, int j1) {
        if (i0 < 1 || j0 < 1 || i1 >= g.nx - 1 || j1 >= g.ny - 1)
            throw std::invalid_argument("electrode '" + name + "' reaches the boundary");
        std::vector<std::size_t> mask;
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) mask.push_back(g.idx(i, j, g.substrate_top_k));
        g.electrodes[name] = std::move(mask);
    };

    PaperGeometries out;
    {
        GridGeometry g = base(cfg.eps_substrate_diff);
        const int len = scaled(cfg.paddle_len);
        const int wid = scaled(cfg.paddle_wid);
        const int gap = static_cast<int>(std::lround(cfg.paddle_gap * cfg.scale));
        if (gap < 1) throw std::invalid_argument("paddle gap must stay positive after scaling");
        const int cx = g.nx / 2, cy = g.ny / 2;
        // paddles mirrored about the y midplane (j <-> ny-1-j)
        const int j_hi0 = cy + (gap + 1) / 2;
        const int j_hi1 = j_hi0 + wid - 1;
        const int j_lo1 = g.ny - 1 - j_hi0;
        const int j_lo0 = g.ny - 1 - j_hi1;
        add_pad(g, "paddle_a", cx - len / 2, cx - len / 2 + len - 1, j_lo0, j_lo1);
        add_pad(g, "paddle_b", cx - len / 2, cx - len / 2 + len - 1, j_hi0, j_hi1);
        g.validate();
        out.differential = std::move(g);
    }
    {
        GridGeometry g = base(cfg.eps_substrate_island);
        const int edge = scaled(cfg.island);
        const int cx = g.nx / 2, cy = g.ny / 2;
        add_pad(g, "island", cx - edge / 2, cx - edge / 2 + edge - 1, cy - edge / 2,
                cy - edge / 2 + edge - 1);
        g.validate();
        out.island = std::move(g);
    }
    return out;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

std::string GridGeometry::to_json() const {
    json doc;
    doc["nx"] = nx;
    doc["ny"] = ny;
    doc["nz"] = nz;
    doc["spacing_m"] = spacing_m;
    doc["substrate_top_k"] = substrate_top_k;
    json el;
    for (const auto& [name, mask] : electrodes) el[name] = mask;
    doc["electrodes"] = el;
    // permittivity stored run-length encoded; production maps are two-valued
    json runs = json::array();
    std::size_t start = 0;
    for (std::size_t c = 1; c <= eps_r.size(); ++c) {
        if (c == eps_r.size() || eps_r[c] != eps_r[start]) {
            runs.push_back({{"count", c - start}, {"eps", eps_r[start]}});
            start = c;
        }
    }
    doc["eps_runs"] = runs;
    return doc.dump();
}

GridGeometry GridGeometry::from_json(const std::string& text) {
    json doc = json::parse(text);
    GridGeometry g;
    g.nx = doc.at("nx").get<int>();
    g.ny = doc.at("ny").get<int>();
    g.nz = doc.at("nz").get<int>();
    g.spacing_m = doc.at("spacing_m").get<double>();
    g.substrate_top_k = doc.at("substrate_top_k").get<int>();
    for (const auto& [name, mask] : doc.at("electrodes").items())
        g.electrodes[name] = mask.get<std::vector<std::size_t>>();
    g.eps_r.reserve(g.cells());
    for (const auto& run : doc.at("eps_runs")) {
        const auto count = run.at("count").get<std::size_t>();
        const auto eps = run.at("eps").get<double>();
        g.eps_r.insert(g.eps_r.end(), count, eps);
    }
    g.validate();
    return g;
}

std::string DeviceScaleConfig::to_json() const {
    json doc;
    doc["n"] = n;
    doc["spacing_m"] = spacing_m;
    doc["substrate_fraction"] = substrate_fraction;
    doc["paddle_len"] = paddle_len;
    doc["paddle_wid"] = paddle_wid;
    doc["paddle_gap"] = paddle_gap;
    doc["eps_substrate_diff"] = eps_substrate_diff;
    doc["island"] = island;
    doc["eps_substrate_island"] = eps_substrate_island;
    doc["scale"] = scale;
    return doc.dump(2);
}

DeviceScaleConfig DeviceScaleConfig::from_json(const std::string& text) {
    json doc = json::parse(text);
    DeviceScaleConfig cfg;
    cfg.n = doc.value("n", cfg.n);
    cfg.spacing_m = doc.value("spacing_m", cfg.spacing_m);
    cfg.substrate_fraction = doc.value("substrate_fraction", cfg.substrate_fraction);
    cfg.paddle_len = doc.value("paddle_len", cfg.paddle_len);
    cfg.paddle_wid = doc.value("paddle_wid", cfg.paddle_wid);
    cfg.paddle_gap = doc.value("paddle_gap", cfg.paddle_gap);
    cfg.eps_substrate_diff = doc.value("eps_substrate_diff", cfg.eps_substrate_diff);
    cfg.island = doc.value("island", cfg.island);
    cfg.eps_substrate_island = doc.value("eps_substrate_island", cfg.eps_substrate_island);
    cfg.scale = doc.value("scale", cfg.scale);
    return cfg;
}

void write_grid(const std::filesystem::path& path_bin, const InducedChargeMap& map) {
    std::ofstream out(path_bin, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path_bin.string());
    out.write(reinterpret_cast<const char*>(map.value.data()),
              static_cast<std::streamsize>(map.value.size() * sizeof(double)));
    json header;
    header["dims"] = {map.nx, map.ny, map.nz};
    header["spacing_m"] = map.spacing_m;
    header["substrate_top_k"] = map.substrate_top_k;
    header["dtype"] = "float64-le";
    header["ordering"] = "row-major, x fastest";
    std::ofstream hdr(path_bin.string() + ".json");
    hdr << header.dump(2) << '\n';
}

InducedChargeMap read_grid(const std::filesystem::path& path_bin) {
    std::ifstream hdr(path_bin.string() + ".json");
    if (!hdr) throw std::runtime_error("missing grid header for " + path_bin.string());
    json header = json::parse(hdr);
    InducedChargeMap map;
    const auto dims = header.at("dims").get<std::vector<int>>();
    map.nx = dims[0];
    map.ny = dims[1];
    map.nz = dims[2];
    map.spacing_m = header.at("spacing_m").get<double>();
    map.substrate_top_k = header.at("substrate_top_k").get<int>();
    const std::size_t n = static_cast<std::size_t>(map.nx) * map.ny * map.nz;
    map.value.resize(n);
    std::ifstream in(path_bin, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path_bin.string());
    in.read(reinterpret_cast<char*>(map.value.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double))
        throw std::runtime_error("short read on " + path_bin.string());
    map.in_substrate.assign(n, 0);
    for (int k = 0; k < map.substrate_top_k; ++k)
        for (int j = 0; j < map.ny; ++j)
            for (int i = 0; i < map.nx; ++i) map.in_substrate[map.idx(i, j, k)] = 1;
    return map;
}

void write_map_csv(const std::filesystem::path& path, const InducedChargeMap& map) {
    io::CsvTable table;
    table.columns = {"x_m", "y_m", "z_m", "induced_e"};
    const double h = map.spacing_m;
    const double x0 = -0.5 * (map.nx - 1) * h;
    const double y0 = -0.5 * (map.ny - 1) * h;
    const double z0 = -static_cast<double>(map.substrate_top_k) * h;
    for (int k = 0; k < map.nz; ++k)
        for (int j = 0; j < map.ny; ++j)
            for (int i = 0; i < map.nx; ++i) {
                const std::size_t c = map.idx(i, j, k);
                if (!map.in_substrate[c]) continue;
                table.rows.push_back({x0 + i * h, y0 + j * h, z0 + k * h, map.value[c]});
            }
    io::write_csv(path, table);
}

}  // namespace qnoise::fields
