#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace qnoise::fields {

/// Uniform 3D grid with per-node relative permittivity, named electrode node
/// sets held at fixed potential, and Dirichlet zero on the box faces.
/// z index k < substrate_top_k lies in the substrate.
struct GridGeometry {
    int nx = 0, ny = 0, nz = 0;
    double spacing_m = 1e-5;
    int substrate_top_k = 0;
    std::vector<double> eps_r;                       // nx*ny*nz, >= 1
    std::map<std::string, std::vector<std::size_t>> electrodes;

    std::size_t idx(int i, int j, int k) const {
        return static_cast<std::size_t>((k * ny + j) * nx + i);
    }
    std::size_t cells() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }
    bool on_boundary(int i, int j, int k) const {
        return i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1;
    }

    /// Disjoint electrode masks, eps >= 1, grid at least 16^3.
    void validate() const;
    std::string to_json() const;
    static GridGeometry from_json(const std::string& text);
};

struct SorOptions {
    double tolerance = 1e-6;   // residual max-norm relative to the excitation
    int max_sweeps = 50000;
    double omega = 0.0;        // 0 = auto from grid size
};

struct PotentialField {
    int nx = 0, ny = 0, nz = 0;
    std::vector<double> phi;
    std::string electrode;     // excited electrode ("" for Poisson solves)
    int sweeps = 0;
    double residual = 0.0;
    std::vector<double> residual_history;  // sampled every few sweeps
};

/// Weighting potential: the named electrode at 1 V, every other conductor at
/// 0 V, dielectric-aware 7-point stencil (face permittivities by harmonic
/// averaging), red-black SOR. Throws with the residual history on
/// non-convergence.
PotentialField solve_weighting_potential(const GridGeometry& geom, const std::string& electrode,
                                         const SorOptions& opts = {});

/// Poisson solve for a unit point charge at `source_cell` with every
/// electrode grounded (natural units: eps0 = 1, q = 1).
PotentialField solve_point_charge(const GridGeometry& geom, std::size_t source_cell,
                                  const SorOptions& opts = {});

/// Surface charge on an electrode from a solved field, by integrating
/// eps * grad(phi) over the electrode faces (natural units).
double electrode_surface_charge(const GridGeometry& geom, const PotentialField& field,
                                const std::string& electrode);

/// Induced charge per unit substrate charge, via Green's reciprocity:
/// value(r) = -sum_k w_k phi_k(r) for the electrode combination weights w_k
/// (differential paddles use {A:+1, B:-1}; a single island uses {island:+1}).
struct InducedChargeMap {
    int nx = 0, ny = 0, nz = 0;
    double spacing_m = 0.0;
    int substrate_top_k = 0;
    std::vector<double> value;         // defined on every cell
    std::vector<std::uint8_t> in_substrate;  // 1 where the map is meaningful

    std::size_t idx(int i, int j, int k) const {
        return static_cast<std::size_t>((k * ny + j) * nx + i);
    }
};

InducedChargeMap induced_charge_map(const GridGeometry& geom,
                                    const std::map<std::string, double>& combination,
                                    const SorOptions& opts = {});

struct SensitiveVolume {
    double volume_m3 = 0.0;
    std::vector<double> slice_area_m2;  // per z index
};

/// Substrate cells with |induced| >= threshold, as a volume plus a per-slice
/// area profile for plotting.
SensitiveVolume sensitive_volume(const InducedChargeMap& map, double threshold);

/// Parameterized stand-ins for the two device styles: a differential pair of
/// coplanar paddles and a smaller single island, both centered at x,y = 0 on
/// top of their substrate. Dimensions are illustrative configuration, not
/// reproduced device data.
struct DeviceScaleConfig {
    int n = 64;                       // cubic grid edge
    double spacing_m = 2e-5;
    double substrate_fraction = 0.45; // fraction of z filled by substrate
    // differential device (cells)
    int paddle_len = 22;              // x extent of each paddle
    int paddle_wid = 10;              // y extent of each paddle
    int paddle_gap = 6;               // y gap between the paddles
    double eps_substrate_diff = 10.0; // sapphire-like
    // single island (cells)
    int island = 6;                   // square island edge
    double eps_substrate_island = 11.7;  // silicon-like
    double scale = 1.0;               // multiplies all lateral dimensions

    std::string to_json() const;
    static DeviceScaleConfig from_json(const std::string& text);
};

struct PaperGeometries {
    GridGeometry differential;  // electrodes "paddle_a", "paddle_b"
    GridGeometry island;        // electrode "island"
};

PaperGeometries build_paper_geometries(const DeviceScaleConfig& cfg = {});

/// Flat binary grid with a JSON sidecar (dims, spacing, ordering,
/// little-endian float64, x fastest).
void write_grid(const std::filesystem::path& path_bin, const InducedChargeMap& map);
InducedChargeMap read_grid(const std::filesystem::path& path_bin);

/// CSV slices (x, y, z, value) of the substrate region.
void write_map_csv(const std::filesystem::path& path, const InducedChargeMap& map);

}  // namespace qnoise::fields
