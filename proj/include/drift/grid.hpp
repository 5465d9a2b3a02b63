#ifndef DRIFT_GRID_HPP
#define DRIFT_GRID_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "drift/common.hpp"

namespace drift {

/// Discretized BEV domain. Cell-centered: cell (i, j) holds the field value
/// at world position origin + (i*dx, j*dy). i runs longitudinal (x), j
/// lateral (y); storage is row-major with i contiguous.
struct GridSpec {
    int nx = 150;
    int ny = 70;
    double dx = 1.0;
    double dy = 1.0;
    Vec2 origin{0.0, 0.0};      // world coords of cell (0,0) center
    double frame_rate = 20.0;   // Hz

    void validate() const;

    int cell_count() const { return nx * ny; }
    double cell_area() const { return dx * dy; }
    int index(int i, int j) const { return j * nx + i; }
    bool in_bounds(int i, int j) const {
        return i >= 0 && i < nx && j >= 0 && j < ny;
    }

    Vec2 cell_center(int i, int j) const {
        return {origin.x + i * dx, origin.y + j * dy};
    }

    /// Nearest cell whose center lies within half a cell of p; empty when p
    /// falls outside the domain. Out-of-domain lookups must stay empty rather
    /// than clamp, or target-cell sampling would silently pick border cells.
    std::optional<std::pair<int, int>> world_to_cell(Vec2 p) const;

    bool operator==(const GridSpec&) const = default;
};

struct ScalarField {
    GridSpec spec;
    double t = 0.0;  // seconds
    std::vector<double> values;

    double& at(int i, int j) { return values[spec.index(i, j)]; }
    double at(int i, int j) const { return values[spec.index(i, j)]; }
};

/// Constant-filled field; rejects non-finite fills.
ScalarField make_field(const GridSpec& spec, double fill);

/// Midpoint-rule integral: sum(values) * dx * dy.
double integrate(const ScalarField& field);

struct VectorField {
    GridSpec spec;
    double t = 0.0;
    std::vector<double> vx;
    std::vector<double> vy;

    double speed_at(int idx) const {
        return Vec2{vx[idx], vy[idx]}.norm();
    }
    double max_speed() const;
};

VectorField make_vector_field(const GridSpec& spec, Vec2 fill = {0.0, 0.0});

// DRIFTGRID dump format. Text: header line
//   DRIFTGRID v1 <nx> <ny> <dx> <dy> <origin_x> <origin_y> <t>
// then ny lines of nx space-separated values (row j per line). Binary: the
// same header line, newline-terminated, then nx*ny float32 little-endian
// values in row-major order.
void write_grid_text(const ScalarField& field, std::ostream& out);
void write_grid_binary(const ScalarField& field, std::ostream& out);
void write_grid_file(const ScalarField& field, const std::string& path,
                     bool binary);
ScalarField read_grid_text(std::istream& in);
ScalarField read_grid_binary(std::istream& in);
ScalarField read_grid_file(const std::string& path, bool binary);

}  // namespace drift

#endif  // DRIFT_GRID_HPP
