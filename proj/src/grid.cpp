#include "drift/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace drift {

void GridSpec::validate() const {
    if (nx < 2 || ny < 2) throw Error("GridSpec: nx and ny must be >= 2");
    if (!(dx > 0.0) || !(dy > 0.0)) throw Error("GridSpec: dx and dy must be > 0");
    if (!(frame_rate > 0.0)) throw Error("GridSpec: frame_rate must be > 0");
    if (!origin.finite()) throw Error("GridSpec: origin must be finite");
}

std::optional<std::pair<int, int>> GridSpec::world_to_cell(Vec2 p) const {
    if (!p.finite()) return std::nullopt;
    const int i = static_cast<int>(std::lround((p.x - origin.x) / dx));
    const int j = static_cast<int>(std::lround((p.y - origin.y) / dy));
    if (!in_bounds(i, j)) return std::nullopt;
    return std::make_pair(i, j);
}

ScalarField make_field(const GridSpec& spec, double fill) {
    spec.validate();
    if (!std::isfinite(fill)) throw Error("make_field: fill must be finite");
    ScalarField f;
    f.spec = spec;
    f.values.assign(static_cast<std::size_t>(spec.cell_count()), fill);
    return f;
}

double integrate(const ScalarField& field) {
    double sum = 0.0;
    for (double v : field.values) sum += v;
    return sum * field.spec.cell_area();
}

VectorField make_vector_field(const GridSpec& spec, Vec2 fill) {
    spec.validate();
    if (!fill.finite()) throw Error("make_vector_field: fill must be finite");
    VectorField f;
    f.spec = spec;
    f.vx.assign(static_cast<std::size_t>(spec.cell_count()), fill.x);
    f.vy.assign(static_cast<std::size_t>(spec.cell_count()), fill.y);
    return f;
}

double VectorField::max_speed() const {
    double m = 0.0;
    for (std::size_t k = 0; k < vx.size(); ++k) {
        m = std::max(m, vx[k] * vx[k] + vy[k] * vy[k]);
    }
    return std::sqrt(m);
}

namespace {

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string header_line(const ScalarField& f) {
    std::string h = "DRIFTGRID v1 ";
    h += std::to_string(f.spec.nx) + " " + std::to_string(f.spec.ny) + " ";
    h += format_value(f.spec.dx) + " " + format_value(f.spec.dy) + " ";
    h += format_value(f.spec.origin.x) + " " + format_value(f.spec.origin.y);
    h += " " + format_value(f.t);
    return h;
}

ScalarField parse_header(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error("DRIFTGRID: missing header");
    std::istringstream hs(line);
    std::string magic, version;
    ScalarField f;
    hs >> magic >> version >> f.spec.nx >> f.spec.ny >> f.spec.dx >>
        f.spec.dy >> f.spec.origin.x >> f.spec.origin.y >> f.t;
    if (!hs || magic != "DRIFTGRID" || version != "v1")
        throw Error("DRIFTGRID: bad header: " + line);
    f.spec.validate();
    f.values.resize(static_cast<std::size_t>(f.spec.cell_count()));
    return f;
}

}  // namespace

void write_grid_text(const ScalarField& field, std::ostream& out) {
    out << header_line(field) << "\n";
    const auto& s = field.spec;
    for (int j = 0; j < s.ny; ++j) {
        for (int i = 0; i < s.nx; ++i) {
            if (i) out << ' ';
            out << format_value(field.at(i, j));
        }
        out << '\n';
    }
}

void write_grid_binary(const ScalarField& field, std::ostream& out) {
    out << header_line(field) << "\n";
    for (double v : field.values) {
        const float fv = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &fv, sizeof(bits));
        const unsigned char le[4] = {
            static_cast<unsigned char>(bits & 0xFF),
            static_cast<unsigned char>((bits >> 8) & 0xFF),
            static_cast<unsigned char>((bits >> 16) & 0xFF),
            static_cast<unsigned char>((bits >> 24) & 0xFF)};
        out.write(reinterpret_cast<const char*>(le), 4);
    }
}

ScalarField read_grid_text(std::istream& in) {
    ScalarField f = parse_header(in);
    for (int j = 0; j < f.spec.ny; ++j) {
        for (int i = 0; i < f.spec.nx; ++i) {
            if (!(in >> f.values[static_cast<std::size_t>(f.spec.index(i, j))]))
                throw Error("DRIFTGRID: truncated text payload");
        }
    }
    return f;
}

ScalarField read_grid_binary(std::istream& in) {
    ScalarField f = parse_header(in);
    for (double& v : f.values) {
        unsigned char le[4];
        if (!in.read(reinterpret_cast<char*>(le), 4))
            throw Error("DRIFTGRID: truncated binary payload");
        std::uint32_t bits = static_cast<std::uint32_t>(le[0]) |
                             (static_cast<std::uint32_t>(le[1]) << 8) |
                             (static_cast<std::uint32_t>(le[2]) << 16) |
                             (static_cast<std::uint32_t>(le[3]) << 24);
        float fv;
        std::memcpy(&fv, &bits, sizeof(fv));
        v = static_cast<double>(fv);
    }
    return f;
}

void write_grid_file(const ScalarField& field, const std::string& path,
                     bool binary) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw Error("cannot open for writing: " + path);
    if (binary)
        write_grid_binary(field, out);
    else
        write_grid_text(field, out);
}

ScalarField read_grid_file(const std::string& path, bool binary) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw Error("cannot open for reading: " + path);
    return binary ? read_grid_binary(in) : read_grid_text(in);
}

}  // namespace drift
