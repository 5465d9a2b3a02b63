#include "drift/sources.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace drift {

double KernelInstance::evaluate(Vec2 x) const {
    const double c = std::cos(psi), s = std::sin(psi);
    const Vec2 d = x - mu;
    const double u = c * d.x + s * d.y;   // along heading
    const double v = -s * d.x + c * d.y;  // lateral
    const double qx = u / sigma_x;
    const double qy = v / sigma_y;
    return w * std::exp(-0.5 * (qx * qx + qy * qy));
}

std::vector<KernelInstance> vehicle_kernels(const Frame& frame, int ego_id,
                                            const SourceParams& params) {
    const AgentState* ego = frame.find(ego_id);
    if (!ego) throw EgoMissing(ego_id, frame.index);

    std::vector<KernelInstance> kernels;
    kernels.reserve(frame.agents.size());
    for (const auto& agent : frame.agents) {
        if (agent.id == ego_id) continue;

        KernelInstance k;
        k.psi = agent.heading;
        k.sigma_x = params.sigma_x;
        k.sigma_y = params.sigma_y;

        const double speed = agent.velocity.norm();
        const double a_par =
            speed > 1e-9 ? agent.acceleration.dot(agent.velocity) / speed : 0.0;
        const double a_mag = agent.acceleration.norm();
        const bool braking = a_par < 0.0;

        k.mu = agent.position;
        if (braking) {
            // Shift the kernel forward to flag where the decelerating vehicle
            // will crowd following traffic.
            const double shift = params.gamma_a * a_mag * params.t_react;
            k.mu += Vec2{std::cos(agent.heading), std::sin(agent.heading)} * shift;
        }

        const double d = (agent.position - ego->position).norm();
        const double rel_speed = (agent.velocity - ego->velocity).norm();
        const double accel_factor =
            1.0 + params.beta_a * std::max(0.0, a_par) / params.a_ref +
            params.beta_brake * std::max(0.0, -a_par) / params.a_ref;
        k.w = std::exp(-d / params.l_prox) *
              (1.0 + rel_speed / params.v_ref) * accel_factor;
        kernels.push_back(k);
    }
    return kernels;
}

ScalarField q_veh(const Frame& frame, int ego_id, const GridSpec& grid,
                  const SourceParams& params) {
    const auto kernels = vehicle_kernels(frame, ego_id, params);
    ScalarField field = make_field(grid, 0.0);
    field.t = frame.t;
    for (const auto& k : kernels) {
        for (int j = 0; j < grid.ny; ++j)
            for (int i = 0; i < grid.nx; ++i)
                field.at(i, j) += k.evaluate(grid.cell_center(i, j));
    }
    return field;
}

ScalarField q_occ(const ShadowMask& mask, const GridSpec& grid,
                  const SourceParams& params, const ScalarField* flow_depth) {
    ScalarField field = make_field(grid, 0.0);
    field.t = mask.s.t;
    for (int k = 0; k < grid.cell_count(); ++k) {
        if (!mask.occ[k]) continue;
        double p_emerge = 1.0;
        if (params.p_mode == EmergenceMode::kDepth && flow_depth)
            p_emerge = std::exp(-flow_depth->values[k] / params.l_emerge);
        field.values[k] = params.g0 * mask.s.values[k] * p_emerge;
    }
    return field;
}

ScalarField shadow_flow_depth(const ShadowMask& mask, Vec2 dir) {
    const GridSpec& g = mask.s.spec;
    ScalarField depth = make_field(g, 0.0);
    const double n = dir.norm();
    if (n < 1e-9) return depth;
    const Vec2 u = dir * (1.0 / n);
    const double step = 0.5 * std::min(g.dx, g.dy);
    const int max_steps = 2 * (g.nx + g.ny);
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            if (!mask.occ[g.index(i, j)]) continue;
            // March upstream until leaving the occluded region.
            Vec2 p = g.cell_center(i, j);
            double d = 0.0;
            for (int s = 0; s < max_steps; ++s) {
                p = p - u * step;
                auto cell = g.world_to_cell(p);
                if (!cell || !mask.occ[g.index(cell->first, cell->second)]) break;
                d += step;
            }
            depth.at(i, j) = d;
        }
    }
    return depth;
}

namespace {

bool point_in_polygon(Vec2 p, const std::vector<Vec2>& poly) {
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2 a = poly[i], b = poly[j];
        const bool crosses = (a.y > p.y) != (b.y > p.y);
        if (crosses && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x)
            inside = !inside;
    }
    return inside;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = ab.norm2();
    double s = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
    s = std::clamp(s, 0.0, 1.0);
    return (p - (a + ab * s)).norm();
}

double polygon_distance(Vec2 p, const std::vector<Vec2>& poly) {
    if (point_in_polygon(p, poly)) return 0.0;
    double best = 1e300;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++)
        best = std::min(best, point_segment_distance(p, poly[j], poly[i]));
    return best;
}

}  // namespace

double merge_density(const MergeTopology& topo, Vec2 p) {
    double rho = 0.0;
    for (const auto& poly : topo.polygons) {
        if (poly.vertices.size() < 3) continue;
        const double d = polygon_distance(p, poly.vertices);
        const double r =
            d == 0.0 ? 1.0
                     : std::exp(-d * d / (2.0 * topo.sigma_m * topo.sigma_m));
        rho = std::max(rho, r);
    }
    return rho;
}

ScalarField q_merge(const Frame& frame, const MergeTopology& topo,
                    const GridSpec& grid, const SourceParams& params) {
    ScalarField field = make_field(grid, 0.0);
    field.t = frame.t;
    if (topo.polygons.empty()) return field;

    for (int j = 0; j < grid.ny; ++j) {
        for (int i = 0; i < grid.nx; ++i) {
            const Vec2 p = grid.cell_center(i, j);
            const double rho_m = merge_density(topo, p);
            if (rho_m == 0.0) continue;
            double rho_v = 0.0;
            for (const auto& agent : frame.agents) {
                const double d2 = (p - agent.position).norm2();
                rho_v += std::exp(-0.5 * d2 / (params.sigma_y * params.sigma_y));
            }
            rho_v = std::min(rho_v, 1.0);
            field.at(i, j) = params.k_amb * rho_m + params.k_veh * rho_m * rho_v;
        }
    }
    return field;
}

ScalarField total_source(const Frame& frame, int ego_id,
                         const ShadowMask& mask, const MergeTopology& topo,
                         const GridSpec& grid, const SourceParams& params,
                         const ScalarField* flow_depth) {
    ScalarField q = q_veh(frame, ego_id, grid, params);
    const ScalarField occ = q_occ(mask, grid, params, flow_depth);
    const ScalarField merge = q_merge(frame, topo, grid, params);
    for (int k = 0; k < grid.cell_count(); ++k)
        q.values[k] = q.values[k] + occ.values[k] + merge.values[k];
    return q;
}

VectorField velocity_field(const Frame& frame, const MergeTopology& topo,
                           const GridSpec& grid, const SourceParams& params) {
    VectorField field = make_vector_field(grid);
    field.t = frame.t;
    constexpr double kEps = 1.0;        // m^2, interpolation regularizer
    constexpr double kAgentRange = 50.0;  // m, fallback threshold

    for (int j = 0; j < grid.ny; ++j) {
        for (int i = 0; i < grid.nx; ++i) {
            const Vec2 p = grid.cell_center(i, j);
            const int idx = grid.index(i, j);

            Vec2 v_flow{0.0, 0.0};
            double nearest2 = 1e300;
            double wsum = 0.0;
            Vec2 acc{0.0, 0.0};
            for (const auto& agent : frame.agents) {
                const double d2 = (p - agent.position).norm2();
                nearest2 = std::min(nearest2, d2);
                const double w = 1.0 / (d2 + kEps);
                acc += agent.velocity * w;
                wsum += w;
            }
            if (wsum > 0.0 && nearest2 <= kAgentRange * kAgentRange) {
                v_flow = acc * (1.0 / wsum);
            } else if (!topo.lanes.empty()) {
                // Nearest lane polyline direction at its nominal speed.
                double best = 1e300;
                Vec2 dir{0.0, 0.0};
                double speed = 0.0;
                for (const auto& lane : topo.lanes) {
                    for (std::size_t s = 0; s + 1 < lane.points.size(); ++s) {
                        const double d =
                            point_segment_distance(p, lane.points[s], lane.points[s + 1]);
                        if (d < best) {
                            best = d;
                            const Vec2 seg = lane.points[s + 1] - lane.points[s];
                            const double len = seg.norm();
                            dir = len > 0.0 ? seg * (1.0 / len) : Vec2{0.0, 0.0};
                            speed = lane.nominal_speed;
                        }
                    }
                }
                v_flow = dir * speed;
            }

            Vec2 v = v_flow;
            if (!topo.polygons.empty()) {
                // Lateral drift toward the main lane, strongest inside the zone.
                double best_rho = 0.0;
                Vec2 lat{0.0, 0.0};
                for (const auto& poly : topo.polygons) {
                    if (poly.vertices.size() < 3) continue;
                    const double d = polygon_distance(p, poly.vertices);
                    const double rho =
                        d == 0.0
                            ? 1.0
                            : std::exp(-d * d / (2.0 * topo.sigma_m * topo.sigma_m));
                    if (rho > best_rho) {
                        best_rho = rho;
                        lat = poly.lateral_dir;
                    }
                }
                v += lat * (params.v_lat * best_rho);
            }

            const double speed = v.norm();
            if (speed > params.v_cap) v = v * (params.v_cap / speed);
            field.vx[idx] = v.x;
            field.vy[idx] = v.y;
        }
    }
    return field;
}

MergeTopology load_topology(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open file: " + path);
    MergeTopology topo;
    std::map<int, MergePolygon> polys;
    std::map<int, LanePolyline> lanes;
    std::string line;
    int line_no = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++line_no;
        std::string trimmed = line;
        trimmed.erase(std::remove(trimmed.begin(), trimmed.end(), '\r'), trimmed.end());
        if (trimmed.empty() || trimmed[0] == '#') continue;
        if (header) {  // kind,id,seq,x,y,extra
            header = false;
            continue;
        }
        std::istringstream ss(trimmed);
        std::string kind, tok;
        std::getline(ss, kind, ',');
        std::vector<std::string> rest;
        while (std::getline(ss, tok, ',')) rest.push_back(tok);
        auto num = [&](std::size_t idx) -> double {
            if (idx >= rest.size()) throw MalformedRow(path, line_no);
            return std::strtod(rest[idx].c_str(), nullptr);
        };
        if (kind == "vertex") {
            const int id = static_cast<int>(num(0));
            polys[id].id = id;
            polys[id].vertices.push_back({num(2), num(3)});
        } else if (kind == "lateral") {
            const int id = static_cast<int>(num(0));
            Vec2 d{num(2), num(3)};
            const double n = d.norm();
            polys[id].id = id;
            polys[id].lateral_dir = n > 0.0 ? d * (1.0 / n) : Vec2{0.0, 1.0};
        } else if (kind == "taper") {
            topo.sigma_m = num(2);
        } else if (kind == "lane") {
            const int id = static_cast<int>(num(0));
            lanes[id].lane_id = id;
            lanes[id].points.push_back({num(2), num(3)});
            lanes[id].nominal_speed = num(4);
        } else {
            throw MalformedRow(path, line_no);
        }
    }
    for (auto& [id, p] : polys) topo.polygons.push_back(std::move(p));
    for (auto& [id, l] : lanes) topo.lanes.push_back(std::move(l));
    if (topo.sigma_m <= 0.0) throw IngestError("topology taper must be > 0");
    return topo;
}

void save_topology(const MergeTopology& topo, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << "kind,id,seq,x,y,extra\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "taper,0,0,%.9g,0,0\n", topo.sigma_m);
    out << buf;
    for (const auto& poly : topo.polygons) {
        for (std::size_t s = 0; s < poly.vertices.size(); ++s) {
            std::snprintf(buf, sizeof(buf), "vertex,%d,%zu,%.9g,%.9g,0\n",
                          poly.id, s, poly.vertices[s].x, poly.vertices[s].y);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "lateral,%d,0,%.9g,%.9g,0\n", poly.id,
                      poly.lateral_dir.x, poly.lateral_dir.y);
        out << buf;
    }
    for (const auto& lane : topo.lanes) {
        for (std::size_t s = 0; s < lane.points.size(); ++s) {
            std::snprintf(buf, sizeof(buf), "lane,%d,%zu,%.9g,%.9g,%.9g\n",
                          lane.lane_id, s, lane.points[s].x, lane.points[s].y,
                          lane.nominal_speed);
            out << buf;
        }
    }
}

}  // namespace drift
