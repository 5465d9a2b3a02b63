#ifndef DRIFT_SOURCES_HPP
#define DRIFT_SOURCES_HPP

#include <string>
#include <vector>

#include "drift/grid.hpp"
#include "drift/shadow.hpp"
#include "drift/trajectory.hpp"

namespace drift {

enum class EmergenceMode { kUniform, kDepth };

struct SourceParams {
    double sigma_x = 12.0;    // m, longitudinal kernel spread
    double sigma_y = 3.0;     // m, lateral kernel spread
    double l_prox = 50.0;     // m, distance attenuation length
    double v_ref = 5.0;       // m/s, relative-speed reference
    double beta_a = 0.3;      // acceleration source weight
    double beta_brake = 0.8;  // braking source weight
    double a_ref = 3.0;       // m/s^2, acceleration normalization
    double gamma_a = 0.5;     // braking kernel shift gain
    double t_react = 1.5;     // s, braking kernel shift horizon
    double k_amb = 0.08;      // ambient merge weight
    double k_veh = 0.6;       // vehicle-gated merge weight
    double g0 = 1.0;          // 1/s, latent hazard gain
    EmergenceMode p_mode = EmergenceMode::kUniform;
    double l_emerge = 30.0;   // m, depth-mode attenuation length
    double v_lat = 1.0;       // m/s, topology-induced lateral drift
    double v_cap = 60.0;      // m/s, velocity magnitude cap
};

/// Anisotropic Gaussian anchored to an agent; axes sigma_x/sigma_y rotated
/// by psi form the covariance. Peak-normalized: value at mu is w.
struct KernelInstance {
    Vec2 mu;
    double psi = 0.0;
    double sigma_x = 12.0;
    double sigma_y = 3.0;
    double w = 1.0;

    double evaluate(Vec2 x) const;
};

struct MergePolygon {
    int id = 0;
    std::vector<Vec2> vertices;   // simple polygon, implicit closure
    Vec2 lateral_dir{0.0, 1.0};   // unit vector toward the main lane
};

struct MergeTopology {
    std::vector<MergePolygon> polygons;
    double sigma_m = 6.0;  // m, taper width outside the polygons
    std::vector<LanePolyline> lanes;

    bool empty() const { return polygons.empty() && lanes.empty(); }
};

/// Topology CSV rows: kind,id,seq,x,y,extra with kind one of
/// vertex|lateral|taper|lane (lane rows carry nominal speed in extra).
MergeTopology load_topology(const std::string& path);
void save_topology(const MergeTopology& topo, const std::string& path);

/// Kernels for every non-ego agent in the frame (exposed for tests).
std::vector<KernelInstance> vehicle_kernels(const Frame& frame, int ego_id,
                                            const SourceParams& params);

/// Vehicle-interaction source: sum of weighted anisotropic kernels.
ScalarField q_veh(const Frame& frame, int ego_id, const GridSpec& grid,
                  const SourceParams& params);

/// Occlusion source: indicator(occ) * g0*S * p_emerge. flow_depth (meters of
/// shadow upstream of each cell along the flow direction) is only consulted
/// in depth mode; pass nullptr otherwise.
ScalarField q_occ(const ShadowMask& mask, const GridSpec& grid,
                  const SourceParams& params,
                  const ScalarField* flow_depth = nullptr);

/// Distance travelled inside the occluded region along dir, per cell.
ScalarField shadow_flow_depth(const ShadowMask& mask, Vec2 dir);

/// rho_merge: 1 inside polygons with a Gaussian taper outside.
double merge_density(const MergeTopology& topo, Vec2 p);

/// Topology-driven conflict pressure: k_amb*rho_merge + k_veh*rho_merge*rho_veh.
ScalarField q_merge(const Frame& frame, const MergeTopology& topo,
                    const GridSpec& grid, const SourceParams& params);

/// Q = Q_veh + Q_occ + Q_merge, cellwise in that order.
ScalarField total_source(const Frame& frame, int ego_id,
                         const ShadowMask& mask, const MergeTopology& topo,
                         const GridSpec& grid, const SourceParams& params,
                         const ScalarField* flow_depth = nullptr);

/// Effective transmission velocity: inverse-distance interpolation of agent
/// velocities (lane fallback beyond 50 m of any agent) plus lateral
/// topology drift inside the merge taper. Magnitude capped at v_cap.
VectorField velocity_field(const Frame& frame, const MergeTopology& topo,
                           const GridSpec& grid, const SourceParams& params);

}  // namespace drift

#endif  // DRIFT_SOURCES_HPP
