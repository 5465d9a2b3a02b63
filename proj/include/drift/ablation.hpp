#ifndef DRIFT_ABLATION_HPP
#define DRIFT_ABLATION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "drift/metrics.hpp"
#include "drift/pde.hpp"

namespace drift {

/// Frame-wise source snapshot used as the static baseline: no evolution,
/// no temporal memory.
ScalarField static_field(const Frame& frame, int ego_id,
                         const ShadowMask& mask, const MergeTopology& topo,
                         const GridSpec& grid, const SourceParams& params);

/// Thresholds and region wiring shared by the metric pipelines.
struct MetricParams {
    RegionSpec region;
    double theta = 0.15;         // normalized field units
    double t_r = 1.5;            // s
    double tai_lookback = 10.0;  // s
    double ttc_event = 2.0;      // s, hazard-event anchor
    double gap_event = 2.0;      // m, hazard-event anchor
    double rpr_dt = 2.0;         // s
    double orl_cap = 5.0;        // s
    OrlMode orl_mode = OrlMode::kClearance;
    double rho_transition = 0.25;  // shadow-transition threshold on rho
    double t_dec = 1.0;            // s, lane-change decision lead
    double ttc_near = 1.5;         // s, near-collision detector
    double gap_near = 2.0;         // m, near-collision detector
};

/// Region-mean risk is compared against thresholds in normalized units:
/// evolved fields scale by lambda0 (a lone steady car peaks near 1/lambda0),
/// static snapshots are already at source scale.
double field_scale(const AblationConfig& ab, const PdeParams& pde);

/// One evolved window plus the per-frame series the metrics consume.
struct WindowCapture {
    int ego_id = -1;
    OcclusionWindow window;
    FieldSeries fields;          // populated when keep_fields
    MeanSeries mean;             // normalized region-mean risk
    std::vector<double> rho;     // region occlusion ratio
    std::vector<double> smean;   // region-mean shadow value
    std::vector<std::uint8_t> valid;  // region in-domain and ego present
    double scale = 1.0;
};

WindowCapture capture_window(const Recording& rec, const OcclusionWindow& w,
                             int ego_id, const MergeTopology& topo,
                             const SimParams& sim, const AblationConfig& ab,
                             const MetricParams& metric, bool keep_fields);

/// Shadow transitions of the region occlusion-ratio series: times where rho
/// crosses metric.rho_transition in the direction the ORL mode asks for.
std::vector<double> shadow_transitions(const WindowCapture& cap,
                                       const MetricParams& metric);

/// Track ids eligible to act as ego (drivable vehicle classes).
std::vector<int> ego_candidates(const Recording& rec);

/// Full metric pipeline over every (ego, occlusion-window) pair of the
/// recording under one ablation arm. Window evolutions run in parallel when
/// jobs > 1; reports are identical for any jobs value.
MetricsReport evaluate_recording(const Recording& rec,
                                 const std::vector<int>& egos,
                                 const MergeTopology& topo,
                                 const SimParams& sim,
                                 const AblationConfig& ab,
                                 const MetricParams& metric, int jobs);

struct ArmReport {
    std::string arm;
    MetricsReport report;
};

/// Standard arms in Table-style order.
std::vector<std::pair<std::string, AblationConfig>> standard_arms();

std::vector<ArmReport> run_ablation(const Recording& rec,
                                    const std::vector<int>& egos,
                                    const MergeTopology& topo,
                                    const SimParams& sim,
                                    const MetricParams& metric, int jobs);

std::string format_ablation_csv(const std::vector<ArmReport>& table);

// ---- synthetic paired scenarios ----

struct SyntheticScenario {
    struct Segment {
        int agent_id = 0;
        double t_start = 0.0;
        double duration = 0.0;
        Vec2 p0;
        double v0 = 0.0;
        double heading = 0.0;
        double accel = 0.0;
    };
    struct AgentMeta {
        int id = 0;
        AgentClass cls = AgentClass::kCar;
        double length = 4.5;
        double width = 1.8;
    };

    std::vector<Segment> segments;
    std::vector<AgentMeta> agents;
    MergeTopology topology;
    int ego_id = 0;
    int occluder_id = -1;
    bool occluder_present = true;
    double duration = 6.5;  // s
    std::uint64_t seed = 0;
};

/// Scripted highway-merge scene: ego in the main lane, a slow truck-trailer
/// in the acceleration lane, and a slow car hidden beyond the truck that
/// merges in front of the ego.
SyntheticScenario make_merge_scenario(std::uint64_t seed);
std::vector<SyntheticScenario> make_merge_corpus(int count,
                                                 std::uint64_t base_seed);

/// Scripted playback at the given rate; drop_occluder removes the occluder
/// (the paired "visible" variant). use_ego_scripts=false freezes the ego on
/// its first segment (policy episodes drive it instead).
Recording scenario_to_recording(const SyntheticScenario& sc, double frame_rate,
                                bool drop_occluder,
                                bool use_ego_scripts = true);

void save_scenario(const SyntheticScenario& sc, const std::string& path);
SyntheticScenario load_scenario(const std::string& path);

// ---- reactive-policy episodes ----

struct ReactivePolicyParams {
    double k_b = 4.0;          // m/s^2 per unit normalized region-mean risk
    double theta_brake = 0.15;  // normalized units
    double a_min = -6.0;        // m/s^2
    RegionSpec lookahead;
};

enum class FieldMode { kFull, kStatic };

struct EpisodeLog {
    std::vector<double> t;
    std::vector<Vec2> ego_pos;
    std::vector<double> ego_speed;
    std::vector<double> accel_cmd;
    std::vector<std::uint8_t> near_collision;
    bool any_near_collision = false;
    double first_brake_t = -1.0;  // -1 when the policy never brakes
};

/// Closed-loop run: the ego's longitudinal acceleration follows
/// a = -k_b * max(0, mean - theta_brake) on the lookahead region of the
/// chosen field; agents hidden inside the shadow are withheld from source
/// construction (the field only sees what the ego can see). Near-collisions
/// are detected on the true states.
EpisodeLog run_paired_episode(const SyntheticScenario& sc, bool with_occluder,
                              FieldMode mode,
                              const ReactivePolicyParams& policy,
                              const SimParams& sim,
                              const MetricParams& metric);

/// Occluded/visible near-collision outcome per scenario.
std::vector<std::pair<bool, bool>> run_paired_corpus(
    const std::vector<SyntheticScenario>& corpus, FieldMode mode,
    const ReactivePolicyParams& policy, const SimParams& sim,
    const MetricParams& metric, int jobs);

}  // namespace drift

#endif  // DRIFT_ABLATION_HPP
