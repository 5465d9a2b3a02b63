#ifndef DRIFT_METRICS_HPP
#define DRIFT_METRICS_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "drift/grid.hpp"
#include "drift/shadow.hpp"
#include "drift/trajectory.hpp"

namespace drift {

struct NoUsableEvents : MetricError {
    explicit NoUsableEvents(const std::string& metric)
        : MetricError(metric + ": no usable events") {}
};
struct ZeroPeak : MetricError {
    ZeroPeak() : MetricError("rpr: zero peak over the event span") {}
};
struct DegenerateRho : MetricError {
    DegenerateRho() : MetricError("osi: fewer than 2 distinct rho values") {}
};
struct SeriesTooShort : MetricError {
    SeriesTooShort() : MetricError("temporal_consistency: series shorter than 3") {}
};
struct NoPairs : MetricError {
    NoPairs() : MetricError("delta_coll: no episode pairs") {}
};

/// Evaluation region: an ego-anchored forward window by default, or a fixed
/// axis-aligned rectangle (conflict-point variant).
struct RegionSpec {
    enum class Mode { kEgoForward, kFixedRect };
    Mode mode = Mode::kEgoForward;
    double length = 30.0;  // m
    double width = 12.0;   // m
    Vec2 center{0.0, 0.0};  // kFixedRect only

    /// Cell mask; the pose is consulted only in ego-forward mode.
    std::vector<std::uint8_t> rasterize(const GridSpec& grid, Vec2 ego_pos,
                                        double ego_heading) const;
};

double region_mean(const ScalarField& field,
                   const std::vector<std::uint8_t>& roi);

struct HazardEvent {
    double t_event = 0.0;  // onset
    double t_end = 0.0;    // last frame the trigger held
    int agent_a = 0;       // ego
    int agent_b = 0;
    enum class Trigger { kTtcBelow, kGapBelow };
    Trigger trigger = Trigger::kTtcBelow;
};

/// Bumper-to-bumper gap between two oriented rectangles along the line
/// through their centers (support-function projection); negative when the
/// projections overlap.
double rectangle_gap(const AgentState& a, const AgentState& b);

/// Gap over closing speed; empty when not closing or already overlapping.
std::optional<double> ttc(const AgentState& ego, const AgentState& other);

/// Per-pair state machine over [first_frame, last_frame]: an event spans
/// consecutive frames where TTC < ttc_threshold or gap < gap_threshold.
std::vector<HazardEvent> detect_hazard_events(const Recording& rec, int ego_id,
                                              int first_frame, int last_frame,
                                              double ttc_threshold = 2.0,
                                              double gap_threshold = 2.0);

/// Time-indexed field snapshots emitted by one window evolution.
struct FieldSeries {
    double frame_rate = 20.0;
    std::vector<ScalarField> fields;  // fields[k].t increases uniformly

    const ScalarField* at_time(double t) const;
};

/// Fraction of lane changes moving strictly toward lower risk, sampled at
/// the decision time; ties count against.
double lcrd(const std::vector<LaneChangeEvent>& events,
            const FieldSeries& series, int* usable_out = nullptr);

/// (toward_lower, usable) tallies, for pooling across windows.
std::pair<int, int> lcrd_counts(const std::vector<LaneChangeEvent>& events,
                                const FieldSeries& series);

/// Region-mean sample train used by the time-based metrics. Values carry the
/// field scale already applied (lambda0-normalized for evolved fields).
struct MeanSeries {
    std::vector<double> t;
    std::vector<double> mean;
};

/// Mean of (t_event - t_field)/t_r; events without a threshold crossing in
/// [t_event - lookback, t_event] contribute zero.
double tai(const std::vector<double>& event_times, const MeanSeries& series,
           double theta, double t_r = 1.5, double lookback = 10.0);

/// Single-event anticipation term (zero when no crossing exists).
double tai_single(const MeanSeries& series, double t_event, double theta,
                  double t_r = 1.5, double lookback = 10.0);

/// Post-event risk memory: trapezoid integral of the region mean over
/// [t_end, t_end + delta_t], normalized by peak * delta_t.
double rpr(const MeanSeries& series, const HazardEvent& event,
           double delta_t = 2.0);

/// Least-squares slope of region-mean risk against occlusion ratio.
double osi(const std::vector<std::pair<double, double>>& rho_mean_points);

struct OrlResult {
    double latency = 0.0;
    bool capped = false;
};

enum class OrlMode { kOnset, kClearance };

/// |t_cross - t_shadow| where t_cross is the first post-transition time the
/// region mean passes theta (above for onset, below for clearance); missing
/// crossings return the cap, flagged.
OrlResult orl(const MeanSeries& series, double t_shadow, double theta,
              OrlMode mode, double cap = 5.0);

/// Lag-1 Pearson autocorrelation; constant series return 1 by convention.
double temporal_consistency(const std::vector<double>& series);

/// (occluded near-collision rate - visible rate) * 100, over episode pairs.
double delta_coll(const std::vector<std::pair<bool, bool>>& pair_outcomes);

struct MetricsReport {
    struct Entry {
        std::optional<double> value;
        int n = 0;
    };
    Entry lcrd, rpr, tai, osi, orl, delta_coll, temp;
    double theta = 0.15;
};

/// Deterministic key=value form, 4 fractional digits; metrics without a
/// value emit only their *_n count.
std::string format_report(const MetricsReport& report);
void write_report(const MetricsReport& report, const std::string& path);

}  // namespace drift

#endif  // DRIFT_METRICS_HPP
