#ifndef DRIFT_TRAJECTORY_HPP
#define DRIFT_TRAJECTORY_HPP

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "drift/common.hpp"

namespace drift {

enum class AgentClass {
    kCar,
    kTruck,
    kTrailer,
    kTruckTrailer,
    kBus,
    kVan,
    kMotorcycle,
    kBicycle,
    kPedestrian,
    kOther,
};

AgentClass agent_class_from_string(const std::string& name);
std::string to_string(AgentClass c);

struct AgentState {
    int id = 0;
    Vec2 position;              // m
    Vec2 velocity;              // m/s
    Vec2 acceleration;          // m/s^2
    double heading = 0.0;       // rad, in [-pi, pi)
    double length = 4.5;        // m
    double width = 2.0;         // m
    AgentClass cls = AgentClass::kCar;
    std::optional<int> lane_id;
};

struct Frame {
    int index = 0;
    double t = 0.0;  // index / frame_rate
    std::vector<AgentState> agents;
    int ego_id = -1;  // -1 when unset

    const AgentState* find(int id) const;
};

struct LanePolyline {
    int lane_id = 0;
    std::vector<Vec2> points;
    double nominal_speed = 0.0;  // m/s
};

struct Recording {
    std::vector<Frame> frames;  // strictly increasing indices
    double frame_rate = 20.0;   // Hz
    std::string location_tag;
    std::vector<LanePolyline> lanes;

    int first_frame() const { return frames.empty() ? 0 : frames.front().index; }
    int last_frame() const { return frames.empty() ? 0 : frames.back().index; }
    /// Frame with the given index, or nullptr (indices may have gaps).
    const Frame* frame_at(int index) const;
    std::vector<int> agent_ids() const;
};

struct LaneChangeEvent {
    int agent_id = 0;
    double t_cross = 0.0;
    double t_dec = 0.0;
    Vec2 x_curr;    // agent position at t_dec
    Vec2 x_target;  // target-lane center at the t_dec station
};

// Ingestion errors.
struct MissingColumn : IngestError {
    explicit MissingColumn(const std::string& name)
        : IngestError("missing column: " + name), column(name) {}
    std::string column;
};
struct MalformedRow : IngestError {
    MalformedRow(const std::string& path, int line_number)
        : IngestError(path + ": malformed row at line " +
                      std::to_string(line_number)),
          line(line_number) {}
    int line;
};
struct EmptyRecording : IngestError {
    explicit EmptyRecording(const std::string& path)
        : IngestError("empty recording: " + path) {}
};
struct NoLaneInformation : IngestError {
    NoLaneInformation() : IngestError("recording carries no lane information") {}
};

using ClassSet = std::set<AgentClass>;

/// Heavy occluder classes.
ClassSet default_heavy_classes();

bool is_heavy(const AgentState& state, const ClassSet& heavy);

/// Column-name adapters for the supported CSV schemas. "native" expects the
/// normalized names directly; "exid" covers the exiD/rounD/inD family
/// (xCenter, yCenter, trackId, ...).
struct LoadOptions {
    std::string schema = "native";
    double frame_rate = 20.0;  // Hz
};

/// Parse a tracks CSV + meta CSV into frames of agent states. Headings are
/// converted to radians and wrapped; missing acceleration columns are
/// backfilled with central differences of velocity.
Recording load_recording(const std::string& tracks_path,
                         const std::string& meta_path,
                         const LoadOptions& opts = {});

/// Replace accelerations with central differences of velocity (one-sided at
/// track ends). Applied automatically when acceleration columns are absent.
void backfill_accelerations(Recording& rec);

/// One event per maximal lane-id transition per agent. t_dec is clamped to
/// the agent's first frame; x_target is the target-lane center at the
/// longitudinal station of t_dec. Lane centers come from lane polylines when
/// present, otherwise from the mean lateral position of rows sharing the
/// lane id.
std::vector<LaneChangeEvent> detect_lane_changes(const Recording& rec,
                                                 double t_dec_lead = 1.0);

}  // namespace drift

#endif  // DRIFT_TRAJECTORY_HPP
