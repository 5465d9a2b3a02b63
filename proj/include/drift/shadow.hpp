#ifndef DRIFT_SHADOW_HPP
#define DRIFT_SHADOW_HPP

#include <cstdint>
#include <vector>

#include "drift/grid.hpp"
#include "drift/trajectory.hpp"

namespace drift {

struct EgoMissing : SolverError {
    explicit EgoMissing(int ego_id, int frame)
        : SolverError("ego " + std::to_string(ego_id) +
                      " absent from frame " + std::to_string(frame)) {}
};
struct EmptyRoi : MetricError {
    EmptyRoi() : MetricError("occlusion_ratio: empty roi") {}
};

struct ShadowParams {
    double sigma_s = 1.5;  // Gaussian smoothing std, meters
    double theta_s = 0.5;  // occluded-region threshold on S
    ClassSet heavy = default_heavy_classes();
};

/// Smoothed ego-view shadow mask. S in [0,1]; occ marks the thresholded
/// shadow region; ds_dt is the backward difference against the previous
/// frame's mask (zero when no predecessor was supplied).
struct ShadowMask {
    ScalarField s;
    ScalarField ds_dt;
    std::vector<std::uint8_t> occ;

    int occluded_count() const;
};

/// Forward selection zone for occlusion-window extraction.
struct SelectionZone {
    double l_par = 90.0;   // m, longitudinal reach
    double l_perp = 18.0;  // m, lateral half-width
};

/// Padded contiguous frame interval (inclusive).
struct OcclusionWindow {
    int start = 0;
    int end = 0;
};

/// Rotate p_j - p_e into the ego body frame:
/// r = [[cos, sin], [-sin, cos]] * (p_j - p_e); returns (r_par, r_perp).
Vec2 ego_frame_transform(Vec2 p_j, Vec2 p_e, double psi_e);

/// Line-of-sight hard shadows from heavy occluders, Gaussian-smoothed.
/// A cell is hard-shadowed when the segment from the ego position to the
/// cell center crosses an occluder's oriented bounding rectangle (the cell
/// therefore lies beyond the occluder). The ego body never occludes and
/// occluders behind the ego are ignored.
ShadowMask compute_shadow_mask(const Frame& frame, int ego_id,
                               const GridSpec& grid,
                               const ShadowParams& params,
                               const ShadowMask* prev = nullptr);

/// Fraction of roi cells inside the occluded region.
double occlusion_ratio(const ShadowMask& mask,
                       const std::vector<std::uint8_t>& roi);

/// Flags each frame where some heavy agent sits in the ego-frame selection
/// zone, groups flagged frames into maximal contiguous runs, pads each run
/// by ceil(t_pad * frame_rate) frames per side clamped to the recording
/// bounds, and merges overlapping padded runs.
std::vector<OcclusionWindow> extract_occlusion_windows(
    const Recording& rec, int ego_id, const SelectionZone& zone,
    const ClassSet& heavy, double t_pad);

/// True when the segment a-b intersects the oriented rectangle centered at
/// c with the given heading and full extents length x width.
bool segment_hits_rectangle(Vec2 a, Vec2 b, Vec2 c, double heading,
                            double length, double width);

}  // namespace drift

#endif  // DRIFT_SHADOW_HPP
