#include "drift/shadow.hpp"

#include <algorithm>
#include <cmath>

namespace drift {

int ShadowMask::occluded_count() const {
    int n = 0;
    for (auto v : occ) n += v != 0;
    return n;
}

Vec2 ego_frame_transform(Vec2 p_j, Vec2 p_e, double psi_e) {
    const Vec2 d = p_j - p_e;
    const double c = std::cos(psi_e), s = std::sin(psi_e);
    return {c * d.x + s * d.y, -s * d.x + c * d.y};
}

bool segment_hits_rectangle(Vec2 a, Vec2 b, Vec2 c, double heading,
                            double length, double width) {
    // Slab test in the rectangle's local frame.
    const double ch = std::cos(heading), sh = std::sin(heading);
    auto to_local = [&](Vec2 p) -> Vec2 {
        const Vec2 d = p - c;
        return {ch * d.x + sh * d.y, -sh * d.x + ch * d.y};
    };
    const Vec2 p = to_local(a);
    const Vec2 q = to_local(b);
    const Vec2 d = q - p;
    const double half[2] = {length * 0.5, width * 0.5};
    const double p_ax[2] = {p.x, p.y};
    const double d_ax[2] = {d.x, d.y};

    double tmin = 0.0, tmax = 1.0;
    for (int ax = 0; ax < 2; ++ax) {
        if (std::abs(d_ax[ax]) < 1e-12) {
            if (std::abs(p_ax[ax]) > half[ax]) return false;
            continue;
        }
        double t1 = (-half[ax] - p_ax[ax]) / d_ax[ax];
        double t2 = (half[ax] - p_ax[ax]) / d_ax[ax];
        if (t1 > t2) std::swap(t1, t2);
        tmin = std::max(tmin, t1);
        tmax = std::min(tmax, t2);
        if (tmin > tmax) return false;
    }
    // Exclude a pure touch at the ego endpoint.
    return tmax > 1e-12;
}

namespace {

// Separable Gaussian blur with zero padding; kernel truncated at 3 sigma and
// normalized to unit sum, which keeps values in [0,1] and preserves the
// monotone coupling between hard shadows and S.
void gaussian_smooth(ScalarField& f, double sigma_m) {
    const GridSpec& g = f.spec;
    for (int axis = 0; axis < 2; ++axis) {
        const double cell = axis == 0 ? g.dx : g.dy;
        const double sigma_cells = sigma_m / cell;
        const int radius = static_cast<int>(std::ceil(3.0 * sigma_cells));
        if (radius < 1) continue;
        std::vector<double> kernel(2 * radius + 1);
        double sum = 0.0;
        for (int k = -radius; k <= radius; ++k) {
            const double w = std::exp(-0.5 * (k * k) / (sigma_cells * sigma_cells));
            kernel[k + radius] = w;
            sum += w;
        }
        for (double& w : kernel) w /= sum;

        std::vector<double> out(f.values.size(), 0.0);
        for (int j = 0; j < g.ny; ++j) {
            for (int i = 0; i < g.nx; ++i) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    const int ii = axis == 0 ? i + k : i;
                    const int jj = axis == 0 ? j : j + k;
                    if (!g.in_bounds(ii, jj)) continue;
                    acc += kernel[k + radius] * f.at(ii, jj);
                }
                out[g.index(i, j)] = acc;
            }
        }
        f.values = std::move(out);
    }
    for (double& v : f.values) v = std::clamp(v, 0.0, 1.0);
}

}  // namespace

ShadowMask compute_shadow_mask(const Frame& frame, int ego_id,
                               const GridSpec& grid,
                               const ShadowParams& params,
                               const ShadowMask* prev) {
    const AgentState* ego = frame.find(ego_id);
    if (!ego) throw EgoMissing(ego_id, frame.index);

    ShadowMask mask;
    mask.s = make_field(grid, 0.0);
    mask.s.t = frame.t;

    for (const auto& occluder : frame.agents) {
        if (occluder.id == ego_id) continue;
        if (!is_heavy(occluder, params.heavy)) continue;
        const Vec2 r =
            ego_frame_transform(occluder.position, ego->position, ego->heading);
        if (r.x <= 0.0) continue;  // behind the ego
        for (int j = 0; j < grid.ny; ++j) {
            for (int i = 0; i < grid.nx; ++i) {
                double& cell = mask.s.at(i, j);
                if (cell == 1.0) continue;
                if (segment_hits_rectangle(ego->position, grid.cell_center(i, j),
                                           occluder.position, occluder.heading,
                                           occluder.length, occluder.width))
                    cell = 1.0;
            }
        }
    }

    if (params.sigma_s > 0.0) gaussian_smooth(mask.s, params.sigma_s);

    mask.occ.assign(mask.s.values.size(), 0);
    for (std::size_t k = 0; k < mask.s.values.size(); ++k)
        mask.occ[k] = mask.s.values[k] > params.theta_s ? 1 : 0;

    mask.ds_dt = make_field(grid, 0.0);
    mask.ds_dt.t = frame.t;
    if (prev) {
        const double nu = grid.frame_rate;
        for (std::size_t k = 0; k < mask.s.values.size(); ++k)
            mask.ds_dt.values[k] = (mask.s.values[k] - prev->s.values[k]) * nu;
    }
    return mask;
}

double occlusion_ratio(const ShadowMask& mask,
                       const std::vector<std::uint8_t>& roi) {
    int total = 0, occluded = 0;
    for (std::size_t k = 0; k < roi.size(); ++k) {
        if (!roi[k]) continue;
        ++total;
        if (k < mask.occ.size() && mask.occ[k]) ++occluded;
    }
    if (total == 0) throw EmptyRoi();
    return static_cast<double>(occluded) / total;
}

std::vector<OcclusionWindow> extract_occlusion_windows(
    const Recording& rec, int ego_id, const SelectionZone& zone,
    const ClassSet& heavy, double t_pad) {
    bool ego_seen = false;
    std::vector<int> flagged;
    for (const auto& frame : rec.frames) {
        const AgentState* ego = frame.find(ego_id);
        if (!ego) continue;
        ego_seen = true;
        for (const auto& agent : frame.agents) {
            if (agent.id == ego_id || !is_heavy(agent, heavy)) continue;
            const Vec2 r =
                ego_frame_transform(agent.position, ego->position, ego->heading);
            if (r.x > 0.0 && r.x < zone.l_par && std::abs(r.y) < zone.l_perp) {
                flagged.push_back(frame.index);
                break;
            }
        }
    }
    if (!ego_seen) throw EgoMissing(ego_id, -1);
    if (flagged.empty()) return {};

    // Maximal contiguous runs of flagged frame indices.
    std::vector<OcclusionWindow> runs;
    int start = flagged[0], prev_k = flagged[0];
    for (std::size_t m = 1; m < flagged.size(); ++m) {
        if (flagged[m] != prev_k + 1) {
            runs.push_back({start, prev_k});
            start = flagged[m];
        }
        prev_k = flagged[m];
    }
    runs.push_back({start, prev_k});

    const int pad =
        static_cast<int>(std::ceil(t_pad * rec.frame_rate - 1e-12));
    const int lo = rec.first_frame(), hi = rec.last_frame();
    for (auto& w : runs) {
        w.start = std::max(lo, w.start - pad);
        w.end = std::min(hi, w.end + pad);
    }

    // Merge padded runs that overlap or touch.
    std::vector<OcclusionWindow> merged;
    for (const auto& w : runs) {
        if (!merged.empty() && w.start <= merged.back().end + 1)
            merged.back().end = std::max(merged.back().end, w.end);
        else
            merged.push_back(w);
    }
    return merged;
}

}  // namespace drift
