#include "drift/pde.hpp"

#include <algorithm>
#include <cmath>

namespace drift {

void AblationConfig::validate() const {
    if (static_mode && (!enable_diffusion || !enable_advection || !enable_decay_coupling))
        return;  // flags are ignored in static mode
}

FieldState make_state(const GridSpec& grid, double t0) {
    FieldState s;
    s.r = make_field(grid, 0.0);
    s.r.t = t0;
    s.r_prev = s.r;
    return s;
}

double sponge_rate(const GridSpec& grid, const PdeParams& params, double x) {
    if (params.sponge_width <= 0.0 || params.sponge_gain <= 0.0) return 0.0;
    const double x_last = grid.origin.x + (grid.nx - 1) * grid.dx;
    const double onset = x_last - params.sponge_width;
    if (x <= onset) return 0.0;
    const double depth = (x - onset) / params.sponge_width;
    return params.sponge_gain * depth * depth;
}

ScalarField base_decay_field(const GridSpec& grid, const PdeParams& params) {
    ScalarField lambda = make_field(grid, params.lambda0);
    for (int j = 0; j < grid.ny; ++j)
        for (int i = 0; i < grid.nx; ++i)
            lambda.at(i, j) += sponge_rate(grid, params, grid.cell_center(i, j).x);
    return lambda;
}

ScalarField decay_field(const ShadowMask& mask, const GridSpec& grid,
                        const PdeParams& params) {
    ScalarField lambda = make_field(grid, 0.0);
    lambda.t = mask.s.t;
    for (int j = 0; j < grid.ny; ++j) {
        for (int i = 0; i < grid.nx; ++i) {
            const int k = grid.index(i, j);
            const double s = mask.s.values[k];
            const double shrink = std::clamp(
                -mask.ds_dt.values[k] * params.lambda_g / params.sdot_ref, 0.0, 1.0);
            lambda.values[k] = params.lambda0 * (1.0 - s) +
                               params.lambda_sh * shrink +
                               sponge_rate(grid, params, grid.cell_center(i, j).x);
        }
    }
    return lambda;
}

ScalarField diffusivity_field(const ShadowMask& mask, const GridSpec& grid,
                              const PdeParams& params) {
    ScalarField d = make_field(grid, params.d0);
    d.t = mask.s.t;
    for (int k = 0; k < grid.cell_count(); ++k)
        d.values[k] += (params.d_occ - params.d0) * mask.s.values[k];
    return d;
}

double stable_dt(const PdeParams& params, const GridSpec& grid,
                 const VectorField& v, double d_max) {
    constexpr double kEps = 1e-6;  // m/s
    if (d_max < 0.0) d_max = std::max(params.d0, params.d_occ);
    const double h = std::min(grid.dx, grid.dy);
    const double diff_bound =
        d_max > 0.0 ? h * h / (4.0 * d_max) : std::numeric_limits<double>::infinity();
    const double adv_bound = h / (v.max_speed() + kEps);
    const double frame_dt = 1.0 / grid.frame_rate;
    return std::min(params.cfl_safety * std::min(diff_bound, adv_bound), frame_dt);
}

namespace {

// Raw stability bound without the safety factor; exceeding it is an error.
double raw_bound(const GridSpec& grid, double d_max, double v_max) {
    const double h = std::min(grid.dx, grid.dy);
    const double diff_bound =
        d_max > 0.0 ? h * h / (4.0 * d_max) : std::numeric_limits<double>::infinity();
    const double adv_bound = h / (v_max + 1e-6);
    return std::min(diff_bound, adv_bound);
}

}  // namespace

StepResult step(FieldState& state, const ScalarField& q, const VectorField& v,
                const ScalarField& d, const ScalarField& lambda, double dt,
                double tau) {
    const GridSpec& g = state.r.spec;
    const int nx = g.nx, ny = g.ny;
    const double inv_dx = 1.0 / g.dx, inv_dy = 1.0 / g.dy;

    double d_max = 0.0;
    for (double dv : d.values) d_max = std::max(d_max, dv);
    const double bound = raw_bound(g, d_max, v.max_speed());
    if (dt > bound * (1.0 + 1e-9)) throw CflViolation(dt, bound);

    const std::vector<double>& r = state.r.values;
    std::vector<double> rhs(r.size(), 0.0);

    // Interior x-faces: diffusive + donor-cell advective fluxes. Boundary
    // faces carry no flux (closed box; the sponge absorbs outflow).
    for (int j = 0; j < ny; ++j) {
        const int row = j * nx;
        for (int i = 0; i + 1 < nx; ++i) {
            const int a = row + i, b = row + i + 1;
            const double df = 0.5 * (d.values[a] + d.values[b]) *
                              (r[b] - r[a]) * inv_dx;
            const double uf = 0.5 * (v.vx[a] + v.vx[b]);
            const double af = uf > 0.0 ? uf * r[a] : uf * r[b];
            const double net = (df - af) * inv_dx;
            rhs[a] += net;
            rhs[b] -= net;
        }
    }
    // Interior y-faces.
    for (int j = 0; j + 1 < ny; ++j) {
        const int row = j * nx, row_n = (j + 1) * nx;
        for (int i = 0; i < nx; ++i) {
            const int a = row + i, b = row_n + i;
            const double df = 0.5 * (d.values[a] + d.values[b]) *
                              (r[b] - r[a]) * inv_dy;
            const double vf = 0.5 * (v.vy[a] + v.vy[b]);
            const double af = vf > 0.0 ? vf * r[a] : vf * r[b];
            const double net = (df - af) * inv_dy;
            rhs[a] += net;
            rhs[b] -= net;
        }
    }

    for (std::size_t k = 0; k < rhs.size(); ++k)
        rhs[k] += q.values[k] - lambda.values[k] * r[k];

    StepResult result;
    std::vector<double> next(r.size());
    if (tau > 0.0) {
        // tau*(R+ - 2R + R-)/dt^2 + (R+ - R)/dt = rhs, solved for R+.
        const double a = tau / (dt * dt), b = 1.0 / dt;
        const double denom = a + b;
        for (std::size_t k = 0; k < rhs.size(); ++k) {
            next[k] = (rhs[k] + (2.0 * a + b) * r[k] -
                       a * state.r_prev.values[k]) /
                      denom;
        }
    } else {
        for (std::size_t k = 0; k < rhs.size(); ++k)
            next[k] = r[k] + dt * rhs[k];
    }

    for (std::size_t k = 0; k < next.size(); ++k) {
        if (!std::isfinite(next[k])) throw NonFiniteField(-1);
        if (next[k] < 0.0) {
            result.preclamp_negative =
                std::max(result.preclamp_negative, -next[k]);
            next[k] = 0.0;
        }
    }

    state.r_prev.values = std::move(state.r.values);
    state.r_prev.t = state.r.t;
    state.r.values = std::move(next);
    state.r.t += dt;
    return result;
}

std::vector<StepDiagnostics> evolve_window(
    const Recording& rec, const OcclusionWindow& window, int ego_id,
    const MergeTopology& topo, const SimParams& sim, const AblationConfig& ab,
    const FrameSink& sink) {
    if (rec.frames.empty() || window.start > window.end ||
        window.start < rec.first_frame() || window.end > rec.last_frame())
        throw WindowOutOfRange(window.start, window.end);

    const GridSpec& grid = sim.grid;
    const double h_frame = 1.0 / grid.frame_rate;
    FieldState state = make_state(grid, window.start * h_frame);

    std::vector<StepDiagnostics> log;
    bool have_prev_mask = false;
    ShadowMask prev_mask;

    for (int k = window.start; k <= window.end; ++k) {
        StepDiagnostics diag;
        diag.frame = k;
        const Frame* frame = rec.frame_at(k);
        if (!frame || !frame->find(ego_id)) {
            diag.skipped = true;
            diag.t = state.t();
            have_prev_mask = false;  // do not chain dS/dt across a gap
            log.push_back(diag);
            continue;
        }

        ShadowMask mask = compute_shadow_mask(
            *frame, ego_id, grid, sim.shadow, have_prev_mask ? &prev_mask : nullptr);

        ScalarField flow_depth;
        const ScalarField* depth_ptr = nullptr;
        if (sim.source.p_mode == EmergenceMode::kDepth) {
            Vec2 mean_v{0.0, 0.0};
            for (const auto& a : frame->agents) mean_v += a.velocity;
            if (!frame->agents.empty())
                mean_v = mean_v * (1.0 / static_cast<double>(frame->agents.size()));
            if (mean_v.norm() < 1e-9) mean_v = {1.0, 0.0};
            flow_depth = shadow_flow_depth(mask, mean_v);
            depth_ptr = &flow_depth;
        }

        if (ab.static_mode) {
            // Frame-wise snapshot: no temporal memory.
            state.r = total_source(*frame, ego_id, mask, topo, grid, sim.source,
                                   depth_ptr);
            state.r.t = frame->t + h_frame;
            state.r_prev = state.r;
            diag.t = state.r.t;
            diag.dt = h_frame;
            diag.substeps = 0;
        } else {
            const ScalarField q =
                total_source(*frame, ego_id, mask, topo, grid, sim.source, depth_ptr);
            VectorField v = ab.enable_advection
                                ? velocity_field(*frame, topo, grid, sim.source)
                                : make_vector_field(grid);
            ScalarField d_field = ab.enable_diffusion
                                      ? diffusivity_field(mask, grid, sim.pde)
                                      : make_field(grid, 0.0);
            ScalarField lambda = ab.enable_decay_coupling
                                     ? decay_field(mask, grid, sim.pde)
                                     : base_decay_field(grid, sim.pde);

            double d_max = 0.0;
            for (double dv : d_field.values) d_max = std::max(d_max, dv);
            double dt = sim.debug_forced_dt > 0.0
                            ? sim.debug_forced_dt
                            : stable_dt(sim.pde, grid, v, d_max);
            int n_sub = std::max(
                1, static_cast<int>(std::ceil(h_frame / dt - 1e-12)));
            dt = h_frame / n_sub;
            if (sim.debug_forced_dt > 0.0) {
                dt = sim.debug_forced_dt;
                n_sub = 1;
            }

            for (int s = 0; s < n_sub; ++s) {
                try {
                    const StepResult sr =
                        step(state, q, v, d_field, lambda, dt, sim.pde.tau);
                    diag.preclamp_negative =
                        std::max(diag.preclamp_negative, sr.preclamp_negative);
                } catch (NonFiniteField&) {
                    throw NonFiniteField(k);
                }
            }
            state.r.t = frame->t + h_frame;  // pin against dt round-off drift
            diag.t = state.r.t;
            diag.dt = dt;
            diag.substeps = n_sub;
        }

        diag.mass = integrate(state.r);
        const auto [mn, mx] =
            std::minmax_element(state.r.values.begin(), state.r.values.end());
        diag.min_value = *mn;
        diag.max_value = *mx;
        log.push_back(diag);

        if (sink) sink(*frame, state, mask, diag);
        prev_mask = std::move(mask);
        have_prev_mask = true;
    }
    return log;
}

}  // namespace drift
