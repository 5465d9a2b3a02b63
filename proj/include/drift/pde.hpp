#ifndef DRIFT_PDE_HPP
#define DRIFT_PDE_HPP

#include <functional>
#include <vector>

#include "drift/grid.hpp"
#include "drift/shadow.hpp"
#include "drift/sources.hpp"
#include "drift/trajectory.hpp"

namespace drift {

struct PdeParams {
    double d0 = 1.0;          // m^2/s, base diffusion
    double d_occ = 3.0;       // m^2/s, in-shadow diffusion
    double lambda0 = 0.15;    // 1/s, base decay
    double lambda_sh = 1.3;   // 1/s, shadow-retreat decay boost
    double lambda_g = 1.0;    // geometry-coupling gain
    double sdot_ref = 1.0;    // 1/s, shadow-rate normalization
    double tau = 0.0;         // s^2, optional telegrapher coefficient
    double sponge_width = 10.0;  // m
    double sponge_gain = 5.0;    // 1/s at the downstream edge
    double cfl_safety = 0.5;
};

/// Ablation arms toggle individual PDE operators; static_mode bypasses the
/// PDE entirely and emits the frame-wise source snapshot.
struct AblationConfig {
    bool enable_diffusion = true;
    bool enable_advection = true;
    bool enable_decay_coupling = true;
    bool static_mode = false;

    void validate() const;
};

struct FieldState {
    ScalarField r;
    ScalarField r_prev;  // consumed only when tau > 0

    double t() const { return r.t; }
};

FieldState make_state(const GridSpec& grid, double t0);

struct StepDiagnostics {
    int frame = 0;
    double t = 0.0;
    double dt = 0.0;  // sub-step actually used
    int substeps = 0;
    double mass = 0.0;
    double max_value = 0.0;
    double min_value = 0.0;
    double preclamp_negative = 0.0;  // largest undershoot clamped away
    bool skipped = false;            // ego absent; field untouched
};

struct CflViolation : SolverError {
    CflViolation(double dt_used, double bound_value)
        : SolverError("CFL violation: dt=" + std::to_string(dt_used) +
                      " exceeds bound=" + std::to_string(bound_value)),
          dt(dt_used),
          bound(bound_value) {}
    double dt;
    double bound;
};
struct NonFiniteField : SolverError {
    explicit NonFiniteField(int frame)
        : SolverError("non-finite field value at frame " + std::to_string(frame)) {}
};
struct WindowOutOfRange : SolverError {
    WindowOutOfRange(int start, int end)
        : SolverError("window [" + std::to_string(start) + ", " +
                      std::to_string(end) + "] outside recording") {}
};

/// lambda(x,t) = lambda0*(1-S)
///             + lambda_sh*clamp(-(dS/dt)*lambda_g/sdot_ref, 0, 1)
///             + lambda_sponge(x).
/// Decay collapses inside expanding shadows (latent risk accumulates) and
/// spikes where a shadow retreats (stale risk clears).
ScalarField decay_field(const ShadowMask& mask, const GridSpec& grid,
                        const PdeParams& params);

/// lambda0 + sponge only; the decay-coupling ablation arm.
ScalarField base_decay_field(const GridSpec& grid, const PdeParams& params);

/// Quadratic absorbing ramp over the last sponge_width meters before the
/// downstream (max-x) boundary; zero elsewhere.
double sponge_rate(const GridSpec& grid, const PdeParams& params, double x);

/// D = d0 + (d_occ - d0) * S.
ScalarField diffusivity_field(const ShadowMask& mask, const GridSpec& grid,
                              const PdeParams& params);

/// cfl_safety * min(h^2/(4 Dmax), h/(vmax+eps)) with h = min(dx,dy), capped
/// at the frame interval. d_max < 0 uses max(d0, d_occ) from params.
double stable_dt(const PdeParams& params, const GridSpec& grid,
                 const VectorField& v, double d_max = -1.0);

struct StepResult {
    double preclamp_negative = 0.0;
};

/// One explicit update of dR/dt = div(D grad R) - div(v R) + Q - lambda R.
/// Five-point central diffusion with face-averaged D, donor-cell upwind
/// advection, closed (zero-flux) boundary faces, negative round-off clamped
/// to zero. tau > 0 switches to the damped leapfrog form.
StepResult step(FieldState& state, const ScalarField& q, const VectorField& v,
                const ScalarField& d, const ScalarField& lambda, double dt,
                double tau);

struct SimParams {
    GridSpec grid;
    SourceParams source;
    PdeParams pde;
    ShadowParams shadow;
    SelectionZone zone;
    double t_pad = 2.0;            // s, window padding
    double debug_forced_dt = 0.0;  // >0 bypasses stable_dt (test hook)
};

/// Per-frame observer; mask and state are borrowed for the duration of the
/// call only.
using FrameSink = std::function<void(const Frame&, const FieldState&,
                                     const ShadowMask&, const StepDiagnostics&)>;

/// Evolve the field across one occlusion window: per frame, rebuild the
/// shadow mask, sources, velocity, diffusivity and decay, then sub-step the
/// PDE across the frame interval. Frames without the ego are skipped with a
/// diagnostic. static_mode emits frame-wise source snapshots instead.
std::vector<StepDiagnostics> evolve_window(
    const Recording& rec, const OcclusionWindow& window, int ego_id,
    const MergeTopology& topo, const SimParams& sim, const AblationConfig& ab,
    const FrameSink& sink = {});

}  // namespace drift

#endif  // DRIFT_PDE_HPP
