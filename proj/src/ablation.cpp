#include "drift/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace drift {

ScalarField static_field(const Frame& frame, int ego_id,
                         const ShadowMask& mask, const MergeTopology& topo,
                         const GridSpec& grid, const SourceParams& params) {
    return total_source(frame, ego_id, mask, topo, grid, params);
}

double field_scale(const AblationConfig& ab, const PdeParams& pde) {
    // Evolved fields accumulate toward Q/lambda0; rescale so a lone steady
    // car peaks near 1 and the same thresholds fit both field kinds.
    return ab.static_mode ? 1.0 : pde.lambda0;
}

WindowCapture capture_window(const Recording& rec, const OcclusionWindow& w,
                             int ego_id, const MergeTopology& topo,
                             const SimParams& sim, const AblationConfig& ab,
                             const MetricParams& metric, bool keep_fields) {
    WindowCapture cap;
    cap.ego_id = ego_id;
    cap.window = w;
    cap.scale = field_scale(ab, sim.pde);
    cap.fields.frame_rate = sim.grid.frame_rate;

    const auto sink = [&](const Frame& frame, const FieldState& state,
                          const ShadowMask& mask, const StepDiagnostics& diag) {
        const AgentState* ego = frame.find(ego_id);
        const auto roi = metric.region.rasterize(sim.grid, ego->position,
                                                 ego->heading);
        int roi_count = 0;
        for (auto v : roi) roi_count += v != 0;
        if (roi_count > 0) {
            cap.mean.t.push_back(diag.t);
            cap.mean.mean.push_back(region_mean(state.r, roi) * cap.scale);
            cap.rho.push_back(occlusion_ratio(mask, roi));
            cap.smean.push_back(region_mean(mask.s, roi));
            cap.valid.push_back(1);
        }
        if (keep_fields) cap.fields.fields.push_back(state.r);
    };

    evolve_window(rec, w, ego_id, topo, sim, ab, sink);
    return cap;
}

std::vector<double> shadow_transitions(const WindowCapture& cap,
                                       const MetricParams& metric) {
    std::vector<double> times;
    const double thr = metric.rho_transition;
    for (std::size_t k = 1; k < cap.rho.size(); ++k) {
        const bool onset = cap.rho[k - 1] <= thr && cap.rho[k] > thr;
        const bool clearance = cap.rho[k - 1] >= thr && cap.rho[k] < thr;
        if ((metric.orl_mode == OrlMode::kOnset && onset) ||
            (metric.orl_mode == OrlMode::kClearance && clearance))
            times.push_back(cap.mean.t[k]);
    }
    return times;
}

std::vector<int> ego_candidates(const Recording& rec) {
    static const ClassSet kDrivable = {
        AgentClass::kCar,          AgentClass::kVan,
        AgentClass::kTruck,        AgentClass::kTruckTrailer,
        AgentClass::kBus,          AgentClass::kMotorcycle};
    std::set<int> ids;
    for (const auto& f : rec.frames)
        for (const auto& a : f.agents)
            if (kDrivable.count(a.cls)) ids.insert(a.id);
    return {ids.begin(), ids.end()};
}

MetricsReport evaluate_recording(const Recording& rec,
                                 const std::vector<int>& egos,
                                 const MergeTopology& topo,
                                 const SimParams& sim,
                                 const AblationConfig& ab,
                                 const MetricParams& metric, int jobs) {
    struct Job {
        int ego;
        OcclusionWindow window;
    };
    std::vector<Job> jobs_list;
    for (int ego : egos) {
        std::vector<OcclusionWindow> windows;
        try {
            windows = extract_occlusion_windows(rec, ego, sim.zone,
                                                sim.shadow.heavy, sim.t_pad);
        } catch (const EgoMissing&) {
            continue;
        }
        for (const auto& w : windows) jobs_list.push_back({ego, w});
    }

    std::vector<WindowCapture> captures(jobs_list.size());
    parallel_for_index(
        static_cast<int>(jobs_list.size()), jobs, [&](int i) {
            captures[static_cast<std::size_t>(i)] = capture_window(
                rec, jobs_list[static_cast<std::size_t>(i)].window,
                jobs_list[static_cast<std::size_t>(i)].ego, topo, sim, ab,
                metric, /*keep_fields=*/true);
        });

    std::vector<LaneChangeEvent> lane_events;
    try {
        lane_events = detect_lane_changes(rec, metric.t_dec);
    } catch (const NoLaneInformation&) {
    }

    MetricsReport report;
    report.theta = metric.theta;

    int lcrd_hits = 0, lcrd_usable = 0;
    double tai_sum = 0.0;
    int tai_n = 0;
    double rpr_sum = 0.0;
    int rpr_n = 0;
    std::vector<std::pair<double, double>> osi_points;
    double orl_sum = 0.0;
    int orl_n = 0;
    double temp_sum = 0.0, temp_weight = 0.0;
    int temp_n = 0;

    for (std::size_t c = 0; c < captures.size(); ++c) {
        const WindowCapture& cap = captures[c];
        if (cap.mean.t.empty()) continue;

        const auto [hits, usable] = lcrd_counts(lane_events, cap.fields);
        lcrd_hits += hits;
        lcrd_usable += usable;

        const auto events = detect_hazard_events(
            rec, cap.ego_id, cap.window.start, cap.window.end,
            metric.ttc_event, metric.gap_event);
        const double t_first = cap.mean.t.front();
        const double t_last = cap.mean.t.back();
        for (const auto& ev : events) {
            if (ev.t_event < t_first || ev.t_event > t_last) continue;
            tai_sum += tai_single(cap.mean, ev.t_event, metric.theta,
                                  metric.t_r, metric.tai_lookback);
            ++tai_n;
            if (ev.t_end + metric.rpr_dt <= t_last) {
                try {
                    rpr_sum += rpr(cap.mean, ev, metric.rpr_dt);
                    ++rpr_n;
                } catch (const ZeroPeak&) {
                }
            }
        }

        for (std::size_t k = 0; k < cap.rho.size(); ++k)
            osi_points.emplace_back(cap.rho[k], cap.mean.mean[k]);

        for (double t_shadow : shadow_transitions(cap, metric)) {
            const OrlResult r = orl(cap.mean, t_shadow, metric.theta,
                                    metric.orl_mode, metric.orl_cap);
            orl_sum += r.latency;
            ++orl_n;
        }

        if (cap.mean.mean.size() >= 3) {
            const double w = static_cast<double>(cap.mean.mean.size() - 1);
            temp_sum += temporal_consistency(cap.mean.mean) * w;
            temp_weight += w;
            ++temp_n;
        }
    }

    report.lcrd.n = lcrd_usable;
    if (lcrd_usable > 0)
        report.lcrd.value = static_cast<double>(lcrd_hits) / lcrd_usable;
    report.tai.n = tai_n;
    if (tai_n > 0) report.tai.value = tai_sum / tai_n;
    report.rpr.n = rpr_n;
    if (rpr_n > 0) report.rpr.value = rpr_sum / rpr_n;
    report.osi.n = static_cast<int>(osi_points.size());
    try {
        report.osi.value = osi(osi_points);
    } catch (const DegenerateRho&) {
        report.osi.value.reset();
    }
    report.orl.n = orl_n;
    if (orl_n > 0) report.orl.value = orl_sum / orl_n;
    report.temp.n = temp_n;
    if (temp_weight > 0.0) report.temp.value = temp_sum / temp_weight;
    return report;
}

std::vector<std::pair<std::string, AblationConfig>> standard_arms() {
    AblationConfig source_only{false, false, false, false};
    AblationConfig diffusion{true, false, false, false};
    AblationConfig advection{true, true, false, false};
    AblationConfig full{true, true, true, false};
    return {{"source_only", source_only},
            {"diffusion", diffusion},
            {"advection", advection},
            {"full", full}};
}

std::vector<ArmReport> run_ablation(const Recording& rec,
                                    const std::vector<int>& egos,
                                    const MergeTopology& topo,
                                    const SimParams& sim,
                                    const MetricParams& metric, int jobs) {
    std::vector<ArmReport> table;
    for (const auto& [name, ab] : standard_arms()) {
        ArmReport arm;
        arm.arm = name;
        arm.report = evaluate_recording(rec, egos, topo, sim, ab, metric, jobs);
        table.push_back(std::move(arm));
    }
    return table;
}

std::string format_ablation_csv(const std::vector<ArmReport>& table) {
    std::string out = "arm,metric,value,n\n";
    char buf[96];
    auto emit = [&](const std::string& arm, const char* name,
                    const MetricsReport::Entry& e) {
        if (e.value)
            std::snprintf(buf, sizeof(buf), "%s,%s,%.4f,%d\n", arm.c_str(),
                          name, *e.value, e.n);
        else
            std::snprintf(buf, sizeof(buf), "%s,%s,,%d\n", arm.c_str(), name,
                          e.n);
        out += buf;
    };
    for (const auto& arm : table) {
        emit(arm.arm, "lcrd", arm.report.lcrd);
        emit(arm.arm, "rpr", arm.report.rpr);
        emit(arm.arm, "tai", arm.report.tai);
        emit(arm.arm, "osi", arm.report.osi);
        emit(arm.arm, "orl", arm.report.orl);
        emit(arm.arm, "delta_coll", arm.report.delta_coll);
        emit(arm.arm, "temp", arm.report.temp);
    }
    return out;
}

// ---- synthetic corpus ----

namespace {

constexpr double kLaneAccel = 29.5;
constexpr double kLaneMain = 34.0;
constexpr double kLaneLeft = 38.5;

int lane_for_y(double y) {
    if (y < 0.5 * (kLaneAccel + kLaneMain)) return 1;
    if (y < 0.5 * (kLaneMain + kLaneLeft)) return 2;
    return 3;
}

MergeTopology merge_zone_topology() {
    MergeTopology topo;
    MergePolygon zone;
    zone.id = 1;
    zone.vertices = {{85.0, 27.5}, {118.0, 27.5}, {118.0, 31.8}, {85.0, 31.8}};
    zone.lateral_dir = {0.0, 1.0};
    topo.polygons.push_back(zone);
    topo.sigma_m = 6.0;
    topo.lanes = {
        {1, {{0.0, kLaneAccel}, {149.0, kLaneAccel}}, 12.0},
        {2, {{0.0, kLaneMain}, {149.0, kLaneMain}}, 21.0},
        {3, {{0.0, kLaneLeft}, {149.0, kLaneLeft}}, 21.0},
    };
    return topo;
}

// Position of a scripted agent at time t, walking its segments.
struct ScriptState {
    Vec2 pos;
    Vec2 vel;
    Vec2 acc;
    double heading;
    bool active;
};

ScriptState script_state(const std::vector<SyntheticScenario::Segment>& segs,
                         double t) {
    for (const auto& s : segs) {
        if (t < s.t_start - 1e-9 || t > s.t_start + s.duration + 1e-9) continue;
        const double tau = std::clamp(t - s.t_start, 0.0, s.duration);
        const Vec2 dir{std::cos(s.heading), std::sin(s.heading)};
        ScriptState st;
        st.pos = s.p0 + dir * (s.v0 * tau + 0.5 * s.accel * tau * tau);
        st.vel = dir * (s.v0 + s.accel * tau);
        st.acc = dir * s.accel;
        st.heading = s.heading;
        st.active = true;
        return st;
    }
    return {Vec2{}, Vec2{}, Vec2{}, 0.0, false};
}

// End state of a segment, used to chain the next one.
SyntheticScenario::Segment chain(const SyntheticScenario::Segment& prev,
                                 double duration, double heading,
                                 double accel) {
    const Vec2 dir{std::cos(prev.heading), std::sin(prev.heading)};
    SyntheticScenario::Segment next;
    next.agent_id = prev.agent_id;
    next.t_start = prev.t_start + prev.duration;
    next.duration = duration;
    next.p0 = prev.p0 + dir * (prev.v0 * prev.duration +
                               0.5 * prev.accel * prev.duration * prev.duration);
    next.v0 = prev.v0 + prev.accel * prev.duration;
    next.heading = heading;
    next.accel = accel;
    return next;
}

}  // namespace

SyntheticScenario make_merge_scenario(std::uint64_t seed) {
    Rng rng(seed * 0x9E3779B97F4A7C15ULL + 0x1234567ULL);
    SyntheticScenario sc;
    sc.seed = seed;
    sc.duration = 6.5;
    sc.ego_id = 0;
    sc.occluder_id = 1;
    sc.topology = merge_zone_topology();

    const double ego_x0 = 8.0 + rng.uniform(-2.0, 2.0);
    const double ego_v = 21.0 + rng.uniform(-1.0, 1.0);
    const double truck_x0 = ego_x0 + 22.0 + rng.uniform(-3.0, 3.0);
    const double truck_v = 15.0 + rng.uniform(-0.5, 0.5);
    const double car_x0 = truck_x0 + 26.0 + rng.uniform(-3.0, 3.0);
    const double car_v = 8.0 + rng.uniform(-1.0, 1.0);
    const double t_merge = 1.2 + rng.uniform(0.0, 0.6);

    sc.agents = {
        {0, AgentClass::kCar, 4.5, 1.8},
        {1, AgentClass::kTruckTrailer, 14.0, 2.4},
        {2, AgentClass::kCar, 4.5, 1.8},
    };

    // Truck cruises in the acceleration lane for the whole run.
    sc.segments.push_back({1, 0.0, sc.duration, {truck_x0, kLaneAccel},
                           truck_v, 0.0, 0.0});

    // Hidden car: cruise, merge across to the main lane, settle.
    const double merge_heading = 0.25;
    const double merge_accel = 0.5;
    SyntheticScenario::Segment car_cruise{2, 0.0, t_merge,
                                          {car_x0, kLaneAccel}, car_v, 0.0,
                                          0.2};
    // Solve v0*sin(h)*T + 0.5*a*sin(h)*T^2 = lane offset for the merge time.
    const double v_m = car_cruise.v0 + car_cruise.accel * car_cruise.duration;
    const double dy = kLaneMain - kLaneAccel;
    const double sh = std::sin(merge_heading);
    const double aa = 0.5 * merge_accel * sh, bb = v_m * sh, cc = -dy;
    const double t_cross = (-bb + std::sqrt(bb * bb - 4.0 * aa * cc)) / (2.0 * aa);
    SyntheticScenario::Segment car_merge =
        chain(car_cruise, t_cross, merge_heading, merge_accel);
    SyntheticScenario::Segment car_settle = chain(
        car_merge, std::max(0.1, sc.duration - car_merge.t_start - t_cross),
        0.0, 0.2);
    car_settle.p0.y = kLaneMain;  // snap the settle leg onto the lane center
    sc.segments.push_back(car_cruise);
    sc.segments.push_back(car_merge);
    sc.segments.push_back(car_settle);

    // Ego: cruise, then a scripted evasive swerve to the left lane once the
    // merged car is close ahead (playback mode only; policy episodes keep
    // the ego longitudinal).
    SyntheticScenario::Segment ego_cruise{0, 0.0, sc.duration,
                                          {ego_x0, kLaneMain}, ego_v, 0.0, 0.0};
    double t_swerve = -1.0;
    for (double t = 0.5; t < sc.duration; t += 0.05) {
        const auto car = script_state({car_cruise, car_merge, car_settle}, t);
        if (!car.active) continue;
        const double ego_x = ego_x0 + ego_v * t;
        if (car.pos.x - ego_x < 26.0 && car.pos.y > 31.0) {
            t_swerve = t;
            break;
        }
    }
    const double swerve_heading = 0.21;
    const double t_lane = dy / (ego_v * std::sin(swerve_heading) + 1e-9);
    if (t_swerve > 0.0 && t_swerve + t_lane < sc.duration - 0.2) {
        ego_cruise.duration = t_swerve;
        SyntheticScenario::Segment ego_swerve =
            chain(ego_cruise, t_lane, swerve_heading, 0.0);
        SyntheticScenario::Segment ego_settle =
            chain(ego_swerve, sc.duration - t_swerve - t_lane, 0.0, 0.0);
        ego_settle.p0.y = kLaneLeft;
        sc.segments.push_back(ego_cruise);
        sc.segments.push_back(ego_swerve);
        sc.segments.push_back(ego_settle);
    } else {
        sc.segments.push_back(ego_cruise);
    }

    std::sort(sc.segments.begin(), sc.segments.end(),
              [](const SyntheticScenario::Segment& a,
                 const SyntheticScenario::Segment& b) {
                  if (a.agent_id != b.agent_id) return a.agent_id < b.agent_id;
                  return a.t_start < b.t_start;
              });
    return sc;
}

std::vector<SyntheticScenario> make_merge_corpus(int count,
                                                 std::uint64_t base_seed) {
    std::vector<SyntheticScenario> corpus;
    corpus.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k)
        corpus.push_back(make_merge_scenario(base_seed + static_cast<std::uint64_t>(k)));
    return corpus;
}

Recording scenario_to_recording(const SyntheticScenario& sc, double frame_rate,
                                bool drop_occluder, bool use_ego_scripts) {
    Recording rec;
    rec.frame_rate = frame_rate;
    rec.location_tag = "synthetic";
    rec.lanes = sc.topology.lanes;

    std::map<int, std::vector<SyntheticScenario::Segment>> per_agent;
    for (const auto& s : sc.segments) per_agent[s.agent_id].push_back(s);
    std::map<int, SyntheticScenario::AgentMeta> meta;
    for (const auto& m : sc.agents) meta[m.id] = m;

    const int frames = static_cast<int>(std::floor(sc.duration * frame_rate)) + 1;
    for (int k = 0; k < frames; ++k) {
        Frame f;
        f.index = k;
        f.t = k / frame_rate;
        f.ego_id = sc.ego_id;
        for (const auto& [id, segs] : per_agent) {
            if (id == sc.occluder_id && drop_occluder) continue;
            if (id == sc.ego_id && !use_ego_scripts) continue;
            const ScriptState st = script_state(segs, f.t);
            if (!st.active) continue;
            AgentState a;
            a.id = id;
            a.position = st.pos;
            a.velocity = st.vel;
            a.acceleration = st.acc;
            a.heading = st.heading;
            const auto mit = meta.find(id);
            if (mit != meta.end()) {
                a.cls = mit->second.cls;
                a.length = mit->second.length;
                a.width = mit->second.width;
            }
            a.lane_id = lane_for_y(st.pos.y);
            f.agents.push_back(a);
        }
        rec.frames.push_back(std::move(f));
    }
    return rec;
}

void save_scenario(const SyntheticScenario& sc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << "kind,agent_id,t_start,duration,x0,y0,v0,heading,a,extra\n";
    char buf[240];
    std::snprintf(buf, sizeof(buf), "flag,0,0,0,%d,0,0,0,0,ego_id\n", sc.ego_id);
    out << buf;
    std::snprintf(buf, sizeof(buf), "flag,0,0,0,%d,0,0,0,0,occluder_id\n",
                  sc.occluder_id);
    out << buf;
    std::snprintf(buf, sizeof(buf), "flag,0,0,0,%d,0,0,0,0,occluder_present\n",
                  sc.occluder_present ? 1 : 0);
    out << buf;
    std::snprintf(buf, sizeof(buf), "flag,0,0,0,%.9g,0,0,0,0,duration\n",
                  sc.duration);
    out << buf;
    std::snprintf(buf, sizeof(buf), "flag,0,0,0,%llu,0,0,0,0,seed\n",
                  static_cast<unsigned long long>(sc.seed));
    out << buf;
    for (const auto& m : sc.agents) {
        std::snprintf(buf, sizeof(buf), "agent,%d,0,0,%.9g,%.9g,0,0,0,%s\n",
                      m.id, m.length, m.width, to_string(m.cls).c_str());
        out << buf;
    }
    for (const auto& s : sc.segments) {
        std::snprintf(buf, sizeof(buf),
                      "segment,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,\n",
                      s.agent_id, s.t_start, s.duration, s.p0.x, s.p0.y, s.v0,
                      s.heading, s.accel);
        out << buf;
    }
}

SyntheticScenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open file: " + path);
    SyntheticScenario sc;
    sc.segments.clear();
    sc.agents.clear();
    std::string line;
    int line_no = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++line_no;
        line.erase(std::remove(line.begin(), line.end(), '\r'), line.end());
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        std::istringstream ss(line);
        std::vector<std::string> f;
        std::string tok;
        while (std::getline(ss, tok, ',')) f.push_back(tok);
        if (f.size() < 10) throw MalformedRow(path, line_no);
        auto num = [&](int i) { return std::strtod(f[static_cast<std::size_t>(i)].c_str(), nullptr); };
        if (f[0] == "flag") {
            const std::string& name = f[9];
            if (name == "ego_id") sc.ego_id = static_cast<int>(num(4));
            else if (name == "occluder_id") sc.occluder_id = static_cast<int>(num(4));
            else if (name == "occluder_present") sc.occluder_present = num(4) != 0.0;
            else if (name == "duration") sc.duration = num(4);
            else if (name == "seed") sc.seed = static_cast<std::uint64_t>(num(4));
            else throw MalformedRow(path, line_no);
        } else if (f[0] == "agent") {
            SyntheticScenario::AgentMeta m;
            m.id = static_cast<int>(num(1));
            m.length = num(4);
            m.width = num(5);
            m.cls = agent_class_from_string(f[9]);
            sc.agents.push_back(m);
        } else if (f[0] == "segment") {
            SyntheticScenario::Segment s;
            s.agent_id = static_cast<int>(num(1));
            s.t_start = num(2);
            s.duration = num(3);
            s.p0 = {num(4), num(5)};
            s.v0 = num(6);
            s.heading = num(7);
            s.accel = num(8);
            sc.segments.push_back(s);
        } else {
            throw MalformedRow(path, line_no);
        }
    }
    return sc;
}

EpisodeLog run_paired_episode(const SyntheticScenario& sc, bool with_occluder,
                              FieldMode mode,
                              const ReactivePolicyParams& policy,
                              const SimParams& sim,
                              const MetricParams& metric) {
    const GridSpec& grid = sim.grid;
    const double h = 1.0 / grid.frame_rate;
    const Recording rec = scenario_to_recording(
        sc, grid.frame_rate, !with_occluder, /*use_ego_scripts=*/false);

    // Ego starts on its first scripted segment.
    AgentState ego;
    ego.id = sc.ego_id;
    for (const auto& m : sc.agents)
        if (m.id == sc.ego_id) {
            ego.cls = m.cls;
            ego.length = m.length;
            ego.width = m.width;
        }
    double ego_speed = 0.0;
    {
        const SyntheticScenario::Segment* first = nullptr;
        for (const auto& s : sc.segments)
            if (s.agent_id == sc.ego_id && (!first || s.t_start < first->t_start))
                first = &s;
        if (!first) throw Error("scenario has no ego segment");
        ego.position = first->p0;
        ego.heading = first->heading;
        ego_speed = first->v0;
    }

    const AblationConfig ab = mode == FieldMode::kStatic
                                  ? AblationConfig{true, true, true, true}
                                  : AblationConfig{};
    const double scale = field_scale(ab, sim.pde);

    FieldState state = make_state(grid, 0.0);
    ShadowMask prev_mask;
    bool have_prev = false;

    EpisodeLog log;
    const int frames = static_cast<int>(std::floor(sc.duration * grid.frame_rate)) + 1;
    for (int k = 0; k < frames; ++k) {
        const double t = k / grid.frame_rate;
        Frame frame;
        if (const Frame* f = rec.frame_at(k)) frame = *f;
        frame.index = k;
        frame.t = t;
        frame.ego_id = sc.ego_id;
        ego.velocity = {ego_speed * std::cos(ego.heading),
                        ego_speed * std::sin(ego.heading)};
        frame.agents.push_back(ego);
        std::sort(frame.agents.begin(), frame.agents.end(),
                  [](const AgentState& a, const AgentState& b) { return a.id < b.id; });

        ShadowMask mask = compute_shadow_mask(frame, sc.ego_id, grid, sim.shadow,
                                              have_prev ? &prev_mask : nullptr);

        // The field only sees what the ego can see: agents whose center sits
        // in the occluded region are withheld from source construction.
        Frame observed = frame;
        observed.agents.clear();
        for (const auto& a : frame.agents) {
            if (a.id != sc.ego_id) {
                const auto cell = grid.world_to_cell(a.position);
                if (cell && mask.occ[grid.index(cell->first, cell->second)])
                    continue;
            }
            observed.agents.push_back(a);
        }

        if (mode == FieldMode::kStatic) {
            state.r = static_field(observed, sc.ego_id, mask, sc.topology, grid,
                                   sim.source);
            state.r.t = t + h;
        } else {
            const ScalarField q = total_source(observed, sc.ego_id, mask,
                                               sc.topology, grid, sim.source);
            const VectorField v =
                velocity_field(observed, sc.topology, grid, sim.source);
            const ScalarField d_field = diffusivity_field(mask, grid, sim.pde);
            const ScalarField lambda = decay_field(mask, grid, sim.pde);
            double d_max = 0.0;
            for (double dv : d_field.values) d_max = std::max(d_max, dv);
            double dt = stable_dt(sim.pde, grid, v, d_max);
            const int n_sub =
                std::max(1, static_cast<int>(std::ceil(h / dt - 1e-12)));
            dt = h / n_sub;
            for (int s = 0; s < n_sub; ++s)
                step(state, q, v, d_field, lambda, dt, sim.pde.tau);
            state.r.t = t + h;
        }

        const auto roi =
            policy.lookahead.rasterize(grid, ego.position, ego.heading);
        const double mean = region_mean(state.r, roi) * scale;
        double a_cmd = -policy.k_b * std::max(0.0, mean - policy.theta_brake);
        a_cmd = std::max(a_cmd, policy.a_min);

        bool near = false;
        for (const auto& other : frame.agents) {
            if (other.id == sc.ego_id) continue;
            const auto t_c = ttc(ego, other);
            if ((t_c && *t_c < metric.ttc_near) ||
                rectangle_gap(ego, other) < metric.gap_near) {
                near = true;
                break;
            }
        }

        log.t.push_back(t);
        log.ego_pos.push_back(ego.position);
        log.ego_speed.push_back(ego_speed);
        log.accel_cmd.push_back(a_cmd);
        log.near_collision.push_back(near ? 1 : 0);
        log.any_near_collision = log.any_near_collision || near;
        if (a_cmd < -1e-3 && log.first_brake_t < 0.0) log.first_brake_t = t;

        const double new_speed = std::max(0.0, ego_speed + a_cmd * h);
        const double mean_speed = 0.5 * (ego_speed + new_speed);
        ego.position += Vec2{std::cos(ego.heading), std::sin(ego.heading)} *
                        (mean_speed * h);
        ego_speed = new_speed;
        prev_mask = std::move(mask);
        have_prev = true;
    }
    return log;
}

std::vector<std::pair<bool, bool>> run_paired_corpus(
    const std::vector<SyntheticScenario>& corpus, FieldMode mode,
    const ReactivePolicyParams& policy, const SimParams& sim,
    const MetricParams& metric, int jobs) {
    std::vector<std::pair<bool, bool>> outcomes(corpus.size());
    parallel_for_index(static_cast<int>(corpus.size()), jobs, [&](int i) {
        const auto& sc = corpus[static_cast<std::size_t>(i)];
        const EpisodeLog occluded =
            run_paired_episode(sc, true, mode, policy, sim, metric);
        const EpisodeLog visible =
            run_paired_episode(sc, false, mode, policy, sim, metric);
        outcomes[static_cast<std::size_t>(i)] = {occluded.any_near_collision,
                                                 visible.any_near_collision};
    });
    return outcomes;
}

}  // namespace drift
