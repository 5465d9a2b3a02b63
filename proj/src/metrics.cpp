#include "drift/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

namespace drift {

std::vector<std::uint8_t> RegionSpec::rasterize(const GridSpec& grid,
                                                Vec2 ego_pos,
                                                double ego_heading) const {
    std::vector<std::uint8_t> roi(grid.cell_count(), 0);
    if (mode == Mode::kFixedRect) {
        for (int j = 0; j < grid.ny; ++j)
            for (int i = 0; i < grid.nx; ++i) {
                const Vec2 p = grid.cell_center(i, j);
                if (std::abs(p.x - center.x) <= length * 0.5 &&
                    std::abs(p.y - center.y) <= width * 0.5)
                    roi[grid.index(i, j)] = 1;
            }
        return roi;
    }
    for (int j = 0; j < grid.ny; ++j)
        for (int i = 0; i < grid.nx; ++i) {
            const Vec2 r =
                ego_frame_transform(grid.cell_center(i, j), ego_pos, ego_heading);
            if (r.x >= 0.0 && r.x <= length && std::abs(r.y) <= width * 0.5)
                roi[grid.index(i, j)] = 1;
        }
    return roi;
}

double region_mean(const ScalarField& field,
                   const std::vector<std::uint8_t>& roi) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t k = 0; k < roi.size(); ++k) {
        if (!roi[k]) continue;
        sum += field.values[k];
        ++n;
    }
    return n > 0 ? sum / n : 0.0;
}

namespace {

// Half-extent of an oriented rectangle projected onto unit direction u.
double support(const AgentState& a, Vec2 u) {
    const double c = std::cos(a.heading), s = std::sin(a.heading);
    const Vec2 e_len{c, s}, e_wid{-s, c};
    return 0.5 * a.length * std::abs(u.dot(e_len)) +
           0.5 * a.width * std::abs(u.dot(e_wid));
}

}  // namespace

double rectangle_gap(const AgentState& a, const AgentState& b) {
    const Vec2 d = b.position - a.position;
    const double dist = d.norm();
    const Vec2 u = dist > 1e-9 ? d * (1.0 / dist) : Vec2{1.0, 0.0};
    return dist - support(a, u) - support(b, u);
}

std::optional<double> ttc(const AgentState& ego, const AgentState& other) {
    const Vec2 d = other.position - ego.position;
    const double dist = d.norm();
    if (dist < 1e-9) return std::nullopt;
    const Vec2 u = d * (1.0 / dist);
    const double gap = dist - support(ego, u) - support(other, u);
    const double closing = -(other.velocity - ego.velocity).dot(u);
    if (gap <= 0.0 || closing <= 0.0) return std::nullopt;
    return gap / closing;
}

std::vector<HazardEvent> detect_hazard_events(const Recording& rec, int ego_id,
                                              int first_frame, int last_frame,
                                              double ttc_threshold,
                                              double gap_threshold) {
    struct Open {
        double t_start;
        double t_last;
        HazardEvent::Trigger trigger;
    };
    std::map<int, Open> open;  // keyed by the other agent
    std::vector<HazardEvent> events;

    auto close = [&](int other_id, const Open& o) {
        HazardEvent ev;
        ev.t_event = o.t_start;
        ev.t_end = o.t_last;
        ev.agent_a = ego_id;
        ev.agent_b = other_id;
        ev.trigger = o.trigger;
        events.push_back(ev);
    };

    for (const auto& frame : rec.frames) {
        if (frame.index < first_frame || frame.index > last_frame) continue;
        const AgentState* ego = frame.find(ego_id);
        std::vector<int> still_active;
        if (ego) {
            for (const auto& other : frame.agents) {
                if (other.id == ego_id) continue;
                const auto t = ttc(*ego, other);
                const double gap = rectangle_gap(*ego, other);
                const bool ttc_hit = t.has_value() && *t < ttc_threshold;
                const bool gap_hit = gap < gap_threshold;
                if (!ttc_hit && !gap_hit) continue;
                still_active.push_back(other.id);
                auto it = open.find(other.id);
                if (it == open.end()) {
                    open[other.id] = {frame.t, frame.t,
                                      ttc_hit ? HazardEvent::Trigger::kTtcBelow
                                              : HazardEvent::Trigger::kGapBelow};
                } else {
                    it->second.t_last = frame.t;
                }
            }
        }
        for (auto it = open.begin(); it != open.end();) {
            if (std::find(still_active.begin(), still_active.end(), it->first) ==
                still_active.end()) {
                close(it->first, it->second);
                it = open.erase(it);
            } else {
                ++it;
            }
        }
    }
    for (const auto& [id, o] : open) close(id, o);
    std::sort(events.begin(), events.end(),
              [](const HazardEvent& a, const HazardEvent& b) {
                  if (a.t_event != b.t_event) return a.t_event < b.t_event;
                  return a.agent_b < b.agent_b;
              });
    return events;
}

const ScalarField* FieldSeries::at_time(double t) const {
    if (fields.empty()) return nullptr;
    // Nearest snapshot within three quarters of a frame; emitted times are
    // uniform except across skipped frames, so search instead of indexing.
    auto it = std::lower_bound(
        fields.begin(), fields.end(), t,
        [](const ScalarField& f, double tt) { return f.t < tt; });
    const ScalarField* best = nullptr;
    double best_gap = 0.75 / frame_rate;
    if (it != fields.end() && std::abs(it->t - t) < best_gap) {
        best = &*it;
        best_gap = std::abs(it->t - t);
    }
    if (it != fields.begin() && std::abs(std::prev(it)->t - t) < best_gap)
        best = &*std::prev(it);
    return best;
}

std::pair<int, int> lcrd_counts(const std::vector<LaneChangeEvent>& events,
                                const FieldSeries& series) {
    int usable = 0, toward_lower = 0;
    for (const auto& ev : events) {
        const ScalarField* field = series.at_time(ev.t_dec);
        if (!field) continue;
        const auto curr = field->spec.world_to_cell(ev.x_curr);
        const auto target = field->spec.world_to_cell(ev.x_target);
        if (!curr || !target) continue;
        ++usable;
        const double r_curr = field->at(curr->first, curr->second);
        const double r_target = field->at(target->first, target->second);
        if (r_curr > r_target) ++toward_lower;  // strict: ties count against
    }
    return {toward_lower, usable};
}

double lcrd(const std::vector<LaneChangeEvent>& events,
            const FieldSeries& series, int* usable_out) {
    const auto [toward_lower, usable] = lcrd_counts(events, series);
    if (usable_out) *usable_out = usable;
    if (usable == 0) throw NoUsableEvents("lcrd");
    return static_cast<double>(toward_lower) / usable;
}

double tai_single(const MeanSeries& series, double t_event, double theta,
                  double t_r, double lookback) {
    for (std::size_t k = 0; k < series.t.size(); ++k) {
        if (series.t[k] < t_event - lookback || series.t[k] > t_event) continue;
        if (series.mean[k] > theta) return (t_event - series.t[k]) / t_r;
    }
    return 0.0;
}

double tai(const std::vector<double>& event_times, const MeanSeries& series,
           double theta, double t_r, double lookback) {
    if (event_times.empty()) throw NoUsableEvents("tai");
    double sum = 0.0;
    for (double t_event : event_times)
        sum += tai_single(series, t_event, theta, t_r, lookback);
    return sum / static_cast<double>(event_times.size());
}

double rpr(const MeanSeries& series, const HazardEvent& event, double delta_t) {
    double peak = 0.0;
    for (std::size_t k = 0; k < series.t.size(); ++k)
        if (series.t[k] >= event.t_event && series.t[k] <= event.t_end)
            peak = std::max(peak, series.mean[k]);
    if (peak <= 0.0) throw ZeroPeak();

    const double t_e = event.t_end;
    double integral = 0.0;
    for (std::size_t k = 0; k + 1 < series.t.size(); ++k) {
        const double a = series.t[k], b = series.t[k + 1];
        if (b <= t_e || a >= t_e + delta_t) continue;
        // Clip the trapezoid to the window.
        const double lo = std::max(a, t_e), hi = std::min(b, t_e + delta_t);
        auto lerp = [&](double t) {
            const double w = (t - a) / (b - a);
            return series.mean[k] * (1.0 - w) + series.mean[k + 1] * w;
        };
        integral += 0.5 * (lerp(lo) + lerp(hi)) * (hi - lo);
    }
    return integral / (peak * delta_t);
}

double osi(const std::vector<std::pair<double, double>>& pts) {
    double rho_min = 1e300, rho_max = -1e300;
    for (const auto& [rho, mean] : pts) {
        rho_min = std::min(rho_min, rho);
        rho_max = std::max(rho_max, rho);
    }
    if (pts.size() < 2 || rho_max - rho_min < 1e-12) throw DegenerateRho();

    double sr = 0.0, sm = 0.0;
    for (const auto& [rho, mean] : pts) {
        sr += rho;
        sm += mean;
    }
    const double n = static_cast<double>(pts.size());
    const double rbar = sr / n, mbar = sm / n;
    double num = 0.0, den = 0.0;
    for (const auto& [rho, mean] : pts) {
        num += (rho - rbar) * (mean - mbar);
        den += (rho - rbar) * (rho - rbar);
    }
    return num / den;
}

OrlResult orl(const MeanSeries& series, double t_shadow, double theta,
              OrlMode mode, double cap) {
    for (std::size_t k = 0; k < series.t.size(); ++k) {
        if (series.t[k] < t_shadow) continue;
        if (series.t[k] > t_shadow + cap) break;
        const bool crossed = mode == OrlMode::kOnset ? series.mean[k] > theta
                                                     : series.mean[k] < theta;
        if (crossed) return {series.t[k] - t_shadow, false};
    }
    return {cap, true};
}

double temporal_consistency(const std::vector<double>& series) {
    const std::size_t n = series.size();
    if (n < 3) throw SeriesTooShort();

    const auto [mn, mx] = std::minmax_element(series.begin(), series.end());
    if (*mx - *mn <= 1e-15 * std::max(1.0, std::abs(*mx)))
        return 1.0;  // constant by convention

    double mean_x = 0.0, mean_y = 0.0;
    const std::size_t m = n - 1;
    for (std::size_t k = 0; k < m; ++k) {
        mean_x += series[k];
        mean_y += series[k + 1];
    }
    mean_x /= m;
    mean_y /= m;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double dx = series[k] - mean_x;
        const double dy = series[k + 1] - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

double delta_coll(const std::vector<std::pair<bool, bool>>& pair_outcomes) {
    if (pair_outcomes.empty()) throw NoPairs();
    int occ = 0, vis = 0;
    for (const auto& [o, v] : pair_outcomes) {
        occ += o ? 1 : 0;
        vis += v ? 1 : 0;
    }
    const double n = static_cast<double>(pair_outcomes.size());
    return (occ / n - vis / n) * 100.0;
}

std::string format_report(const MetricsReport& report) {
    std::string out;
    char buf[64];
    auto emit = [&](const char* name, const MetricsReport::Entry& e) {
        if (e.value) {
            std::snprintf(buf, sizeof(buf), "%s=%.4f\n", name, *e.value);
            out += buf;
        }
        std::snprintf(buf, sizeof(buf), "%s_n=%d\n", name, e.n);
        out += buf;
    };
    emit("lcrd", report.lcrd);
    emit("rpr", report.rpr);
    emit("tai", report.tai);
    emit("osi", report.osi);
    emit("orl", report.orl);
    emit("delta_coll", report.delta_coll);
    emit("temp", report.temp);
    std::snprintf(buf, sizeof(buf), "theta=%.4f\n", report.theta);
    out += buf;
    return out;
}

void write_report(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << format_report(report);
}

}  // namespace drift
