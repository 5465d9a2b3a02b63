#include "drift/trajectory.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace drift {

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

// Maps schema-specific header names onto the normalized column names.
std::string normalize_column(const std::string& schema, const std::string& raw) {
    if (schema == "exid") {
        static const std::unordered_map<std::string, std::string> kMap = {
            {"trackid", "id"},          {"frame", "frame"},
            {"xcenter", "x_center"},    {"ycenter", "y_center"},
            {"xvelocity", "x_velocity"},{"yvelocity", "y_velocity"},
            {"xacceleration", "x_acceleration"},
            {"yacceleration", "y_acceleration"},
            {"heading", "heading_deg"}, {"width", "width"},
            {"length", "length"},       {"laneid", "lane_id"},
            {"class", "class"},
        };
        auto it = kMap.find(lower(raw));
        return it == kMap.end() ? lower(raw) : it->second;
    }
    return lower(raw);
}

struct Csv {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;  // data rows
    std::vector<int> line_numbers;               // 1-based source lines

    int column_index(const std::string& name) const {
        auto it = std::find(columns.begin(), columns.end(), name);
        return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
    }
};

Csv read_csv(const std::string& path, const std::string& schema) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open file: " + path);
    Csv csv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_csv(line);
        if (csv.columns.empty()) {
            for (auto& f : fields) csv.columns.push_back(normalize_column(schema, f));
        } else {
            if (fields.size() != csv.columns.size()) throw MalformedRow(path, line_no);
            csv.rows.push_back(std::move(fields));
            csv.line_numbers.push_back(line_no);
        }
    }
    return csv;
}

double parse_double(const std::string& s, const std::string& path, int line) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || !std::isfinite(v))
        throw MalformedRow(path, line);
    return v;
}

int parse_int(const std::string& s, const std::string& path, int line) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') throw MalformedRow(path, line);
    return static_cast<int>(v);
}

}  // namespace

AgentClass agent_class_from_string(const std::string& name) {
    std::string n = lower(name);
    std::replace(n.begin(), n.end(), '-', '_');
    std::replace(n.begin(), n.end(), ' ', '_');
    if (n == "car") return AgentClass::kCar;
    if (n == "truck") return AgentClass::kTruck;
    if (n == "trailer") return AgentClass::kTrailer;
    if (n == "truck_trailer" || n == "trucktrailer") return AgentClass::kTruckTrailer;
    if (n == "bus") return AgentClass::kBus;
    if (n == "van") return AgentClass::kVan;
    if (n == "motorcycle") return AgentClass::kMotorcycle;
    if (n == "bicycle" || n == "cycle") return AgentClass::kBicycle;
    if (n == "pedestrian") return AgentClass::kPedestrian;
    return AgentClass::kOther;
}

std::string to_string(AgentClass c) {
    switch (c) {
        case AgentClass::kCar: return "car";
        case AgentClass::kTruck: return "truck";
        case AgentClass::kTrailer: return "trailer";
        case AgentClass::kTruckTrailer: return "truck_trailer";
        case AgentClass::kBus: return "bus";
        case AgentClass::kVan: return "van";
        case AgentClass::kMotorcycle: return "motorcycle";
        case AgentClass::kBicycle: return "bicycle";
        case AgentClass::kPedestrian: return "pedestrian";
        case AgentClass::kOther: return "other";
    }
    return "other";
}

const AgentState* Frame::find(int id) const {
    for (const auto& a : agents)
        if (a.id == id) return &a;
    return nullptr;
}

const Frame* Recording::frame_at(int index) const {
    auto it = std::lower_bound(
        frames.begin(), frames.end(), index,
        [](const Frame& f, int idx) { return f.index < idx; });
    if (it == frames.end() || it->index != index) return nullptr;
    return &*it;
}

std::vector<int> Recording::agent_ids() const {
    std::set<int> ids;
    for (const auto& f : frames)
        for (const auto& a : f.agents) ids.insert(a.id);
    return {ids.begin(), ids.end()};
}

ClassSet default_heavy_classes() {
    return {AgentClass::kTruck, AgentClass::kTrailer, AgentClass::kTruckTrailer,
            AgentClass::kBus};
}

bool is_heavy(const AgentState& state, const ClassSet& heavy) {
    return heavy.count(state.cls) > 0;
}

Recording load_recording(const std::string& tracks_path,
                         const std::string& meta_path,
                         const LoadOptions& opts) {
    const Csv tracks = read_csv(tracks_path, opts.schema);
    const Csv meta = read_csv(meta_path, opts.schema);

    const char* kRequired[] = {"frame",      "id",         "x_center",
                               "y_center",   "x_velocity", "y_velocity",
                               "heading_deg", "width",     "length"};
    for (const char* col : kRequired)
        if (tracks.column_index(col) < 0) throw MissingColumn(col);
    if (meta.column_index("id") < 0) throw MissingColumn("id");
    if (meta.column_index("class") < 0) throw MissingColumn("class");
    if (tracks.rows.empty()) throw EmptyRecording(tracks_path);

    std::unordered_map<int, AgentClass> classes;
    {
        const int ci = meta.column_index("id");
        const int cc = meta.column_index("class");
        for (std::size_t r = 0; r < meta.rows.size(); ++r) {
            const int id = parse_int(meta.rows[r][ci], meta_path, meta.line_numbers[r]);
            classes[id] = agent_class_from_string(meta.rows[r][cc]);
        }
    }

    const int c_frame = tracks.column_index("frame");
    const int c_id = tracks.column_index("id");
    const int c_x = tracks.column_index("x_center");
    const int c_y = tracks.column_index("y_center");
    const int c_vx = tracks.column_index("x_velocity");
    const int c_vy = tracks.column_index("y_velocity");
    const int c_ax = tracks.column_index("x_acceleration");
    const int c_ay = tracks.column_index("y_acceleration");
    const int c_heading = tracks.column_index("heading_deg");
    const int c_w = tracks.column_index("width");
    const int c_l = tracks.column_index("length");
    const int c_lane = tracks.column_index("lane_id");
    const bool has_accel = c_ax >= 0 && c_ay >= 0;

    std::map<int, Frame> frames;
    for (std::size_t r = 0; r < tracks.rows.size(); ++r) {
        const auto& row = tracks.rows[r];
        const int line = tracks.line_numbers[r];
        const int k = parse_int(row[c_frame], tracks_path, line);

        AgentState a;
        a.id = parse_int(row[c_id], tracks_path, line);
        a.position = {parse_double(row[c_x], tracks_path, line),
                      parse_double(row[c_y], tracks_path, line)};
        a.velocity = {parse_double(row[c_vx], tracks_path, line),
                      parse_double(row[c_vy], tracks_path, line)};
        if (has_accel)
            a.acceleration = {parse_double(row[c_ax], tracks_path, line),
                              parse_double(row[c_ay], tracks_path, line)};
        a.heading = wrap_angle(parse_double(row[c_heading], tracks_path, line) *
                               kPi / 180.0);
        a.width = parse_double(row[c_w], tracks_path, line);
        a.length = parse_double(row[c_l], tracks_path, line);
        if (c_lane >= 0 && !row[c_lane].empty())
            a.lane_id = parse_int(row[c_lane], tracks_path, line);
        auto it = classes.find(a.id);
        a.cls = it == classes.end() ? AgentClass::kOther : it->second;
        if ((a.length <= 0.0 || a.width <= 0.0) && a.cls != AgentClass::kPedestrian)
            throw MalformedRow(tracks_path, line);

        Frame& f = frames[k];
        f.index = k;
        for (const auto& existing : f.agents)
            if (existing.id == a.id) throw MalformedRow(tracks_path, line);
        f.agents.push_back(a);
    }

    Recording rec;
    rec.frame_rate = opts.frame_rate;
    rec.location_tag = tracks_path;
    rec.frames.reserve(frames.size());
    for (auto& [k, f] : frames) {
        f.t = k / rec.frame_rate;
        std::sort(f.agents.begin(), f.agents.end(),
                  [](const AgentState& a, const AgentState& b) { return a.id < b.id; });
        rec.frames.push_back(std::move(f));
    }

    if (!has_accel) backfill_accelerations(rec);
    return rec;
}

void backfill_accelerations(Recording& rec) {
    // Central differences of velocity at the recording rate; one-sided at the
    // ends of each track.
    std::map<int, std::vector<std::pair<int, int>>> tracks;  // id -> (frame pos, agent pos)
    for (std::size_t fi = 0; fi < rec.frames.size(); ++fi)
        for (std::size_t ai = 0; ai < rec.frames[fi].agents.size(); ++ai)
            tracks[rec.frames[fi].agents[ai].id].emplace_back(static_cast<int>(fi),
                                                              static_cast<int>(ai));
    const double nu = rec.frame_rate;
    for (auto& [id, locs] : tracks) {
        const std::size_t n = locs.size();
        for (std::size_t k = 0; k < n; ++k) {
            auto vel = [&](std::size_t m) {
                return rec.frames[locs[m].first].agents[locs[m].second].velocity;
            };
            Vec2 a{0.0, 0.0};
            if (n >= 2) {
                if (k == 0)
                    a = (vel(1) - vel(0)) * nu;
                else if (k + 1 == n)
                    a = (vel(n - 1) - vel(n - 2)) * nu;
                else
                    a = (vel(k + 1) - vel(k - 1)) * (nu / 2.0);
            }
            rec.frames[locs[k].first].agents[locs[k].second].acceleration = a;
        }
    }
}

namespace {

// Closest point on a polyline to p.
Vec2 polyline_closest(const std::vector<Vec2>& pts, Vec2 p) {
    if (pts.size() == 1) return pts[0];
    Vec2 best = pts[0];
    double best_d2 = (p - best).norm2();
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        const Vec2 a = pts[k], b = pts[k + 1];
        const Vec2 ab = b - a;
        const double len2 = ab.norm2();
        double s = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
        s = std::clamp(s, 0.0, 1.0);
        const Vec2 q = a + ab * s;
        const double d2 = (p - q).norm2();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = q;
        }
    }
    return best;
}

}  // namespace

std::vector<LaneChangeEvent> detect_lane_changes(const Recording& rec,
                                                 double t_dec_lead) {
    struct Sample {
        int frame;
        Vec2 pos;
        int lane;
    };
    std::map<int, std::vector<Sample>> tracks;
    bool any_lane = false;
    for (const auto& f : rec.frames) {
        for (const auto& a : f.agents) {
            int lane;
            if (a.lane_id) {
                lane = *a.lane_id;
                any_lane = true;
            } else if (!rec.lanes.empty()) {
                // Infer from lane geometry: nearest centerline wins.
                double best = 1e300;
                lane = rec.lanes.front().lane_id;
                for (const auto& lp : rec.lanes) {
                    const double d2 =
                        (a.position - polyline_closest(lp.points, a.position)).norm2();
                    if (d2 < best) {
                        best = d2;
                        lane = lp.lane_id;
                    }
                }
                any_lane = true;
            } else {
                continue;
            }
            tracks[a.id].push_back({f.index, a.position, lane});
        }
    }
    if (!any_lane) throw NoLaneInformation();

    // Empirical lane centers (mean lateral position), used when no polyline
    // geometry is available for the target lane.
    std::map<int, std::pair<double, int>> lane_y_acc;
    for (const auto& [id, samples] : tracks)
        for (const auto& s : samples) {
            lane_y_acc[s.lane].first += s.pos.y;
            lane_y_acc[s.lane].second += 1;
        }

    auto lane_polyline = [&](int lane) -> const LanePolyline* {
        for (const auto& lp : rec.lanes)
            if (lp.lane_id == lane) return &lp;
        return nullptr;
    };

    std::vector<LaneChangeEvent> events;
    const double nu = rec.frame_rate;
    for (const auto& [id, samples] : tracks) {
        for (std::size_t k = 1; k < samples.size(); ++k) {
            if (samples[k].lane == samples[k - 1].lane) continue;
            LaneChangeEvent ev;
            ev.agent_id = id;
            ev.t_cross = samples[k].frame / nu;
            ev.t_dec = std::max(ev.t_cross - t_dec_lead, samples.front().frame / nu);

            // Sample the agent nearest to the decision time.
            const int k_dec_frame =
                static_cast<int>(std::lround(ev.t_dec * nu));
            std::size_t dec = 0;
            int best_gap = std::abs(samples[0].frame - k_dec_frame);
            for (std::size_t m = 1; m < samples.size(); ++m) {
                const int gap = std::abs(samples[m].frame - k_dec_frame);
                if (gap < best_gap) {
                    best_gap = gap;
                    dec = m;
                }
            }
            ev.x_curr = samples[dec].pos;

            const int target_lane = samples[k].lane;
            if (const LanePolyline* lp = lane_polyline(target_lane)) {
                ev.x_target = polyline_closest(lp->points, ev.x_curr);
            } else {
                const auto& acc = lane_y_acc[target_lane];
                ev.x_target = {ev.x_curr.x, acc.first / acc.second};
            }
            events.push_back(ev);
        }
    }
    std::sort(events.begin(), events.end(),
              [](const LaneChangeEvent& a, const LaneChangeEvent& b) {
                  if (a.t_cross != b.t_cross) return a.t_cross < b.t_cross;
                  return a.agent_id < b.agent_id;
              });
    return events;
}

}  // namespace drift
