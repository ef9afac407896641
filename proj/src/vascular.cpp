#include "bloodnet/vascular.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "bloodnet/common.hpp"
#include "bloodnet/csv.hpp"

namespace bloodnet {

VesselKind vessel_kind_from_string(const std::string& s) {
    if (s == "artery") return VesselKind::Artery;
    if (s == "vein") return VesselKind::Vein;
    if (s == "capillary") return VesselKind::Capillary;
    if (s == "heart-chamber") return VesselKind::HeartChamber;
    if (s == "lung") return VesselKind::Lung;
    throw ParseError("unknown vessel kind '" + s + "'");
}

std::string to_string(VesselKind k) {
    switch (k) {
        case VesselKind::Artery: return "artery";
        case VesselKind::Vein: return "vein";
        case VesselKind::Capillary: return "capillary";
        case VesselKind::HeartChamber: return "heart-chamber";
        case VesselKind::Lung: return "lung";
    }
    return "?";
}

const VesselSegment& VesselCatalog::at(const std::string& id) const {
    auto it = segments.find(id);
    if (it == segments.end()) throw Error("unknown state " + id);
    return it->second;
}

std::vector<std::string> VesselCatalog::state_ids() const {
    std::vector<std::string> ids;
    ids.reserve(segments.size());
    for (const auto& [id, _] : segments) ids.push_back(id);
    std::sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) {
        // numeric order for S-ids, lexicographic otherwise
        if (a.size() > 1 && b.size() > 1 && a[0] == 'S' && b[0] == 'S') {
            try {
                return std::stoi(a.substr(1)) < std::stoi(b.substr(1));
            } catch (...) {}
        }
        return a < b;
    });
    return ids;
}

std::size_t VesselCatalog::count_kind(VesselKind k) const {
    std::size_t n = 0;
    for (const auto& [_, seg] : segments) {
        if (seg.kind == k) ++n;
    }
    return n;
}

bool VesselCatalog::strongly_connected() const {
    if (segments.empty()) return false;
    // forward reachability plus reachability on the reversed graph
    auto reach = [&](bool reversed) {
        std::map<std::string, std::vector<std::string>> adj;
        for (const auto& [id, seg] : segments) {
            for (const auto& d : seg.downstream) {
                if (reversed) {
                    adj[d].push_back(id);
                } else {
                    adj[id].push_back(d);
                }
            }
        }
        std::set<std::string> seen;
        std::vector<std::string> stack{segments.begin()->first};
        while (!stack.empty()) {
            auto id = stack.back();
            stack.pop_back();
            if (!seen.insert(id).second) continue;
            for (const auto& n : adj[id]) stack.push_back(n);
        }
        return seen.size() == segments.size();
    };
    return reach(false) && reach(true);
}

namespace {

double parse_positive(const std::string& s, const std::string& what,
                      const std::string& row_id, bool allow_zero = false) {
    double v = 0.0;
    try {
        v = std::stod(s);
    } catch (...) {
        throw ParseError("row " + row_id + ": cannot parse " + what + " '" + s + "'");
    }
    if (v < 0.0 || (!allow_zero && v == 0.0)) {
        throw ParseError("row " + row_id + ": non-positive " + what);
    }
    return v;
}

VesselCatalog from_table(const csv::Table& t) {
    VesselCatalog cat;
    const auto c_id = t.column("state_id");
    const auto c_name = t.column("name");
    const auto c_kind = t.column("kind");
    const auto c_len = t.column("length_m");
    const auto c_rad = t.column("radius_m");
    const auto c_thk = t.column("thickness_m");
    const auto c_spd = t.column("speed_mps");
    const auto c_down = t.column("downstream");
    std::optional<std::size_t> c_r, c_l, c_c;
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (t.header[i] == "R") c_r = i;
        if (t.header[i] == "L") c_l = i;
        if (t.header[i] == "C") c_c = i;
    }

    for (const auto& row : t.rows) {
        VesselSegment seg;
        seg.state_id = row[c_id];
        if (seg.state_id.empty()) throw ParseError("row with empty state_id");
        if (cat.segments.count(seg.state_id)) {
            throw ParseError("duplicate state id " + seg.state_id);
        }
        seg.name = row[c_name];
        seg.kind = vessel_kind_from_string(row[c_kind]);

        const bool heartish = seg.is_heart_or_lung();
        seg.length_m = parse_positive(row[c_len], "length_m", seg.state_id, heartish);
        seg.radius_m = parse_positive(row[c_rad], "radius_m", seg.state_id, heartish);
        seg.thickness_m = parse_positive(row[c_thk], "thickness_m", seg.state_id, heartish);
        seg.speed_mps = parse_positive(row[c_spd], "speed_mps", seg.state_id, heartish);

        std::stringstream ss(row[c_down]);
        std::string part;
        while (std::getline(ss, part, ';')) {
            if (!part.empty()) seg.downstream.push_back(part);
        }
        if (seg.downstream.empty()) {
            throw ParseError("row " + seg.state_id + ": empty downstream list");
        }

        auto opt_val = [&](std::optional<std::size_t> col) -> std::optional<double> {
            if (!col || row[*col].empty()) return std::nullopt;
            return std::stod(row[*col]);
        };
        seg.rlc_r = opt_val(c_r);
        seg.rlc_l = opt_val(c_l);
        seg.rlc_c = opt_val(c_c);

        cat.segments.emplace(seg.state_id, std::move(seg));
    }

    for (const auto& [id, seg] : cat.segments) {
        for (const auto& d : seg.downstream) {
            if (!cat.segments.count(d)) {
                throw ParseError("row " + id + ": unknown state " + d);
            }
        }
    }
    return cat;
}

}  // namespace

VesselCatalog load_catalog(const std::filesystem::path& path) {
    return from_table(csv::read_file(path));
}

VesselCatalog load_catalog_string(const std::string& text) {
    return from_table(csv::read_string(text, "<catalog>"));
}

void save_catalog(const VesselCatalog& catalog, const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& id : catalog.state_ids()) {
        const auto& seg = catalog.at(id);
        std::string down;
        for (std::size_t i = 0; i < seg.downstream.size(); ++i) {
            down += seg.downstream[i];
            if (i + 1 < seg.downstream.size()) down += ";";
        }
        auto opt = [](const std::optional<double>& v) {
            return v ? csv::format_double(*v) : std::string();
        };
        rows.push_back({seg.state_id, seg.name, to_string(seg.kind),
                        csv::format_double(seg.length_m), csv::format_double(seg.radius_m),
                        csv::format_double(seg.thickness_m), csv::format_double(seg.speed_mps),
                        down, opt(seg.rlc_r), opt(seg.rlc_l), opt(seg.rlc_c)});
    }
    csv::write_file(path,
                    {"state_id", "name", "kind", "length_m", "radius_m", "thickness_m",
                     "speed_mps", "downstream", "R", "L", "C"},
                    rows);
}

RlcTriple derive_rlc(const VesselSegment& segment, const BloodProperties& blood,
                     ResistanceFormula formula) {
    if (segment.length_m <= 0 || segment.radius_m <= 0 || segment.thickness_m <= 0) {
        throw Error("derive_rlc: segment " + segment.state_id + " lacks geometry");
    }
    const double pi = std::numbers::pi;
    const double dl = segment.length_m;
    const double rv = segment.radius_m;
    RlcTriple out;
    if (formula == ResistanceFormula::Verbatim) {
        out.resistance = 8.0 * pi * blood.viscosity_pas * dl / (pi * rv * rv);
    } else {
        out.resistance = 8.0 * blood.viscosity_pas * dl / (pi * rv * rv * rv * rv);
    }
    out.inductance = 9.0 * blood.density_kgpm3 * dl / (4.0 * pi * rv * rv);
    out.compliance = 3.0 * pi * rv * rv * rv * dl /
                     (2.0 * blood.elastic_modulus_pa * segment.thickness_m);
    return out;
}

double segment_travel_time(const VesselSegment& segment) {
    if (segment.speed_mps <= 0) {
        throw Error("segment " + segment.state_id + " has no mean speed");
    }
    return segment.length_m / segment.speed_mps;
}

}  // namespace bloodnet
