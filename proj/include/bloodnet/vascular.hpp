#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bloodnet {

enum class VesselKind { Artery, Vein, Capillary, HeartChamber, Lung };

VesselKind vessel_kind_from_string(const std::string& s);
std::string to_string(VesselKind k);

/// One state of the mobility model: a vessel segment (or a heart chamber /
/// the lungs) with its geometry and adjacency.
struct VesselSegment {
    std::string state_id;  // "S1".."S51" in the shipped catalog
    std::string name;
    VesselKind kind = VesselKind::Artery;
    double length_m = 0.0;
    double radius_m = 0.0;
    double thickness_m = 0.0;
    double speed_mps = 0.0;  // mean blood speed
    std::vector<std::string> downstream;

    // Precomputed electrical values for segments whose geometry is not
    // meaningful (heart chambers, lungs).
    std::optional<double> rlc_r, rlc_l, rlc_c;

    bool is_heart_or_lung() const {
        return kind == VesselKind::HeartChamber || kind == VesselKind::Lung;
    }
};

struct BloodProperties {
    double viscosity_pas = 4e-3;
    double density_kgpm3 = 1060.0;
    double elastic_modulus_pa = 4e5;
};

/// Electrical analog of one segment: flow resistance, blood inertia, and
/// wall compliance.
struct RlcTriple {
    double resistance = 0.0;
    double inductance = 0.0;
    double compliance = 0.0;
};

/// Resistance formula variant. Verbatim keeps the printed form
/// R = 8*pi*mu*dl / (pi*Rv^2); Poiseuille uses the classical
/// R = 8*mu*dl / (pi*Rv^4). The two differ; the verbatim form is the default
/// and the discrepancy is documented rather than silently corrected.
enum class ResistanceFormula { Verbatim, Poiseuille };

struct VesselCatalog {
    std::map<std::string, VesselSegment> segments;
    BloodProperties blood;

    const VesselSegment& at(const std::string& id) const;
    bool has(const std::string& id) const { return segments.count(id) != 0; }
    std::vector<std::string> state_ids() const;  // sorted S1, S2, ... order
    std::size_t count_kind(VesselKind k) const;

    /// True if every state can reach every other (one strongly connected
    /// component).
    bool strongly_connected() const;
};

/// Load a catalog from its CSV form. Header:
///   state_id,name,kind,length_m,radius_m,thickness_m,speed_mps,downstream
/// plus optional R,L,C columns for precomputed segments. The downstream field
/// is a semicolon-separated id list.
VesselCatalog load_catalog(const std::filesystem::path& path);
VesselCatalog load_catalog_string(const std::string& text);

void save_catalog(const VesselCatalog& catalog, const std::filesystem::path& path);

RlcTriple derive_rlc(const VesselSegment& segment, const BloodProperties& blood,
                     ResistanceFormula formula = ResistanceFormula::Verbatim);

/// Time to traverse a segment at its mean blood speed.
double segment_travel_time(const VesselSegment& segment);

}  // namespace bloodnet
