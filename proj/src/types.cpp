#include "linkage/types.hpp"

#include <cmath>
#include <sstream>

#include "linkage/errors.hpp"

namespace linkage {

const char* side_name(Side s) {
    return s == Side::query ? "query" : "candidate";
}

Side side_from_name(const std::string& name) {
    if (name == "query") return Side::query;
    if (name == "candidate") return Side::candidate;
    throw ValidationError("unknown side: " + name);
}

const char* summary_kind_name(SummaryKind k) {
    switch (k) {
        case SummaryKind::traits: return "traits";
        case SummaryKind::reviews: return "reviews";
        case SummaryKind::attributes: return "attributes";
    }
    return "traits";
}

SummaryKind summary_kind_from_name(const std::string& name) {
    if (name == "traits") return SummaryKind::traits;
    if (name == "reviews") return SummaryKind::reviews;
    if (name == "attributes") return SummaryKind::attributes;
    throw ValidationError("unknown summary kind: " + name);
}

std::string summary_text(const FeatureSummary& s) {
    std::ostringstream out;
    switch (s.kind) {
        case SummaryKind::traits: {
            for (std::size_t i = 0; i < s.traits.size(); ++i) {
                if (i) out << ", ";
                out << s.traits[i];
            }
            break;
        }
        case SummaryKind::reviews: {
            for (std::size_t i = 0; i < s.reviews.size(); ++i) {
                if (i) out << "; ";
                const auto& r = s.reviews[i];
                out << r.title << " (" << std::lround(r.rating) << "/10)";
            }
            break;
        }
        case SummaryKind::attributes: {
            for (std::size_t i = 0; i < s.attributes.size(); ++i) {
                if (i) out << ", ";
                out << s.attributes[i];
            }
            break;
        }
    }
    return out.str();
}

} // namespace linkage
