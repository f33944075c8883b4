#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "linkage/types.hpp"

namespace linkage::reason {

struct ShortlistEntry {
    std::string candidate_id;
    std::string text;
    double cosine = 0.0;
};

struct SelectRequest {
    std::string query_id;
    std::string query_text;
    std::vector<ShortlistEntry> shortlist;
};

struct SelectResponse {
    std::optional<int> choice;   // 1-based index into the shortlist
    double confidence = 0.0;
};

struct VerifyRequest {
    std::string query_id;
    std::string query_text;
    std::string candidate_id;
    std::string candidate_text;
};

struct VerifyResponse {
    bool match = false;
    double confidence = 0.0;
};

struct ComparePair {
    std::string query_id;
    std::string candidate_id;
    std::string query_text;
    std::string candidate_text;
};

enum class CompareWinner { A, B };

// Pluggable judge: selection from a shortlist, pair verification, and
// pairwise comparison of proposed matches. Remote implementations see only
// the texts; ids exist so simulated judges can act on ground truth.
class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;
    virtual SelectResponse select(const SelectRequest& req) = 0;
    virtual VerifyResponse verify(const VerifyRequest& req) = 0;
    virtual CompareWinner compare(const ComparePair& a, const ComparePair& b) = 0;
};

// Simulated judge for offline, reproducible evaluation. Behavior:
//  - select: when the true candidate is in the shortlist it is chosen with
//    probability select_accuracy, otherwise a wrong entry is chosen
//    uniformly (abstains when no wrong entry exists). When the true
//    candidate is absent it abstains with probability select_accuracy,
//    otherwise picks a wrong entry.
//  - verify: declares a match with probability verify_tpr on true pairs and
//    verify_fpr on false pairs.
//  - compare: prefers the pair that is actually correct; seeded coin when
//    both or neither are.
// Confidences draw from a high band (0.8..1.0) for correct picks and a low
// band (0.0..0.5) otherwise, then get +-confidence_noise perturbation,
// clamped to [0,1]. Every draw is keyed on (seed, query ids), so results do
// not depend on call order.
struct OracleJudgeConfig {
    std::uint64_t seed = 0;
    double select_accuracy = 1.0;
    double verify_tpr = 1.0;
    double verify_fpr = 0.0;
    double confidence_noise = 0.05;
};

class OracleJudge final : public JudgeBackend {
public:
    OracleJudge(OracleJudgeConfig cfg, TruthMap truth);
    SelectResponse select(const SelectRequest& req) override;
    VerifyResponse verify(const VerifyRequest& req) override;
    CompareWinner compare(const ComparePair& a, const ComparePair& b) override;

private:
    bool is_true_pair(const std::string& query_id, const std::string& candidate_id) const;
    double confidence_for(bool correct, std::uint64_t key) const;

    OracleJudgeConfig cfg_;
    TruthMap truth_;
};

struct Selection {
    std::optional<std::string> candidate_id;
    double confidence = 0.0;
};

// Maps the judge's shortlist choice back to a candidate_id; abstentions pass
// through. An out-of-bounds judge index is a ProtocolError.
Selection select_stage(const SelectRequest& req, JudgeBackend& judge);

// Verifies a selected pair. A confirmed match becomes a guess carrying the
// verify confidence; a rejected one becomes an abstention. A pass-through
// abstention is returned when nothing was selected.
MatchDecision verify_stage(const std::string& query_id, const std::string& query_text,
                           const std::optional<std::string>& selected_id,
                           const std::string& selected_text, JudgeBackend& judge);

} // namespace linkage::reason
