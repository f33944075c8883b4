#include "linkage/reason.hpp"

#include <algorithm>

#include "linkage/errors.hpp"
#include "linkage/rng.hpp"

namespace linkage::reason {

OracleJudge::OracleJudge(OracleJudgeConfig cfg, TruthMap truth)
    : cfg_(cfg), truth_(std::move(truth)) {
    for (double p : {cfg_.select_accuracy, cfg_.verify_tpr, cfg_.verify_fpr})
        if (p < 0.0 || p > 1.0)
            throw DomainError("oracle judge probabilities must lie in [0,1]");
}

bool OracleJudge::is_true_pair(const std::string& query_id,
                               const std::string& candidate_id) const {
    auto it = truth_.find(query_id);
    return it != truth_.end() && it->second == candidate_id;
}

double OracleJudge::confidence_for(bool correct, std::uint64_t key) const {
    auto rng = make_rng(key);
    std::uniform_real_distribution<double> band(correct ? 0.8 : 0.0, correct ? 1.0 : 0.5);
    double conf = band(rng);
    if (cfg_.confidence_noise > 0.0) {
        std::uniform_real_distribution<double> noise(-cfg_.confidence_noise,
                                                     cfg_.confidence_noise);
        conf += noise(rng);
    }
    return std::clamp(conf, 0.0, 1.0);
}

SelectResponse OracleJudge::select(const SelectRequest& req) {
    auto rng = make_rng(derive_seed(cfg_.seed, "select|" + req.query_id));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::optional<std::size_t> truth_pos;
    for (std::size_t i = 0; i < req.shortlist.size(); ++i) {
        if (is_true_pair(req.query_id, req.shortlist[i].candidate_id)) {
            truth_pos = i;
            break;
        }
    }

    const bool competent = unit(rng) < cfg_.select_accuracy;
    std::optional<std::size_t> pick;
    if (truth_pos) {
        if (competent) {
            pick = truth_pos;
        } else if (req.shortlist.size() > 1) {
            std::size_t wrong = rng() % (req.shortlist.size() - 1);
            if (wrong >= *truth_pos) ++wrong;
            pick = wrong;
        }
    } else if (!competent && !req.shortlist.empty()) {
        pick = rng() % req.shortlist.size();
    }

    SelectResponse resp;
    if (pick) {
        resp.choice = static_cast<int>(*pick) + 1;
        resp.confidence = confidence_for(
            truth_pos && *pick == *truth_pos,
            derive_seed(cfg_.seed, "selconf|" + req.query_id, *pick));
    }
    return resp;
}

VerifyResponse OracleJudge::verify(const VerifyRequest& req) {
    const bool correct = is_true_pair(req.query_id, req.candidate_id);
    auto rng = make_rng(derive_seed(cfg_.seed, "verify|" + req.query_id + "|" + req.candidate_id));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    VerifyResponse resp;
    resp.match = unit(rng) < (correct ? cfg_.verify_tpr : cfg_.verify_fpr);
    resp.confidence = confidence_for(
        correct, derive_seed(cfg_.seed, "verconf|" + req.query_id + "|" + req.candidate_id));
    return resp;
}

CompareWinner OracleJudge::compare(const ComparePair& a, const ComparePair& b) {
    const bool correct_a = is_true_pair(a.query_id, a.candidate_id);
    const bool correct_b = is_true_pair(b.query_id, b.candidate_id);
    if (correct_a != correct_b) return correct_a ? CompareWinner::A : CompareWinner::B;
    auto rng = make_rng(derive_seed(cfg_.seed, "compare|" + a.query_id + "|" + b.query_id));
    return (rng() & 1) ? CompareWinner::A : CompareWinner::B;
}

Selection select_stage(const SelectRequest& req, JudgeBackend& judge) {
    if (req.shortlist.empty()) throw DomainError("select_stage: empty shortlist");
    const SelectResponse resp = judge.select(req);
    Selection sel;
    if (resp.choice) {
        const int idx = *resp.choice;
        if (idx < 1 || idx > static_cast<int>(req.shortlist.size()))
            throw ProtocolError("judge selected index " + std::to_string(idx) +
                                " outside 1.." + std::to_string(req.shortlist.size()));
        sel.candidate_id = req.shortlist[static_cast<std::size_t>(idx - 1)].candidate_id;
        sel.confidence = resp.confidence;
    }
    return sel;
}

MatchDecision verify_stage(const std::string& query_id, const std::string& query_text,
                           const std::optional<std::string>& selected_id,
                           const std::string& selected_text, JudgeBackend& judge) {
    MatchDecision d;
    d.query_id = query_id;
    d.stage = "reason";
    if (!selected_id) return d;

    VerifyRequest req;
    req.query_id = query_id;
    req.query_text = query_text;
    req.candidate_id = *selected_id;
    req.candidate_text = selected_text;
    const VerifyResponse resp = judge.verify(req);
    if (resp.match) {
        d.guess = *selected_id;
        d.confidence = resp.confidence;
        d.scores[score::judge_confidence] = resp.confidence;
    }
    return d;
}

} // namespace linkage::reason
