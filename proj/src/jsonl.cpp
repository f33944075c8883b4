#include "linkage/jsonl.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "linkage/errors.hpp"

namespace linkage {

using json = nlohmann::ordered_json;

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    return out;
}

json parse_line(const std::string& line, const std::filesystem::path& path, std::size_t lineno) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        std::ostringstream msg;
        msg << path.string() << ": line " << lineno << ": " << e.what();
        throw ParseError(msg.str());
    }
}

template <typename T>
T field(const json& j, const char* key, const std::filesystem::path& path, std::size_t lineno) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        std::ostringstream msg;
        msg << path.string() << ": line " << lineno << ": bad field '" << key << "': " << e.what();
        throw ParseError(msg.str());
    }
}

} // namespace

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    Dataset d;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const json j = parse_line(line, path, lineno);

        Profile p;
        p.profile_id = field<std::string>(j, "profile_id", path, lineno);
        p.side = side_from_name(field<std::string>(j, "side", path, lineno));
        if (j.contains("bio") && !j.at("bio").is_null())
            p.bio = field<std::string>(j, "bio", path, lineno);
        if (!j.contains("documents") || !j.at("documents").is_array()) {
            std::ostringstream msg;
            msg << path.string() << ": line " << lineno << ": missing documents array";
            throw ParseError(msg.str());
        }
        for (const auto& dj : j.at("documents")) {
            Document doc;
            doc.ts = field<std::int64_t>(dj, "ts", path, lineno);
            doc.community = field<std::string>(dj, "community", path, lineno);
            doc.text = field<std::string>(dj, "text", path, lineno);
            p.documents.push_back(std::move(doc));
        }
        std::stable_sort(p.documents.begin(), p.documents.end(),
                         [](const Document& a, const Document& b) { return a.ts < b.ts; });

        if (p.side == Side::query) {
            if (j.contains("truth") && !j.at("truth").is_null())
                d.truth.emplace(p.profile_id, field<std::string>(j, "truth", path, lineno));
            d.queries.push_back(std::move(p));
        } else {
            d.candidates.push_back(std::move(p));
        }
    }

    const std::vector<std::string> violations = validate_dataset(d);
    if (!violations.empty()) {
        std::ostringstream msg;
        msg << path.string() << ": " << violations.size() << " violation(s): " << violations.front();
        throw ValidationError(msg.str());
    }
    return d;
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out = open_out(path);
    auto emit = [&](const Profile& p, bool query_side) {
        json j;
        j["profile_id"] = p.profile_id;
        j["side"] = side_name(p.side);
        j["bio"] = p.bio ? json(*p.bio) : json(nullptr);
        json docs = json::array();
        for (const auto& doc : p.documents)
            docs.push_back({{"ts", doc.ts}, {"community", doc.community}, {"text", doc.text}});
        j["documents"] = std::move(docs);
        if (query_side) {
            auto it = d.truth.find(p.profile_id);
            j["truth"] = it != d.truth.end() ? json(it->second) : json(nullptr);
        }
        out << j.dump() << '\n';
    };
    for (const auto& q : d.queries) emit(q, true);
    for (const auto& c : d.candidates) emit(c, false);
}

std::vector<std::string> validate_dataset(const Dataset& d) {
    std::vector<std::string> violations;

    auto check_side = [&](const std::vector<Profile>& ps, Side expect) {
        std::set<std::string> seen;
        for (const auto& p : ps) {
            if (!seen.insert(p.profile_id).second)
                violations.push_back("duplicate " + std::string(side_name(expect)) + " id: " +
                                     p.profile_id);
            if (p.side != expect)
                violations.push_back("profile " + p.profile_id + " has side " +
                                     side_name(p.side) + ", expected " + side_name(expect));
            if (!std::is_sorted(p.documents.begin(), p.documents.end(),
                                [](const Document& a, const Document& b) { return a.ts < b.ts; }))
                violations.push_back("documents not sorted by timestamp: " + p.profile_id);
            for (const auto& doc : p.documents) {
                if (doc.ts < 0) {
                    violations.push_back("negative timestamp in profile: " + p.profile_id);
                    break;
                }
            }
            for (const auto& doc : p.documents) {
                if (doc.community.empty()) {
                    violations.push_back("empty community in profile: " + p.profile_id);
                    break;
                }
            }
        }
    };
    check_side(d.queries, Side::query);
    check_side(d.candidates, Side::candidate);

    std::set<std::string> query_ids, candidate_ids;
    for (const auto& q : d.queries) query_ids.insert(q.profile_id);
    for (const auto& c : d.candidates) candidate_ids.insert(c.profile_id);
    for (const auto& [qid, cid] : d.truth) {
        if (!query_ids.count(qid))
            violations.push_back("truth names unknown query: " + qid);
        if (!candidate_ids.count(cid))
            violations.push_back("truth target missing from candidates: " + qid + " -> " + cid);
    }
    return violations;
}

std::vector<FeatureSummary> load_summaries(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    std::vector<FeatureSummary> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const json j = parse_line(line, path, lineno);
        FeatureSummary s;
        s.profile_id = field<std::string>(j, "profile_id", path, lineno);
        s.kind = summary_kind_from_name(field<std::string>(j, "kind", path, lineno));
        switch (s.kind) {
            case SummaryKind::traits:
                s.traits = field<std::vector<std::string>>(j, "traits", path, lineno);
                break;
            case SummaryKind::reviews:
                for (const auto& rj : j.at("reviews")) {
                    Review r;
                    r.title = field<std::string>(rj, "title", path, lineno);
                    r.rating = field<double>(rj, "rating", path, lineno);
                    r.ts = field<std::int64_t>(rj, "ts", path, lineno);
                    s.reviews.push_back(std::move(r));
                }
                break;
            case SummaryKind::attributes:
                s.attributes = field<std::vector<std::string>>(j, "attributes", path, lineno);
                break;
        }
        out.push_back(std::move(s));
    }
    return out;
}

void write_summaries(const std::vector<FeatureSummary>& summaries,
                     const std::filesystem::path& path) {
    std::ofstream out = open_out(path);
    for (const auto& s : summaries) {
        json j;
        j["profile_id"] = s.profile_id;
        j["kind"] = summary_kind_name(s.kind);
        switch (s.kind) {
            case SummaryKind::traits:
                j["traits"] = s.traits;
                break;
            case SummaryKind::reviews: {
                json rs = json::array();
                for (const auto& r : s.reviews)
                    rs.push_back({{"title", r.title}, {"rating", r.rating}, {"ts", r.ts}});
                j["reviews"] = std::move(rs);
                break;
            }
            case SummaryKind::attributes:
                j["attributes"] = s.attributes;
                break;
        }
        out << j.dump() << '\n';
    }
}

std::vector<MatchDecision> load_decisions(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    std::vector<MatchDecision> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const json j = parse_line(line, path, lineno);
        MatchDecision d;
        d.query_id = field<std::string>(j, "query_id", path, lineno);
        if (j.contains("guess") && !j.at("guess").is_null())
            d.guess = field<std::string>(j, "guess", path, lineno);
        if (j.contains("confidence") && !j.at("confidence").is_null())
            d.confidence = field<double>(j, "confidence", path, lineno);
        d.stage = field<std::string>(j, "stage", path, lineno);
        if (j.contains("scores"))
            for (const auto& [k, v] : j.at("scores").items())
                d.scores[k] = v.get<double>();
        if (d.confidence.has_value() != d.guess.has_value()) {
            std::ostringstream msg;
            msg << path.string() << ": line " << lineno
                << ": confidence must accompany a guess (query " << d.query_id << ")";
            throw ValidationError(msg.str());
        }
        out.push_back(std::move(d));
    }
    return out;
}

void write_decisions(const std::vector<MatchDecision>& ds, const std::filesystem::path& path) {
    std::ofstream out = open_out(path);
    for (const auto& d : ds) {
        json j;
        j["query_id"] = d.query_id;
        j["guess"] = d.guess ? json(*d.guess) : json(nullptr);
        j["confidence"] = d.confidence ? json(*d.confidence) : json(nullptr);
        j["stage"] = d.stage;
        json scores = json::object();
        for (const auto& [k, v] : d.scores) scores[k] = v;
        j["scores"] = std::move(scores);
        out << j.dump() << '\n';
    }
}

} // namespace linkage
