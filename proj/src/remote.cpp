#include "linkage/remote.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "linkage/errors.hpp"

namespace linkage::remote {

using json = nlohmann::json;

namespace {

json post_json(const std::string& base_url, const std::string& path, const json& body,
               const RemoteOptions& opts) {
    std::string last_error;
    for (int attempt = 0; attempt <= opts.max_retries; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(opts.backoff_ms * (1 << (attempt - 1))));

        httplib::Client client(base_url);
        client.set_connection_timeout(opts.timeout_s);
        client.set_read_timeout(opts.timeout_s);
        if (const char* token = std::getenv(kAuthTokenEnv))
            client.set_bearer_token_auth(token);

        auto res = client.Post(path, body.dump(), "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "server status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw ProtocolError(path + " returned status " + std::to_string(res->status));
        try {
            return json::parse(res->body);
        } catch (const json::exception& e) {
            throw ProtocolError(path + " returned malformed JSON: " + std::string(e.what()));
        }
    }
    throw TransportError(path + " unreachable after " + std::to_string(opts.max_retries + 1) +
                         " attempts: " + last_error);
}

} // namespace

HttpExtractorBackend::HttpExtractorBackend(std::string base_url, RemoteOptions opts)
    : base_url_(std::move(base_url)), opts_(opts) {}

extract::SummarizeResult HttpExtractorBackend::summarize(
    const std::string& template_id, const std::vector<std::string>& documents) {
    const json reply =
        post_json(base_url_, "/summarize", {{"template_id", template_id}, {"documents", documents}},
                  opts_);
    if (reply.contains("refusal")) return extract::Refusal{reply.at("refusal").get<std::string>()};
    if (!reply.contains("summary")) throw ProtocolError("/summarize reply lacks summary");
    return reply.at("summary").get<std::string>();
}

HttpEmbedder::HttpEmbedder(std::string base_url, RemoteOptions opts)
    : base_url_(std::move(base_url)), opts_(opts) {}

std::vector<search::Embedding> HttpEmbedder::embed(const std::vector<std::string>& texts) {
    const json reply = post_json(base_url_, "/embed", {{"texts", texts}}, opts_);
    if (!reply.contains("vectors") || !reply.at("vectors").is_array())
        throw ProtocolError("/embed reply lacks vectors");
    const auto& vectors = reply.at("vectors");
    if (vectors.size() != texts.size())
        throw ProtocolError("/embed returned wrong vector count");

    std::vector<search::Embedding> out;
    out.reserve(vectors.size());
    for (const auto& vj : vectors) {
        const std::vector<double> values = vj.get<std::vector<double>>();
        if (dim_ == 0) dim_ = static_cast<int>(values.size());
        if (static_cast<int>(values.size()) != dim_)
            throw ProtocolError("/embed returned inconsistent dimensions");
        search::Embedding e;
        e.vec.resize(static_cast<Eigen::Index>(values.size()));
        for (std::size_t i = 0; i < values.size(); ++i)
            e.vec[static_cast<Eigen::Index>(i)] = static_cast<float>(values[i]);
        const double norm = e.vec.cast<double>().norm();
        if (norm > 0.0) e.vec /= static_cast<float>(norm);
        else e.degenerate = true;
        out.push_back(std::move(e));
    }
    return out;
}

HttpJudge::HttpJudge(std::string base_url, RemoteOptions opts)
    : base_url_(std::move(base_url)), opts_(opts) {}

reason::SelectResponse HttpJudge::select(const reason::SelectRequest& req) {
    json candidates = json::array();
    for (const auto& c : req.shortlist) candidates.push_back(c.text);
    const json reply = post_json(base_url_, "/select",
                                 {{"query", req.query_text}, {"candidates", candidates}}, opts_);
    reason::SelectResponse resp;
    if (!reply.contains("choice")) throw ProtocolError("/select reply lacks choice");
    if (!reply.at("choice").is_null()) resp.choice = reply.at("choice").get<int>();
    resp.confidence = reply.value("confidence", 0.0);
    return resp;
}

reason::VerifyResponse HttpJudge::verify(const reason::VerifyRequest& req) {
    const json reply = post_json(base_url_, "/verify",
                                 {{"query", req.query_text}, {"candidate", req.candidate_text}},
                                 opts_);
    if (!reply.contains("match")) throw ProtocolError("/verify reply lacks match");
    reason::VerifyResponse resp;
    resp.match = reply.at("match").get<bool>();
    resp.confidence = reply.value("confidence", 0.0);
    return resp;
}

reason::CompareWinner HttpJudge::compare(const reason::ComparePair& a,
                                         const reason::ComparePair& b) {
    const json reply = post_json(
        base_url_, "/compare",
        {{"a", {{"query", a.query_text}, {"candidate", a.candidate_text}}},
         {"b", {{"query", b.query_text}, {"candidate", b.candidate_text}}}},
        opts_);
    const std::string winner = reply.value("winner", "");
    if (winner == "A") return reason::CompareWinner::A;
    if (winner == "B") return reason::CompareWinner::B;
    throw ProtocolError("/compare returned unknown winner '" + winner + "'");
}

} // namespace linkage::remote
