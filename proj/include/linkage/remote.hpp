#pragma once

#include <string>
#include <vector>

#include "linkage/embed.hpp"
#include "linkage/extract.hpp"
#include "linkage/reason.hpp"

namespace linkage::remote {

// Shared client behavior: transient transport failures are retried with
// exponential backoff, then surface as TransportError. Malformed replies are
// ProtocolError immediately. When the LINKAGE_AUTH_TOKEN environment
// variable is set, requests carry it as a bearer token; it is never written
// to any artifact.
struct RemoteOptions {
    int max_retries = 3;
    int backoff_ms = 100;
    int timeout_s = 30;
};

inline constexpr const char* kAuthTokenEnv = "LINKAGE_AUTH_TOKEN";

// POST /summarize {"template_id": str, "documents": [str]}
//   -> {"summary": str} or {"refusal": str}
class HttpExtractorBackend final : public extract::ExtractorBackend {
public:
    explicit HttpExtractorBackend(std::string base_url, RemoteOptions opts = {});
    extract::SummarizeResult summarize(const std::string& template_id,
                                       const std::vector<std::string>& documents) override;

private:
    std::string base_url_;
    RemoteOptions opts_;
};

// POST /embed {"texts": [str]} -> {"vectors": [[real]]}
class HttpEmbedder final : public search::EmbedderBackend {
public:
    explicit HttpEmbedder(std::string base_url, RemoteOptions opts = {});
    int dim() const override { return dim_; }
    std::vector<search::Embedding> embed(const std::vector<std::string>& texts) override;

private:
    std::string base_url_;
    RemoteOptions opts_;
    int dim_ = 0;   // learned from the first reply
};

// POST /select {"query": str, "candidates": [str]}
//   -> {"choice": int|null, "confidence": real}
// POST /verify {"query": str, "candidate": str}
//   -> {"match": bool, "confidence": real}
// POST /compare {"a": {"query": str, "candidate": str}, "b": {...}}
//   -> {"winner": "A"|"B"}
class HttpJudge final : public reason::JudgeBackend {
public:
    explicit HttpJudge(std::string base_url, RemoteOptions opts = {});
    reason::SelectResponse select(const reason::SelectRequest& req) override;
    reason::VerifyResponse verify(const reason::VerifyRequest& req) override;
    reason::CompareWinner compare(const reason::ComparePair& a,
                                  const reason::ComparePair& b) override;

private:
    std::string base_url_;
    RemoteOptions opts_;
};

} // namespace linkage::remote
