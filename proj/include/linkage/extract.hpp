#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "linkage/types.hpp"

namespace linkage::extract {

// Heuristic comment pre-filter: drops deleted/removed markers, texts of at
// most 3 characters after trimming, and texts consisting solely of URLs.
// Idempotent.
std::vector<Document> prefilter_comments(const std::vector<Document>& docs);

// Parses a comma-separated trait list into canonical tags: trimmed,
// lowercased, internal whitespace replaced by underscores, empties dropped,
// deduplicated preserving first occurrence.
std::vector<std::string> parse_trait_list(const std::string& raw);

// Offline trait extraction: emits `tag` for every lexicon entry whose
// keyword phrase appears (case-insensitive whole-word match) in any
// document. Tags come out in lexicon order.
FeatureSummary extract_traits_deterministic(const Profile& p,
                                            const std::map<std::string, std::string>& lexicon);

// Same mechanics over a coarse closed attribute schema; produces
// kind=attributes.
FeatureSummary extract_attributes_deterministic(
    const Profile& p, const std::map<std::string, std::string>& lexicon);

// Signed sentiment of a text under the fixed offline lexicon, mapped to a
// rating band: {<=-2: 1, -1: 3, 0: 5, +1: 7, >=+2: 9}.
int sentiment_score(const std::string& textual);
double sentiment_rating(int score);

// Structured review extraction: one review per catalog title fuzzily present
// in some document, rated by offline sentiment over the mentioning
// documents, timestamped at the earliest mention. Titles are stored
// normalized.
FeatureSummary extract_reviews(const Profile& p, const std::vector<std::string>& catalog);

// A remote summarization service. Implementations either return raw summary
// text, a typed refusal, or throw TransportError after retries.
struct Refusal {
    std::string reason;
};

using SummarizeResult = std::variant<std::string, Refusal>;

class ExtractorBackend {
public:
    virtual ~ExtractorBackend() = default;
    virtual SummarizeResult summarize(const std::string& template_id,
                                      const std::vector<std::string>& documents) = 0;
};

using ExtractOutcome = std::variant<FeatureSummary, Refusal>;

// Pre-filters p's documents, submits them under `template_id`, and parses
// the returned comma-separated list. A refusal propagates as a value so
// callers can drop the profile; transport failures surface as
// TransportError.
ExtractOutcome extract_remote(const Profile& p, ExtractorBackend& backend,
                              const std::string& template_id);

} // namespace linkage::extract
