#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "linkage/types.hpp"

namespace linkage {

// Dataset JSONL, one profile per line:
//   {"profile_id": str, "side": "query"|"candidate", "bio": str|null,
//    "documents": [{"ts": int, "community": str, "text": str}],
//    "truth": str|null}            (truth key on the query side only)
//
// Loading validates the result and throws ParseError (malformed line, with
// its line number) or ValidationError (duplicate id, dangling truth target).
// Documents are sorted by ascending timestamp on load.
Dataset load_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& d, const std::filesystem::path& path);

// Structural checks; one human-readable violation per problem, each naming
// the offending id. Empty means every invariant holds.
std::vector<std::string> validate_dataset(const Dataset& d);

// Feature summaries, one per line:
//   {"profile_id": str, "kind": "traits"|"reviews"|"attributes", ...payload}
std::vector<FeatureSummary> load_summaries(const std::filesystem::path& path);
void write_summaries(const std::vector<FeatureSummary>& s, const std::filesystem::path& path);

// Match decisions, one per line:
//   {"query_id": str, "guess": str|null, "confidence": real (guesses only),
//    "stage": str, "scores": {name: real}}
std::vector<MatchDecision> load_decisions(const std::filesystem::path& path);
void write_decisions(const std::vector<MatchDecision>& ds, const std::filesystem::path& path);

} // namespace linkage
