#pragma once

#include <string>
#include <utility>
#include <vector>

namespace meta4 {

// Ordered key = value pairs; the format used by config files, dataset
// metadata, and checkpoint manifests. One pair per line, '#' starts a
// comment, blank lines are skipped, keys and values are trimmed.
using KvPairs = std::vector<std::pair<std::string, std::string>>;

KvPairs parse_kv_text(const std::string& text);
std::string format_kv_text(const KvPairs& pairs);

KvPairs load_kv_file(const std::string& path);
void save_kv_file(const std::string& path, const KvPairs& pairs);

bool kv_has(const KvPairs& pairs, const std::string& key);
// First value for the key; throws when absent.
const std::string& kv_get(const KvPairs& pairs, const std::string& key);
std::string kv_get_or(const KvPairs& pairs, const std::string& key,
                      const std::string& fallback);

}  // namespace meta4
