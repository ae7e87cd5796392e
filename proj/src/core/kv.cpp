#include "meta4/core/kv.hpp"

#include <fstream>
#include <sstream>

#include "meta4/core/error.hpp"

namespace meta4 {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

KvPairs parse_kv_text(const std::string& text) {
    KvPairs pairs;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        require(eq != std::string::npos, "line ", lineno,
                " is not a key = value pair: '", t, "'");
        std::string key = trim(t.substr(0, eq));
        require(!key.empty(), "line ", lineno, " has an empty key");
        pairs.emplace_back(key, trim(t.substr(eq + 1)));
    }
    return pairs;
}

std::string format_kv_text(const KvPairs& pairs) {
    std::string out;
    for (const auto& [k, v] : pairs) {
        out += k;
        out += " = ";
        out += v;
        out += "\n";
    }
    return out;
}

KvPairs load_kv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open '", path, "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_kv_text(buf.str());
    } catch (const Error& e) {
        raise(path, ": ", e.what());
    }
}

void save_kv_file(const std::string& path, const KvPairs& pairs) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write '", path, "'");
    out << format_kv_text(pairs);
    require(out.good(), "short write to '", path, "'");
}

bool kv_has(const KvPairs& pairs, const std::string& key) {
    for (const auto& [k, v] : pairs) {
        if (k == key) return true;
    }
    return false;
}

const std::string& kv_get(const KvPairs& pairs, const std::string& key) {
    for (const auto& [k, v] : pairs) {
        if (k == key) return v;
    }
    raise("missing key '", key, "'");
}

std::string kv_get_or(const KvPairs& pairs, const std::string& key,
                      const std::string& fallback) {
    return kv_has(pairs, key) ? kv_get(pairs, key) : fallback;
}

}  // namespace meta4
