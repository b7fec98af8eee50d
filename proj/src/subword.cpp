#include "nmt/subword.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "nmt/error.hpp"

namespace nmt {

std::vector<std::string> utf8_chars(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t n = c < 0x80 ? 1 : (c & 0xE0) == 0xC0 ? 2 : (c & 0xF0) == 0xE0 ? 3 : (c & 0xF8) == 0xF0 ? 4 : 1;
        if (i + n > s.size()) n = 1;
        out.emplace_back(s.substr(i, n));
        i += n;
    }
    return out;
}

namespace {

std::vector<std::string> split_on_space(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (;;) {
        const auto next = line.find(' ', pos);
        if (next == std::string::npos) {
            out.push_back(line.substr(pos));
            return out;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + 1;
    }
}

std::vector<std::string> initial_symbols(const std::string& word) {
    auto chars = utf8_chars(word);
    if (!chars.empty()) chars.back() += kEndOfWord;
    return chars;
}

std::string pair_key(const std::string& a, const std::string& b) { return a + ' ' + b; }

}  // namespace

BpeModel::BpeModel(std::vector<Pair> merges) : merges_(std::move(merges)) {
    for (std::size_t i = 0; i < merges_.size(); ++i) {
        const auto& [a, b] = merges_[i];
        if (a.empty() || b.empty() || a.find(' ') != std::string::npos || b.find(' ') != std::string::npos)
            throw DataError("invalid BPE merge #" + std::to_string(i + 1));
        if (!rank_.emplace(pair_key(a, b), i).second)
            throw DataError("duplicate BPE merge '" + a + " " + b + "'");
    }
}

std::vector<std::string> BpeModel::segment(const std::string& word) const {
    if (word.empty()) return {};
    std::vector<std::string> sym = initial_symbols(word);
    while (sym.size() > 1) {
        std::size_t best = std::string::npos;
        std::string best_left, best_right;
        for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
            auto it = rank_.find(pair_key(sym[i], sym[i + 1]));
            if (it != rank_.end() && it->second < best) {
                best = it->second;
                best_left = sym[i];
                best_right = sym[i + 1];
            }
        }
        if (best == std::string::npos) break;
        std::vector<std::string> merged;
        for (std::size_t i = 0; i < sym.size();) {
            if (i + 1 < sym.size() && sym[i] == best_left && sym[i + 1] == best_right) {
                merged.push_back(sym[i] + sym[i + 1]);
                i += 2;
            } else {
                merged.push_back(sym[i]);
                ++i;
            }
        }
        sym = std::move(merged);
    }
    auto& last = sym.back();
    last.erase(last.size() - kEndOfWord.size());
    if (last.empty()) sym.pop_back();
    return sym;
}

std::string BpeModel::apply(const std::string& line) const {
    std::string out;
    bool first = true;
    for (const auto& word : split_on_space(line)) {
        if (!first) out += ' ';
        first = false;
        const auto units = segment(word);
        for (std::size_t i = 0; i < units.size(); ++i) {
            out += units[i];
            if (i + 1 < units.size()) {
                out += kBpeMarker;
                out += ' ';
            }
        }
    }
    return out;
}

std::string BpeModel::to_text() const {
    std::string out = "#version: 0.2\n";
    for (const auto& [a, b] : merges_) out += a + ' ' + b + '\n';
    return out;
}

void BpeModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write BPE model " + path.string());
    out << to_text();
}

BpeModel BpeModel::from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<Pair> merges;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && line.rfind("#version", 0) == 0) continue;
        if (line.empty()) continue;
        const auto sp = line.find(' ');
        if (sp == std::string::npos || line.find(' ', sp + 1) != std::string::npos)
            throw DataError("BPE model line " + std::to_string(line_no) + ": expected 'left right'");
        merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
    return BpeModel(std::move(merges));
}

BpeModel BpeModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open BPE model " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

BpeModel bpe_learn(const std::vector<std::string>& lines, std::size_t num_merges, std::size_t min_frequency) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& line : lines)
        for (auto& w : split_on_space(line))
            if (!w.empty()) ++counts[w];
    if (counts.empty()) throw DataError("cannot learn BPE from an empty corpus");

    struct Word {
        std::vector<std::string> sym;
        std::uint64_t freq;
    };
    std::vector<Word> words;
    for (const auto& [w, c] : counts) words.push_back({initial_symbols(w), c});

    using P = std::pair<std::string, std::string>;
    std::map<P, std::int64_t> stats;
    std::map<P, std::set<std::size_t>> where;
    auto add_word = [&](std::size_t wi, std::int64_t sign) {
        const auto& s = words[wi].sym;
        for (std::size_t i = 0; i + 1 < s.size(); ++i) {
            P p{s[i], s[i + 1]};
            auto& v = stats[p];
            v += sign * static_cast<std::int64_t>(words[wi].freq);
            if (sign > 0) where[p].insert(wi);
            if (v == 0) stats.erase(p);
        }
    };
    for (std::size_t wi = 0; wi < words.size(); ++wi) add_word(wi, +1);

    std::vector<P> merges;
    while (merges.size() < num_merges && !stats.empty()) {
        // std::map iterates pairs in lexicographic order, so the first maximum wins ties.
        auto best = stats.begin();
        for (auto it = stats.begin(); it != stats.end(); ++it)
            if (it->second > best->second) best = it;
        if (best->second < static_cast<std::int64_t>(min_frequency)) break;
        const P pair = best->first;
        merges.push_back(pair);

        const auto affected = where[pair];
        for (std::size_t wi : affected) {
            auto& s = words[wi].sym;
            bool has = false;
            for (std::size_t i = 0; i + 1 < s.size(); ++i) has = has || (s[i] == pair.first && s[i + 1] == pair.second);
            if (!has) continue;
            add_word(wi, -1);
            std::vector<std::string> merged;
            for (std::size_t i = 0; i < s.size();) {
                if (i + 1 < s.size() && s[i] == pair.first && s[i + 1] == pair.second) {
                    merged.push_back(s[i] + s[i + 1]);
                    i += 2;
                } else {
                    merged.push_back(s[i]);
                    ++i;
                }
            }
            s = std::move(merged);
            add_word(wi, +1);
        }
        where.erase(pair);
    }
    return BpeModel(std::move(merges));
}

// ---------------------------------------------------------------------------------------

std::vector<Filter> parse_filters(const std::string& spec) {
    std::vector<Filter> out;
    if (spec.empty() || spec == "None" || spec == "False" || spec == "none") return out;
    std::stringstream ss(spec);
    std::string name;
    while (std::getline(ss, name, ',')) {
        const auto b = name.find_first_not_of(" \t");
        const auto e = name.find_last_not_of(" \t");
        name = b == std::string::npos ? "" : name.substr(b, e - b + 1);
        if (name == "bpe")
            out.push_back({FilterKind::bpe, "@@"});
        else if (name == "compound")
            out.push_back({FilterKind::compound, "@@"});
        else
            throw ConfigError("unknown post-processing filter '" + name + "' (expected bpe, compound)");
    }
    return out;
}

std::string filter_apply(const Filter& filter, const std::string& line) {
    if (filter.kind == FilterKind::bpe) {
        std::string out;
        out.reserve(line.size());
        for (std::size_t i = 0; i < line.size();) {
            if (line.compare(i, 3, "@@ ") == 0) {
                i += 3;
            } else if (i + 2 == line.size() && line.compare(i, 2, "@@") == 0) {
                i += 2;
            } else {
                out += line[i++];
            }
        }
        return out;
    }
    if (filter.marker.empty()) throw ConfigError("compound filter marker must not be empty");
    const auto tokens = split_on_space(line);
    std::string out;
    bool joined = false;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        std::string tok = tokens[i];
        if (i > 0 && !joined) out += ' ';
        joined = false;
        const bool ends = tok.size() >= filter.marker.size() &&
                          tok.compare(tok.size() - filter.marker.size(), filter.marker.size(), filter.marker) == 0;
        if (ends && i + 1 < tokens.size()) {
            tok.erase(tok.size() - filter.marker.size());
            joined = true;
        }
        out += tok;
    }
    return out;
}

std::string filter_apply(FilterKind kind, const std::string& line) { return filter_apply(Filter{kind, "@@"}, line); }

std::string apply_filters(const std::vector<Filter>& filters, const std::string& line) {
    std::string out = line;
    for (const auto& f : filters) out = filter_apply(f, out);
    return out;
}

}  // namespace nmt
