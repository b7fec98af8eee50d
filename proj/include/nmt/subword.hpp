#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace nmt {

inline constexpr std::string_view kBpeMarker = "@@";
inline constexpr std::string_view kEndOfWord = "</w>";

// Ordered merge list, highest priority first. Word-final symbols carry the "</w>" suffix.
class BpeModel {
public:
    using Pair = std::pair<std::string, std::string>;

    BpeModel() = default;
    explicit BpeModel(std::vector<Pair> merges);

    const std::vector<Pair>& merges() const { return merges_; }
    std::size_t size() const { return merges_.size(); }

    // Subword units of one word (no markers).
    std::vector<std::string> segment(const std::string& word) const;
    // Words are the ' '-separated fields of the line; every non-final subword gets "@@".
    std::string apply(const std::string& line) const;

    // "#version: 0.2" header, then one "left right" pair per line.
    void save(const std::filesystem::path& path) const;
    std::string to_text() const;
    static BpeModel load(const std::filesystem::path& path);
    static BpeModel from_text(const std::string& text);

    bool operator==(const BpeModel& o) const { return merges_ == o.merges_; }

private:
    std::vector<Pair> merges_;
    std::unordered_map<std::string, std::size_t> rank_;  // "left right" -> priority
};

// UTF-8 code points of s (invalid bytes are kept as single units).
std::vector<std::string> utf8_chars(std::string_view s);

// Learns up to num_merges merges. Each step merges the most frequent adjacent pair (ties:
// lexicographically smallest pair); learning stops early when no pair occurs at least
// min_frequency times.
BpeModel bpe_learn(const std::vector<std::string>& lines, std::size_t num_merges, std::size_t min_frequency = 2);

inline std::string bpe_apply(const BpeModel& model, const std::string& line) { return model.apply(line); }

enum class FilterKind { bpe, compound };

struct Filter {
    FilterKind kind = FilterKind::bpe;
    std::string marker = "@@";  // compound only
};

// Comma-separated filter names, e.g. "bpe,compound". Empty and "None"/"False" give no filters.
std::vector<Filter> parse_filters(const std::string& spec);
std::string filter_apply(const Filter& filter, const std::string& line);
std::string filter_apply(FilterKind kind, const std::string& line);
// Left to right.
std::string apply_filters(const std::vector<Filter>& filters, const std::string& line);

}  // namespace nmt
