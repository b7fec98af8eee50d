#include "nmt/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <regex>

#include "nmt/data.hpp"
#include "nmt/error.hpp"

namespace nmt {

MetricName parse_metric(const std::string& name) {
    if (name == "bleu") return MetricName::bleu;
    if (name == "bleu_v13a") return MetricName::bleu_v13a;
    if (name == "px" || name == "perplexity") return MetricName::perplexity;
    if (name == "meteor")
        throw ConfigError("metric 'meteor' is unsupported in this artifact (use bleu, bleu_v13a or px)");
    throw ConfigError("unknown metric '" + name + "' (expected bleu, bleu_v13a, px)");
}

std::string to_string(MetricName m) {
    switch (m) {
        case MetricName::bleu: return "bleu";
        case MetricName::bleu_v13a: return "bleu_v13a";
        case MetricName::perplexity: return "px";
    }
    return "?";
}

Direction direction_of(MetricName m) {
    return m == MetricName::perplexity ? Direction::lower_better : Direction::higher_better;
}

std::string MetricValue::str() const {
    const char* label = name == MetricName::bleu ? "BLEU" : name == MetricName::bleu_v13a ? "BLEU_v13a" : "PX";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s = %.2f", label, value);
    return buf;
}

bool metric_better(const MetricValue& a, const MetricValue& b) {
    if (a.name != b.name)
        throw ConfigError("cannot compare metric " + to_string(a.name) + " with " + to_string(b.name));
    return a.direction() == Direction::higher_better ? a.value > b.value : a.value < b.value;
}

// ---------------------------------------------------------------------------------------

BleuStats& BleuStats::operator+=(const BleuStats& o) {
    for (std::size_t n = 0; n < 4; ++n) {
        matches[n] += o.matches[n];
        totals[n] += o.totals[n];
    }
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
    return *this;
}

double BleuStats::precision(std::size_t n) const {
    if (n < 1 || n > 4) throw ConfigError("BLEU order must be in 1..4");
    const auto t = totals[n - 1];
    return t == 0 ? 0.0 : static_cast<double>(matches[n - 1]) / static_cast<double>(t);
}

double BleuStats::brevity_penalty() const {
    if (hyp_len == 0) return 0.0;
    if (hyp_len >= ref_len) return 1.0;
    return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

double BleuStats::bleu() const {
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const double p = precision(n);
        if (p == 0.0) return 0.0;
        log_sum += std::log(p);
    }
    return 100.0 * brevity_penalty() * std::exp(log_sum / 4.0);
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::uint64_t>;

NgramCounts ngrams(const std::vector<std::string>& toks, std::size_t n) {
    NgramCounts out;
    if (toks.size() < n) return out;
    for (std::size_t i = 0; i + n <= toks.size(); ++i)
        ++out[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                       toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return out;
}

std::string ascii_lower(std::string s) {
    for (auto& c : s)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return s;
}

std::vector<std::string> tokens_for(const std::string& line, BleuVariant variant, bool lowercase) {
    const std::string text = lowercase ? ascii_lower(line) : line;
    return variant == BleuVariant::v13a ? tokenize_v13a(text) : split_tokens(text);
}

}  // namespace

BleuStats sentence_stats(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
    BleuStats s;
    s.hyp_len = hyp.size();
    s.ref_len = ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto h = ngrams(hyp, n);
        const auto r = ngrams(ref, n);
        std::uint64_t matched = 0;
        for (const auto& [g, c] : h) {
            auto it = r.find(g);
            if (it != r.end()) matched += std::min(c, it->second);
        }
        s.matches[n - 1] = matched;
        s.totals[n - 1] = hyp.size() >= n ? hyp.size() - n + 1 : 0;
    }
    return s;
}

BleuStats corpus_stats(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                       BleuVariant variant, bool lowercase) {
    if (hyps.size() != refs.size())
        throw DataError("BLEU: " + std::to_string(hyps.size()) + " hypotheses but " + std::to_string(refs.size()) +
                        " references");
    BleuStats total;
    for (std::size_t i = 0; i < hyps.size(); ++i)
        total += sentence_stats(tokens_for(hyps[i], variant, lowercase), tokens_for(refs[i], variant, lowercase));
    return total;
}

MetricValue bleu_corpus(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                        BleuVariant variant, bool lowercase) {
    const BleuStats s = corpus_stats(hyps, refs, variant, lowercase);
    return {variant == BleuVariant::v13a ? MetricName::bleu_v13a : MetricName::bleu, s.bleu()};
}

std::vector<std::string> tokenize_v13a(std::string_view line) {
    // Same substitutions, in the same order, as mteval-v13a.pl's tokenization routine.
    static const std::regex skipped("<skipped>");
    static const std::regex eol_hyphen("-\n");
    static const std::regex newline("\n");
    static const std::regex quot("&quot;");
    static const std::regex amp("&amp;");
    static const std::regex lt("&lt;");
    static const std::regex gt("&gt;");
    static const std::regex punct(R"(([\{-\~\[-\` -\&\(-\+\:-\@\/]))");
    static const std::regex period_comma_after_nondigit(R"(([^0-9])([\.,]))");
    static const std::regex period_comma_before_nondigit(R"(([\.,])([^0-9]))");
    static const std::regex dash_after_digit(R"(([0-9])(-))");

    std::string s(line);
    s = std::regex_replace(s, skipped, "");
    s = std::regex_replace(s, eol_hyphen, "");
    s = std::regex_replace(s, newline, " ");
    s = std::regex_replace(s, quot, "\"");
    s = std::regex_replace(s, amp, "&");
    s = std::regex_replace(s, lt, "<");
    s = std::regex_replace(s, gt, ">");
    s = " " + s + " ";
    s = std::regex_replace(s, punct, " $1 ");
    s = std::regex_replace(s, period_comma_after_nondigit, "$1 $2 ");
    s = std::regex_replace(s, period_comma_before_nondigit, " $1 $2");
    s = std::regex_replace(s, dash_after_digit, "$1 $2 ");
    return split_tokens(s);
}

MetricValue perplexity(double total_nll, double n_tokens) {
    if (!(n_tokens > 0.0)) throw DataError("perplexity needs at least one token");
    return {MetricName::perplexity, std::exp(total_nll / n_tokens)};
}

}  // namespace nmt
