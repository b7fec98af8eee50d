#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nmt {

enum class MetricName { bleu, bleu_v13a, perplexity };
enum class Direction { higher_better, lower_better };

// "bleu", "bleu_v13a", "px"/"perplexity". "meteor" is recognised and rejected as unsupported.
MetricName parse_metric(const std::string& name);
std::string to_string(MetricName m);
Direction direction_of(MetricName m);

struct MetricValue {
    MetricName name = MetricName::bleu;
    double value = 0.0;

    Direction direction() const { return direction_of(name); }
    std::string str() const;  // "BLEU = 27.31"
};

// Strict improvement of a over b. Mixed names are an error.
bool metric_better(const MetricValue& a, const MetricValue& b);

struct BleuStats {
    std::array<std::uint64_t, 4> matches{};
    std::array<std::uint64_t, 4> totals{};
    std::uint64_t hyp_len = 0;
    std::uint64_t ref_len = 0;

    BleuStats& operator+=(const BleuStats& o);
    bool operator==(const BleuStats&) const = default;

    double precision(std::size_t n) const;  // n in 1..4
    double brevity_penalty() const;
    // BP * exp(mean log p_n) * 100, or 0 when any precision is zero.
    double bleu() const;
};

enum class BleuVariant { multi_bleu, v13a };

BleuStats sentence_stats(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);
BleuStats corpus_stats(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                       BleuVariant variant, bool lowercase = false);
MetricValue bleu_corpus(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                        BleuVariant variant = BleuVariant::multi_bleu, bool lowercase = false);

// mteval-v13a tokenization (without lowercasing).
std::vector<std::string> tokenize_v13a(std::string_view line);

MetricValue perplexity(double total_nll, double n_tokens);

}  // namespace nmt
