#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nmt/model.hpp"

namespace nmt {

struct Hypothesis {
    std::vector<int> tokens;  // ends in <eos> once finished
    double score = 0.0;       // sum of log-probabilities
    bool finished = false;
    std::vector<std::vector<double>> alphas;  // one row over source positions per token

    // Tokens without the trailing <eos>.
    std::vector<int> words() const;
};

struct BeamOptions {
    std::size_t beam_size = 12;
    std::size_t n_best = 1;
    // Maximum number of non-<eos> tokens; 0 selects 3 * src_len + 10.
    std::size_t max_len = 0;
    bool keep_alignments = false;
};

std::size_t default_max_len(std::size_t src_len);

// Per-step log-probabilities combined across an ensemble: log of the arithmetic mean of
// the models' distributions. A single model passes through unchanged.
Tensor ensemble_log_probs(const std::vector<Tensor>& per_model);

// Standard beam search. Finished hypotheses leave the beam (which narrows by one each
// time); hypotheses still alive at max_len are closed with <eos> and its log-probability.
// Returns up to n_best finished hypotheses, best first. src_ids ends in <eos>.
std::vector<Hypothesis> beam_search(std::span<const Model* const> models, std::span<const int> src_ids,
                                    const BeamOptions& options);

// Shared target vocabulary check for ensembles. Throws ConfigError on mismatch.
void check_ensemble(std::span<const Model* const> models);

struct TranslateOptions {
    BeamOptions beam;
    std::size_t workers = 1;
};

struct Translation {
    std::size_t id = 0;
    std::vector<int> src_ids;
    std::vector<Hypothesis> nbest;
};

// Decodes every source sentence with `workers` threads. `sink` receives translations in
// input order.
void translate_parallel(std::span<const Model* const> models, const std::vector<std::vector<int>>& sources,
                        const TranslateOptions& options, const std::function<void(Translation&&)>& sink);

// Convenience wrapper that collects results in order.
std::vector<Translation> translate_all(std::span<const Model* const> models,
                                       const std::vector<std::vector<int>>& sources, const TranslateOptions& options);

// Output writers. Text output is the best hypothesis per line; n-best lines follow
// `id ||| hypothesis ||| score`.
std::string hypothesis_text(const Hypothesis& h, const Vocabulary& trg_vocab);
void write_text_line(std::ostream& out, const Translation& t, const Vocabulary& trg_vocab);
void write_nbest_lines(std::ostream& out, const Translation& t, const Vocabulary& trg_vocab);
// JSON array of {id, src_tokens, hyp_tokens, alphas: [trg][src]}.
std::string alignments_json(const std::vector<Translation>& translations, const Vocabulary& src_vocab,
                            const Vocabulary& trg_vocab);

// n-best / 1-best rescoring.
struct RescoreItem {
    std::size_t sample = 0;
    std::string hypothesis;
    bool nbest_format = false;
    std::string extra;  // fields after the score column in n-best lines, kept verbatim
};

// Parses a hypothesis file. Lines containing " ||| " are n-best entries; otherwise line i
// is the hypothesis of sample i. Malformed entries raise DataError with the line number.
std::vector<RescoreItem> parse_hypotheses(const std::vector<std::string>& lines, std::size_t n_sources);

// Total NLL of every item under teacher forcing, averaged over the ensemble. Items of the
// same sample are scored together in one batch when `batched`.
std::vector<double> rescore(std::span<Model* const> models, const std::vector<std::string>& sources,
                            const std::vector<RescoreItem>& items, bool batched = true);

// `id ||| hyp ||| nll` for n-best input (later columns kept), `hyp ||| nll` otherwise.
std::string format_rescored(const RescoreItem& item, double nll);

// Shortest round-trip formatting for scores written to text files.
std::string format_score(double v);

}  // namespace nmt
