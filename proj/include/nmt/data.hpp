#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nmt/tensor.hpp"

namespace nmt {

// Token <-> id map. <eos> = 0 and <unk> = 1 are always present; the remaining ids are
// assigned by descending corpus frequency with ties broken lexicographically.
class Vocabulary {
public:
    static constexpr int kEos = 0;
    static constexpr int kUnk = 1;
    static constexpr std::string_view kEosToken = "<eos>";
    static constexpr std::string_view kUnkToken = "<unk>";

    Vocabulary();

    // n_words > 0 keeps only the n_words most frequent tokens (specials not counted).
    static Vocabulary from_counts(const std::unordered_map<std::string, std::uint64_t>& counts,
                                  std::size_t n_words = 0);
    // tokens[0..1] must be the specials.
    static Vocabulary from_tokens(std::vector<std::string> tokens, std::vector<std::uint64_t> freqs = {});

    std::size_t size() const { return tokens_.size(); }
    bool contains(std::string_view token) const;
    int id(std::string_view token) const;
    const std::string& token(int id) const;
    std::uint64_t frequency(int id) const { return freqs_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::vector<std::uint64_t>& frequencies() const { return freqs_; }

    // Unknown tokens map to <unk>; <eos> is appended.
    std::vector<int> encode(const std::vector<std::string>& tokens) const;
    std::vector<int> encode_line(std::string_view line) const;
    // Stops at the first <eos>.
    std::vector<std::string> decode(std::span<const int> ids) const;
    std::string decode_line(std::span<const int> ids) const;

    std::string to_json() const;
    static Vocabulary from_json(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::vector<std::uint64_t> freqs_;
    std::unordered_map<std::string, int> index_;
};

std::vector<std::string> split_tokens(std::string_view line);
bool valid_utf8(std::string_view s);

// Streams lines from plain, .gz or .xz files (selected by suffix). Lines are checked for
// valid UTF-8; errors carry the 1-based line number.
class LineReader {
public:
    explicit LineReader(const std::filesystem::path& path);
    ~LineReader();
    LineReader(const LineReader&) = delete;
    LineReader& operator=(const LineReader&) = delete;

    bool next(std::string& line);
    std::size_t line_number() const { return line_no_; }

    class Source;

private:
    bool fill();

    std::filesystem::path path_;
    std::unique_ptr<Source> source_;
    std::string buffer_;
    std::size_t pos_ = 0;
    bool eof_ = false;
    std::size_t line_no_ = 0;
};

std::vector<std::string> read_lines(const std::filesystem::path& path);

Vocabulary build_vocab(const std::vector<std::filesystem::path>& corpora, std::size_t n_words = 0);
Vocabulary build_vocab_from_lines(const std::vector<std::string>& lines, std::size_t n_words = 0);

// Numericalized corpus; every sequence ends in <eos>. `src` is empty for monolingual data.
struct ParallelCorpus {
    std::vector<std::vector<int>> src;
    std::vector<std::vector<int>> trg;
    std::vector<std::size_t> indices;  // original line numbers (0-based)

    std::size_t size() const { return trg.size(); }
    bool monolingual() const { return src.empty(); }
};

// max_seq_len > 0 drops pairs where either side has more than max_seq_len tokens (excluding <eos>).
ParallelCorpus make_parallel_corpus(const std::vector<std::string>& src_lines, const std::vector<std::string>& trg_lines,
                                    const Vocabulary& src_vocab, const Vocabulary& trg_vocab,
                                    std::size_t max_seq_len = 0);
ParallelCorpus make_monolingual_corpus(const std::vector<std::string>& lines, const Vocabulary& vocab,
                                       std::size_t max_seq_len = 0);
ParallelCorpus load_parallel_corpus(const std::filesystem::path& src, const std::filesystem::path& trg,
                                    const Vocabulary& src_vocab, const Vocabulary& trg_vocab,
                                    std::size_t max_seq_len = 0);
ParallelCorpus load_monolingual_corpus(const std::filesystem::path& path, const Vocabulary& vocab,
                                       std::size_t max_seq_len = 0);

// Padded mini-batch. Padding uses <eos> (id 0) and is switched off by the masks.
struct Batch {
    std::size_t size = 0;
    std::size_t src_len = 0;
    std::size_t trg_len = 0;
    std::vector<int> src_ids;  // [size, src_len] row-major
    std::vector<int> trg_ids;  // [size, trg_len] row-major
    Tensor src_mask;           // [size, src_len]
    Tensor trg_mask;           // [size, trg_len]
    std::vector<std::size_t> sample_indices;

    bool has_source() const { return src_len > 0; }
    std::size_t target_tokens() const;
};

// rows index into corpus.src / corpus.trg.
Batch make_batch(const ParallelCorpus& corpus, std::span<const std::size_t> rows);

enum class ShuffleMode { none, simple, trglen };
ShuffleMode parse_shuffle_mode(const std::string& name);
std::string to_string(ShuffleMode mode);

// Single-producer batch stream. The order of epoch e is a pure function of (seed, e), so
// the iterator can be repositioned exactly when resuming from a snapshot.
class BatchIterator {
public:
    BatchIterator(const ParallelCorpus& corpus, std::size_t batch_size, ShuffleMode mode, std::uint64_t seed);

    // Row groups for 1-based epoch `epoch`.
    std::vector<std::vector<std::size_t>> plan_epoch(std::size_t epoch) const;

    // Next batch of the current epoch, or nullopt when the epoch is exhausted (the iterator
    // then moves on to the next epoch).
    std::optional<Batch> next();

    std::size_t epoch() const { return epoch_; }
    std::size_t position() const { return position_; }
    void seek(std::size_t epoch, std::size_t position);

private:
    const ParallelCorpus* corpus_;
    std::size_t batch_size_;
    ShuffleMode mode_;
    std::uint64_t seed_;
    std::size_t epoch_ = 1;
    std::size_t position_ = 0;
    std::vector<std::vector<std::size_t>> plan_;
};

}  // namespace nmt
