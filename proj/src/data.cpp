#include "nmt/data.hpp"

#include <lzma.h>
#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"
#include "nmt/random.hpp"

namespace nmt {

using json = nlohmann::json;

// ---------------------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
    tokens_ = {std::string(kEosToken), std::string(kUnkToken)};
    freqs_ = {0, 0};
    index_ = {{tokens_[0], kEos}, {tokens_[1], kUnk}};
}

Vocabulary Vocabulary::from_counts(const std::unordered_map<std::string, std::uint64_t>& counts, std::size_t n_words) {
    std::vector<std::pair<std::string, std::uint64_t>> items;
    items.reserve(counts.size());
    for (const auto& [tok, n] : counts)
        if (tok != kEosToken && tok != kUnkToken) items.emplace_back(tok, n);
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (n_words > 0 && items.size() > n_words) items.resize(n_words);

    Vocabulary v;
    for (auto& [tok, n] : items) {
        v.index_.emplace(tok, static_cast<int>(v.tokens_.size()));
        v.tokens_.push_back(tok);
        v.freqs_.push_back(n);
    }
    return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, std::vector<std::uint64_t> freqs) {
    if (tokens.size() < 2 || tokens[0] != kEosToken || tokens[1] != kUnkToken)
        throw DataError("vocabulary must start with <eos>, <unk>");
    if (!freqs.empty() && freqs.size() != tokens.size())
        throw DataError("vocabulary frequency list does not match token list");
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    v.freqs_ = freqs.empty() ? std::vector<std::uint64_t>(v.tokens_.size(), 0) : std::move(freqs);
    v.index_.clear();
    for (std::size_t i = 0; i < v.tokens_.size(); ++i)
        if (!v.index_.emplace(v.tokens_[i], static_cast<int>(i)).second)
            throw DataError("duplicate vocabulary token '" + v.tokens_[i] + "'");
    return v;
}

bool Vocabulary::contains(std::string_view token) const { return index_.contains(std::string(token)); }

int Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw DataError("token id " + std::to_string(id) + " out of range for vocabulary of size " +
                        std::to_string(tokens_.size()));
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size() + 1);
    for (const auto& t : tokens) ids.push_back(id(t));
    ids.push_back(kEos);
    return ids;
}

std::vector<int> Vocabulary::encode_line(std::string_view line) const { return encode(split_tokens(line)); }

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
    std::vector<std::string> out;
    for (int i : ids) {
        if (i == kEos) break;
        out.push_back(token(i));
    }
    return out;
}

std::string Vocabulary::decode_line(std::span<const int> ids) const {
    std::string out;
    for (const auto& t : decode(ids)) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

std::string Vocabulary::to_json() const {
    json tokens = json::object();
    json counts = json::object();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        tokens[tokens_[i]] = i;
        counts[tokens_[i]] = freqs_[i];
    }
    json j;
    j["format"] = "nmtkit-vocab";
    j["version"] = 1;
    j["specials"] = {{"eos", kEosToken}, {"eos_id", kEos}, {"unk", kUnkToken}, {"unk_id", kUnk}};
    j["size"] = tokens_.size();
    j["tokens"] = std::move(tokens);
    j["counts"] = std::move(counts);
    return j.dump(1);
}

Vocabulary Vocabulary::from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("vocabulary: invalid JSON: ") + e.what());
    }
    if (!j.contains("tokens") || !j["tokens"].is_object()) throw DataError("vocabulary: missing \"tokens\" map");
    if (!j.contains("specials")) throw DataError("vocabulary: missing \"specials\" block");
    const auto& sp = j["specials"];
    if (sp.value("eos", "") != kEosToken || sp.value("eos_id", -1) != kEos || sp.value("unk", "") != kUnkToken ||
        sp.value("unk_id", -1) != kUnk)
        throw DataError("vocabulary: unsupported special token layout");
    const auto& tok = j["tokens"];
    std::vector<std::string> tokens(tok.size());
    std::vector<std::uint64_t> freqs(tok.size(), 0);
    for (auto it = tok.begin(); it != tok.end(); ++it) {
        const auto id = it.value().get<std::size_t>();
        if (id >= tokens.size() || !tokens[id].empty()) throw DataError("vocabulary: ids are not dense");
        tokens[id] = it.key();
        if (j.contains("counts") && j["counts"].contains(it.key())) freqs[id] = j["counts"][it.key()].get<std::uint64_t>();
    }
    return from_tokens(std::move(tokens), std::move(freqs));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file " + path.string());
    out << to_json() << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocabulary file " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return from_json(text);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::vector<std::string> split_tokens(std::string_view line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) ++i;
        std::size_t j = i;
        while (j < line.size() && !is_space(line[j])) ++j;
        if (j > i) out.emplace_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

bool valid_utf8(std::string_view s) {
    std::size_t i = 0;
    const auto* b = reinterpret_cast<const unsigned char*>(s.data());
    while (i < s.size()) {
        const unsigned char c = b[i];
        std::size_t n;
        std::uint32_t cp;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            n = 1;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            n = 2;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            n = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + n >= s.size()) return false;
        for (std::size_t k = 1; k <= n; ++k) {
            if ((b[i + k] & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (b[i + k] & 0x3F);
        }
        if ((n == 1 && cp < 0x80) || (n == 2 && cp < 0x800) || (n == 3 && (cp < 0x10000 || cp > 0x10FFFF)) ||
            (cp >= 0xD800 && cp <= 0xDFFF))
            return false;
        i += n + 1;
    }
    return true;
}

// ---------------------------------------------------------------------------------------
// Compressed line reading

class LineReader::Source {
public:
    virtual ~Source() = default;
    // Returns bytes read, 0 at end of stream. Throws DataError on corrupt input.
    virtual std::size_t read(char* buf, std::size_t n) = 0;
};

namespace {

class PlainSource : public LineReader::Source {
public:
    explicit PlainSource(const std::filesystem::path& p) : in_(p, std::ios::binary) {
        if (!in_) throw DataError("cannot open " + p.string());
    }
    std::size_t read(char* buf, std::size_t n) override {
        in_.read(buf, static_cast<std::streamsize>(n));
        return static_cast<std::size_t>(in_.gcount());
    }

private:
    std::ifstream in_;
};

class GzipSource : public LineReader::Source {
public:
    explicit GzipSource(const std::filesystem::path& p) : path_(p.string()) {
        file_ = gzopen(path_.c_str(), "rb");
        if (!file_) throw DataError("cannot open " + path_);
    }
    ~GzipSource() override { gzclose(file_); }
    std::size_t read(char* buf, std::size_t n) override {
        const int got = gzread(file_, buf, static_cast<unsigned>(n));
        int err = Z_OK;
        const char* msg = gzerror(file_, &err);
        if (got < 0 || (err != Z_OK && err != Z_STREAM_END))
            throw DataError(path_ + ": gzip decode error: " + (msg ? msg : "unknown"));
        return static_cast<std::size_t>(got);
    }

private:
    std::string path_;
    gzFile file_ = nullptr;
};

class XzSource : public LineReader::Source {
public:
    explicit XzSource(const std::filesystem::path& p) : path_(p.string()) {
        file_ = std::fopen(path_.c_str(), "rb");
        if (!file_) throw DataError("cannot open " + path_);
        if (lzma_stream_decoder(&strm_, UINT64_MAX, LZMA_CONCATENATED) != LZMA_OK) {
            std::fclose(file_);
            throw DataError(path_ + ": cannot initialize xz decoder");
        }
    }
    ~XzSource() override {
        lzma_end(&strm_);
        std::fclose(file_);
    }
    std::size_t read(char* buf, std::size_t n) override {
        if (done_) return 0;
        strm_.next_out = reinterpret_cast<std::uint8_t*>(buf);
        strm_.avail_out = n;
        while (strm_.avail_out == n) {
            lzma_action action = LZMA_RUN;
            if (strm_.avail_in == 0) {
                if (!input_eof_) {
                    strm_.next_in = in_buf_;
                    strm_.avail_in = std::fread(in_buf_, 1, sizeof(in_buf_), file_);
                    if (std::ferror(file_)) throw DataError(path_ + ": read error");
                    if (std::feof(file_)) input_eof_ = true;
                }
                if (input_eof_) action = LZMA_FINISH;
            }
            const lzma_ret ret = lzma_code(&strm_, action);
            if (ret == LZMA_STREAM_END) {
                done_ = true;
                break;
            }
            if (ret != LZMA_OK) throw DataError(path_ + ": xz decode error (code " + std::to_string(ret) + ")");
        }
        return n - strm_.avail_out;
    }

private:
    std::string path_;
    std::FILE* file_ = nullptr;
    lzma_stream strm_ = LZMA_STREAM_INIT;
    std::uint8_t in_buf_[1 << 16];
    bool input_eof_ = false;
    bool done_ = false;
};

bool has_suffix(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

LineReader::LineReader(const std::filesystem::path& path) : path_(path) {
    if (!std::filesystem::exists(path)) throw DataError("no such file: " + path.string());
    const std::string name = path.string();
    if (has_suffix(name, ".gz"))
        source_ = std::make_unique<GzipSource>(path);
    else if (has_suffix(name, ".xz"))
        source_ = std::make_unique<XzSource>(path);
    else if (has_suffix(name, ".bz2"))
        throw DataError(name + ": bzip2 input is not supported (use .gz or .xz)");
    else
        source_ = std::make_unique<PlainSource>(path);
}

LineReader::~LineReader() = default;

bool LineReader::fill() {
    if (eof_) return false;
    buffer_.erase(0, pos_);
    pos_ = 0;
    char chunk[1 << 16];
    const std::size_t got = source_->read(chunk, sizeof(chunk));
    if (got == 0) {
        eof_ = true;
        return false;
    }
    buffer_.append(chunk, got);
    return true;
}

bool LineReader::next(std::string& line) {
    for (;;) {
        const auto nl = buffer_.find('\n', pos_);
        if (nl != std::string::npos) {
            line.assign(buffer_, pos_, nl - pos_);
            pos_ = nl + 1;
            break;
        }
        if (!fill()) {
            if (pos_ >= buffer_.size()) return false;
            line.assign(buffer_, pos_, std::string::npos);
            pos_ = buffer_.size();
            break;
        }
    }
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!valid_utf8(line))
        throw DataError(path_.string() + ":" + std::to_string(line_no_) + ": invalid UTF-8");
    return true;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    LineReader reader(path);
    std::vector<std::string> lines;
    std::string line;
    while (reader.next(line)) lines.push_back(line);
    return lines;
}

Vocabulary build_vocab_from_lines(const std::vector<std::string>& lines, std::size_t n_words) {
    std::unordered_map<std::string, std::uint64_t> counts;
    std::size_t n_tokens = 0;
    for (const auto& line : lines)
        for (auto& t : split_tokens(line)) {
            ++counts[t];
            ++n_tokens;
        }
    if (n_tokens == 0) throw DataError("cannot build a vocabulary from an empty corpus");
    return Vocabulary::from_counts(counts, n_words);
}

Vocabulary build_vocab(const std::vector<std::filesystem::path>& corpora, std::size_t n_words) {
    std::unordered_map<std::string, std::uint64_t> counts;
    std::size_t n_tokens = 0;
    for (const auto& path : corpora) {
        LineReader reader(path);
        std::string line;
        while (reader.next(line))
            for (auto& t : split_tokens(line)) {
                ++counts[t];
                ++n_tokens;
            }
    }
    if (n_tokens == 0) throw DataError("cannot build a vocabulary from an empty corpus");
    return Vocabulary::from_counts(counts, n_words);
}

// ---------------------------------------------------------------------------------------
// Corpora and batching

ParallelCorpus make_parallel_corpus(const std::vector<std::string>& src_lines, const std::vector<std::string>& trg_lines,
                                    const Vocabulary& src_vocab, const Vocabulary& trg_vocab, std::size_t max_seq_len) {
    if (src_lines.size() != trg_lines.size())
        throw DataError("source has " + std::to_string(src_lines.size()) + " lines but target has " +
                        std::to_string(trg_lines.size()));
    ParallelCorpus c;
    for (std::size_t i = 0; i < src_lines.size(); ++i) {
        auto s = src_vocab.encode_line(src_lines[i]);
        auto t = trg_vocab.encode_line(trg_lines[i]);
        if (max_seq_len > 0 && (s.size() - 1 > max_seq_len || t.size() - 1 > max_seq_len)) continue;
        c.src.push_back(std::move(s));
        c.trg.push_back(std::move(t));
        c.indices.push_back(i);
    }
    return c;
}

ParallelCorpus make_monolingual_corpus(const std::vector<std::string>& lines, const Vocabulary& vocab,
                                       std::size_t max_seq_len) {
    ParallelCorpus c;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto t = vocab.encode_line(lines[i]);
        if (max_seq_len > 0 && t.size() - 1 > max_seq_len) continue;
        c.trg.push_back(std::move(t));
        c.indices.push_back(i);
    }
    return c;
}

ParallelCorpus load_parallel_corpus(const std::filesystem::path& src, const std::filesystem::path& trg,
                                    const Vocabulary& src_vocab, const Vocabulary& trg_vocab, std::size_t max_seq_len) {
    return make_parallel_corpus(read_lines(src), read_lines(trg), src_vocab, trg_vocab, max_seq_len);
}

ParallelCorpus load_monolingual_corpus(const std::filesystem::path& path, const Vocabulary& vocab,
                                       std::size_t max_seq_len) {
    return make_monolingual_corpus(read_lines(path), vocab, max_seq_len);
}

std::size_t Batch::target_tokens() const {
    double n = 0.0;
    for (double m : trg_mask.values()) n += m;
    return static_cast<std::size_t>(n);
}

namespace {

void pad_into(const std::vector<const std::vector<int>*>& seqs, std::size_t len, std::vector<int>& ids, Tensor& mask) {
    const std::size_t B = seqs.size();
    ids.assign(B * len, Vocabulary::kEos);
    mask = Tensor({B, len});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < seqs[b]->size(); ++t) {
            ids[b * len + t] = (*seqs[b])[t];
            mask.at(b, t) = 1.0;
        }
}

}  // namespace

Batch make_batch(const ParallelCorpus& corpus, std::span<const std::size_t> rows) {
    if (rows.empty()) throw DataError("make_batch: empty row list");
    Batch batch;
    batch.size = rows.size();
    std::vector<const std::vector<int>*> src, trg;
    for (auto r : rows) {
        if (r >= corpus.size()) throw DataError("make_batch: row " + std::to_string(r) + " out of range");
        trg.push_back(&corpus.trg[r]);
        if (!corpus.monolingual()) src.push_back(&corpus.src[r]);
        batch.sample_indices.push_back(corpus.indices.empty() ? r : corpus.indices[r]);
    }
    for (auto* t : trg) batch.trg_len = std::max(batch.trg_len, t->size());
    pad_into(trg, batch.trg_len, batch.trg_ids, batch.trg_mask);
    if (!src.empty()) {
        for (auto* s : src) batch.src_len = std::max(batch.src_len, s->size());
        pad_into(src, batch.src_len, batch.src_ids, batch.src_mask);
    }
    return batch;
}

ShuffleMode parse_shuffle_mode(const std::string& name) {
    if (name == "none" || name == "False" || name.empty()) return ShuffleMode::none;
    if (name == "simple") return ShuffleMode::simple;
    if (name == "trglen") return ShuffleMode::trglen;
    throw ConfigError("unknown shuffle_mode '" + name + "' (expected none, simple, trglen)");
}

std::string to_string(ShuffleMode mode) {
    switch (mode) {
        case ShuffleMode::none: return "none";
        case ShuffleMode::simple: return "simple";
        case ShuffleMode::trglen: return "trglen";
    }
    return "?";
}

BatchIterator::BatchIterator(const ParallelCorpus& corpus, std::size_t batch_size, ShuffleMode mode,
                             std::uint64_t seed)
    : corpus_(&corpus), batch_size_(batch_size), mode_(mode), seed_(seed) {
    if (batch_size_ == 0) throw ConfigError("batch_size must be > 0");
    if (corpus.size() == 0) throw DataError("cannot iterate over an empty corpus");
    plan_ = plan_epoch(epoch_);
}

std::vector<std::vector<std::size_t>> BatchIterator::plan_epoch(std::size_t epoch) const {
    const std::size_t n = corpus_->size();
    Rng rng = Rng(seed_).split(epoch);
    std::vector<std::vector<std::size_t>> groups;
    auto chunk = [&](const std::vector<std::size_t>& order) {
        for (std::size_t i = 0; i < order.size(); i += batch_size_)
            groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                                order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size_)));
    };

    if (mode_ == ShuffleMode::trglen) {
        std::map<std::size_t, std::vector<std::size_t>> by_len;
        for (std::size_t i = 0; i < n; ++i) by_len[corpus_->trg[i].size()].push_back(i);
        std::vector<std::vector<std::size_t>> buckets;
        for (auto& [len, rows] : by_len) buckets.push_back(std::move(rows));
        rng.shuffle(buckets);
        for (auto& bucket : buckets) {
            rng.shuffle(bucket);
            chunk(bucket);
        }
        return groups;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (mode_ == ShuffleMode::simple) rng.shuffle(order);
    chunk(order);
    return groups;
}

std::optional<Batch> BatchIterator::next() {
    if (position_ >= plan_.size()) {
        ++epoch_;
        position_ = 0;
        plan_ = plan_epoch(epoch_);
        return std::nullopt;
    }
    return make_batch(*corpus_, plan_[position_++]);
}

void BatchIterator::seek(std::size_t epoch, std::size_t position) {
    if (epoch == 0) throw ConfigError("epochs are 1-based");
    epoch_ = epoch;
    plan_ = plan_epoch(epoch_);
    position_ = std::min(position, plan_.size());
}

}  // namespace nmt
