#pragma once

// Small fixtures shared by the unit and acceptance tests.

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nmt/data.hpp"
#include "nmt/model.hpp"
#include "nmt/ops.hpp"
#include "nmt/random.hpp"

namespace toy {

// Vocabulary of exactly n entries: <eos>, <unk>, w2 .. w{n-1}.
inline nmt::Vocabulary vocab(std::size_t n) {
    std::vector<std::string> tokens{"<eos>", "<unk>"};
    for (std::size_t i = 2; i < n; ++i) tokens.push_back("w" + std::to_string(i));
    return nmt::Vocabulary::from_tokens(tokens);
}

// Random sentence of `len` regular tokens (ids >= 2) followed by <eos>.
inline std::vector<int> sentence(nmt::Rng& rng, std::size_t vocab_size, std::size_t len) {
    std::vector<int> ids;
    for (std::size_t i = 0; i < len; ++i) ids.push_back(2 + static_cast<int>(rng.below(vocab_size - 2)));
    ids.push_back(nmt::Vocabulary::kEos);
    return ids;
}

inline nmt::ParallelCorpus corpus(nmt::Rng& rng, std::size_t n, std::size_t vs, std::size_t vt, std::size_t max_len,
                                  bool with_source = true) {
    nmt::ParallelCorpus c;
    for (std::size_t i = 0; i < n; ++i) {
        if (with_source) c.src.push_back(sentence(rng, vs, 1 + rng.below(max_len)));
        c.trg.push_back(sentence(rng, vt, 1 + rng.below(max_len)));
        c.indices.push_back(i);
    }
    return c;
}

inline nmt::Batch whole_batch(const nmt::ParallelCorpus& c) {
    std::vector<std::size_t> rows(c.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return nmt::make_batch(c, rows);
}

// Multiplies every parameter by `factor` and adds a random offset to biases/gains so that
// nothing sits at an exact symmetric point during gradient checks.
inline void perturb(nmt::ParameterSet& params, double factor, nmt::Rng& rng) {
    for (nmt::Parameter* p : params.list()) {
        for (auto& v : p->value.values()) {
            v *= factor;
            if (p->kind != nmt::ParamKind::weight) v += rng.uniform(-0.5, 0.5);
        }
    }
}

inline nmt::Tensor random_tensor(nmt::Rng& rng, const nmt::Shape& shape, double lo = -1.0, double hi = 1.0) {
    nmt::Tensor t(shape);
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

// sum(x * R) for a fixed random R, so that no output direction is degenerate (plain sums of
// softmax rows, for instance, have zero gradient).
inline nmt::Var weighted_sum(nmt::Var x, std::uint64_t seed = 99) {
    nmt::Rng rng(seed);
    return nmt::ops::sum(nmt::ops::mul(x, x.graph().constant(random_tensor(rng, x.shape()))));
}

inline std::string join(const std::vector<int>& ids, const nmt::Vocabulary& v) { return v.decode_line(ids); }

inline void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary);
    for (const auto& l : lines) out << l << '\n';
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Fresh directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("nmtkit-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace toy
