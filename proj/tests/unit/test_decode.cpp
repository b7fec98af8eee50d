#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "nmt/decode.hpp"
#include "nmt/worker_pool.hpp"
#include "toy.hpp"

using namespace nmt;

namespace {

ModelOptions tiny() {
    ModelOptions o;
    o.embedding_dim = 4;
    o.rnn_dim = 5;
    return o;
}

// Scales the output layer so the distributions are peaked enough for search to matter.
void sharpen(Model& m, double factor) {
    for (Parameter* p : m.params().list())
        if (p->name.rfind("out.", 0) == 0)
            for (auto& v : p->value.values()) v *= factor;
}

struct Scored {
    std::vector<int> words;
    double score;
};

Scored greedy(const Model& m, std::span<const int> src, std::size_t max_len) {
    const EncodedSource enc = m.encode_source(src);
    Tensor state = enc.init_state;
    int prev = Model::kStartToken;
    Scored out{{}, 0.0};
    for (std::size_t t = 0;; ++t) {
        const StepResult r = m.decode_step(enc, state, std::span<const int>(&prev, 1));
        const auto& lp = r.log_probs.values();
        if (t == max_len) {
            out.score += lp[0];
            return out;
        }
        const int best = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
        out.score += lp[static_cast<std::size_t>(best)];
        if (best == Vocabulary::kEos) return out;
        out.words.push_back(best);
        prev = best;
        state = r.states;
    }
}

// Best score over every word sequence of length <= max_len followed by <eos>.
double exhaustive_best(const Model& m, const EncodedSource& enc, const Tensor& state, int prev, std::size_t left) {
    const StepResult r = m.decode_step(enc, state, std::span<const int>(&prev, 1));
    double best = r.log_probs[0];
    if (left == 0) return best;
    for (std::size_t v = 1; v < r.log_probs.size(); ++v)
        best = std::max(best, r.log_probs[v] + exhaustive_best(m, enc, r.states, static_cast<int>(v), left - 1));
    return best;
}

}  // namespace

TEST_CASE("beam of one is greedy decoding") {
    NmtModel m(tiny(), toy::vocab(9), toy::vocab(9), 3);
    sharpen(m, 4.0);
    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
        const auto src = toy::sentence(rng, 9, 1 + rng.below(6));
        const Model* models[] = {&m};
        BeamOptions o;
        o.beam_size = 1;
        const auto hyps = beam_search(models, src, o);
        REQUIRE(hyps.size() == 1);
        const Scored g = greedy(m, src, default_max_len(src.size() - 1));
        CHECK(hyps[0].words() == g.words);
        CHECK(hyps[0].score == doctest::Approx(g.score).epsilon(1e-12));
        CHECK(hyps[0].finished);
        CHECK(hyps[0].tokens.back() == Vocabulary::kEos);
    }
    CHECK(default_max_len(7) == 31);
}

TEST_CASE("wide beam finds the exhaustive optimum") {
    const std::size_t max_len = 4;
    NmtModel m(tiny(), toy::vocab(5), toy::vocab(5), 8);
    sharpen(m, 3.0);
    const std::vector<int> src{2, 3, 4, 0};
    const EncodedSource enc = m.encode_source(src);
    const double oracle = exhaustive_best(m, enc, enc.init_state, Model::kStartToken, max_len);
    const Model* models[] = {&m};
    for (std::size_t k : {1u, 2u, 5u, 50u, 625u}) {
        CAPTURE(k);
        BeamOptions o;
        o.beam_size = k;
        o.max_len = max_len;
        const auto hyps = beam_search(models, src, o);
        CHECK(hyps[0].score <= oracle + 1e-12);
        if (k >= 625) CHECK(hyps[0].score == doctest::Approx(oracle).epsilon(1e-12));
    }
}

TEST_CASE("n-best lists are sorted and scores are non-increasing prefixes") {
    NmtModel m(tiny(), toy::vocab(7), toy::vocab(7), 5);
    const std::vector<int> src{2, 3, 0};
    const Model* models[] = {&m};
    BeamOptions o;
    o.beam_size = 6;
    o.n_best = 6;
    o.keep_alignments = true;
    const auto hyps = beam_search(models, src, o);
    CHECK(hyps.size() == 6);
    for (std::size_t i = 1; i < hyps.size(); ++i) CHECK(hyps[i - 1].score >= hyps[i].score);
    for (const auto& h : hyps) {
        CHECK(h.score <= 0.0);
        CHECK(h.alphas.size() == h.tokens.size());
        for (const auto& row : h.alphas) {
            double s = 0;
            for (double a : row) s += a;
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
    }
    o.n_best = 7;
    CHECK_THROWS_AS(beam_search(models, src, o), ConfigError);
    o.n_best = 1;
    o.beam_size = 0;
    CHECK_THROWS_AS(beam_search(models, src, o), ConfigError);
    o.beam_size = 2;
    CHECK_THROWS_AS(beam_search(models, std::vector<int>{0}, o), DataError);
}

TEST_CASE("ensemble of identical models equals the single model") {
    NmtModel m(tiny(), toy::vocab(8), toy::vocab(8), 4);
    const Model* one[] = {&m};
    const Model* three[] = {&m, &m, &m};
    Rng rng(2);
    for (int i = 0; i < 5; ++i) {
        const auto src = toy::sentence(rng, 8, 1 + rng.below(5));
        BeamOptions o;
        o.beam_size = 4;
        o.n_best = 3;
        const auto a = beam_search(one, src, o), b = beam_search(three, src, o);
        REQUIRE(a.size() == b.size());
        for (std::size_t j = 0; j < a.size(); ++j) {
            CHECK(a[j].tokens == b[j].tokens);
            CHECK(std::abs(a[j].score - b[j].score) < 1e-9);
        }
    }
    // Mean in probability space.
    const Tensor p({1, 2}, {std::log(0.2), std::log(0.8)});
    const Tensor q({1, 2}, {std::log(0.6), std::log(0.4)});
    const Tensor e = ensemble_log_probs({p, q});
    CHECK(e[0] == doctest::Approx(std::log(0.4)).epsilon(1e-14));
    CHECK(e[1] == doctest::Approx(std::log(0.6)).epsilon(1e-14));

    NmtModel other(tiny(), toy::vocab(8), toy::vocab(9), 4);
    const Model* mixed[] = {&m, &other};
    CHECK_THROWS_AS(check_ensemble(mixed), ConfigError);
}

TEST_CASE("parallel translation keeps input order") {
    NmtModel m(tiny(), toy::vocab(9), toy::vocab(9), 6);
    Rng rng(3);
    std::vector<std::vector<int>> sources;
    for (int i = 0; i < 25; ++i) sources.push_back(toy::sentence(rng, 9, 1 + rng.below(6)));
    const Model* models[] = {&m};
    TranslateOptions o;
    o.beam.beam_size = 3;
    o.beam.n_best = 2;
    std::string reference;
    for (std::size_t j : {1u, 2u, 8u}) {
        o.workers = j;
        const auto out = translate_all(models, sources, o);
        std::ostringstream text;
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(out[i].id == i);
            write_nbest_lines(text, out[i], m.trg_vocab());
        }
        if (reference.empty()) reference = text.str();
        CHECK(text.str() == reference);
    }
    sources[7] = {0};
    CHECK_THROWS_WITH_AS(translate_all(models, sources, o), doctest::Contains("sample 7"), WorkerError);
}

TEST_CASE("rescoring the gold target reproduces the training loss") {
    Rng rng(4);
    const auto corpus = toy::corpus(rng, 6, 9, 9, 5);
    NmtModel m(tiny(), toy::vocab(9), toy::vocab(9), 2);
    std::vector<std::string> src, trg;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        src.push_back(m.src_vocab().decode_line(corpus.src[i]));
        trg.push_back(m.trg_vocab().decode_line(corpus.trg[i]));
    }
    Graph g(false);
    const LossResult loss = m.forward_loss(g, toy::whole_batch(corpus), Mode::eval);
    Model* models[] = {&m};
    const auto items = parse_hypotheses(trg, src.size());
    const auto scores = rescore(models, src, items, true);
    double total = 0;
    for (double s : scores) total += s;
    CHECK(std::abs(total - loss.total_nll) < 1e-6);

    // Batched and unbatched scoring of an n-best file agree.
    std::vector<std::string> nbest;
    for (std::size_t i = 0; i < src.size(); ++i) {
        nbest.push_back(std::to_string(i) + " ||| " + trg[i] + " ||| -1.0 ||| extra");
        nbest.push_back(std::to_string(i) + " ||| " + trg[(i + 1) % trg.size()] + " ||| -2.0");
    }
    const auto nitems = parse_hypotheses(nbest, src.size());
    const auto b = rescore(models, src, nitems, true), u = rescore(models, src, nitems, false);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(std::abs(b[i] - u[i]) < 1e-9);
    CHECK(std::abs(b[0] - scores[0]) < 1e-9);
    const std::string line = format_rescored(nitems[0], b[0]);
    CHECK(line.rfind("0 ||| " + trg[0] + " ||| ", 0) == 0);
    CHECK(line.ends_with(" ||| extra"));

    // Ensemble NLL is the mean over models.
    NmtModel m2(tiny(), toy::vocab(9), toy::vocab(9), 3);
    Model* both[] = {&m, &m2};
    Model* second[] = {&m2};
    const auto e = rescore(both, src, items), s2 = rescore(second, src, items);
    for (std::size_t i = 0; i < e.size(); ++i) CHECK(e[i] == doctest::Approx(0.5 * (scores[i] + s2[i])).epsilon(1e-12));
}

TEST_CASE("hypothesis file errors") {
    CHECK_THROWS_WITH_AS(parse_hypotheses({"0 ||| a ||| 1", "x ||| b ||| 2"}, 3), doctest::Contains("line 2"),
                         DataError);
    CHECK_THROWS_WITH_AS(parse_hypotheses({"0 ||| a ||| 1", "9 ||| b ||| 2"}, 3), doctest::Contains("line 2"),
                         DataError);
    CHECK_THROWS_WITH_AS(parse_hypotheses({"0 ||| a ||| 1", "1"}, 3), doctest::Contains("line 2"), DataError);
    CHECK_THROWS_AS(parse_hypotheses({"a", "b"}, 3), DataError);
    CHECK(parse_hypotheses({"a b", "c"}, 2)[1].sample == 1);
}

TEST_CASE("alignment json") {
    NmtModel m(tiny(), toy::vocab(6), toy::vocab(6), 1);
    const Model* models[] = {&m};
    TranslateOptions o;
    o.beam.beam_size = 2;
    o.beam.keep_alignments = true;
    const auto out = translate_all(models, {{2, 3, 0}}, o);
    const std::string js = alignments_json(out, m.src_vocab(), m.trg_vocab());
    CHECK(js.find("\"alphas\"") != std::string::npos);
    CHECK(js.find("\"src_tokens\"") != std::string::npos);
}

TEST_CASE("worker pool delivers in order and reports the failing job") {
    std::vector<std::size_t> seen;
    run_ordered<std::size_t>(
        100, 4, [](std::size_t i) { return i * i; },
        [&](std::size_t i, std::size_t&& r) {
            CHECK(r == i * i);
            seen.push_back(i);
        });
    CHECK(seen.size() == 100);
    CHECK(std::is_sorted(seen.begin(), seen.end()));

    try {
        run_ordered<int>(
            50, 3,
            [](std::size_t i) {
                if (i == 17) throw DataError("boom");
                return 0;
            },
            [](std::size_t, int&&) {});
        FAIL("expected WorkerError");
    } catch (const WorkerError& e) {
        CHECK(e.sample() == 17);
        CHECK(std::string(e.what()).find("boom") != std::string::npos);
    }
    CHECK_THROWS_AS(run_ordered<int>(3, 0, [](std::size_t) { return 0; }, [](std::size_t, int&&) {}), ConfigError);
}
