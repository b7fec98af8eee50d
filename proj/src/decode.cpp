#include "nmt/decode.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <ostream>

#include "json.hpp"
#include "nmt/worker_pool.hpp"

namespace nmt {

std::vector<int> Hypothesis::words() const {
    std::vector<int> w = tokens;
    if (!w.empty() && w.back() == Vocabulary::kEos) w.pop_back();
    return w;
}

std::size_t default_max_len(std::size_t src_len) { return 3 * src_len + 10; }

Tensor ensemble_log_probs(const std::vector<Tensor>& per_model) {
    if (per_model.empty()) throw ConfigError("ensemble has no models");
    if (per_model.size() == 1) return per_model.front();
    const Shape& shape = per_model.front().shape();
    for (const auto& t : per_model)
        if (t.shape() != shape) throw ShapeError("ensemble: log-prob shapes differ");
    const double log_m = std::log(static_cast<double>(per_model.size()));
    Tensor out(shape);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (const auto& t : per_model) mx = std::max(mx, t[i]);
        double s = 0.0;
        for (const auto& t : per_model) s += std::exp(t[i] - mx);
        out[i] = mx + std::log(s) - log_m;
    }
    return out;
}

void check_ensemble(std::span<const Model* const> models) {
    if (models.empty()) throw ConfigError("at least one model is required");
    for (const Model* m : models) {
        if (!(m->trg_vocab() == models.front()->trg_vocab()))
            throw ConfigError("ensemble members must share the target vocabulary");
        if (!(m->src_vocab() == models.front()->src_vocab()))
            throw ConfigError("ensemble members must share the source vocabulary");
    }
}

namespace {

struct Live {
    std::vector<int> tokens;
    double score = 0.0;
    std::vector<std::vector<double>> states;  // per model
    std::vector<std::vector<double>> alphas;
};

std::vector<double> row_of(const Tensor& t, std::size_t r) {
    const std::size_t d = t.last_dim();
    return std::vector<double>(t.values().begin() + r * d, t.values().begin() + (r + 1) * d);
}

std::vector<double> mean_alpha(const std::vector<StepResult>& steps, std::size_t row) {
    std::vector<double> out;
    std::size_t n = 0;
    for (const auto& s : steps) {
        if (s.alpha.empty()) continue;
        auto a = row_of(s.alpha, row);
        if (out.empty())
            out = std::move(a);
        else
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += a[i];
        ++n;
    }
    if (n > 1)
        for (auto& v : out) v /= static_cast<double>(n);
    return out;
}

bool better(const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
}

}  // namespace

std::vector<Hypothesis> beam_search(std::span<const Model* const> models, std::span<const int> src_ids,
                                    const BeamOptions& options) {
    check_ensemble(models);
    const std::size_t k = options.beam_size;
    if (k == 0) throw ConfigError("beam size must be >= 1");
    if (options.n_best == 0 || options.n_best > k)
        throw ConfigError("n_best must be in [1, beam_size], got " + std::to_string(options.n_best));
    const bool needs_source = models.front()->uses_source();
    const std::size_t src_len = src_ids.empty() ? 0 : src_ids.size() - (src_ids.back() == Vocabulary::kEos ? 1 : 0);
    if (needs_source && src_len == 0) throw DataError("cannot translate an empty source sentence");
    const std::size_t max_len = options.max_len > 0 ? options.max_len : default_max_len(src_len);
    const std::size_t V = models.front()->trg_vocab().size();
    const std::size_t M = models.size();

    std::vector<EncodedSource> encoded;
    Live start;
    for (const Model* m : models) {
        encoded.push_back(m->encode_source(src_ids));
        start.states.push_back(row_of(encoded.back().init_state, 0));
    }
    std::vector<Live> live{std::move(start)};
    std::vector<Hypothesis> finished;

    while (!live.empty() && finished.size() < k) {
        const std::size_t n = live.size();
        std::vector<int> prev(n);
        for (std::size_t i = 0; i < n; ++i) prev[i] = live[i].tokens.empty() ? Model::kStartToken : live[i].tokens.back();

        std::vector<StepResult> steps;
        std::vector<Tensor> log_probs;
        for (std::size_t m = 0; m < M; ++m) {
            const std::size_t H = live[0].states[m].size();
            Tensor states({n, H});
            for (std::size_t i = 0; i < n; ++i)
                std::copy(live[i].states[m].begin(), live[i].states[m].end(), states.values().begin() + i * H);
            steps.push_back(models[m]->decode_step(encoded[m], states, prev));
            log_probs.push_back(steps.back().log_probs);
        }
        const Tensor lp = ensemble_log_probs(log_probs);

        auto close = [&](std::size_t i, int w) {
            Hypothesis h;
            h.tokens = live[i].tokens;
            h.tokens.push_back(w);
            h.score = live[i].score + lp.at(i, static_cast<std::size_t>(w));
            h.finished = true;
            if (options.keep_alignments) {
                h.alphas = live[i].alphas;
                h.alphas.push_back(mean_alpha(steps, i));
            }
            finished.push_back(std::move(h));
        };

        if (live.front().tokens.size() >= max_len) {
            for (std::size_t i = 0; i < n; ++i) close(i, Vocabulary::kEos);
            break;
        }

        // Best `width` candidates over all (hypothesis, word) pairs; ties go to the lower
        // flat index so the result never depends on sort stability.
        const std::size_t width = k - finished.size();
        std::vector<std::size_t> cand;
        cand.reserve(n * std::min(width, V));
        std::vector<std::size_t> row(V);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t w = 0; w < V; ++w) row[w] = i * V + w;
            const std::size_t take = std::min(width, V);
            auto cmp = [&](std::size_t a, std::size_t b) {
                if (lp[a] != lp[b]) return lp[a] > lp[b];
                return a < b;
            };
            std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(take), row.end(), cmp);
            cand.insert(cand.end(), row.begin(), row.begin() + static_cast<std::ptrdiff_t>(take));
        }
        auto total = [&](std::size_t c) { return live[c / V].score + lp[c]; };
        const std::size_t take = std::min(width, cand.size());
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(),
                          [&](std::size_t a, std::size_t b) {
                              const double sa = total(a), sb = total(b);
                              if (sa != sb) return sa > sb;
                              return a < b;
                          });
        cand.resize(take);

        std::vector<Live> next;
        for (std::size_t c : cand) {
            const std::size_t i = c / V;
            const int w = static_cast<int>(c % V);
            if (w == Vocabulary::kEos) {
                close(i, w);
                continue;
            }
            Live h;
            h.tokens = live[i].tokens;
            h.tokens.push_back(w);
            h.score = total(c);
            for (std::size_t m = 0; m < M; ++m) h.states.push_back(row_of(steps[m].states, i));
            if (options.keep_alignments) {
                h.alphas = live[i].alphas;
                h.alphas.push_back(mean_alpha(steps, i));
            }
            next.push_back(std::move(h));
        }
        live = std::move(next);
    }

    std::sort(finished.begin(), finished.end(), better);
    if (finished.size() > options.n_best) finished.resize(options.n_best);
    return finished;
}

void translate_parallel(std::span<const Model* const> models, const std::vector<std::vector<int>>& sources,
                        const TranslateOptions& options, const std::function<void(Translation&&)>& sink) {
    check_ensemble(models);
    std::function<Translation(std::size_t)> work = [&](std::size_t i) {
        Translation t;
        t.id = i;
        t.src_ids = sources[i];
        t.nbest = beam_search(models, sources[i], options.beam);
        return t;
    };
    run_ordered<Translation>(sources.size(), options.workers, work,
                             [&](std::size_t, Translation&& t) { sink(std::move(t)); });
}

std::vector<Translation> translate_all(std::span<const Model* const> models,
                                       const std::vector<std::vector<int>>& sources, const TranslateOptions& options) {
    std::vector<Translation> out;
    out.reserve(sources.size());
    translate_parallel(models, sources, options, [&](Translation&& t) { out.push_back(std::move(t)); });
    return out;
}

std::string format_score(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string hypothesis_text(const Hypothesis& h, const Vocabulary& trg_vocab) {
    return trg_vocab.decode_line(h.words());
}

void write_text_line(std::ostream& out, const Translation& t, const Vocabulary& trg_vocab) {
    out << (t.nbest.empty() ? std::string() : hypothesis_text(t.nbest.front(), trg_vocab)) << '\n';
}

void write_nbest_lines(std::ostream& out, const Translation& t, const Vocabulary& trg_vocab) {
    for (const auto& h : t.nbest)
        out << t.id << " ||| " << hypothesis_text(h, trg_vocab) << " ||| " << format_score(h.score) << '\n';
}

std::string alignments_json(const std::vector<Translation>& translations, const Vocabulary& src_vocab,
                            const Vocabulary& trg_vocab) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : translations) {
        nlohmann::json entry;
        entry["id"] = t.id;
        std::vector<std::string> src;
        for (int id : t.src_ids) src.push_back(src_vocab.token(id));
        entry["src_tokens"] = src;
        std::vector<std::string> hyp;
        nlohmann::json alphas = nlohmann::json::array();
        if (!t.nbest.empty()) {
            for (int id : t.nbest.front().tokens) hyp.push_back(trg_vocab.token(id));
            for (const auto& row : t.nbest.front().alphas) alphas.push_back(row);
        }
        entry["hyp_tokens"] = hyp;
        entry["alphas"] = std::move(alphas);
        arr.push_back(std::move(entry));
    }
    return arr.dump();
}

// ---------------------------------------------------------------------------------------

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    static const std::string sep = " ||| ";
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (;;) {
        const auto next = line.find(sep, pos);
        if (next == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return out;
}

}  // namespace

std::vector<RescoreItem> parse_hypotheses(const std::vector<std::string>& lines, std::size_t n_sources) {
    std::vector<RescoreItem> items;
    const bool nbest = !lines.empty() && lines.front().find(" ||| ") != std::string::npos;
    if (!nbest && lines.size() != n_sources)
        throw DataError("hypothesis file has " + std::to_string(lines.size()) + " lines but source has " +
                        std::to_string(n_sources));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string where = "hypotheses line " + std::to_string(i + 1) + ": ";
        RescoreItem item;
        item.nbest_format = nbest;
        if (!nbest) {
            item.sample = i;
            item.hypothesis = lines[i];
        } else {
            auto fields = split_fields(lines[i]);
            if (fields.size() < 2) throw DataError(where + "expected 'id ||| hypothesis ||| score'");
            std::size_t id = 0;
            const auto& f0 = fields[0];
            auto res = std::from_chars(f0.data(), f0.data() + f0.size(), id);
            if (res.ec != std::errc() || res.ptr != f0.data() + f0.size())
                throw DataError(where + "invalid sample id '" + f0 + "'");
            if (id >= n_sources)
                throw DataError(where + "sample id " + std::to_string(id) + " exceeds the " +
                                std::to_string(n_sources) + " source sentences");
            item.sample = id;
            item.hypothesis = fields[1];
            for (std::size_t f = 3; f < fields.size(); ++f) item.extra += " ||| " + fields[f];
        }
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<double> rescore(std::span<Model* const> models, const std::vector<std::string>& sources,
                            const std::vector<RescoreItem>& items, bool batched) {
    if (models.empty()) throw ConfigError("at least one model is required");
    std::vector<const Model*> cm(models.begin(), models.end());
    check_ensemble(cm);
    const Model& first = *models.front();

    std::vector<std::vector<std::size_t>> groups;
    if (batched) {
        std::map<std::size_t, std::vector<std::size_t>> by_sample;
        for (std::size_t i = 0; i < items.size(); ++i) by_sample[items[i].sample].push_back(i);
        for (auto& [s, rows] : by_sample) groups.push_back(std::move(rows));
    } else {
        for (std::size_t i = 0; i < items.size(); ++i) groups.push_back({i});
    }

    std::vector<double> scores(items.size(), 0.0);
    for (const auto& group : groups) {
        ParallelCorpus c;
        for (std::size_t i : group) {
            if (first.uses_source()) c.src.push_back(first.src_vocab().encode_line(sources.at(items[i].sample)));
            c.trg.push_back(first.trg_vocab().encode_line(items[i].hypothesis));
        }
        std::vector<std::size_t> rows(group.size());
        for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = r;
        const Batch batch = make_batch(c, rows);
        for (Model* m : models) {
            Graph g(false);
            LossResult r = m->forward_loss(g, batch, Mode::eval);
            for (std::size_t b = 0; b < group.size(); ++b) {
                double nll = 0.0;
                for (std::size_t t = 0; t < batch.trg_len; ++t) nll += r.token_nll.at(b, t);
                scores[group[b]] += nll;
            }
        }
    }
    for (auto& s : scores) s /= static_cast<double>(models.size());
    return scores;
}

std::string format_rescored(const RescoreItem& item, double nll) {
    if (item.nbest_format)
        return std::to_string(item.sample) + " ||| " + item.hypothesis + " ||| " + format_score(nll) + item.extra;
    return item.hypothesis + " ||| " + format_score(nll);
}

}  // namespace nmt
