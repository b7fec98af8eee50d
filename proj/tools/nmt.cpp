// nmt: train, translate, rescore, build-dict, extract, test-lm, bpe-learn, bpe-apply.
// Also answers to nmt-<tool> when invoked through one of the alias links.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nmt/checkpoint.hpp"
#include "nmt/config.hpp"
#include "nmt/decode.hpp"
#include "nmt/error.hpp"
#include "nmt/metrics.hpp"
#include "nmt/subword.hpp"
#include "nmt/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

constexpr const char* kWorkersEnv = "NMT_WORKERS";

std::size_t default_workers() {
    if (const char* v = std::getenv(kWorkersEnv)) {
        char* end = nullptr;
        const long n = std::strtol(v, &end, 10);
        if (end != v && *end == '\0' && n >= 1) return static_cast<std::size_t>(n);
    }
    return 1;
}

// "-" means stdin.
std::vector<std::string> read_input(const std::string& path) {
    if (path != "-") return nmt::read_lines(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(std::cin, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!nmt::valid_utf8(line)) throw nmt::DataError("<stdin>:" + std::to_string(lines.size() + 1) + ": invalid UTF-8");
        lines.push_back(std::move(line));
    }
    return lines;
}

// Output sink that is either stdout or a file.
class Output {
public:
    explicit Output(const std::string& path) {
        if (path == "-") return;
        file_.open(path, std::ios::binary | std::ios::trunc);
        if (!file_) throw nmt::DataError("cannot write " + path);
    }
    std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

private:
    std::ofstream file_;
};

std::vector<const nmt::Model*> const_view(const std::vector<std::unique_ptr<nmt::Model>>& models) {
    std::vector<const nmt::Model*> out;
    for (const auto& m : models) out.push_back(m.get());
    return out;
}

// Vocabulary mismatches between models are runtime errors (exit 2), not usage errors.
std::vector<std::unique_ptr<nmt::Model>> load_models(const std::vector<std::string>& paths) {
    std::vector<std::unique_ptr<nmt::Model>> models;
    for (const auto& p : paths) models.push_back(nmt::load_model(p));
    for (std::size_t i = 1; i < models.size(); ++i)
        if (!(models[i]->src_vocab() == models[0]->src_vocab()))
            throw nmt::DataError("model " + paths[i] + " has a different source vocabulary than " + paths[0]);
    try {
        nmt::check_ensemble(const_view(models));
    } catch (const nmt::ConfigError& e) {
        throw nmt::DataError(e.what());
    }
    return models;
}

std::vector<std::vector<int>> encode_sources(const nmt::Model& model, const std::vector<std::string>& lines) {
    std::vector<std::vector<int>> out;
    out.reserve(lines.size());
    for (const auto& l : lines) out.push_back(model.src_vocab().encode_line(l));
    return out;
}

// ---------------------------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::vector<std::string> overrides;
    std::string resume;
    bool quiet = false;
};

int run_train(const TrainArgs& a) {
    nmt::ExperimentConfig config;
    try {
        config = nmt::parse_config(a.config, a.overrides);
        config.validate();
    } catch (const nmt::ConfigError& e) {
        std::cerr << "nmt-train: " << e.what() << '\n';
        return kUsage;
    }
    nmt::TrainingHooks hooks;
    hooks.log = a.quiet ? nullptr : &std::cerr;
    if (!a.resume.empty()) hooks.resume_from = fs::path(a.resume);
    for (const auto& w : config.warnings)
        if (a.quiet) std::cerr << "warning: " << w << '\n';
    const nmt::TrainingReport r = nmt::run_training(config, hooks);
    std::cout << "checkpoint: " << r.run_name << '\n';
    std::cout << "best: " << (r.best ? r.best->str() : std::string("none")) << '\n';
    if (!r.best_checkpoint.empty()) std::cout << "best checkpoint: " << r.best_checkpoint << '\n';
    return kOk;
}

struct TranslateArgs {
    std::vector<std::string> models;
    std::string src;
    std::string ref;
    std::string out = "-";
    std::vector<std::string> metrics{"bleu"};
    std::size_t beam = 12;
    std::size_t nbest = 1;
    std::size_t workers = 1;
    std::size_t max_len = 0;
    bool alignments = false;
    std::string filter;
    bool filter_set = false;
};

int run_translate(const TranslateArgs& a) {
    std::vector<nmt::MetricName> metrics;
    try {
        if (!a.ref.empty())
            for (const auto& m : a.metrics) metrics.push_back(nmt::parse_metric(m));
        if (a.nbest > a.beam) throw nmt::ConfigError("-N must not exceed -b");
    } catch (const nmt::ConfigError& e) {
        std::cerr << "nmt-translate: " << e.what() << '\n';
        return kUsage;
    }
    const auto models = load_models(a.models);
    const auto view = const_view(models);
    const auto& trg_vocab = models[0]->trg_vocab();
    const auto filters = nmt::parse_filters(a.filter_set ? a.filter : nmt::load_checkpoint(a.models[0]).config.filter);

    const auto sources = encode_sources(*models[0], nmt::read_lines(a.src));
    nmt::TranslateOptions opts;
    opts.beam.beam_size = a.beam;
    opts.beam.n_best = a.nbest;
    opts.beam.max_len = a.max_len;
    opts.beam.keep_alignments = a.alignments;
    opts.workers = a.workers;

    Output out(a.out);
    std::vector<std::string> hyps;
    std::vector<nmt::Translation> kept;
    nmt::translate_parallel(view, sources, opts, [&](nmt::Translation&& t) {
        if (a.nbest > 1)
            nmt::write_nbest_lines(out.stream(), t, trg_vocab);
        else
            out.stream() << nmt::apply_filters(filters, nmt::hypothesis_text(t.nbest.front(), trg_vocab)) << '\n';
        if (!metrics.empty())
            hyps.push_back(nmt::apply_filters(filters, nmt::hypothesis_text(t.nbest.front(), trg_vocab)));
        if (a.alignments) kept.push_back(std::move(t));
    });
    out.stream().flush();

    if (a.alignments) {
        const std::string path = (a.out == "-" ? std::string("alignments") : a.out) + ".align.json";
        std::ofstream f(path, std::ios::binary);
        if (!f) throw nmt::DataError("cannot write " + path);
        f << nmt::alignments_json(kept, models[0]->src_vocab(), trg_vocab) << '\n';
    }
    if (!metrics.empty()) {
        const auto refs = nmt::read_lines(a.ref);
        std::ostream& report = a.out == "-" ? std::cerr : std::cout;
        for (auto m : metrics) {
            if (m == nmt::MetricName::perplexity) {
                std::vector<nmt::Model*> mutable_models;
                for (const auto& p : models) mutable_models.push_back(p.get());
                std::vector<nmt::RescoreItem> items;
                for (std::size_t i = 0; i < refs.size(); ++i) items.push_back({i, refs[i], false, ""});
                const auto nll = nmt::rescore(mutable_models, nmt::read_lines(a.src), items);
                double total = 0.0, tokens = 0.0;
                for (std::size_t i = 0; i < refs.size(); ++i) {
                    total += nll[i];
                    tokens += static_cast<double>(nmt::split_tokens(refs[i]).size() + 1);
                }
                report << nmt::perplexity(total, tokens).str() << '\n';
            } else {
                const auto variant =
                    m == nmt::MetricName::bleu_v13a ? nmt::BleuVariant::v13a : nmt::BleuVariant::multi_bleu;
                report << nmt::bleu_corpus(hyps, refs, variant).str() << '\n';
            }
        }
    }
    return kOk;
}

struct RescoreArgs {
    std::vector<std::string> models;
    std::string src;
    std::string hyps;
    std::string out = "-";
    bool unbatched = false;
};

int run_rescore(const RescoreArgs& a) {
    const auto models = load_models(a.models);
    std::vector<nmt::Model*> view;
    for (const auto& m : models) view.push_back(m.get());
    const auto sources = nmt::read_lines(a.src);
    const auto items = nmt::parse_hypotheses(nmt::read_lines(a.hyps), sources.size());
    const auto scores = nmt::rescore(view, sources, items, !a.unbatched);
    Output out(a.out);
    for (std::size_t i = 0; i < items.size(); ++i) out.stream() << nmt::format_rescored(items[i], scores[i]) << '\n';
    return kOk;
}

struct BuildDictArgs {
    std::vector<std::string> corpora;
    std::string out_dir = ".";
    bool combined = false;
    std::size_t n_words = 0;
};

int run_build_dict(const BuildDictArgs& a) {
    fs::create_directories(a.out_dir);
    auto stem = [](const std::string& p) { return fs::path(p).filename().string(); };
    if (a.combined) {
        std::vector<fs::path> paths(a.corpora.begin(), a.corpora.end());
        std::string name;
        for (const auto& c : a.corpora) name += (name.empty() ? "" : "+") + stem(c);
        const fs::path out = fs::path(a.out_dir) / (name + ".vocab.json");
        const auto v = nmt::build_vocab(paths, a.n_words);
        v.save(out);
        std::cout << out.string() << ": " << v.size() << " tokens\n";
        return kOk;
    }
    for (const auto& c : a.corpora) {
        const fs::path out = fs::path(a.out_dir) / (stem(c) + ".vocab.json");
        const auto v = nmt::build_vocab({c}, a.n_words);
        v.save(out);
        std::cout << out.string() << ": " << v.size() << " tokens\n";
    }
    return kOk;
}

struct ExtractArgs {
    std::string model;
    std::vector<std::string> patterns;
    std::string out;
    std::string dtype = "f64";
    bool list = false;
};

int run_extract(const ExtractArgs& a) {
    const auto dtype = nmt::parse_dtype(a.dtype);
    const auto arrays = nmt::load_arrays(a.model);
    if (a.list) {
        for (const auto& x : arrays) std::cout << x.name << ' ' << nmt::shape_str(x.value.shape()) << '\n';
        return kOk;
    }
    if (a.out.empty() || a.patterns.empty()) {
        std::cerr << "nmt-extract: -p and -o are required unless --list is given\n";
        return kUsage;
    }
    const auto picked = nmt::select_arrays(arrays, a.patterns);
    nmt::save_arrays(a.out, picked, dtype);
    for (const auto& x : picked) std::cout << x.name << ' ' << nmt::shape_str(x.value.shape()) << '\n';
    return kOk;
}

struct TestLmArgs {
    std::string model;
    std::string input = "-";
    std::size_t batch_size = 32;
};

int run_test_lm(const TestLmArgs& a) {
    const auto model = nmt::load_model(a.model);
    if (model->uses_source())
        throw nmt::ConfigError(a.model + " is a translation model; test-lm needs a language model (model_type rnnlm)");
    const auto corpus = nmt::make_monolingual_corpus(read_input(a.input), model->trg_vocab());
    std::cout << nmt::validate_perplexity(*model, corpus, a.batch_size).str() << '\n';
    return kOk;
}

struct BpeLearnArgs {
    std::string input = "-";
    std::string out = "-";
    std::size_t symbols = 10000;
    std::size_t min_frequency = 2;
};

int run_bpe_learn(const BpeLearnArgs& a) {
    const auto model = nmt::bpe_learn(read_input(a.input), a.symbols, a.min_frequency);
    Output out(a.out);
    out.stream() << model.to_text();
    return kOk;
}

struct BpeApplyArgs {
    std::string codes;
    std::string input = "-";
    std::string out = "-";
};

int run_bpe_apply(const BpeApplyArgs& a) {
    const auto model = nmt::BpeModel::load(a.codes);
    Output out(a.out);
    if (a.input == "-") {
        std::string line;
        while (std::getline(std::cin, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            out.stream() << model.apply(line) << '\n';
        }
    } else {
        for (const auto& l : nmt::read_lines(a.input)) out.stream() << model.apply(l) << '\n';
    }
    return kOk;
}

const std::vector<std::string> kTools = {"train",   "translate", "rescore",   "build-dict",
                                         "extract", "test-lm",   "bpe-learn", "bpe-apply"};

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    // nmt-translate ... behaves like nmt translate ...
    const std::string prog = fs::path(args[0]).filename().string();
    if (prog.rfind("nmt-", 0) == 0) {
        const std::string tool = prog.substr(4);
        if (std::find(kTools.begin(), kTools.end(), tool) != kTools.end()) args.insert(args.begin() + 1, tool);
    }

    CLI::App app{"Attentive sequence-to-sequence toolkit", "nmt"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "nmt 0.1.0");
    int rc = kOk;
    std::function<int()> action;

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train a model from an experiment configuration file");
    t->add_option("-c,--config", train.config, "Experiment configuration file")->required()->check(CLI::ExistingFile);
    t->add_option("overrides", train.overrides, "Option overrides as key:value");
    t->add_option("--resume", train.resume, "Resume from a snapshot file")->check(CLI::ExistingFile);
    t->add_flag("-q,--quiet", train.quiet, "Do not print the training log");
    t->callback([&] { action = [&] { return run_train(train); }; });

    TranslateArgs tr;
    tr.workers = default_workers();
    auto* x = app.add_subcommand("translate", "Beam-search decoding with one model or an ensemble");
    x->add_option("-m,--models", tr.models, "Model checkpoint(s); several form an ensemble")
        ->required()
        ->check(CLI::ExistingFile);
    x->add_option("-S,--source", tr.src, "Source sentences")->required()->check(CLI::ExistingFile);
    x->add_option("-R,--reference", tr.ref, "Reference translations (enables metrics)")->check(CLI::ExistingFile);
    x->add_option("-o,--output", tr.out, "Output file ('-' for stdout)")->capture_default_str();
    x->add_option("-M,--metrics", tr.metrics, "Metrics computed against -R: bleu, bleu_v13a, px")
        ->capture_default_str();
    x->add_option("-b,--beam-size", tr.beam, "Beam size")->capture_default_str()->check(CLI::PositiveNumber);
    x->add_option("-N,--n-best", tr.nbest, "Write an n-best list with this many entries per sentence")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    x->add_option("-j,--workers", tr.workers, std::string("Decoding workers (default from ") + kWorkersEnv + ")")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    x->add_option("--max-len", tr.max_len, "Maximum output length (0: 3 * source length + 10)")->capture_default_str();
    x->add_flag("-e,--alignments", tr.alignments, "Write attention weights to <output>.align.json");
    auto* fopt = x->add_option("-f,--filter", tr.filter, "Post-processing filters (default: the model's filter option)");
    x->callback([&] {
        tr.filter_set = fopt->count() > 0;
        action = [&] { return run_translate(tr); };
    });

    RescoreArgs rs;
    auto* r = app.add_subcommand("rescore", "Score hypotheses by their negative log-likelihood");
    r->add_option("-m,--models", rs.models, "Model checkpoint(s); scores are averaged")
        ->required()
        ->check(CLI::ExistingFile);
    r->add_option("-s,--source", rs.src, "Source sentences")->required()->check(CLI::ExistingFile);
    r->add_option("-t,--hypotheses", rs.hyps, "1-best or n-best hypothesis file")->required()->check(CLI::ExistingFile);
    r->add_option("-o,--output", rs.out, "Output file ('-' for stdout)")->capture_default_str();
    r->add_flag("--unbatched", rs.unbatched, "Score one hypothesis at a time");
    r->callback([&] { action = [&] { return run_rescore(rs); }; });

    BuildDictArgs bd;
    auto* d = app.add_subcommand("build-dict", "Build vocabulary files from tokenized corpora");
    d->add_option("corpora", bd.corpora, "Corpus files")->required()->check(CLI::ExistingFile);
    d->add_option("-o,--output-dir", bd.out_dir, "Output directory")->capture_default_str();
    d->add_flag("-s,--single", bd.combined, "Write one combined vocabulary for all corpora");
    d->add_option("-n,--n-words", bd.n_words, "Keep only the n most frequent tokens (0: all)")->capture_default_str();
    d->callback([&] { action = [&] { return run_build_dict(bd); }; });

    ExtractArgs ex;
    auto* e = app.add_subcommand("extract", "Copy selected weights out of a checkpoint or snapshot");
    e->add_option("-m,--model", ex.model, "Checkpoint or snapshot file")->required()->check(CLI::ExistingFile);
    e->add_option("-p,--patterns", ex.patterns, "Parameter name globs, e.g. E_trg or 'enc.*'");
    e->add_option("-o,--output", ex.out, "Output array file");
    e->add_option("--dtype", ex.dtype, "Array element type: f64 or f32")->capture_default_str();
    e->add_flag("-l,--list", ex.list, "List parameter names and shapes");
    e->callback([&] { action = [&] { return run_extract(ex); }; });

    TestLmArgs lm;
    auto* l = app.add_subcommand("test-lm", "Language model perplexity of a corpus");
    l->add_option("-m,--model", lm.model, "Language model checkpoint")->required()->check(CLI::ExistingFile);
    l->add_option("-i,--input", lm.input, "Corpus ('-' for stdin)")->capture_default_str();
    l->add_option("--batch-size", lm.batch_size, "Sentences per batch")->capture_default_str()->check(CLI::PositiveNumber);
    l->callback([&] { action = [&] { return run_test_lm(lm); }; });

    BpeLearnArgs bl;
    auto* b = app.add_subcommand("bpe-learn", "Learn BPE merge operations");
    b->add_option("-i,--input", bl.input, "Training text ('-' for stdin)")->capture_default_str();
    b->add_option("-o,--output", bl.out, "Codes file ('-' for stdout)")->capture_default_str();
    b->add_option("-s,--symbols", bl.symbols, "Number of merge operations")->capture_default_str();
    b->add_option("--min-frequency", bl.min_frequency, "Stop when the best pair is rarer than this")
        ->capture_default_str();
    b->callback([&] { action = [&] { return run_bpe_learn(bl); }; });

    BpeApplyArgs ba;
    auto* a = app.add_subcommand("bpe-apply", "Segment text with learned BPE codes");
    a->add_option("-c,--codes", ba.codes, "Codes file")->required()->check(CLI::ExistingFile);
    a->add_option("-i,--input", ba.input, "Input text ('-' for stdin)")->capture_default_str();
    a->add_option("-o,--output", ba.out, "Output text ('-' for stdout)")->capture_default_str();
    a->callback([&] { action = [&] { return run_bpe_apply(ba); }; });

    std::vector<const char*> cargs;
    for (const auto& s : args) cargs.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        rc = action ? action() : kUsage;
    } catch (const nmt::ConfigError& err) {
        std::cerr << "nmt: " << err.what() << '\n';
        rc = kUsage;
    } catch (const std::exception& err) {
        std::cerr << "nmt: " << err.what() << '\n';
        rc = kRuntime;
    }
    return rc;
}
