#include "nmt/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "json.hpp"
#include "nmt/decode.hpp"
#include "nmt/error.hpp"
#include "nmt/optim.hpp"
#include "nmt/subword.hpp"

namespace nmt {

using json = nlohmann::json;

namespace {

json metric_json(const MetricValue& m) { return {{"name", to_string(m.name)}, {"value", m.value}}; }

MetricValue metric_from_json(const json& j) {
    return {parse_metric(j.at("name").get<std::string>()), j.at("value").get<double>()};
}

// RNG streams derived from the global seed.
constexpr std::uint64_t kDropoutStream = 2;
constexpr std::uint64_t kNoiseStream = 3;
constexpr std::uint64_t kIteratorStream = 4;

}  // namespace

bool TrainerState::record(const MetricValue& v) {
    history.push_back(v);
    if (!best || metric_better(v, *best)) {
        best = v;
        bad_streak = 0;
        return true;
    }
    ++bad_streak;
    return false;
}

std::string TrainerState::to_json() const {
    json j;
    j["run_name"] = run_name;
    j["updates"] = updates;
    j["epoch"] = epoch;
    j["validations"] = validations;
    j["history"] = json::array();
    for (const auto& m : history) j["history"].push_back(metric_json(m));
    j["bad_streak"] = bad_streak;
    j["best"] = best ? metric_json(*best) : json();
    j["best_checkpoints"] = best_checkpoints;
    return j.dump();
}

TrainerState TrainerState::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        TrainerState s;
        s.run_name = j.at("run_name").get<std::string>();
        s.updates = j.at("updates").get<std::uint64_t>();
        s.epoch = j.at("epoch").get<std::size_t>();
        s.validations = j.at("validations").get<std::size_t>();
        for (const auto& m : j.at("history")) s.history.push_back(metric_from_json(m));
        s.bad_streak = j.at("bad_streak").get<std::int64_t>();
        if (!j.at("best").is_null()) s.best = metric_from_json(j.at("best"));
        s.best_checkpoints = j.at("best_checkpoints").get<std::vector<std::string>>();
        return s;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed trainer state: ") + e.what());
    }
}

std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::max_epochs: return "max_epochs";
        case StopReason::max_updates: return "max_updates";
        case StopReason::patience: return "patience";
        case StopReason::target: return "target";
    }
    return "?";
}

std::filesystem::path checkpoint_path(const ExperimentConfig& config, const std::string& run_name, std::size_t k) {
    char suffix[32];
    std::snprintf(suffix, sizeof(suffix), "-val%03zu.ckpt", k);
    return expand_path(config.save_path) / (run_name + suffix);
}

std::filesystem::path snapshot_path(const ExperimentConfig& config, const std::string& run_name) {
    return expand_path(config.save_path) / (run_name + ".snapshot");
}

TrainingData load_training_data(const ExperimentConfig& config) {
    if (config.train_trg.empty()) throw ConfigError("[model.data] train_trg is not set");
    const bool lm = config.model_type == "rnnlm";
    if (!lm && config.train_src.empty()) throw ConfigError("[model.data] train_src is not set");

    TrainingData d;
    const auto max_len = static_cast<std::size_t>(config.max_seq_len);
    const auto vocab_for = [&](const std::string& dict, const std::string& corpus, std::int64_t n_words) {
        if (!dict.empty()) return Vocabulary::load(expand_path(dict));
        return build_vocab({expand_path(corpus)}, static_cast<std::size_t>(n_words));
    };
    d.trg_vocab = vocab_for(config.dict_trg, config.train_trg, config.n_words_trg);
    if (lm) {
        d.src_vocab = d.trg_vocab;
        d.train = load_monolingual_corpus(expand_path(config.train_trg), d.trg_vocab, max_len);
        if (!config.valid_trg.empty()) d.valid = load_monolingual_corpus(expand_path(config.valid_trg), d.trg_vocab);
        return d;
    }
    d.src_vocab = vocab_for(config.dict_src, config.train_src, config.n_words_src);
    d.train = load_parallel_corpus(expand_path(config.train_src), expand_path(config.train_trg), d.src_vocab,
                                   d.trg_vocab, max_len);
    if (!config.valid_src.empty() && !config.valid_trg.empty()) {
        d.valid = load_parallel_corpus(expand_path(config.valid_src), expand_path(config.valid_trg), d.src_vocab,
                                       d.trg_vocab);
        d.valid_src = d.valid.src;
        const std::string& refs = config.valid_trg_orig.empty() ? config.valid_trg : config.valid_trg_orig;
        d.valid_refs = read_lines(expand_path(refs));
        if (config.valid_trg_orig.empty()) {
            const auto filters = parse_filters(config.filter);
            for (auto& r : d.valid_refs) r = apply_filters(filters, r);
        }
    }
    return d;
}

MetricValue validate_perplexity(const Model& model, const ParallelCorpus& valid, std::size_t batch_size) {
    if (valid.size() == 0) throw DataError("perplexity validation needs a non-empty validation corpus");
    // Eval mode on a non-recording graph only reads the parameters.
    Model& m = const_cast<Model&>(model);
    double total = 0.0, tokens = 0.0;
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < valid.size(); start += batch_size) {
        rows.resize(std::min(batch_size, valid.size() - start));
        std::iota(rows.begin(), rows.end(), start);
        const Batch b = make_batch(valid, rows);
        Graph g(false);
        const LossResult r = m.forward_loss(g, b, Mode::eval);
        total += r.total_nll;
        tokens += r.n_tokens;
    }
    return perplexity(total, tokens);
}

MetricValue validate_bleu(const Model& model, const TrainingData& data, const ExperimentConfig& config,
                          std::vector<std::string>* hypotheses) {
    if (data.valid_src.empty()) throw DataError("BLEU validation needs valid_src / valid_trg");
    const Model* models[] = {&model};
    TranslateOptions opts;
    opts.beam.beam_size = static_cast<std::size_t>(config.valid_beam);
    opts.workers = static_cast<std::size_t>(config.valid_njobs);
    const auto filters = parse_filters(config.filter);
    std::vector<std::string> hyps;
    for (const auto& t : translate_all(models, data.valid_src, opts))
        hyps.push_back(apply_filters(filters, hypothesis_text(t.nbest.front(), model.trg_vocab())));
    const auto metric = parse_metric(config.valid_metric);
    const auto variant = metric == MetricName::bleu_v13a ? BleuVariant::v13a : BleuVariant::multi_bleu;
    MetricValue v = bleu_corpus(hyps, data.valid_refs, variant);
    if (hypotheses) *hypotheses = std::move(hyps);
    return v;
}

TrainingReport run_training(const ExperimentConfig& config, const TrainingHooks& hooks) {
    config.validate();
    return run_training(config, load_training_data(config), hooks);
}

TrainingReport run_training(const ExperimentConfig& config, const TrainingData& data, const TrainingHooks& hooks) {
    config.validate();
    if (data.train.size() == 0) throw DataError("training corpus is empty");
    std::ostream* log = hooks.log;
    for (const auto& w : config.warnings)
        if (log) *log << "warning: " << w << '\n';

    auto model = create_model(config.model_options(), data.src_vocab, data.trg_vocab, config.seed);
    if (!config.pretrained.empty()) {
        const auto n = load_pretrained(*model, load_arrays(expand_path(config.pretrained)));
        if (log) *log << "loaded " << n << " pre-trained arrays from " << config.pretrained << '\n';
    }
    ParameterSet& params = model->params();
    const auto plist = params.list();
    const OptimizerOptions opt_options = config.optimizer_options();
    Optimizer optimizer(opt_options, params);

    const Rng root(config.seed);
    Rng dropout_rng = root.split(kDropoutStream);
    Rng noise_rng = root.split(kNoiseStream);
    BatchIterator iter(data.train, static_cast<std::size_t>(config.batch_size), parse_shuffle_mode(config.shuffle_mode),
                       root.split(kIteratorStream).seed());

    TrainerState state;
    state.run_name = checkpoint_name(config);
    if (hooks.resume_from) {
        Checkpoint snap = load_checkpoint(*hooks.resume_from);
        if (!snap.snapshot) throw DataError(hooks.resume_from->string() + " is a checkpoint, not a resumable snapshot");
        if (!(snap.src_vocab == model->src_vocab()) || !(snap.trg_vocab == model->trg_vocab()))
            throw DataError("snapshot vocabularies differ from the training data vocabularies");
        assign_parameters(*model, snap.arrays);
        const SnapshotState& s = *snap.snapshot;
        optimizer.load_state(s.optimizer_steps, s.optimizer_slots);
        state = TrainerState::from_json(s.trainer_state);
        iter.seek(s.iterator_epoch, s.iterator_position);
        dropout_rng = Rng(dropout_rng.seed(), s.dropout_rng_counter);
        noise_rng = Rng(noise_rng.seed(), s.noise_rng_counter);
        if (log) *log << "resumed from " << hooks.resume_from->string() << " at update " << state.updates << '\n';
    }
    std::filesystem::create_directories(expand_path(config.save_path));

    auto make_snapshot = [&]() {
        SnapshotState s;
        s.optimizer_steps = optimizer.steps();
        s.optimizer_slots = optimizer.state();
        s.trainer_state = state.to_json();
        s.iterator_epoch = iter.epoch();
        s.iterator_position = iter.position();
        s.dropout_rng_counter = dropout_rng.counter();
        s.noise_rng_counter = noise_rng.counter();
        return s;
    };
    auto write_snapshot = [&](const std::filesystem::path& path) {
        const SnapshotState s = make_snapshot();
        save_checkpoint(path, *model, config, &s);
        if (log) *log << "snapshot written to " << path.string() << '\n';
    };

    TrainingReport report;
    const MetricName metric = parse_metric(config.valid_metric);

    // Returns true when training should stop; `reason` says why.
    StopReason reason = StopReason::max_epochs;
    auto validate = [&]() {
        const std::size_t k = ++state.validations;
        MetricValue v;
        std::vector<std::string> hyps;
        if (hooks.validator)
            v = hooks.validator(*model, k);
        else if (metric == MetricName::perplexity)
            v = validate_perplexity(*model, data.valid, static_cast<std::size_t>(config.batch_size));
        else
            v = validate_bleu(*model, data, config, config.valid_save_hyp ? &hyps : nullptr);
        if (config.valid_save_hyp && !hyps.empty()) {
            const auto path = expand_path(config.save_path) / (state.run_name + ".val" + std::to_string(k) + ".hyp");
            std::ofstream out(path, std::ios::binary);
            for (const auto& h : hyps) out << h << '\n';
        }
        report.validations.push_back(v);
        const bool improved = state.record(v);
        if (log)
            *log << "validation " << k << " epoch " << state.epoch << " update " << state.updates << ": " << v.str()
                 << (improved ? " (best)" : "") << " patience " << state.bad_streak << "/" << config.patience << '\n';
        if (improved) {
            const auto path = checkpoint_path(config, state.run_name, k);
            save_checkpoint(path, *model, config, nullptr, hooks.checkpoint_dtype);
            state.best_checkpoints.push_back(path.string());
            while (state.best_checkpoints.size() > static_cast<std::size_t>(config.save_best_n)) {
                std::filesystem::remove(state.best_checkpoints.front());
                state.best_checkpoints.erase(state.best_checkpoints.begin());
            }
        }
        if (hooks.target && hooks.target(v)) {
            reason = StopReason::target;
            return true;
        }
        reason = StopReason::patience;
        return state.patience_exhausted(config.patience);
    };

    const auto max_epochs = static_cast<std::size_t>(config.max_epochs);
    const auto valid_start = static_cast<std::size_t>(config.valid_start);
    double disp_loss = 0.0;
    double disp_words = 0.0;
    std::uint64_t disp_count = 0;
    auto disp_clock = std::chrono::steady_clock::now();
    state.epoch = iter.epoch();

    try {
        while (true) {
            if (state.epoch > max_epochs) {
                reason = StopReason::max_epochs;
                break;
            }
            if (config.max_updates > 0 && state.updates >= static_cast<std::uint64_t>(config.max_updates)) {
                reason = StopReason::max_updates;
                break;
            }
            std::optional<Batch> batch = iter.next();
            if (!batch) {
                const bool stop = config.valid_freq == 0 && state.epoch >= valid_start && validate();
                report.epochs_completed = state.epoch;
                state.epoch = iter.epoch();
                if (stop) break;
                continue;
            }

            Graph g;
            const LossResult r = model->forward_loss(g, *batch, Mode::train, &dropout_rng);
            params.zero_grad();
            g.backward(r.loss);
            if (config.clip_c > 0.0) clip_gradients(plist, config.clip_c);
            if (config.grad_noise_eta > 0.0)
                add_gradient_noise(plist, opt_options.kind, state.updates, config.grad_noise_eta,
                                   config.grad_noise_gamma, noise_rng);
            optimizer.step(params);
            ++state.updates;

            const double loss = r.loss.value()[0];
            report.losses.push_back(loss);
            if (hooks.on_update) hooks.on_update(*model, state.updates);
            disp_loss += loss;
            disp_words += r.n_tokens;
            ++disp_count;
            if (config.disp_freq > 0 && state.updates % static_cast<std::uint64_t>(config.disp_freq) == 0) {
                const auto now = std::chrono::steady_clock::now();
                const double secs = std::chrono::duration<double>(now - disp_clock).count();
                if (log) {
                    char line[160];
                    std::snprintf(line, sizeof(line), "epoch %zu update %llu loss %.4f words/sec %.1f", state.epoch,
                                  static_cast<unsigned long long>(state.updates), disp_loss / disp_count,
                                  secs > 0 ? disp_words / secs : 0.0);
                    *log << line << '\n';
                }
                disp_loss = disp_words = 0.0;
                disp_count = 0;
                disp_clock = now;
            }
            if (config.valid_freq > 0 && state.updates % static_cast<std::uint64_t>(config.valid_freq) == 0 &&
                state.epoch >= valid_start && validate())
                break;
            if (config.snapshot_freq > 0 && state.updates % static_cast<std::uint64_t>(config.snapshot_freq) == 0)
                write_snapshot(snapshot_path(config, state.run_name));
        }
    } catch (const NumericError& e) {
        const auto path = expand_path(config.save_path) / (state.run_name + ".diverged.snapshot");
        if (log) *log << "numeric failure at update " << state.updates << ": " << e.what() << '\n';
        try {
            write_snapshot(path);
        } catch (const std::exception&) {
        }
        throw NumericError(std::string(e.what()) + " (diagnostic snapshot: " + path.string() + ")");
    }

    if (hooks.final_snapshot) write_snapshot(snapshot_path(config, state.run_name));

    report.run_name = state.run_name;
    report.updates = state.updates;
    report.reason = reason;
    report.best = state.best;
    if (!state.best_checkpoints.empty()) report.best_checkpoint = state.best_checkpoints.back();
    if (log) {
        *log << "stopped (" << to_string(reason) << ") after " << state.updates << " updates";
        if (state.best) *log << ", best " << state.best->str();
        *log << '\n';
    }
    return report;
}

}  // namespace nmt
