#include "nmt/model.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <mutex>

#include "nmt/ops.hpp"
#include "nmt/optim.hpp"

namespace nmt {

InitCgru parse_init_cgru(const std::string& name) {
    if (name == "mean_ctx") return InitCgru::mean_ctx;
    if (name == "zero") return InitCgru::zero;
    throw ConfigError("unknown init_cgru '" + name + "' (expected mean_ctx, zero)");
}

std::string to_string(InitCgru v) { return v == InitCgru::zero ? "zero" : "mean_ctx"; }

TiedEmb parse_tied_emb(const std::string& name) {
    if (name == "False" || name == "false" || name == "off" || name == "none") return TiedEmb::off;
    if (name == "2way") return TiedEmb::two_way;
    if (name == "3way") return TiedEmb::three_way;
    throw ConfigError("unknown tied_emb '" + name + "' (expected False, 2way, 3way)");
}

std::string to_string(TiedEmb v) {
    switch (v) {
        case TiedEmb::off: return "False";
        case TiedEmb::two_way: return "2way";
        case TiedEmb::three_way: return "3way";
    }
    return "?";
}

Model::Model(ModelOptions options, Vocabulary src_vocab, Vocabulary trg_vocab)
    : options_(std::move(options)), src_vocab_(std::move(src_vocab)), trg_vocab_(std::move(trg_vocab)) {
    if (options_.embedding_dim == 0 || options_.rnn_dim == 0)
        throw ConfigError("embedding_dim and rnn_dim must be > 0");
    for (double r : {options_.emb_dropout, options_.ctx_dropout, options_.out_dropout})
        if (!(r >= 0.0 && r < 1.0)) throw ConfigError("dropout rates must be in [0, 1)");
    if (options_.decay_c < 0.0) throw ConfigError("decay_c must be >= 0");
}

namespace {

// Column t of a [B,T] mask as a [B] tensor.
Tensor mask_column(const Tensor& mask, std::size_t t) {
    const std::size_t B = mask.dim(0);
    Tensor col({B});
    for (std::size_t b = 0; b < B; ++b) col[b] = mask.at(b, t);
    return col;
}

Var embed_sequence(Graph& g, Parameter& table, std::span<const int> ids, std::size_t B, std::size_t T) {
    Var e = layers::embed(g.param(table), ids);
    return ops::reshape(e, {B, T, table.value.dim(1)});
}

// Runs a GRU over [B,T,in] and returns the per-step states in time order.
std::vector<Var> run_gru(const GruParams& p, Var x, const Tensor& mask, bool reverse) {
    Graph& g = x.graph();
    const std::size_t B = x.shape()[0], T = x.shape()[1];
    Var proj = layers::gru_input_projection(p, x);
    Var h = g.constant(Tensor({B, p.hidden_dim()}));
    std::vector<Var> out(T);
    for (std::size_t k = 0; k < T; ++k) {
        const std::size_t t = reverse ? T - 1 - k : k;
        const Tensor m = mask_column(mask, t);
        h = layers::gru_step_projected(p, ops::select_time(proj, t), h, &m);
        out[t] = h;
    }
    return out;
}

Tensor tile_rows(const Tensor& x, std::size_t n) {
    Shape s = x.shape();
    const std::size_t block = x.size() / s[0];
    if (s[0] != 1) throw ShapeError("tile_rows: expected a leading extent of 1, got " + shape_str(s));
    s[0] = n;
    Tensor out(s);
    for (std::size_t i = 0; i < n; ++i) std::copy(x.values().begin(), x.values().end(), out.values().begin() + i * block);
    return out;
}

Tensor feedback_embeddings(const Tensor& E, std::span<const int> ids) {
    const std::size_t D = E.dim(1), V = E.dim(0);
    Tensor out({ids.size(), D});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == Model::kStartToken) continue;
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V)
            throw ShapeError("decode_step: token id " + std::to_string(ids[i]) + " out of range");
        std::copy_n(E.values().begin() + static_cast<std::size_t>(ids[i]) * D, D, out.values().begin() + i * D);
    }
    return out;
}

LossResult masked_nll(Graph& g, Var log_probs, const Batch& batch) {
    Var picked = ops::pick(log_probs, batch.trg_ids);
    Var masked = ops::mul(picked, g.constant(batch.trg_mask));
    LossResult r;
    r.n_tokens = static_cast<double>(batch.target_tokens());
    if (r.n_tokens <= 0.0) throw DataError("batch has no target tokens");
    Var total = ops::sum(masked);
    r.total_nll = -total.value()[0];
    r.loss = ops::scale(total, -1.0 / r.n_tokens);
    r.token_nll = masked.value();
    for (auto& v : r.token_nll.values()) v = v == 0.0 ? 0.0 : -v;
    if (!std::isfinite(r.total_nll)) throw NumericError("non-finite loss");
    return r;
}

void add_penalty(Graph& g, LossResult& r, ParameterSet& params, double decay_c, Mode mode) {
    if (mode != Mode::train || decay_c == 0.0) return;
    r.loss = ops::add(r.loss, l2_penalty(g, params, decay_c));
    if (!std::isfinite(r.loss.value()[0])) throw NumericError("non-finite loss");
}

}  // namespace

// ---------------------------------------------------------------------------------------

NmtModel::NmtModel(ModelOptions options, Vocabulary src_vocab, Vocabulary trg_vocab, std::uint64_t seed)
    : Model(std::move(options), std::move(src_vocab), std::move(trg_vocab)) {
    const auto& o = options_;
    const std::size_t E = o.embedding_dim, H = o.rnn_dim, C = 2 * H;
    const InitMethod wi = o.weight_init, ri = o.recurrent_init;
    if (o.tied_emb == TiedEmb::three_way && !(src_vocab_ == trg_vocab_))
        throw ConfigError("tied_emb 3way requires identical source and target vocabularies");
    Rng rng = Rng(seed).split(1);

    E_trg_ = &params_.add("emb.E_trg", init_weight(wi, {trg_vocab_.size(), E}, rng));
    E_src_ = o.tied_emb == TiedEmb::three_way ? E_trg_
                                                : &params_.add("emb.E_src", init_weight(wi, {src_vocab_.size(), E}, rng));

    enc_fwd_ = GruParams::create(params_, "enc.fwd", E, H, o.layer_norm, wi, ri, rng);
    enc_bwd_ = GruParams::create(params_, "enc.bwd", E, H, o.layer_norm, wi, ri, rng);
    for (std::size_t k = 1; k <= o.n_enc_layers; ++k)
        enc_layers_.push_back(
            GruParams::create(params_, "enc.layer" + std::to_string(k), C, C, o.layer_norm, wi, ri, rng));

    if (o.init_cgru == InitCgru::mean_ctx) {
        init_W_ = &params_.add("dec.init.W", init_weight(wi, {C, H}, rng));
        init_b_ = &params_.add("dec.init.b", Tensor({H}), ParamKind::bias);
    }
    cgru_.gru1 = GruParams::create(params_, "dec.gru1", E, H, o.layer_norm, wi, ri, rng);
    cgru_.att = AttentionParams::create(params_, "dec.att", H, C, C, wi, rng);
    cgru_.gru2 = GruParams::create(params_, "dec.gru2", C, H, o.layer_norm, wi, ri, rng);

    W_s_ = &params_.add("out.W_s", init_weight(wi, {H, E}, rng));
    W_y_ = &params_.add("out.W_y", init_weight(wi, {E, E}, rng));
    W_c_ = &params_.add("out.W_c", init_weight(wi, {C, E}, rng));
    if (o.tied_emb == TiedEmb::off) W_o_ = &params_.add("out.W_o", init_weight(wi, {E, trg_vocab_.size()}, rng));
    b_o_ = &params_.add("out.b_o", Tensor({trg_vocab_.size()}), ParamKind::bias);
}

NmtModel::Encoded NmtModel::encode(Graph& g, std::span<const int> src_ids, std::size_t B, std::size_t S,
                                   const Tensor& mask, Mode mode, Rng* dropout_rng) const {
    Var x = embed_sequence(g, mutable_param(E_src_), src_ids, B, S);
    x = layers::dropout(x, {options_.emb_dropout, mode, dropout_rng});

    const auto fwd = run_gru(enc_fwd_, x, mask, false);
    const auto bwd = run_gru(enc_bwd_, x, mask, true);
    Var h = ops::concat({ops::stack_time(fwd), ops::stack_time(bwd)});
    for (const auto& layer : enc_layers_) h = ops::stack_time(run_gru(layer, h, mask, false));

    h = layers::dropout(h, {options_.ctx_dropout, mode, dropout_rng});
    return {h, mask};
}

Var NmtModel::init_decoder(Graph& g, Var enc_states, const Tensor& mask) const {
    const std::size_t B = mask.dim(0), S = mask.dim(1);
    Tensor inv_len({B});
    for (std::size_t b = 0; b < B; ++b) {
        double n = 0.0;
        for (std::size_t s = 0; s < S; ++s) n += mask.at(b, s);
        if (n == 0.0) throw ShapeError("init_decoder: row " + std::to_string(b) + " has no valid source position");
        inv_len[b] = 1.0 / n;
    }
    if (options_.init_cgru == InitCgru::zero) return g.constant(Tensor({B, options_.rnn_dim}));
    Var mean = ops::mul_prefix(ops::sum_axis1(ops::mul_prefix(enc_states, g.constant(mask))), g.constant(inv_len));
    return layers::ff(mean, g.param(mutable_param(init_W_)), g.param(mutable_param(init_b_)), Activation::tanh);
}

Var NmtModel::logits(Graph& g, Var state, Var y_prev_emb, Var context, Mode mode, Rng* dropout_rng) const {
    Var o = ops::tanh(ops::add(ops::add(ops::matmul(state, g.param(mutable_param(W_s_))),
                                        ops::matmul(y_prev_emb, g.param(mutable_param(W_y_)))),
                               ops::matmul(context, g.param(mutable_param(W_c_)))));
    o = layers::dropout(o, {options_.out_dropout, mode, dropout_rng});
    Var out = W_o_ ? ops::matmul(o, g.param(mutable_param(W_o_))) : ops::matmul(o, g.param(mutable_param(E_trg_)), true);
    return ops::add_bias(out, g.param(mutable_param(b_o_)));
}

LossResult NmtModel::forward_loss(Graph& g, const Batch& batch, Mode mode, Rng* dropout_rng) {
    if (!batch.has_source()) throw DataError("attention model needs a source side in every batch");
    const std::size_t B = batch.size, T = batch.trg_len;
    Encoded enc = encode(g, batch.src_ids, B, batch.src_len, batch.src_mask, mode, dropout_rng);
    Var keys = layers::attention_keys(cgru_.att, enc.states);
    Var s = init_decoder(g, enc.states, enc.mask);

    Var trg_emb = embed_sequence(g, *E_trg_, batch.trg_ids, B, T);
    Var zero_emb = g.constant(Tensor({B, options_.embedding_dim}));
    std::vector<Var> states, contexts, feedback;
    for (std::size_t t = 0; t < T; ++t) {
        Var y_prev = t == 0 ? zero_emb : ops::select_time(trg_emb, t - 1);
        const Tensor m = mask_column(batch.trg_mask, t);
        auto step = layers::cgru_step(cgru_, y_prev, s, enc.states, keys, enc.mask, &m);
        s = step.state;
        states.push_back(step.state);
        contexts.push_back(step.context);
        feedback.push_back(y_prev);
    }
    Var logp = ops::log_softmax(logits(g, ops::stack_time(states), ops::stack_time(feedback),
                                       ops::stack_time(contexts), mode, dropout_rng));
    LossResult r = masked_nll(g, logp, batch);
    add_penalty(g, r, params_, options_.decay_c, mode);
    return r;
}

EncodedSource NmtModel::encode_source(std::span<const int> src_ids) const {
    if (src_ids.empty()) throw DataError("cannot encode an empty source sentence");
    Graph g(false);
    const std::size_t S = src_ids.size();
    Tensor mask({1, S}, 1.0);
    Encoded enc = encode(g, src_ids, 1, S, mask, Mode::eval, nullptr);
    Var keys = layers::attention_keys(cgru_.att, enc.states);
    Var s0 = init_decoder(g, enc.states, mask);
    return {enc.states.value(), keys.value(), mask, s0.value()};
}

StepResult NmtModel::decode_step(const EncodedSource& src, const Tensor& states, std::span<const int> prev_ids) const {
    const std::size_t n = states.dim(0);
    if (prev_ids.size() != n) throw ShapeError("decode_step: one previous token per hypothesis is required");
    Graph g(false);
    Var enc = g.constant(tile_rows(src.states, n));
    Var keys = g.constant(tile_rows(src.keys, n));
    const Tensor mask = tile_rows(src.mask, n);
    Var y_prev = g.constant(feedback_embeddings(E_trg_->value, prev_ids));
    auto step = layers::cgru_step(cgru_, y_prev, g.constant(states), enc, keys, mask, nullptr);
    Var logp = ops::log_softmax(logits(g, step.state, y_prev, step.context, Mode::eval, nullptr));
    return {logp.value(), step.state.value(), step.alpha.value()};
}

// ---------------------------------------------------------------------------------------

RnnLm::RnnLm(ModelOptions options, Vocabulary vocab, std::uint64_t seed)
    : Model(std::move(options), Vocabulary(), std::move(vocab)) {
    const std::size_t E = options_.embedding_dim, H = options_.rnn_dim;
    Rng rng = Rng(seed).split(1);
    E_ = &params_.add("emb.E_trg", init_weight(options_.weight_init, {trg_vocab_.size(), E}, rng));
    gru_ = GruParams::create(params_, "lm.gru", E, H, options_.layer_norm, options_.weight_init,
                             options_.recurrent_init, rng);
    W_o_ = &params_.add("out.W_o", init_weight(options_.weight_init, {H, trg_vocab_.size()}, rng));
    b_o_ = &params_.add("out.b_o", Tensor({trg_vocab_.size()}), ParamKind::bias);
}

LossResult RnnLm::forward_loss(Graph& g, const Batch& batch, Mode mode, Rng* dropout_rng) {
    const std::size_t B = batch.size, T = batch.trg_len, E = options_.embedding_dim;
    Var emb = embed_sequence(g, *E_, batch.trg_ids, B, T);
    emb = layers::dropout(emb, {options_.emb_dropout, mode, dropout_rng});
    Var h = g.constant(Tensor({B, options_.rnn_dim}));
    Var zero_emb = g.constant(Tensor({B, E}));
    std::vector<Var> states;
    for (std::size_t t = 0; t < T; ++t) {
        Var y_prev = t == 0 ? zero_emb : ops::select_time(emb, t - 1);
        const Tensor m = mask_column(batch.trg_mask, t);
        h = layers::gru_step(gru_, y_prev, h, &m);
        states.push_back(h);
    }
    Var out = layers::dropout(ops::stack_time(states), {options_.out_dropout, mode, dropout_rng});
    Var logp = ops::log_softmax(layers::ff(out, g.param(*W_o_), g.param(*b_o_), Activation::linear));
    LossResult r = masked_nll(g, logp, batch);
    add_penalty(g, r, params_, options_.decay_c, mode);
    return r;
}

EncodedSource RnnLm::encode_source(std::span<const int>) const {
    EncodedSource e;
    e.init_state = Tensor({1, options_.rnn_dim});
    return e;
}

StepResult RnnLm::decode_step(const EncodedSource&, const Tensor& states, std::span<const int> prev_ids) const {
    const std::size_t n = states.dim(0);
    if (prev_ids.size() != n) throw ShapeError("decode_step: one previous token per hypothesis is required");
    Graph g(false);
    Var y_prev = g.constant(feedback_embeddings(E_->value, prev_ids));
    Var h = layers::gru_step(gru_, y_prev, g.constant(states), nullptr);
    Var logp = ops::log_softmax(
        layers::ff(h, g.param(mutable_param(W_o_)), g.param(mutable_param(b_o_)), Activation::linear));
    return {logp.value(), h.value(), Tensor()};
}

// ---------------------------------------------------------------------------------------

namespace {

struct Registry {
    std::mutex mu;
    std::map<std::string, ModelFactory> factories;

    Registry() {
        factories["attention"] = [](const ModelOptions& o, const Vocabulary& s, const Vocabulary& t, std::uint64_t seed) {
            return std::unique_ptr<Model>(std::make_unique<NmtModel>(o, s, t, seed));
        };
        factories["rnnlm"] = [](const ModelOptions& o, const Vocabulary&, const Vocabulary& t, std::uint64_t seed) {
            return std::unique_ptr<Model>(std::make_unique<RnnLm>(o, t, seed));
        };
    }
};

Registry& registry() {
    static Registry r;
    return r;
}

}  // namespace

void register_model(const std::string& type, ModelFactory factory) {
    auto& r = registry();
    std::lock_guard lock(r.mu);
    r.factories[type] = std::move(factory);
}

bool model_registered(const std::string& type) {
    auto& r = registry();
    std::lock_guard lock(r.mu);
    return r.factories.contains(type);
}

std::vector<std::string> registered_models() {
    auto& r = registry();
    std::lock_guard lock(r.mu);
    std::vector<std::string> out;
    for (const auto& [k, v] : r.factories) out.push_back(k);
    return out;
}

std::unique_ptr<Model> create_model(const ModelOptions& options, const Vocabulary& src_vocab,
                                    const Vocabulary& trg_vocab, std::uint64_t seed) {
    ModelFactory factory;
    {
        auto& r = registry();
        std::lock_guard lock(r.mu);
        auto it = r.factories.find(options.model_type);
        if (it == r.factories.end()) {
            std::string known;
            for (const auto& [k, v] : r.factories) known += (known.empty() ? "" : ", ") + k;
            throw ConfigError("unknown model_type '" + options.model_type + "' (registered: " + known + ")");
        }
        factory = it->second;
    }
    return factory(options, src_vocab, trg_vocab, seed);
}

std::uint64_t parameter_hash(const ParameterSet& params) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    for (const Parameter* p : params.list()) {
        mix(p->name.data(), p->name.size());
        mix(p->value.data(), p->value.size() * sizeof(double));
    }
    return h;
}

}  // namespace nmt
