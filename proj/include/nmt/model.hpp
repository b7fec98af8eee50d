#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nmt/autodiff.hpp"
#include "nmt/data.hpp"
#include "nmt/init.hpp"
#include "nmt/layers.hpp"

namespace nmt {

enum class InitCgru { mean_ctx, zero };
enum class TiedEmb { off, two_way, three_way };

InitCgru parse_init_cgru(const std::string& name);
std::string to_string(InitCgru v);
// Accepts False/off/none, 2way, 3way.
TiedEmb parse_tied_emb(const std::string& name);
std::string to_string(TiedEmb v);

// Architecture options. Everything a model needs to rebuild its parameter set.
struct ModelOptions {
    std::string model_type = "attention";
    std::size_t embedding_dim = 100;
    std::size_t rnn_dim = 100;
    std::size_t n_enc_layers = 0;
    bool layer_norm = false;
    InitCgru init_cgru = InitCgru::mean_ctx;
    TiedEmb tied_emb = TiedEmb::off;
    double emb_dropout = 0.0;
    double ctx_dropout = 0.0;
    double out_dropout = 0.0;
    double decay_c = 0.0;
    InitMethod weight_init = InitMethod::xavier;
    // Square hidden-to-hidden matrices.
    InitMethod recurrent_init = InitMethod::orthogonal;
};

struct LossResult {
    Var loss;               // mean masked NLL per token (+ L2 penalty in train mode)
    double total_nll = 0.0;  // summed over valid tokens, penalty excluded
    double n_tokens = 0.0;
    Tensor token_nll;       // [B,T], zero on padding
};

// Source side encoded once per sentence and reused by every decode step.
struct EncodedSource {
    Tensor states;      // [1,S,ctx]
    Tensor keys;        // [1,S,att]
    Tensor mask;        // [1,S]
    Tensor init_state;  // [1,dec]
    std::size_t src_len() const { return mask.empty() ? 0 : mask.dim(1); }
};

struct StepResult {
    Tensor log_probs;  // [n,V]
    Tensor states;     // [n,dec]
    Tensor alpha;      // [n,S] (empty without attention)
};

class Model {
public:
    static constexpr int kStartToken = -1;  // feedback id meaning "zero embedding"

    Model(ModelOptions options, Vocabulary src_vocab, Vocabulary trg_vocab);
    virtual ~Model() = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const ModelOptions& options() const { return options_; }
    const Vocabulary& src_vocab() const { return src_vocab_; }
    const Vocabulary& trg_vocab() const { return trg_vocab_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

    virtual bool uses_source() const = 0;
    virtual std::size_t state_dim() const = 0;

    // Teacher-forced loss over a batch. dropout_rng is required in train mode when any
    // dropout rate is non-zero.
    virtual LossResult forward_loss(Graph& g, const Batch& batch, Mode mode, Rng* dropout_rng = nullptr) = 0;

    // src_ids ends in <eos>. Models without a source accept an empty list.
    virtual EncodedSource encode_source(std::span<const int> src_ids) const = 0;
    // One decoder step for n hypotheses sharing the same source. prev_ids uses kStartToken
    // for the first step.
    virtual StepResult decode_step(const EncodedSource& src, const Tensor& states,
                                   std::span<const int> prev_ids) const = 0;

protected:
    Parameter& mutable_param(const Parameter* p) const { return const_cast<Parameter&>(*p); }

    ModelOptions options_;
    Vocabulary src_vocab_;
    Vocabulary trg_vocab_;
    ParameterSet params_;
};

// Bidirectional GRU encoder + CGRU decoder with attention.
class NmtModel : public Model {
public:
    NmtModel(ModelOptions options, Vocabulary src_vocab, Vocabulary trg_vocab, std::uint64_t seed);

    bool uses_source() const override { return true; }
    std::size_t state_dim() const override { return options_.rnn_dim; }
    std::size_t ctx_dim() const { return 2 * options_.rnn_dim; }

    LossResult forward_loss(Graph& g, const Batch& batch, Mode mode, Rng* dropout_rng = nullptr) override;
    EncodedSource encode_source(std::span<const int> src_ids) const override;
    StepResult decode_step(const EncodedSource& src, const Tensor& states, std::span<const int> prev_ids) const override;

    struct Encoded {
        Var states;  // [B,S,ctx]
        Tensor mask;  // [B,S]
    };
    Encoded encode(Graph& g, std::span<const int> src_ids, std::size_t batch, std::size_t src_len,
                   const Tensor& mask, Mode mode, Rng* dropout_rng) const;
    Var init_decoder(Graph& g, Var enc_states, const Tensor& mask) const;

private:
    Var logits(Graph& g, Var state, Var y_prev_emb, Var context, Mode mode, Rng* dropout_rng) const;

    Parameter* E_src_;
    Parameter* E_trg_;
    GruParams enc_fwd_;
    GruParams enc_bwd_;
    std::vector<GruParams> enc_layers_;
    Parameter* init_W_ = nullptr;
    Parameter* init_b_ = nullptr;
    CgruParams cgru_;
    Parameter* W_s_;
    Parameter* W_y_;
    Parameter* W_c_;
    Parameter* W_o_ = nullptr;  // null when tied to E_trg
    Parameter* b_o_;
};

// GRU language model over the target side.
class RnnLm : public Model {
public:
    RnnLm(ModelOptions options, Vocabulary vocab, std::uint64_t seed);

    bool uses_source() const override { return false; }
    std::size_t state_dim() const override { return options_.rnn_dim; }

    LossResult forward_loss(Graph& g, const Batch& batch, Mode mode, Rng* dropout_rng = nullptr) override;
    EncodedSource encode_source(std::span<const int> src_ids) const override;
    StepResult decode_step(const EncodedSource& src, const Tensor& states, std::span<const int> prev_ids) const override;

private:
    Parameter* E_;
    GruParams gru_;
    Parameter* W_o_;
    Parameter* b_o_;
};

using ModelFactory =
    std::function<std::unique_ptr<Model>(const ModelOptions&, const Vocabulary& src, const Vocabulary& trg, std::uint64_t seed)>;

void register_model(const std::string& type, ModelFactory factory);
bool model_registered(const std::string& type);
std::vector<std::string> registered_models();
// Throws ConfigError for an unknown model_type.
std::unique_ptr<Model> create_model(const ModelOptions& options, const Vocabulary& src_vocab,
                                    const Vocabulary& trg_vocab, std::uint64_t seed);

// Per-parameter contents digest, used to assert that read-only passes stay read-only.
std::uint64_t parameter_hash(const ParameterSet& params);

}  // namespace nmt
