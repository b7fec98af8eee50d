#pragma once

#include <span>
#include <string>

#include "nmt/autodiff.hpp"
#include "nmt/init.hpp"
#include "nmt/random.hpp"

namespace nmt {

enum class Mode { train, eval };
enum class Activation { linear, tanh };

// Gate layout follows dl4mt: W* map the input, U* the previous state, the reset gate
// scales (h U) rather than h.
struct GruParams {
    Parameter* W = nullptr;
    Parameter* W_r = nullptr;
    Parameter* W_z = nullptr;
    Parameter* U = nullptr;
    Parameter* U_r = nullptr;
    Parameter* U_z = nullptr;
    Parameter* b = nullptr;
    Parameter* b_r = nullptr;
    Parameter* b_z = nullptr;
    // Layer normalization over the [r|z|h] pre-activation blocks (input and recurrent side).
    Parameter* ln_x_gain = nullptr;
    Parameter* ln_x_bias = nullptr;
    Parameter* ln_h_gain = nullptr;
    Parameter* ln_h_bias = nullptr;

    bool layer_norm() const { return ln_x_gain != nullptr; }
    std::size_t input_dim() const { return W->value.dim(0); }
    std::size_t hidden_dim() const { return U->value.dim(0); }

    static GruParams create(ParameterSet& set, const std::string& prefix, std::size_t input_dim,
                            std::size_t hidden_dim, bool layer_norm, InitMethod weight_init,
                            InitMethod recurrent_init, Rng& rng);
};

struct AttentionParams {
    Parameter* W_att = nullptr;  // [dec_hid, att]
    Parameter* U_att = nullptr;  // [ctx, att]
    Parameter* v_att = nullptr;  // [att]
    Parameter* b_att = nullptr;  // [att]

    static AttentionParams create(ParameterSet& set, const std::string& prefix, std::size_t dec_dim,
                                  std::size_t ctx_dim, std::size_t att_dim, InitMethod weight_init, Rng& rng);
};

struct CgruParams {
    GruParams gru1;  // feedback embedding -> intermediate state
    AttentionParams att;
    GruParams gru2;  // attended context -> new state
};

struct DropoutSpec {
    double rate = 0.0;
    Mode mode = Mode::eval;
    Rng* rng = nullptr;
};

namespace layers {

Var ff(Var x, Var W, Var b, Activation act);

// t = sigmoid(x W_t + b_t); y = t * tanh(x W_h + b_h) + (1 - t) * x
Var highway(Var x, Var W_h, Var b_h, Var W_t, Var b_t);

// Input-side pre-activations [..., 3 * hid] in [r|z|h] order, layer-normalized when enabled.
// Can be applied to a whole [B,T,in] sequence at once.
Var gru_input_projection(const GruParams& p, Var x);
// One recurrence step given the projected input. mask (optional) has one 0/1 entry per row;
// rows with mask 0 keep h_prev exactly.
Var gru_step_projected(const GruParams& p, Var x_proj, Var h_prev, const Tensor* mask);
Var gru_step(const GruParams& p, Var x, Var h_prev, const Tensor* mask);

struct AttentionOutput {
    Var alpha;    // [B,S]
    Var context;  // [B,ctx]
};

// enc U_att + b_att, computed once per source batch: [B,S,att].
Var attention_keys(const AttentionParams& p, Var enc);
AttentionOutput attention(const AttentionParams& p, Var dec_state, Var enc, Var keys, const Tensor& enc_mask);

struct CgruOutput {
    Var state;
    Var context;
    Var alpha;
};

CgruOutput cgru_step(const CgruParams& p, Var y_emb_prev, Var s_prev, Var enc, Var keys,
                     const Tensor& enc_mask, const Tensor* step_mask);

Var layer_norm(Var a, Var gain, Var bias);

// Inverted dropout: scaled by 1/(1-p) at training time, identity otherwise.
Var dropout(Var x, const DropoutSpec& spec);

Var embed(Var table, std::span<const int> ids);

}  // namespace layers
}  // namespace nmt
