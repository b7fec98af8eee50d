#include "nmt/layers.hpp"

#include <limits>

#include "nmt/ops.hpp"

namespace nmt {

GruParams GruParams::create(ParameterSet& set, const std::string& prefix, std::size_t input_dim,
                            std::size_t hidden_dim, bool layer_norm, InitMethod weight_init,
                            InitMethod recurrent_init, Rng& rng) {
    GruParams p;
    const Shape in_shape{input_dim, hidden_dim};
    const Shape rec_shape{hidden_dim, hidden_dim};
    p.W = &set.add(prefix + ".W", init_weight(weight_init, in_shape, rng));
    p.W_r = &set.add(prefix + ".W_r", init_weight(weight_init, in_shape, rng));
    p.W_z = &set.add(prefix + ".W_z", init_weight(weight_init, in_shape, rng));
    p.U = &set.add(prefix + ".U", init_weight(recurrent_init, rec_shape, rng));
    p.U_r = &set.add(prefix + ".U_r", init_weight(recurrent_init, rec_shape, rng));
    p.U_z = &set.add(prefix + ".U_z", init_weight(recurrent_init, rec_shape, rng));
    p.b = &set.add(prefix + ".b", Tensor({hidden_dim}), ParamKind::bias);
    p.b_r = &set.add(prefix + ".b_r", Tensor({hidden_dim}), ParamKind::bias);
    p.b_z = &set.add(prefix + ".b_z", Tensor({hidden_dim}), ParamKind::bias);
    if (layer_norm) {
        p.ln_x_gain = &set.add(prefix + ".ln_x.gain", Tensor({3 * hidden_dim}, 1.0), ParamKind::gain);
        p.ln_x_bias = &set.add(prefix + ".ln_x.bias", Tensor({3 * hidden_dim}), ParamKind::bias);
        p.ln_h_gain = &set.add(prefix + ".ln_h.gain", Tensor({3 * hidden_dim}, 1.0), ParamKind::gain);
        p.ln_h_bias = &set.add(prefix + ".ln_h.bias", Tensor({3 * hidden_dim}), ParamKind::bias);
    }
    return p;
}

AttentionParams AttentionParams::create(ParameterSet& set, const std::string& prefix, std::size_t dec_dim,
                                        std::size_t ctx_dim, std::size_t att_dim, InitMethod weight_init,
                                        Rng& rng) {
    if (att_dim == 0) throw ConfigError("attention dimension must be > 0");
    AttentionParams p;
    p.W_att = &set.add(prefix + ".W_att", init_weight(weight_init, {dec_dim, att_dim}, rng));
    p.U_att = &set.add(prefix + ".U_att", init_weight(weight_init, {ctx_dim, att_dim}, rng));
    p.v_att = &set.add(prefix + ".v_att", init_weight(weight_init, {att_dim}, rng));
    p.b_att = &set.add(prefix + ".b_att", Tensor({att_dim}), ParamKind::bias);
    return p;
}

namespace layers {

Var ff(Var x, Var W, Var b, Activation act) {
    Var y = ops::add_bias(ops::matmul(x, W), b);
    return act == Activation::tanh ? ops::tanh(y) : y;
}

Var highway(Var x, Var W_h, Var b_h, Var W_t, Var b_t) {
    for (Var w : {W_h, W_t}) {
        const Shape& s = w.shape();
        if (s.size() != 2 || s[0] != s[1] || s[0] != x.value().last_dim())
            throw ShapeError("highway: transform must be square and match input dim; got " + shape_str(s) +
                             " for input " + shape_str(x.shape()));
    }
    Var t = ops::sigmoid(ops::add_bias(ops::matmul(x, W_t), b_t));
    Var h = ops::tanh(ops::add_bias(ops::matmul(x, W_h), b_h));
    return ops::add(ops::mul(t, h), ops::mul(ops::one_minus(t), x));
}

Var gru_input_projection(const GruParams& p, Var x) {
    Graph& g = x.graph();
    Var proj = ops::concat({ops::matmul(x, g.param(*p.W_r)), ops::matmul(x, g.param(*p.W_z)),
                            ops::matmul(x, g.param(*p.W))});
    if (p.layer_norm()) proj = layer_norm(proj, g.param(*p.ln_x_gain), g.param(*p.ln_x_bias));
    return proj;
}

namespace {

void check_mask(const Tensor& mask, std::size_t rows) {
    if (mask.size() != rows)
        throw ShapeError("gru_step: mask has " + std::to_string(mask.size()) + " entries for " +
                         std::to_string(rows) + " rows");
    for (double m : mask.values())
        if (m != 0.0 && m != 1.0) throw ShapeError("gru_step: mask entries must be 0 or 1, got " + std::to_string(m));
}

bool all_ones(const Tensor& mask) {
    for (double m : mask.values())
        if (m != 1.0) return false;
    return true;
}

}  // namespace

Var gru_step_projected(const GruParams& p, Var x_proj, Var h_prev, const Tensor* mask) {
    Graph& g = x_proj.graph();
    const std::size_t H = p.hidden_dim();
    const std::size_t rows = h_prev.value().rows();
    if (mask) check_mask(*mask, rows);

    Var h_proj = ops::concat({ops::matmul(h_prev, g.param(*p.U_r)), ops::matmul(h_prev, g.param(*p.U_z)),
                              ops::matmul(h_prev, g.param(*p.U))});
    if (p.layer_norm()) h_proj = layer_norm(h_proj, g.param(*p.ln_h_gain), g.param(*p.ln_h_bias));

    Var r = ops::sigmoid(ops::add_bias(ops::add(ops::slice(x_proj, 0, H), ops::slice(h_proj, 0, H)), g.param(*p.b_r)));
    Var z = ops::sigmoid(
        ops::add_bias(ops::add(ops::slice(x_proj, H, 2 * H), ops::slice(h_proj, H, 2 * H)), g.param(*p.b_z)));
    Var cand = ops::tanh(ops::add_bias(
        ops::add(ops::slice(x_proj, 2 * H, 3 * H), ops::mul(r, ops::slice(h_proj, 2 * H, 3 * H))), g.param(*p.b)));
    Var h = ops::add(ops::mul(z, h_prev), ops::mul(ops::one_minus(z), cand));

    if (!mask || all_ones(*mask)) return h;
    Tensor keep(mask->shape());
    for (std::size_t i = 0; i < mask->size(); ++i) keep[i] = 1.0 - (*mask)[i];
    return ops::add(ops::mul_prefix(h, g.constant(*mask)), ops::mul_prefix(h_prev, g.constant(std::move(keep))));
}

Var gru_step(const GruParams& p, Var x, Var h_prev, const Tensor* mask) {
    return gru_step_projected(p, gru_input_projection(p, x), h_prev, mask);
}

Var attention_keys(const AttentionParams& p, Var enc) {
    Graph& g = enc.graph();
    return ops::add_bias(ops::matmul(enc, g.param(*p.U_att)), g.param(*p.b_att));
}

AttentionOutput attention(const AttentionParams& p, Var dec_state, Var enc, Var keys, const Tensor& enc_mask) {
    Graph& g = dec_state.graph();
    const Shape& es = enc.shape();
    if (es.size() != 3 || enc_mask.shape() != Shape{es[0], es[1]})
        throw ShapeError("attention: mask " + shape_str(enc_mask.shape()) + " does not match states " + shape_str(es));
    for (std::size_t b = 0; b < es[0]; ++b) {
        bool any = false;
        for (std::size_t s = 0; s < es[1]; ++s) any = any || enc_mask.at(b, s) != 0.0;
        if (!any) throw ShapeError("attention: all source positions are masked in row " + std::to_string(b));
    }
    Var query = ops::matmul(dec_state, g.param(*p.W_att));
    Var scores = ops::matmul(ops::tanh(ops::add_time_broadcast(keys, query)), g.param(*p.v_att));
    Var alpha = ops::softmax(ops::masked_fill(scores, enc_mask, -std::numeric_limits<double>::infinity()));
    Var context = ops::sum_axis1(ops::mul_prefix(enc, alpha));
    return {alpha, context};
}

CgruOutput cgru_step(const CgruParams& p, Var y_emb_prev, Var s_prev, Var enc, Var keys, const Tensor& enc_mask,
                     const Tensor* step_mask) {
    Var s_mid = gru_step(p.gru1, y_emb_prev, s_prev, step_mask);
    AttentionOutput att = attention(p.att, s_mid, enc, keys, enc_mask);
    Var s_new = gru_step(p.gru2, att.context, s_mid, step_mask);
    return {s_new, att.context, att.alpha};
}

Var layer_norm(Var a, Var gain, Var bias) { return ops::layer_norm(a, gain, bias, 1e-5); }

Var dropout(Var x, const DropoutSpec& spec) {
    if (!(spec.rate >= 0.0 && spec.rate < 1.0))
        throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(spec.rate));
    if (spec.mode == Mode::eval || spec.rate == 0.0) return x;
    if (!spec.rng) throw ConfigError("dropout in train mode requires a random stream");
    const double keep = 1.0 - spec.rate;
    Tensor mask(x.shape());
    for (auto& m : mask.values()) m = spec.rng->bernoulli(keep) ? 1.0 / keep : 0.0;
    return ops::mul(x, x.graph().constant(std::move(mask)));
}

Var embed(Var table, std::span<const int> ids) { return ops::embedding(table, ids); }

}  // namespace layers
}  // namespace nmt
