#include "nmt/autodiff.hpp"

namespace nmt {

Parameter::Parameter(std::string n, Tensor v, ParamKind k)
    : name(std::move(n)), value(std::move(v)), grad(value.shape()), kind(k) {}

Parameter& ParameterSet::add(std::string name, Tensor value, ParamKind kind) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    index_.emplace(name, params_.size());
    params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value), kind));
    return *params_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParameterSet::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParameterSet::get(const std::string& name) {
    auto* p = find(name);
    if (!p) throw ConfigError("no parameter named '" + name + "'");
    return *p;
}

const Parameter& ParameterSet::get(const std::string& name) const {
    auto* p = find(name);
    if (!p) throw ConfigError("no parameter named '" + name + "'");
    return *p;
}

std::vector<Parameter*> ParameterSet::list() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

std::vector<const Parameter*> ParameterSet::list() const {
    std::vector<const Parameter*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

std::vector<std::string> ParameterSet::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p->name);
    return out;
}

std::size_t ParameterSet::num_elements() const {
    std::size_t n = 0;
    for (auto& p : params_) n += p->value.size();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p->zero_grad();
}

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::constant: return "constant";
        case OpKind::param: return "param";
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::affine: return "affine";
        case OpKind::tanh: return "tanh";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::exp: return "exp";
        case OpKind::log: return "log";
        case OpKind::softmax: return "softmax";
        case OpKind::log_softmax: return "log_softmax";
        case OpKind::concat: return "concat";
        case OpKind::slice: return "slice";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::add_bias: return "add_bias";
        case OpKind::masked_fill: return "masked_fill";
        case OpKind::mul_prefix: return "mul_prefix";
        case OpKind::sum_axis1: return "sum_axis1";
        case OpKind::embedding: return "embedding";
        case OpKind::select_time: return "select_time";
        case OpKind::stack_time: return "stack_time";
        case OpKind::pick: return "pick";
        case OpKind::layer_norm: return "layer_norm";
        case OpKind::reshape: return "reshape";
        case OpKind::add_time_broadcast: return "add_time_broadcast";
    }
    return "unknown";
}

Var Graph::constant(Tensor value) {
    Node n;
    n.kind = OpKind::constant;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    Node n;
    n.kind = OpKind::param;
    n.external = &p.value;
    n.param = &p;
    n.requires_grad = recording_;
    nodes_.push_back(std::move(n));
    auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
    param_nodes_.emplace(&p, id);
    return Var(this, id);
}

const Tensor& Graph::value(Var v) const {
    const Node& n = nodes_[v.id()];
    return n.external ? *n.external : n.value;
}

Var Graph::record(OpKind kind, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool needs = false;
    if (recording_)
        for (Var in : inputs) needs = needs || nodes_[in.id()].requires_grad;
    Node n;
    n.kind = kind;
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::record(OpKind kind, Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool needs = false;
    if (recording_)
        for (Var in : inputs) needs = needs || nodes_[in.id()].requires_grad;
    Node n;
    n.kind = kind;
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Tensor& Graph::grad_of(Var v) {
    Node& n = nodes_[v.id()];
    if (n.grad.empty()) n.grad = Tensor(value(v).shape());
    return n.grad;
}

void Graph::backward(Var loss) {
    const Tensor& lv = value(loss);
    if (lv.size() != 1 || lv.rank() > 1)
        throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(lv.shape()));
    if (!recording_) throw Error("backward: graph was built without gradient recording");

    for (auto& n : nodes_) n.grad = Tensor();
    grad_of(loss).fill(1.0);

    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty()) continue;
        if (n.backward) n.backward(*this, n.external ? *n.external : n.value, n.grad);
    }
    for (auto& n : nodes_) {
        if (n.param && !n.grad.empty()) n.param->grad.add_(n.grad);
    }
}

}  // namespace nmt
