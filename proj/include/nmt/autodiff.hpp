#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "nmt/tensor.hpp"

namespace nmt {

// Weights take part in L2 regularization; biases and layer-norm gains do not.
enum class ParamKind : std::uint8_t { weight, bias, gain };

struct Parameter {
    Parameter(std::string name, Tensor value, ParamKind kind = ParamKind::weight);

    std::string name;
    Tensor value;
    Tensor grad;
    ParamKind kind;

    void zero_grad() { grad.fill(0.0); }
};

// Owns the parameters of a model. Addresses are stable for the lifetime of the set.
class ParameterSet {
public:
    ParameterSet() = default;
    ParameterSet(const ParameterSet&) = delete;
    ParameterSet& operator=(const ParameterSet&) = delete;
    ParameterSet(ParameterSet&&) = default;
    ParameterSet& operator=(ParameterSet&&) = default;

    Parameter& add(std::string name, Tensor value, ParamKind kind = ParamKind::weight);
    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;

    std::vector<Parameter*> list();
    std::vector<const Parameter*> list() const;
    std::vector<std::string> names() const;

    std::size_t size() const { return params_.size(); }
    // Total number of scalar weights.
    std::size_t num_elements() const;
    void zero_grad();

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class OpKind : std::uint8_t {
    constant,
    param,
    matmul,
    add,
    sub,
    mul,
    affine,
    tanh,
    sigmoid,
    exp,
    log,
    softmax,
    log_softmax,
    concat,
    slice,
    sum,
    mean,
    add_bias,
    masked_fill,
    mul_prefix,
    sum_axis1,
    embedding,
    select_time,
    stack_time,
    pick,
    layer_norm,
    reshape,
    add_time_broadcast,
};

const char* op_name(OpKind kind);

class Graph;

// Handle to a node in a Graph.
class Var {
public:
    Var() = default;

    Graph& graph() const { return *graph_; }
    std::uint32_t id() const { return id_; }
    bool valid() const { return graph_ != nullptr; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }

private:
    friend class Graph;
    Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    std::uint32_t id_ = 0;
};

// Eager tape. Every op computes its value immediately and, when recording, stores a
// closure that propagates the output gradient to its inputs.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, const Tensor& out_value, const Tensor& out_grad)>;

    explicit Graph(bool record_gradients = true) : recording_(record_gradients) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    // Leaf bound to a parameter. Repeated calls return the same node; the parameter
    // value is referenced, not copied.
    Var param(Parameter& p);

    const Tensor& value(Var v) const;
    OpKind kind(Var v) const { return nodes_[v.id()].kind; }
    bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
    bool recording() const { return recording_; }
    std::size_t size() const { return nodes_.size(); }

    // Propagates d loss / d node through the tape in reverse order and accumulates
    // the result into Parameter::grad. The loss must hold exactly one element.
    void backward(Var loss);

    // Used by op implementations.
    Var record(OpKind kind, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
    Var record(OpKind kind, Tensor value, const std::vector<Var>& inputs, BackwardFn fn);
    // Accumulation buffer for a node's gradient, zero-initialized on first access.
    Tensor& grad_of(Var v);

private:
    struct Node {
        OpKind kind = OpKind::constant;
        Tensor value;
        const Tensor* external = nullptr;
        Parameter* param = nullptr;
        bool requires_grad = false;
        BackwardFn backward;
        Tensor grad;
    };

    bool recording_;
    std::deque<Node> nodes_;
    std::unordered_map<const Parameter*, std::uint32_t> param_nodes_;
};

inline const Tensor& Var::value() const { return graph_->value(*this); }

}  // namespace nmt
