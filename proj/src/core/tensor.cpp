#include "core/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "core/error.hpp"
#include "core/ops.hpp"

namespace nmfg {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

static std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != int64_t(values.size()))
        throw validation_error("tensor data size does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->values = std::make_shared<std::vector<double>>(std::move(values));
    return n;
}

Tensor Tensor::zeros(Shape shape) {
    int64_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(size_t(n), 0.0));
}

Tensor Tensor::full(Shape shape, double value) {
    int64_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(size_t(n), value));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values) {
    return Tensor(make_node(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) {
    return from_data({1}, {value});
}

Tensor Tensor::param(Shape shape, std::vector<double> values) {
    Tensor t(make_node(std::move(shape), std::move(values)));
    t.node_->requires_grad = true;
    t.node_->op = "param";
    return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::rank() const { return int(node_->shape.size()); }

int64_t Tensor::dim(int i) const {
    if (i < 0 || i >= rank()) throw validation_error("tensor dim index out of range");
    return node_->shape[size_t(i)];
}

int64_t Tensor::numel() const { return shape_numel(node_->shape); }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

double* Tensor::data() { return node_->values->data(); }
const double* Tensor::data() const { return node_->values->data(); }

double Tensor::item() const {
    if (numel() != 1) throw validation_error("item() requires a single-element tensor");
    return (*node_->values)[0];
}

Tensor Tensor::detach() const {
    auto n = std::make_shared<TensorNode>();
    n->shape = node_->shape;
    n->values = node_->values;
    n->op = "detach";
    return Tensor(std::move(n));
}

Tensor Tensor::detached_param() const {
    auto n = std::make_shared<TensorNode>();
    n->shape = node_->shape;
    n->values = std::make_shared<std::vector<double>>(*node_->values);
    n->requires_grad = true;
    n->op = "param";
    return Tensor(std::move(n));
}

Tensor Tensor::clone() const {
    auto n = std::make_shared<TensorNode>();
    n->shape = node_->shape;
    n->values = std::make_shared<std::vector<double>>(*node_->values);
    n->op = "clone";
    return Tensor(std::move(n));
}

bool Tensor::all_finite() const {
    for (double v : *node_->values)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor make_op_result(Shape shape, std::vector<double> values,
                      std::vector<Tensor> parents,
                      std::function<std::vector<Tensor>(const Tensor&)> backward,
                      const char* op) {
    Tensor out(make_node(std::move(shape), std::move(values)));
    bool record = grad_mode::enabled();
    if (record) {
        bool any = false;
        for (const auto& p : parents)
            if (p.requires_grad()) any = true;
        record = any;
    }
    if (record) {
        out.node_->requires_grad = true;
        out.node_->parents = std::move(parents);
        out.node_->backward = std::move(backward);
        out.node_->op = op;
    }
    return out;
}

namespace grad_mode {
static thread_local bool g_enabled = true;
bool enabled() { return g_enabled; }
void set_enabled(bool v) { g_enabled = v; }
} // namespace grad_mode

std::vector<Tensor> gradients(const Tensor& output, std::span<const Tensor> inputs,
                              bool create_graph, Tensor grad_output) {
    if (!output.defined()) throw validation_error("gradients: undefined output");
    if (!output.requires_grad())
        throw validation_error("gradients: output does not require grad");
    if (!grad_output.defined()) {
        if (output.numel() != 1)
            throw validation_error("gradients: non-scalar output needs an explicit grad_output");
        grad_output = Tensor::full(output.shape(), 1.0);
    }
    if (grad_output.shape() != output.shape())
        throw validation_error("gradients: grad_output shape mismatch");

    // Topological order over the subgraph that requires grad.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(output.node(), 0);
    seen.insert(output.node());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode* p = node->parents[idx].node();
            ++idx;
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    std::unordered_map<TensorNode*, Tensor> grads;
    grads[output.node()] = grad_output;

    GradGuard guard(create_graph);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* node = *it;
        auto found = grads.find(node);
        if (found == grads.end() || !node->backward) continue;
        std::vector<Tensor> parent_grads = node->backward(found->second);
        if (parent_grads.size() != node->parents.size())
            throw std::logic_error(std::string("backward of ") + node->op +
                                   " returned wrong gradient count");
        for (size_t i = 0; i < parent_grads.size(); ++i) {
            TensorNode* p = node->parents[i].node();
            if (!p->requires_grad || !parent_grads[i].defined()) continue;
            if (parent_grads[i].shape() != p->shape)
                throw std::logic_error(std::string("backward of ") + node->op +
                                       " produced gradient of wrong shape");
            auto g = grads.find(p);
            if (g == grads.end())
                grads.emplace(p, parent_grads[i]);
            else
                g->second = add(g->second, parent_grads[i]);
        }
    }

    std::vector<Tensor> result;
    result.reserve(inputs.size());
    for (const auto& in : inputs) {
        auto g = grads.find(in.node());
        result.push_back(g == grads.end() ? Tensor() : g->second);
    }
    return result;
}

} // namespace nmfg
