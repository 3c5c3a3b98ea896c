#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nmfg {

class Tensor;

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// One node of the computation graph. Gradients are themselves Tensors built
// from recorded ops, so differentiating a gradient a second time (needed for
// the gradient penalty) works with no special casing.
struct TensorNode {
    Shape shape;
    std::shared_ptr<std::vector<double>> values;
    bool requires_grad = false;
    std::vector<Tensor> parents;
    // Maps the gradient w.r.t. this node to gradients w.r.t. each parent.
    // Implementations must build their result out of recorded ops and must
    // not capture the node's own output (recompute instead), so that
    // higher-order gradients stay exact and the graph stays acyclic.
    std::function<std::vector<Tensor>(const Tensor&)> backward;
    const char* op = "leaf";
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from_data(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);
    // Leaf that participates in autodiff.
    static Tensor param(Shape shape, std::vector<double> values);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int rank() const;
    int64_t dim(int i) const;
    int64_t numel() const;
    bool requires_grad() const;

    double* data();
    const double* data() const;
    double item() const;

    // Same buffer, fresh graph-free node.
    Tensor detach() const;
    // Detached leaf marked as differentiable (for gradient-penalty inputs).
    Tensor detached_param() const;
    // Deep copy of the buffer, no graph.
    Tensor clone() const;

    TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }

    bool all_finite() const;

private:
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
    std::shared_ptr<TensorNode> node_;

    friend Tensor make_op_result(Shape shape, std::vector<double> values,
                                 std::vector<Tensor> parents,
                                 std::function<std::vector<Tensor>(const Tensor&)> backward,
                                 const char* op);
};

Tensor make_op_result(Shape shape, std::vector<double> values,
                      std::vector<Tensor> parents,
                      std::function<std::vector<Tensor>(const Tensor&)> backward,
                      const char* op);

namespace grad_mode {
bool enabled();
void set_enabled(bool v);
} // namespace grad_mode

struct NoGradGuard {
    NoGradGuard() : prev_(grad_mode::enabled()) { grad_mode::set_enabled(false); }
    ~NoGradGuard() { grad_mode::set_enabled(prev_); }

private:
    bool prev_;
};

struct GradGuard {
    explicit GradGuard(bool enable) : prev_(grad_mode::enabled()) {
        grad_mode::set_enabled(enable);
    }
    ~GradGuard() { grad_mode::set_enabled(prev_); }

private:
    bool prev_;
};

// Reverse-mode differentiation of `output` w.r.t. `inputs`. Returns one
// gradient per input; an input the output does not depend on gets an
// undefined Tensor. With create_graph the returned gradients carry their own
// graph and can be differentiated again.
std::vector<Tensor> gradients(const Tensor& output, std::span<const Tensor> inputs,
                              bool create_graph = false, Tensor grad_output = {});

} // namespace nmfg
