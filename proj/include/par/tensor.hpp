#pragma once

// Dense tensors and the reverse-mode gradient tape.
//
// A Tensor<T> is a cheap handle onto an immutable value array. Operations in
// ops.hpp produce new tensors and, when a GradientTape<T> is active on the
// current thread and any operand requires a gradient, append an entry to that
// tape. GradientTape::backward replays the entries in reverse order.
//
// Layout is row-major; image-like tensors are NHWC (channels last).

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace par {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // empty when no gradient has been allocated
    bool requires_grad = false;
    bool produced_by_op = false;  // output of a taped operation (not a leaf)
};

}  // namespace detail

template <typename T>
class Tensor {
public:
    using value_type = T;
    using Node = detail::TensorNode<T>;

    Tensor();
    Tensor(Shape shape, std::vector<T> values);

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, T value);
    static Tensor scalar(T value);

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t numel() const { return node_->values.size(); }
    bool empty() const { return node_->values.empty(); }

    std::span<const T> values() const { return node_->values; }
    T operator[](std::size_t i) const { return node_->values[i]; }
    T item() const;

    // In-place access for leaf tensors (parameters, optimizer updates).
    std::span<T> mutable_values() { return node_->values; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on = true);

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad();  // allocates zeros on first use
    void zero_grad();

    // Copy of the values with no tape linkage.
    Tensor detach() const;

    bool is_leaf() const { return !node_->produced_by_op; }
    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    const std::shared_ptr<Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<Node> node_;
};

// Gradients collected by GradientTape::backward for every requires-grad leaf
// that appeared on the tape.
template <typename T>
class GradientMap {
public:
    void add(const Tensor<T>& leaf) { leaves_.push_back(leaf); }
    const std::vector<Tensor<T>>& leaves() const { return leaves_; }
    std::size_t size() const { return leaves_.size(); }
    bool empty() const { return leaves_.empty(); }
    bool contains(const Tensor<T>& t) const;
    // Throws std::out_of_range when t is not a leaf of the tape.
    std::span<const T> grad_of(const Tensor<T>& t) const;

private:
    std::vector<Tensor<T>> leaves_;
};

template <typename T>
class GradientTape {
public:
    using NodePtr = std::shared_ptr<detail::TensorNode<T>>;
    // Receives nothing: the closure captures the nodes it needs and reads the
    // output gradient from its captured output node.
    using BackwardFn = std::function<void()>;

    struct Entry {
        std::string op;
        std::vector<NodePtr> inputs;
        NodePtr output;
        BackwardFn backward;
    };

    GradientTape() = default;
    GradientTape(const GradientTape&) = delete;
    GradientTape& operator=(const GradientTape&) = delete;

    void record(std::string op, std::vector<NodePtr> inputs, NodePtr output, BackwardFn backward);

    // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Throws
    // ValidationError for a non-scalar loss and std::logic_error when called
    // twice without reset(). A loss not connected to the tape yields an empty
    // map and a warning on stderr.
    GradientMap<T> backward(const Tensor<T>& loss);

    void reset();

    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }
    // Entry indices in the order the last backward() ran them.
    const std::vector<std::size_t>& last_visit_order() const { return visit_order_; }

    // The tape receiving operations on this thread, or nullptr.
    static GradientTape* active();

private:
    template <typename>
    friend class TapeScope;

    std::vector<Entry> entries_;
    std::vector<std::size_t> visit_order_;
    bool consumed_ = false;
};

// Makes a tape the active recorder for the current thread for its lifetime.
template <typename T>
class TapeScope {
public:
    explicit TapeScope(GradientTape<T>& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    GradientTape<T>* previous_;
};

// Suspends recording (e.g. for evaluation inside a training scope).
template <typename T>
class NoTapeScope {
public:
    NoTapeScope();
    ~NoTapeScope();
    NoTapeScope(const NoTapeScope&) = delete;
    NoTapeScope& operator=(const NoTapeScope&) = delete;

private:
    GradientTape<T>* previous_;
};

namespace detail {

template <typename T>
GradientTape<T>*& active_tape_slot();

// Allocates (zero-filled) and returns the gradient buffer of a node.
template <typename T>
std::span<T> grad_buffer(TensorNode<T>& node) {
    if (node.grad.empty()) node.grad.assign(node.values.size(), T(0));
    return node.grad;
}

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class GradientMap<float>;
extern template class GradientMap<double>;
extern template class GradientTape<float>;
extern template class GradientTape<double>;
extern template class TapeScope<float>;
extern template class TapeScope<double>;
extern template class NoTapeScope<float>;
extern template class NoTapeScope<double>;

}  // namespace par
