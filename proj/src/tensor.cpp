#include "par/tensor.hpp"

#include <algorithm>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "par/errors.hpp"

namespace par {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename T>
Tensor<T>::Tensor() : node_(std::make_shared<Node>()) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node>()) {
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                             " values");
    }
    node_->shape = std::move(shape);
    node_->values = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
    return Tensor(Shape{1}, std::vector<T>{value});
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node_->values[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
    return detail::grad_buffer(*node_);
}

template <typename T>
void Tensor<T>::zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(node_->shape, node_->values);
}

template <typename T>
bool GradientMap<T>::contains(const Tensor<T>& t) const {
    return std::any_of(leaves_.begin(), leaves_.end(), [&](const Tensor<T>& l) { return l.same_node(t); });
}

template <typename T>
std::span<const T> GradientMap<T>::grad_of(const Tensor<T>& t) const {
    for (const auto& l : leaves_) {
        if (l.same_node(t)) return l.grad();
    }
    throw std::out_of_range("tensor is not a leaf of this gradient map");
}

template <typename T>
void GradientTape<T>::record(std::string op, std::vector<NodePtr> inputs, NodePtr output, BackwardFn backward) {
    if (consumed_) throw std::logic_error("recording onto a tape that has already run backward; call reset()");
    output->requires_grad = true;
    output->produced_by_op = true;
    entries_.push_back(Entry{std::move(op), std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
GradientMap<T> GradientTape<T>::backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) {
        throw ValidationError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    if (consumed_) throw std::logic_error("backward() called twice without reset()");
    consumed_ = true;
    visit_order_.clear();

    GradientMap<T> result;
    if (!loss.requires_grad()) {
        std::clog << "warning: loss is not connected to the gradient tape; no gradients computed\n";
        return result;
    }

    detail::grad_buffer(*loss.node())[0] += T(1);

    for (std::size_t i = entries_.size(); i-- > 0;) {
        auto& entry = entries_[i];
        if (entry.output->grad.empty()) continue;  // not upstream of the loss
        entry.backward();
        visit_order_.push_back(i);
    }

    std::unordered_set<const detail::TensorNode<T>*> seen;
    auto collect = [&](const NodePtr& node) {
        if (!node->requires_grad || node->produced_by_op) return;
        if (!seen.insert(node.get()).second) return;
        detail::grad_buffer(*node);
        result.add(Tensor<T>(node));
    };
    for (const auto& entry : entries_) {
        for (const auto& in : entry.inputs) collect(in);
    }
    if (loss.is_leaf()) collect(loss.node());
    return result;
}

template <typename T>
void GradientTape<T>::reset() {
    entries_.clear();
    visit_order_.clear();
    consumed_ = false;
}

namespace detail {

template <typename T>
GradientTape<T>*& active_tape_slot() {
    thread_local GradientTape<T>* slot = nullptr;
    return slot;
}

template GradientTape<float>*& active_tape_slot<float>();
template GradientTape<double>*& active_tape_slot<double>();

}  // namespace detail

template <typename T>
GradientTape<T>* GradientTape<T>::active() {
    return detail::active_tape_slot<T>();
}

template <typename T>
TapeScope<T>::TapeScope(GradientTape<T>& tape) : previous_(detail::active_tape_slot<T>()) {
    detail::active_tape_slot<T>() = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
    detail::active_tape_slot<T>() = previous_;
}

template <typename T>
NoTapeScope<T>::NoTapeScope() : previous_(detail::active_tape_slot<T>()) {
    detail::active_tape_slot<T>() = nullptr;
}

template <typename T>
NoTapeScope<T>::~NoTapeScope() {
    detail::active_tape_slot<T>() = previous_;
}

template class Tensor<float>;
template class Tensor<double>;
template class GradientMap<float>;
template class GradientMap<double>;
template class GradientTape<float>;
template class GradientTape<double>;
template class TapeScope<float>;
template class TapeScope<double>;
template class NoTapeScope<float>;
template class NoTapeScope<double>;

}  // namespace par
