#include "tcagcn/tensor.hpp"

#include <atomic>
#include <sstream>

namespace tcagcn {

std::size_t shape_numel(const Shape& shape)
{
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

std::vector<double>& detail::Node::ensure_grad()
{
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
{
    for (auto e : shape) {
        if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
    }
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad)
{
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad)
{
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad)
{
    return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, std::mt19937_64& rng,
                       bool requires_grad)
{
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = dist(rng);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

static const detail::Node& checked(const detail::NodePtr& node)
{
    if (!node) throw AutodiffError("use of an undefined tensor");
    return *node;
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const
{
    const auto& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).data.size(); }

std::span<const double> Tensor::data() const { return checked(node_).data; }

std::span<double> Tensor::mutable_data() const
{
    checked(node_);
    return node_->data;
}

double Tensor::item() const
{
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const
{
    const auto& s = shape();
    if (index.size() != s.size()) throw ShapeError("index rank mismatch for " + shape_str(s));
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= s[axis]) throw ShapeError("index out of range for " + shape_str(s));
        flat = flat * s[axis] + i;
        ++axis;
    }
    return node_->data[flat];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

void Tensor::set_requires_grad(bool flag) const
{
    checked(node_);
    node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }

std::span<const double> Tensor::grad() const
{
    if (!has_grad()) throw AutodiffError("tensor has no gradient");
    return node_->grad;
}

void Tensor::zero_grad() const
{
    checked(node_);
    node_->grad.clear();
}

Tensor Tensor::detach() const
{
    const auto& n = checked(node_);
    return Tensor(n.shape, n.data, false);
}

// ---------------------------------------------------------------------------

namespace {
thread_local Tape* current_tape = nullptr;
std::atomic<bool> corrupt_flag{false};
}  // namespace

void Tape::record(std::vector<detail::NodePtr> inputs, const Tensor& output, BackwardFn fn)
{
    if (consumed_) throw AutodiffError("recording onto a consumed tape; call reset() first");
    output.node_->requires_grad = true;
    output.node_->producer = this;
    entries_.push_back(Entry{std::move(inputs), output.node_, std::move(fn)});
}

void Tape::backward(const Tensor& loss)
{
    if (consumed_) throw AutodiffError("backward called twice without reset()");
    if (!loss.defined()) throw AutodiffError("backward on an undefined tensor");
    if (loss.numel() != 1) {
        throw AutodiffError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    const auto& node = loss.node();
    if (!node->requires_grad || node->producer != this) {
        throw AutodiffError("loss is detached from this tape");
    }
    node->ensure_grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->output->grad.empty()) continue;  // not reachable from the loss
        it->fn();
    }
    consumed_ = true;
}

void Tape::reset()
{
    entries_.clear();
    consumed_ = false;
}

TapeScope::TapeScope(Tape& tape) : previous_(current_tape) { current_tape = &tape; }

TapeScope::~TapeScope() { current_tape = previous_; }

Tape* active_tape() noexcept { return current_tape; }

void backward(const Tensor& loss)
{
    if (!current_tape) throw AutodiffError("backward with no active tape");
    current_tape->backward(loss);
}

Tape* detail::recording_tape(std::initializer_list<const Tensor*> inputs)
{
    if (!current_tape) return nullptr;
    for (const auto* t : inputs) {
        if (t && t->defined() && t->requires_grad()) return current_tape;
    }
    return nullptr;
}

void testing_hooks::set_corrupt_backward(bool enabled) { corrupt_flag = enabled; }

bool testing_hooks::corrupt_backward() { return corrupt_flag; }

}  // namespace tcagcn
