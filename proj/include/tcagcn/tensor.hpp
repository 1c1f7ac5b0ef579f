#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tcagcn/errors.hpp"

namespace tcagcn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until an adjoint is written
    bool requires_grad = false;
    const Tape* producer = nullptr;  // null for leaves

    std::vector<double>& ensure_grad();
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

/// Dense row-major array of doubles.
///
/// A Tensor is a handle: copies share the same storage, which is how
/// parameters are referenced from the tape and from optimizers. Forward ops
/// always allocate fresh outputs, so nothing aliases across the tape.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng,
                          bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    // Parameter updates, finite differences and buffer updates write here.
    std::span<double> mutable_data() const;
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    void set_requires_grad(bool flag) const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad() const;

    /// Fresh leaf holding a copy of the values.
    Tensor detach() const;

    const detail::NodePtr& node() const { return node_; }

private:
    explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
    friend class Tape;

    detail::NodePtr node_;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Ordered record of executed operations for reverse-mode differentiation.
///
/// Ops record onto the tape installed by the innermost TapeScope on the
/// current thread; with no scope active nothing is recorded. Entries are
/// appended in execution order, so every entry's inputs precede it.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::vector<detail::NodePtr> inputs, const Tensor& output, BackwardFn fn);

    /// Seeds d(loss)=1 and walks the entries in reverse, each at most once.
    void backward(const Tensor& loss);

    /// Drops all entries so the tape can be reused.
    void reset();

    std::size_t size() const noexcept { return entries_.size(); }
    bool consumed() const noexcept { return consumed_; }

private:
    struct Entry {
        std::vector<detail::NodePtr> inputs;
        detail::NodePtr output;
        BackwardFn fn;
    };
    std::vector<Entry> entries_;
    bool consumed_ = false;
};

class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

Tape* active_tape() noexcept;

/// Runs backward on the active tape.
void backward(const Tensor& loss);

namespace detail {

/// Active tape if any input requires grad, else null.
Tape* recording_tape(std::initializer_list<const Tensor*> inputs);

}  // namespace detail

namespace testing_hooks {

/// Negative control for gradient checking: perturbs the weight adjoint of
/// `linear` when enabled.
void set_corrupt_backward(bool enabled);
bool corrupt_backward();

}  // namespace testing_hooks

}  // namespace tcagcn
