#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every intermediate value of one forward pass in creation
// order. Creation order is a topological order, so backward() simply walks
// the nodes in reverse. Var is a cheap handle (tape pointer + node id);
// it has no ownership.

#include <Eigen/Dense>

#include <functional>
#include <utility>
#include <vector>

#include "agma/util/errors.hpp"

namespace agma::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class Tape;

class Var {
public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    const Matrix& value() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    double scalar() const { return value()(0, 0); }
    bool needs_grad() const;

    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr && id_ >= 0; }

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

class Tape {
public:
    /// Propagates the node's own gradient into its parents.
    using Backward = std::function<void(Tape&, int)>;

    Tape() { nodes_.reserve(4096); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

    /// Differentiable input. If `sink` is given, backward() adds the leaf's
    /// gradient into it after the sweep.
    Var leaf(Matrix value, Matrix* sink = nullptr) {
        Var v = push(std::move(value), true, nullptr);
        if (sink != nullptr) sinks_.emplace_back(v.id(), sink);
        return v;
    }

    Var push(Matrix value, bool needs_grad, Backward backward) {
        nodes_.push_back(Node{std::move(value), Matrix(), needs_grad, std::move(backward)});
        return Var(this, static_cast<int>(nodes_.size()) - 1);
    }

    const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    bool has_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad.size() != 0; }

    /// Gradient slot of a node, zero-initialised on first access.
    Matrix& grad(int id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    const Matrix& grad_of(Var v) {
        return grad(v.id());
    }

    std::size_t size() const { return nodes_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards.
    void backward(Var loss) {
        if (loss.tape() != this) throw ContractError("backward: variable belongs to another tape");
        if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("backward: loss must be 1x1");
        grad(loss.id())(0, 0) += 1.0;
        for (int id = loss.id(); id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (!n.needs_grad || !n.backward || n.grad.size() == 0) continue;
            n.backward(*this, id);
        }
        for (auto& [id, sink] : sinks_) {
            if (has_grad(id)) *sink += nodes_[static_cast<std::size_t>(id)].grad;
        }
    }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool needs_grad;
        Backward backward;
    };

    std::vector<Node> nodes_;
    std::vector<std::pair<int, Matrix*>> sinks_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline bool Var::needs_grad() const { return tape_->needs_grad(id_); }

}  // namespace agma::ad
