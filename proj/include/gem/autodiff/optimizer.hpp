#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "gem/autodiff/tape.hpp"
#include "gem/autodiff/tensor.hpp"
#include "gem/core/error.hpp"

namespace gem::autodiff {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Named trainable tensors plus their Adam state. Owned by one trainer at a
// time; shapes are fixed after creation.
class ParameterSet {
public:
    explicit ParameterSet(AdamConfig adam = {}) : adam_(adam) {}

    Tensor& create(const std::string& name, Tensor init) {
        if (entries_.count(name)) throw ContractError("parameter '" + name + "' already exists");
        Entry e;
        e.value = std::move(init);
        e.m = Tensor::zeros(e.value.shape);
        e.v = Tensor::zeros(e.value.shape);
        return entries_.emplace(name, std::move(e)).first->second.value;
    }

    bool has(const std::string& name) const { return entries_.count(name) > 0; }

    Tensor& get(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
        return it->second.value;
    }
    const Tensor& get(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
        return it->second.value;
    }

    std::size_t count() const { return entries_.size(); }

    template <typename Fn>
    void for_each(Fn&& fn) const {
        for (const auto& [name, e] : entries_) fn(name, e.value);
    }

    // Record every parameter as a leaf on the tape; iteration order is the
    // (sorted) name order, keeping forward passes deterministic.
    std::map<std::string, Var> bind(Tape& tape) const {
        std::map<std::string, Var> vars;
        for (const auto& [name, e] : entries_) vars[name] = tape.input(e.value, true);
        return vars;
    }

    // One Adam update from the gradients accumulated on the tape. Gradients
    // live on the tape, so the post-step tape reset zeroes them.
    void step(Tape& tape, const std::map<std::string, Var>& bound, double lr) {
        ++step_count_;
        double bc1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(step_count_));
        double bc2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(step_count_));
        for (auto& [name, e] : entries_) {
            auto it = bound.find(name);
            if (it == bound.end()) throw ContractError("step: parameter '" + name + "' not bound");
            const Tensor& g = tape.grad(it->second);
            if (g.size() == 0) continue;  // parameter did not reach the loss
            if (!g.all_finite())
                throw TrainingError("NaN gradient for parameter '" + name + "'");
            for (std::size_t i = 0; i < e.value.size(); ++i) {
                double gi = g.values[i];
                e.m.values[i] = adam_.beta1 * e.m.values[i] + (1.0 - adam_.beta1) * gi;
                e.v.values[i] = adam_.beta2 * e.v.values[i] + (1.0 - adam_.beta2) * gi * gi;
                double mhat = e.m.values[i] / bc1;
                double vhat = e.v.values[i] / bc2;
                e.value.values[i] -= lr * mhat / (std::sqrt(vhat) + adam_.epsilon);
            }
        }
    }

    // Copy with values preserved and optimizer state reset.
    ParameterSet snapshot_values() const {
        ParameterSet out(adam_);
        for (const auto& [name, e] : entries_) out.create(name, e.value);
        return out;
    }

    bool same_values(const ParameterSet& other) const {
        if (entries_.size() != other.entries_.size()) return false;
        for (const auto& [name, e] : entries_) {
            auto it = other.entries_.find(name);
            if (it == other.entries_.end() || !(it->second.value == e.value)) return false;
        }
        return true;
    }

private:
    struct Entry {
        Tensor value;
        Tensor m;
        Tensor v;
    };
    std::map<std::string, Entry> entries_;
    AdamConfig adam_;
    std::int64_t step_count_ = 0;
};

}  // namespace gem::autodiff
