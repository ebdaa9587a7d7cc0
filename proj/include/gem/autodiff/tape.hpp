#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gem/autodiff/tensor.hpp"
#include "gem/core/error.hpp"

namespace gem::autodiff {

// Handle to a value recorded on a Tape.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

// Reverse-mode tape. Recording order is a topological order of the DAG, so
// backward() walks ids from the loss down to zero and visits each node once.
// A Tape is single-threaded; independent tapes may run in parallel.
class Tape {
public:
    Var input(Tensor value, bool requires_grad = false) {
        return push(std::move(value), {}, nullptr, requires_grad);
    }

    const Tensor& value(Var v) const { return node(v).value; }
    const Tensor& grad(Var v) const { return node(v).grad; }
    std::size_t size() const { return nodes_.size(); }

    // ---- forward ops -------------------------------------------------

    Var matmul(Var a, Var b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
            throw ContractError("matmul: incompatible shapes " + A.shape_string() + " x " +
                                B.shape_string());
        std::size_t m = A.rows(), k = A.cols(), n = B.cols();
        Tensor out = Tensor::zeros({m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                double aip = A.at(i, p);
                if (aip == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * B.at(p, j);
            }
        return push(std::move(out), {a, b}, [a, b](Tape& t, const Node& self) {
            const Tensor& A = t.value(a);
            const Tensor& B = t.value(b);
            Tensor& dA = t.mutable_grad(a);
            Tensor& dB = t.mutable_grad(b);
            std::size_t m = A.rows(), k = A.cols(), n = B.cols();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    double g = self.grad.at(i, j);
                    if (g == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p) {
                        dA.at(i, p) += g * B.at(p, j);
                        dB.at(p, j) += g * A.at(i, p);
                    }
                }
        });
    }

    Var transpose(Var a) {
        const Tensor& A = value(a);
        if (A.rank() != 2) throw ContractError("transpose: requires rank 2");
        Tensor out = Tensor::zeros({A.cols(), A.rows()});
        for (std::size_t i = 0; i < A.rows(); ++i)
            for (std::size_t j = 0; j < A.cols(); ++j) out.at(j, i) = A.at(i, j);
        return push(std::move(out), {a}, [a](Tape& t, const Node& self) {
            Tensor& dA = t.mutable_grad(a);
            for (std::size_t i = 0; i < dA.rows(); ++i)
                for (std::size_t j = 0; j < dA.cols(); ++j) dA.at(i, j) += self.grad.at(j, i);
        });
    }

    // Elementwise sum; alternatively rhs may be a 1-D bias broadcast over the
    // rows of a 2-D lhs.
    Var add(Var a, Var b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (A.same_shape(B)) {
            Tensor out = A;
            for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += B.values[i];
            return push(std::move(out), {a, b}, [a, b](Tape& t, const Node& self) {
                Tensor& dA = t.mutable_grad(a);
                Tensor& dB = t.mutable_grad(b);
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    dA.values[i] += self.grad.values[i];
                    dB.values[i] += self.grad.values[i];
                }
            });
        }
        if (A.rank() == 2 && B.rank() == 1 && A.cols() == B.shape[0]) {
            Tensor out = A;
            for (std::size_t i = 0; i < A.rows(); ++i)
                for (std::size_t j = 0; j < A.cols(); ++j) out.at(i, j) += B.values[j];
            return push(std::move(out), {a, b}, [a, b](Tape& t, const Node& self) {
                Tensor& dA = t.mutable_grad(a);
                Tensor& dB = t.mutable_grad(b);
                for (std::size_t i = 0; i < self.grad.rows(); ++i)
                    for (std::size_t j = 0; j < self.grad.cols(); ++j) {
                        dA.at(i, j) += self.grad.at(i, j);
                        dB.values[j] += self.grad.at(i, j);
                    }
            });
        }
        throw ContractError("add: incompatible shapes " + A.shape_string() + " + " +
                            B.shape_string());
    }

    Var mul(Var a, Var b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (!A.same_shape(B))
            throw ContractError("mul: incompatible shapes " + A.shape_string() + " * " +
                                B.shape_string());
        Tensor out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= B.values[i];
        return push(std::move(out), {a, b}, [a, b](Tape& t, const Node& self) {
            const Tensor& A = t.value(a);
            const Tensor& B = t.value(b);
            Tensor& dA = t.mutable_grad(a);
            Tensor& dB = t.mutable_grad(b);
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                dA.values[i] += self.grad.values[i] * B.values[i];
                dB.values[i] += self.grad.values[i] * A.values[i];
            }
        });
    }

    Var scale(Var a, double c) {
        Tensor out = value(a);
        for (double& v : out.values) v *= c;
        return push(std::move(out), {a}, [a, c](Tape& t, const Node& self) {
            Tensor& dA = t.mutable_grad(a);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                dA.values[i] += c * self.grad.values[i];
        });
    }

    Var concat_last_dim(Var a, Var b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (A.rank() != 2 || B.rank() != 2 || A.rows() != B.rows())
            throw ContractError("concat_last_dim: incompatible shapes " + A.shape_string() +
                                " | " + B.shape_string());
        std::size_t m = A.rows(), p = A.cols(), q = B.cols();
        Tensor out = Tensor::zeros({m, p + q});
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < p; ++j) out.at(i, j) = A.at(i, j);
            for (std::size_t j = 0; j < q; ++j) out.at(i, p + j) = B.at(i, j);
        }
        return push(std::move(out), {a, b}, [a, b, p, q](Tape& t, const Node& self) {
            Tensor& dA = t.mutable_grad(a);
            Tensor& dB = t.mutable_grad(b);
            for (std::size_t i = 0; i < self.grad.rows(); ++i) {
                for (std::size_t j = 0; j < p; ++j) dA.at(i, j) += self.grad.at(i, j);
                for (std::size_t j = 0; j < q; ++j) dB.at(i, j) += self.grad.at(i, p + j);
            }
        });
    }

    Var leaky_relu(Var a, double slope) {
        const Tensor& A = value(a);
        Tensor out = A;
        for (double& v : out.values) v = v > 0.0 ? v : slope * v;
        return push(std::move(out), {a}, [a, slope](Tape& t, const Node& self) {
            const Tensor& A = t.value(a);
            Tensor& dA = t.mutable_grad(a);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                dA.values[i] += self.grad.values[i] * (A.values[i] > 0.0 ? 1.0 : slope);
        });
    }

    Var sigmoid(Var a) {
        const Tensor& A = value(a);
        Tensor out = A;
        for (double& v : out.values) v = 1.0 / (1.0 + std::exp(-v));
        return push(std::move(out), {a}, [a](Tape& t, const Node& self) {
            Tensor& dA = t.mutable_grad(a);
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                double s = self.value.values[i];
                dA.values[i] += self.grad.values[i] * s * (1.0 - s);
            }
        });
    }

    Var elu(Var a) {
        const Tensor& A = value(a);
        Tensor out = A;
        for (double& v : out.values) v = v > 0.0 ? v : std::expm1(v);
        return push(std::move(out), {a}, [a](Tape& t, const Node& self) {
            const Tensor& A = t.value(a);
            Tensor& dA = t.mutable_grad(a);
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                double x = A.values[i];
                dA.values[i] += self.grad.values[i] * (x > 0.0 ? 1.0 : std::exp(x));
            }
        });
    }

    Var identity(Var a) { return a; }

    // Softmax of a 1-D logit vector within each contiguous segment. Segment
    // ids must be non-decreasing (edges sorted by destination node).
    Var segment_softmax(Var logits, std::vector<std::size_t> segments) {
        const Tensor& X = value(logits);
        if (X.rank() != 1) throw ContractError("segment_softmax: logits must be rank 1");
        if (segments.size() != X.size())
            throw ContractError("segment_softmax: segment ids do not match logit count");
        for (std::size_t i = 1; i < segments.size(); ++i)
            if (segments[i] < segments[i - 1])
                throw ContractError("segment_softmax: segment ids must be sorted");

        Tensor out = X;
        std::size_t i = 0;
        while (i < segments.size()) {
            std::size_t j = i;
            while (j < segments.size() && segments[j] == segments[i]) ++j;
            double mx = X.values[i];
            for (std::size_t k = i; k < j; ++k) mx = std::max(mx, X.values[k]);
            double sum = 0.0;
            for (std::size_t k = i; k < j; ++k) {
                out.values[k] = std::exp(X.values[k] - mx);
                sum += out.values[k];
            }
            for (std::size_t k = i; k < j; ++k) out.values[k] /= sum;
            i = j;
        }
        return push(std::move(out), {logits},
                    [logits, segs = std::move(segments)](Tape& t, const Node& self) {
                        Tensor& dX = t.mutable_grad(logits);
                        std::size_t i = 0;
                        while (i < segs.size()) {
                            std::size_t j = i;
                            while (j < segs.size() && segs[j] == segs[i]) ++j;
                            double dot = 0.0;
                            for (std::size_t k = i; k < j; ++k)
                                dot += self.grad.values[k] * self.value.values[k];
                            for (std::size_t k = i; k < j; ++k)
                                dX.values[k] +=
                                    self.value.values[k] * (self.grad.values[k] - dot);
                            i = j;
                        }
                    });
    }

    Var gather_rows(Var a, std::vector<std::size_t> indices) {
        const Tensor& A = value(a);
        if (A.rank() != 2) throw ContractError("gather_rows: requires rank 2");
        for (std::size_t idx : indices)
            if (idx >= A.rows()) throw ContractError("gather_rows: row index out of range");
        Tensor out = Tensor::zeros({indices.size(), A.cols()});
        for (std::size_t e = 0; e < indices.size(); ++e)
            for (std::size_t j = 0; j < A.cols(); ++j) out.at(e, j) = A.at(indices[e], j);
        return push(std::move(out), {a},
                    [a, idx = std::move(indices)](Tape& t, const Node& self) {
                        Tensor& dA = t.mutable_grad(a);
                        for (std::size_t e = 0; e < idx.size(); ++e)
                            for (std::size_t j = 0; j < self.grad.cols(); ++j)
                                dA.at(idx[e], j) += self.grad.at(e, j);
                    });
    }

    // Sum rows of a 2-D tensor into per-segment accumulators.
    Var segment_sum(Var a, std::vector<std::size_t> segments, std::size_t segment_count) {
        const Tensor& A = value(a);
        if (A.rank() != 2) throw ContractError("segment_sum: requires rank 2");
        if (segments.size() != A.rows())
            throw ContractError("segment_sum: segment ids do not match row count");
        for (std::size_t s : segments)
            if (s >= segment_count) throw ContractError("segment_sum: segment id out of range");
        Tensor out = Tensor::zeros({segment_count, A.cols()});
        for (std::size_t e = 0; e < A.rows(); ++e)
            for (std::size_t j = 0; j < A.cols(); ++j) out.at(segments[e], j) += A.at(e, j);
        return push(std::move(out), {a},
                    [a, segs = std::move(segments)](Tape& t, const Node& self) {
                        Tensor& dA = t.mutable_grad(a);
                        for (std::size_t e = 0; e < segs.size(); ++e)
                            for (std::size_t j = 0; j < self.grad.cols(); ++j)
                                dA.at(e, j) += self.grad.at(segs[e], j);
                    });
    }

    // Scale row e of a 2-D tensor by the e-th entry of a 1-D factor vector.
    Var scale_rows(Var a, Var factors) {
        const Tensor& A = value(a);
        const Tensor& S = value(factors);
        if (A.rank() != 2 || S.rank() != 1 || S.shape[0] != A.rows())
            throw ContractError("scale_rows: incompatible shapes " + A.shape_string() + " , " +
                                S.shape_string());
        Tensor out = A;
        for (std::size_t e = 0; e < A.rows(); ++e)
            for (std::size_t j = 0; j < A.cols(); ++j) out.at(e, j) *= S.values[e];
        return push(std::move(out), {a, factors}, [a, factors](Tape& t, const Node& self) {
            const Tensor& A = t.value(a);
            const Tensor& S = t.value(factors);
            Tensor& dA = t.mutable_grad(a);
            Tensor& dS = t.mutable_grad(factors);
            for (std::size_t e = 0; e < A.rows(); ++e)
                for (std::size_t j = 0; j < A.cols(); ++j) {
                    dA.at(e, j) += self.grad.at(e, j) * S.values[e];
                    dS.values[e] += self.grad.at(e, j) * A.at(e, j);
                }
        });
    }

    // Average of K same-shaped head outputs.
    Var mean_over_heads(std::span<const Var> heads) {
        if (heads.empty()) throw ContractError("mean_over_heads: no heads");
        const Tensor& first = value(heads[0]);
        for (Var h : heads)
            if (!value(h).same_shape(first))
                throw ContractError("mean_over_heads: head shapes differ");
        Tensor out = first;
        for (std::size_t k = 1; k < heads.size(); ++k) {
            const Tensor& H = value(heads[k]);
            for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += H.values[i];
        }
        double inv = 1.0 / static_cast<double>(heads.size());
        for (double& v : out.values) v *= inv;
        std::vector<Var> parents(heads.begin(), heads.end());
        return push(std::move(out), parents, [hs = parents, inv](Tape& t, const Node& self) {
            for (Var h : hs) {
                Tensor& dH = t.mutable_grad(h);
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    dH.values[i] += inv * self.grad.values[i];
            }
        });
    }

    Var reshape(Var a, std::vector<std::size_t> shape) {
        const Tensor& A = value(a);
        if (Tensor::element_count(shape) != A.size())
            throw ContractError("reshape: element count mismatch");
        Tensor out(std::move(shape), A.values);
        return push(std::move(out), {a}, [a](Tape& t, const Node& self) {
            Tensor& dA = t.mutable_grad(a);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                dA.values[i] += self.grad.values[i];
        });
    }

    Var sum(Var a) {
        const Tensor& A = value(a);
        double s = 0.0;
        for (double v : A.values) s += v;
        return push(Tensor::scalar(s), {a}, [a](Tape& t, const Node& self) {
            Tensor& dA = t.mutable_grad(a);
            double g = self.grad.values[0];
            for (double& v : dA.values) v += g;
        });
    }

    // Mean binary cross-entropy between logits and multi-hot targets over
    // the rows selected by mask. Uses the stable max(x,0)-x*t+log1p(exp(-|x|))
    // form. Targets and mask are constants.
    Var bce_with_logits(Var logits, const Tensor& targets, const std::vector<double>& mask) {
        const Tensor& X = value(logits);
        if (X.rank() != 2 || !X.same_shape(targets))
            throw ContractError("bce_with_logits: logits " + X.shape_string() +
                                " vs targets " + targets.shape_string());
        if (mask.size() != X.rows())
            throw ContractError("bce_with_logits: mask length does not match row count");
        double active = 0.0;
        for (double m : mask) active += m;
        if (active <= 0.0) throw ContractError("bce_with_logits: all rows masked out");

        double denom = active * static_cast<double>(X.cols());
        double loss = 0.0;
        for (std::size_t i = 0; i < X.rows(); ++i) {
            if (mask[i] == 0.0) continue;
            for (std::size_t j = 0; j < X.cols(); ++j) {
                double x = X.at(i, j), t = targets.at(i, j);
                loss += mask[i] * (std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x))));
            }
        }
        loss /= denom;
        return push(Tensor::scalar(loss), {logits},
                    [logits, targets, mask, denom](Tape& t, const Node& self) {
                        const Tensor& X = t.value(logits);
                        Tensor& dX = t.mutable_grad(logits);
                        double g = self.grad.values[0] / denom;
                        for (std::size_t i = 0; i < X.rows(); ++i) {
                            if (mask[i] == 0.0) continue;
                            for (std::size_t j = 0; j < X.cols(); ++j) {
                                double s = 1.0 / (1.0 + std::exp(-X.at(i, j)));
                                dX.at(i, j) += g * mask[i] * (s - targets.at(i, j));
                            }
                        }
                    });
    }

    // ---- backward ----------------------------------------------------

    enum class BackwardMode { ClearTape, Retain };

    void backward(Var loss, BackwardMode mode = BackwardMode::ClearTape) {
        if (loss.id >= nodes_.size()) throw ContractError("backward: loss not on this tape");
        if (value(loss).size() != 1) throw ContractError("backward: loss must be a scalar");
        for (auto& n : nodes_)
            if (n.grad.size() == 0) n.grad = Tensor::zeros(n.value.shape);
        nodes_[loss.id].grad.values[0] = 1.0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.backward) {
                n.backward(*this, n);
                if (mode == BackwardMode::ClearTape) n.backward = nullptr;
            }
        }
    }

    void zero_grad() {
        for (auto& n : nodes_)
            if (n.grad.size() != 0) std::fill(n.grad.values.begin(), n.grad.values.end(), 0.0);
    }

    void reset() { nodes_.clear(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<Var> parents;
        std::function<void(Tape&, const Node&)> backward;
        bool requires_grad = false;
    };

    const Node& node(Var v) const {
        if (v.id >= nodes_.size()) throw ContractError("tape: dangling var handle");
        return nodes_[v.id];
    }

    Tensor& mutable_grad(Var v) {
        Node& n = nodes_[v.id];
        if (n.grad.size() == 0) n.grad = Tensor::zeros(n.value.shape);
        return n.grad;
    }

    Var push(Tensor value, std::vector<Var> parents,
             std::function<void(Tape&, const Node&)> backward, bool requires_grad = false) {
        Node n;
        n.value = std::move(value);
        n.parents = std::move(parents);
        n.backward = std::move(backward);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    std::vector<Node> nodes_;
};

}  // namespace gem::autodiff
