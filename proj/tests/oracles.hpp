#pragma once

// Independent reference implementations used to check the library. These
// deliberately avoid the tape/segment machinery: dense loops, plain maps,
// no shared code with the paths under test.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gem/gem.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, std::vector<double>(c, 0.0)); }

inline Mat from_tensor(const gem::autodiff::Tensor& t) {
    Mat m = zeros(t.rows(), t.cols());
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
    return m;
}

inline double leaky(double x, double slope) { return x > 0 ? x : slope * x; }

inline double activate(double x, gem::gat::Activation a, double slope) {
    switch (a) {
        case gem::gat::Activation::Elu: return x > 0 ? x : std::expm1(x);
        case gem::gat::Activation::LeakyRelu: return leaky(x, slope);
        case gem::gat::Activation::Identity: return x;
    }
    return x;
}

// Dense single-head attention layer: explicit neighbor loops over an
// adjacency list, plain softmax, no segment ops.
struct DenseGatResult {
    Mat output;     // [N, F'] (activated)
    Mat attention;  // attention[i][j] over edges j->i, indexed densely
};

inline DenseGatResult dense_gat_layer(const Mat& h, const Mat& W, const std::vector<double>& a,
                                      const std::vector<gem::gat::Edge>& edges, double slope,
                                      gem::gat::Activation sigma,
                                      gem::gat::AttentionScoring scoring) {
    std::size_t n = h.size();
    std::size_t fp = W.size();
    std::size_t fin = W[0].size();

    // Wh[i] = W * h_i
    Mat wh = zeros(n, fp);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < fp; ++r)
            for (std::size_t c = 0; c < fin; ++c) wh[i][r] += W[r][c] * h[i][c];

    std::vector<std::vector<std::size_t>> neighbors(n);  // sources per destination
    for (const auto& e : edges) neighbors[e.dst].push_back(e.src);
    for (auto& nb : neighbors) std::sort(nb.begin(), nb.end());

    DenseGatResult result;
    result.output = zeros(n, fp);
    result.attention = zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> scores;
        for (std::size_t j : neighbors[i]) {
            double raw = 0.0;
            if (scoring == gem::gat::AttentionScoring::Gat) {
                for (std::size_t k = 0; k < fp; ++k) raw += a[k] * wh[i][k];
                for (std::size_t k = 0; k < fp; ++k) raw += a[fp + k] * wh[j][k];
                raw = leaky(raw, slope);
            } else {
                for (std::size_t k = 0; k < fp; ++k) raw += a[k] * leaky(wh[i][k], slope);
                for (std::size_t k = 0; k < fp; ++k) raw += a[fp + k] * leaky(wh[j][k], slope);
            }
            scores.push_back(raw);
        }
        double mx = *std::max_element(scores.begin(), scores.end());
        double denom = 0.0;
        for (double s : scores) denom += std::exp(s - mx);
        for (std::size_t idx = 0; idx < neighbors[i].size(); ++idx) {
            double alpha = std::exp(scores[idx] - mx) / denom;
            result.attention[i][neighbors[i][idx]] = alpha;
            for (std::size_t k = 0; k < fp; ++k)
                result.output[i][k] += alpha * wh[neighbors[i][idx]][k];
        }
        for (std::size_t k = 0; k < fp; ++k)
            result.output[i][k] = activate(result.output[i][k], sigma, slope);
    }
    return result;
}

// ---- finite differences -------------------------------------------------

struct FdViolation {
    std::string parameter;
    std::size_t element = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double error = 0.0;
};

// Central finite differences of `loss()` with respect to every element of
// every parameter; compares against the provided analytic gradients.
// Returns the worst violation of |a-n| <= abs_floor + rel_tol*max(|a|,|n|),
// or nullopt if everything agrees.
inline std::optional<FdViolation> finite_difference_check(
    gem::autodiff::ParameterSet& params,
    const std::map<std::string, gem::autodiff::Tensor>& analytic,
    const std::function<double()>& loss, double rel_tol, double abs_floor, double step = 1e-5) {
    std::optional<FdViolation> worst;
    std::vector<std::string> names;
    params.for_each([&](const std::string& name, const gem::autodiff::Tensor&) {
        names.push_back(name);
    });
    for (const auto& name : names) {
        gem::autodiff::Tensor& t = params.get(name);
        const gem::autodiff::Tensor& grad = analytic.at(name);
        for (std::size_t i = 0; i < t.size(); ++i) {
            double saved = t.values[i];
            t.values[i] = saved + step;
            double up = loss();
            t.values[i] = saved - step;
            double down = loss();
            t.values[i] = saved;
            double numeric = (up - down) / (2.0 * step);
            double a = grad.size() > 0 ? grad.values[i] : 0.0;
            double tol = abs_floor + rel_tol * std::max(std::abs(a), std::abs(numeric));
            double err = std::abs(a - numeric);
            if (err > tol) {
                if (!worst || err > worst->error)
                    worst = FdViolation{name, i, a, numeric, err};
            }
        }
    }
    return worst;
}

// ---- routing ------------------------------------------------------------

struct BruteRoute {
    bool gnn = false;
    int votes_gnn = 0;
    int votes_seq = 0;
};

// Line-by-line re-trace of the voting mechanism, independent of the library
// types: strict '>' votes GNN, everything else votes SEQ, final '>=' picks
// GNN.
inline BruteRoute brute_force_route(
    const std::set<std::string>& domains,
    const std::map<std::string, std::pair<double, double>>& accuracies) {
    BruteRoute r;
    for (const auto& d : domains) {
        auto [gnn, seq] = accuracies.at(d);
        if (gnn > seq)
            r.votes_gnn += 1;
        else
            r.votes_seq += 1;
    }
    r.gnn = r.votes_gnn >= r.votes_seq;
    return r;
}

// ---- retrieval ------------------------------------------------------------

// Exhaustive scan with its own cosine; returns ids in result order.
inline std::vector<std::string> brute_force_topk(
    const std::vector<std::pair<std::string, std::vector<double>>>& records,
    const std::vector<double>& query, std::size_t k, double tau) {
    auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
        double dot = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& [id, vec] : records) {
        double sim = cosine(vec, query);
        if (sim > tau) scored.emplace_back(sim, id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    if (scored.size() > k) scored.resize(k);
    std::vector<std::string> ids;
    for (const auto& [sim, id] : scored) ids.push_back(id);
    return ids;
}

// ---- linear separability --------------------------------------------------

// One-vs-all logistic regression trained by full-batch gradient descent.
// Used to certify that a synthetic corpus is linearly decodable before the
// graph expert is asked to learn it.
class LogisticOracle {
public:
    LogisticOracle(std::size_t dim, std::size_t classes)
        : dim_(dim), weights_(classes, std::vector<double>(dim + 1, 0.0)) {}

    void fit(const std::vector<std::vector<double>>& x,
             const std::vector<std::vector<int>>& y, int iterations = 600, double lr = 2.0) {
        std::size_t n = x.size();
        for (std::size_t c = 0; c < weights_.size(); ++c) {
            auto& w = weights_[c];
            for (int it = 0; it < iterations; ++it) {
                std::vector<double> grad(dim_ + 1, 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    double z = w[dim_];
                    for (std::size_t j = 0; j < dim_; ++j) z += w[j] * x[i][j];
                    double p = 1.0 / (1.0 + std::exp(-z));
                    double delta = p - static_cast<double>(y[i][c]);
                    for (std::size_t j = 0; j < dim_; ++j) grad[j] += delta * x[i][j];
                    grad[dim_] += delta;
                }
                for (std::size_t j = 0; j <= dim_; ++j) w[j] -= lr * grad[j] / double(n);
            }
        }
    }

    std::vector<int> predict(const std::vector<double>& x) const {
        std::vector<int> out(weights_.size(), 0);
        for (std::size_t c = 0; c < weights_.size(); ++c) {
            double z = weights_[c][dim_];
            for (std::size_t j = 0; j < dim_; ++j) z += weights_[c][j] * x[j];
            out[c] = z > 0.0 ? 1 : 0;
        }
        return out;
    }

    // Exact multi-hot match ratio.
    double set_accuracy(const std::vector<std::vector<double>>& x,
                        const std::vector<std::vector<int>>& y) const {
        std::size_t ok = 0;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (predict(x[i]) == y[i]) ++ok;
        return static_cast<double>(ok) / static_cast<double>(x.size());
    }

private:
    std::size_t dim_;
    std::vector<std::vector<double>> weights_;
};

}  // namespace oracle
