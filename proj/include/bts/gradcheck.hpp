#pragma once

// Full-model gradient verification: analytic backpropagation against central
// finite differences, in double precision with dropout disabled. This is the
// master correctness check for the model module.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bts/matrix.hpp"
#include "bts/model.hpp"
#include "bts/vocab.hpp"

namespace bts {

struct GradCheckReport {
    struct PerMatrix {
        std::string name;
        double max_rel_err;
    };
    std::vector<PerMatrix> matrices;
    double worst = 0;
    std::string worst_name;
    bool pass = false;
};

// Relative error with an absolute floor: tiny honest gradients live below the
// finite-difference noise floor and must not fail the check.
inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-4});
    return std::abs(a - b) / denom;
}

// Fixed protocol: 12-byte segment, two spans, k=12, two labels, eps 1e-5,
// threshold 1e-4. The sabotage hook perturbs the analytic gradients and is
// used only by negative-control tests.
inline GradCheckReport run_gradient_check(
    std::uint32_t width, std::uint32_t depth, std::uint32_t seed,
    const std::function<void(ParamStore<double>&)>& sabotage = nullptr) {
    ModelConfig cfg;
    cfg.width = width;
    cfg.depth = depth;
    cfg.k = 12;
    cfg.labels = {"A", "B"};
    Model<double> model(cfg);
    Rng rng(seed);
    model.init_params(rng);

    std::vector<std::uint8_t> segment(12);
    for (auto& b : segment) b = static_cast<std::uint8_t>(uniform_below(rng, 256));
    const std::vector<SpanAnnotation> spans = {{1, 4, "A", -1}, {6, 5, "B", -1}};
    const std::vector<int> target = encode_spans(spans, model.vocab());

    model.params().zero_grads();
    const auto trace = model.forward_loss(segment, target);
    model.backward(trace);
    if (sabotage) sabotage(model.params());

    std::vector<Matrix<double>> analytic;
    for (const auto& e : model.params().entries) analytic.push_back(e.grad);

    auto loss_fn = [&](ParamStore<double>&) {
        return model.forward_loss(segment, target).loss;
    };
    const auto fd = finite_difference_grad(loss_fn, model.params(), 1e-5);

    GradCheckReport report;
    report.pass = true;
    for (std::size_t m = 0; m < analytic.size(); ++m) {
        double worst = 0;
        for (std::size_t i = 0; i < analytic[m].size(); ++i)
            worst = std::max(worst, rel_err(analytic[m].data[i], fd[m].data[i]));
        report.matrices.push_back({model.params().entries[m].name, worst});
        if (worst > report.worst) {
            report.worst = worst;
            report.worst_name = model.params().entries[m].name;
        }
        if (worst >= 1e-4) report.pass = false;
    }
    return report;
}

}  // namespace bts
