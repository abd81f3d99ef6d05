#include "growlab/numerics/grad_check.hpp"

#include <cmath>
#include <string>

#include "growlab/util/errors.hpp"

namespace growlab {

namespace {

template <typename T>
double evaluate(const LossBuilder<T>& loss, std::span<GradCheckTarget<T>> targets) {
    Tape<T> tape;
    std::vector<Var<T>> params;
    params.reserve(targets.size());
    for (auto& target : targets) params.push_back(tape.input(*target.tensor));
    const Var<T> out = loss(tape, params);
    if (out.value().size() != 1) {
        throw ContractError("grad_check: loss must be scalar, got shape " + shape_string(out.shape()));
    }
    return static_cast<double>(out.value()[0]);
}

}  // namespace

template <typename T>
double grad_check(const LossBuilder<T>& loss, std::span<GradCheckTarget<T>> targets, double eps) {
    if (!(eps >= 1e-5 && eps <= 1e-2)) throw ContractError("grad_check: eps must lie in [1e-5, 1e-2]");
    for (const auto& target : targets) {
        if (target.tensor == nullptr) throw ContractError("grad_check: null target tensor");
    }

    std::vector<BasicTensor<T>> analytic;
    {
        Tape<T> tape;
        std::vector<Var<T>> params;
        params.reserve(targets.size());
        for (auto& target : targets) params.push_back(tape.parameter(*target.tensor));
        const Var<T> out = loss(tape, params);
        if (out.value().size() != 1) {
            throw ContractError("grad_check: loss must be scalar, got shape " + shape_string(out.shape()));
        }
        tape.backward(out);
        for (const auto& p : params) {
            analytic.push_back(tape.has_grad(p.id) ? tape.grad(p.id) : BasicTensor<T>(p.shape()));
        }
    }

    double worst = 0.0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        auto& tensor = *targets[t].tensor;
        std::vector<std::size_t> coords = targets[t].coords;
        if (coords.empty()) {
            coords.resize(tensor.size());
            for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        }
        for (std::size_t idx : coords) {
            if (idx >= tensor.size()) throw ContractError("grad_check: coordinate out of range");
            const T saved = tensor[idx];
            tensor[idx] = static_cast<T>(static_cast<double>(saved) + eps);
            const double plus = evaluate(loss, targets);
            tensor[idx] = static_cast<T>(static_cast<double>(saved) - eps);
            const double minus = evaluate(loss, targets);
            tensor[idx] = saved;
            const double fd = (plus - minus) / (2.0 * eps);
            const double an = static_cast<double>(analytic[t][idx]);
            const double rel = std::abs(an - fd) / (std::abs(an) + std::abs(fd) + 1e-8);
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

template <typename T>
double grad_check(const std::function<Var<T>(Var<T>)>& f, const BasicTensor<T>& x, double eps) {
    BasicTensor<T> work = x;
    GradCheckTarget<T> target{&work, {}};
    LossBuilder<T> loss = [&f](Tape<T>&, std::span<const Var<T>> params) { return f(params[0]); };
    return grad_check<T>(loss, std::span<GradCheckTarget<T>>(&target, 1), eps);
}

template double grad_check<float>(const LossBuilder<float>&, std::span<GradCheckTarget<float>>, double);
template double grad_check<double>(const LossBuilder<double>&, std::span<GradCheckTarget<double>>, double);
template double grad_check<float>(const std::function<Var<float>(Var<float>)>&, const BasicTensor<float>&, double);
template double grad_check<double>(const std::function<Var<double>(Var<double>)>&, const BasicTensor<double>&, double);

}  // namespace growlab
