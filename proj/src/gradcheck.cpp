#include "tcagcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace tcagcn {

double relative_error(double a, double b, double floor)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

namespace {

double finite_value(const Tensor& t)
{
    double v = t.item();
    if (!std::isfinite(v)) throw NumericalError("gradcheck: non-finite function value");
    return v;
}

}  // namespace

double gradcheck(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps)
{
    if (!x.requires_grad()) throw AutodiffError("gradcheck: input must require grad");
    x.zero_grad();
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor y = f(x);
        finite_value(y);
        tape.backward(y);
    }
    std::vector<double> analytic = x.has_grad() ? std::vector<double>(x.grad().begin(), x.grad().end())
                                                : std::vector<double>(x.numel(), 0.0);
    auto data = x.mutable_data();
    double worst = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double orig = data[i];
        data[i] = orig + eps;
        const double up = finite_value(f(x));
        data[i] = orig - eps;
        const double down = finite_value(f(x));
        data[i] = orig;
        worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * eps)));
    }
    return worst;
}

std::vector<GroupError> gradcheck_params(const std::function<Tensor()>& loss,
                                         const NamedTensors& params,
                                         const std::function<std::string(const std::string&)>& group_of,
                                         double eps)
{
    for (const auto& [name, p] : params) p.zero_grad();
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor y = loss();
        finite_value(y);
        tape.backward(y);
    }
    std::vector<GroupError> report;
    for (const auto& [name, p] : params) {
        const std::string group = group_of(name);
        auto it = std::find_if(report.begin(), report.end(),
                               [&](const GroupError& g) { return g.group == group; });
        if (it == report.end()) {
            report.push_back(GroupError{group, 0, 0.0});
            it = report.end() - 1;
        }
        std::vector<double> analytic =
            p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                         : std::vector<double>(p.numel(), 0.0);
        auto data = p.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            data[i] = orig + eps;
            const double up = finite_value(loss());
            data[i] = orig - eps;
            const double down = finite_value(loss());
            data[i] = orig;
            it->max_rel_error =
                std::max(it->max_rel_error, relative_error(analytic[i], (up - down) / (2.0 * eps)));
        }
        it->count += data.size();
    }
    return report;
}

}  // namespace tcagcn
