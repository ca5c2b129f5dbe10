#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pxrl/tensor.hpp"

namespace pxrl {

// Finite-difference verification of backward rules. The fragment rebuilds a
// scalar loss from the given parameters on a fresh tape; everything runs in
// double so central differences with step 1e-4 resolve well below the 1e-4
// tolerance. Relative error uses the Caffe-style scale max(1,|a|,|fd|).

struct GradCheckEntry {
    int param_index = 0;
    long element = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    GradCheckEntry worst;
};

using Fragment = std::function<TensorPtr<double>(Tape<double>&, const std::vector<TensorPtr<double>>&)>;

inline GradCheckReport grad_check(const Fragment& fragment,
                                  const std::vector<TensorPtr<double>>& params,
                                  double fd_step = 1e-4, double tolerance = 1e-4) {
    for (const auto& p : params) p->zero_grad();
    {
        Tape<double> tape;
        auto loss = fragment(tape, params);
        tape.backward(loss);
    }

    GradCheckReport report;
    report.tolerance = tolerance;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        for (long i = 0; i < p->numel(); ++i) {
            const double saved = p->values[i];
            p->values[i] = saved + fd_step;
            double up, down;
            {
                Tape<double> tape(false);
                up = fragment(tape, params)->values[0];
            }
            p->values[i] = saved - fd_step;
            {
                Tape<double> tape(false);
                down = fragment(tape, params)->values[0];
            }
            p->values[i] = saved;
            const double numeric = (up - down) / (2.0 * fd_step);
            const double analytic = p->grad[i];
            const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
            const double rel = std::fabs(analytic - numeric) / denom;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst = {static_cast<int>(pi), i, analytic, numeric, rel};
            }
        }
    }
    for (const auto& p : params) p->zero_grad();
    report.pass = report.max_rel_error < tolerance;
    return report;
}

}  // namespace pxrl
