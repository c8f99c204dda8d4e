#pragma once

// Reference per-frame policies: full-frame ZF-JT, greedy fractional JT and
// fractional JT with a fixed single-BS subframe.

#include "fjt/errors.hpp"
#include "fjt/perframe.hpp"

#include <functional>
#include <optional>
#include <string>

namespace fjt {

enum class BaselineKind { conventional_zfjt, greedy, fixed_bs };

inline std::string to_string(BaselineKind k) {
    switch (k) {
    case BaselineKind::conventional_zfjt: return "conventional";
    case BaselineKind::greedy: return "greedy";
    case BaselineKind::fixed_bs: return "fixed_bs";
    }
    return "?";
}

inline PerFrameInput with_full_budgets(PerFrameInput in) {
    for (int k = 0; k < 2; ++k) in.budget[k] = in.max_budget(k);
    return in;
}

/// ZF-JT over the whole frame, alpha = 0, budgets B_k / T_f + E_k as upper bounds.
inline PerFrameSolution conventional_zfjt(const PerFrameInput& in) {
    return power_allocation_inequality(with_full_budgets(in), 0, 0.0);
}

/// Fractional JT spending everything available.
inline PerFrameSolution greedy_baseline(const PerFrameInput& in, double delta_alpha = kDefaultDeltaAlpha) {
    return per_frame_greedy(in, delta_alpha);
}

/// Per-stage utility with the single-BS subframe pinned to BS k.
inline PerFrameSolution fixed_bs_policy(int k, const PerFrameInput& in, double delta_alpha = kDefaultDeltaAlpha) {
    if (k < 0 || k > 1) throw domain_error("fixed_bs_policy: k must be 0 or 1");
    return per_stage_utility(in, delta_alpha, k);
}

/// Online decision rule for the closed-loop simulator.
inline std::function<PerFrameSolution(const PerFrameInput&)> baseline_callback(BaselineKind kind, int k = 0,
                                                                               double delta_alpha = kDefaultDeltaAlpha) {
    switch (kind) {
    case BaselineKind::conventional_zfjt: return [](const PerFrameInput& in) { return conventional_zfjt(in); };
    case BaselineKind::greedy:
        return [delta_alpha](const PerFrameInput& in) { return greedy_baseline(in, delta_alpha); };
    case BaselineKind::fixed_bs:
        return [k, delta_alpha](const PerFrameInput& in) {
            return fixed_bs_policy(k, with_full_budgets(in), delta_alpha);
        };
    }
    throw domain_error("baseline_callback: unknown kind");
}

} // namespace fjt
