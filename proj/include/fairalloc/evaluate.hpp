#pragma once

#include "fairalloc/core.hpp"
#include "fairalloc/oracle.hpp"

namespace fairalloc {

/// Fill every reported metric of a SolveResult from a final allocation.
inline SolveResult assemble_result(const Instance& inst, const FairnessParams& params,
                                   Allocation allocation, SolverStats stats) {
    check_dims(inst.rho, allocation);
    const auto groups = inst.groups_or_single();
    const std::size_t m = inst.consumers(), n = inst.producers();
    const ProducerValues* values = inst.values ? &*inst.values : nullptr;

    SolveResult r;
    r.consumer_utilities = consumer_utilities(inst.rho, allocation, params.k,
                                              params.utility_normalization());
    r.group_utilities = group_means(r.consumer_utilities, groups);
    r.group_variance = group_utility_variance(r.group_utilities);
    r.objective_value = allocation_objective(inst.rho, allocation, groups, params);
    r.violations = violation_report(allocation, params,
                                    static_cast<double>(producer_floor(params, m, n)),
                                    gmv_floor(params, values, m), values);
    r.allocation = std::move(allocation);
    r.stats = std::move(stats);
    return r;
}

} // namespace fairalloc
