#pragma once

#include "kfdmd/core.hpp"
#include "kfdmd/dmd.hpp"

#include <vector>

namespace kfdmd {

struct DelayCriterion {
    double epsilon = 1e-2;  // residual threshold
    Index max_n = 50;       // hard cap on the returned count
    Index rank = 1;         // rank of the stencil DMDs
    // Threshold is epsilon * ||Lambda||_F of the current stencil when true.
    bool relative = true;
    // Pairing of Lambda and Lambda' before differencing.
    Matching matching = Matching::sort_order;

    void validate() const;
};

struct DelaySelection {
    Index n = 0;
    bool saturated = false;             // threshold never met before max_n
    std::vector<double> residuals;      // e for each comparison, in order
};

// Grows a stencil of snapshots from s = r+1 until the stencil eigenvalues
// stop changing by more than the threshold; returns s+1 at that point.
DelaySelection select_delay(const SnapshotSeries& series, const DelayCriterion& crit);

}  // namespace kfdmd
