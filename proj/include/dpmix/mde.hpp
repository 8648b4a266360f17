#pragma once

#include "dpmix/listdecode.hpp"
#include "dpmix/model.hpp"

namespace dpmix {

struct YatracosDiscrepancy {
    int candidate_index = 0;
    double value = 0.0;
};

/// Per-candidate max over ordered pairs (i, j) of
/// |P_candidate(A_ij) - P_data(A_ij)|, where A_ij = {x : f_i(x) > f_j(x)}.
/// Candidate measures are Monte Carlo with mc_n draws from the candidate;
/// the empirical measure counts data points.
std::vector<YatracosDiscrepancy> yatracos_discrepancy(const HypothesisList& candidates,
                                                      const Dataset& data, long mc_n,
                                                      RngStream& rng);

/// Index of the discrepancy argmin (lowest index on exact ties).
int mde_select(const HypothesisList& candidates, const Dataset& data, long mc_n, RngStream& rng);

}  // namespace dpmix
