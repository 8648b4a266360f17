#include "dpmix/mde.hpp"

#include <cmath>

namespace dpmix {

std::vector<YatracosDiscrepancy> yatracos_discrepancy(const HypothesisList& candidates,
                                                      const Dataset& data, long mc_n,
                                                      RngStream& rng) {
    const int l = static_cast<int>(candidates.items.size());
    if (l == 0) throw EmptyCandidates("no candidates for the discrepancy");
    if (mc_n < 1) throw InvalidConfig("mc_n must be >= 1");

    std::vector<YatracosDiscrepancy> out(static_cast<size_t>(l));
    for (int c = 0; c < l; ++c) out[static_cast<size_t>(c)] = {c, 0.0};
    if (l == 1) return out;

    const long n_data = static_cast<long>(data.size());

    // Log densities of every candidate at every data point.
    std::vector<std::vector<double>> data_ld(static_cast<size_t>(l),
                                             std::vector<double>(static_cast<size_t>(n_data)));
    for (int i = 0; i < l; ++i) {
        for (long x = 0; x < n_data; ++x) {
            data_ld[static_cast<size_t>(i)][static_cast<size_t>(x)] =
                candidates.items[static_cast<size_t>(i)].log_density(
                    data.points[static_cast<size_t>(x)]);
        }
    }

    for (int c = 0; c < l; ++c) {
        RngStream cand_rng = rng.split(static_cast<uint64_t>(c));
        std::vector<std::vector<double>> mc_ld(static_cast<size_t>(l),
                                               std::vector<double>(static_cast<size_t>(mc_n)));
        for (long x = 0; x < mc_n; ++x) {
            const Eigen::VectorXd pt = candidates.items[static_cast<size_t>(c)].sample(cand_rng);
            for (int i = 0; i < l; ++i) {
                mc_ld[static_cast<size_t>(i)][static_cast<size_t>(x)] =
                    candidates.items[static_cast<size_t>(i)].log_density(pt);
            }
        }
        double worst = 0.0;
        for (int i = 0; i < l; ++i) {
            for (int j = 0; j < l; ++j) {
                if (i == j) continue;
                long mc_in = 0;
                for (long x = 0; x < mc_n; ++x) {
                    if (mc_ld[static_cast<size_t>(i)][static_cast<size_t>(x)] >
                        mc_ld[static_cast<size_t>(j)][static_cast<size_t>(x)]) {
                        ++mc_in;
                    }
                }
                long data_in = 0;
                for (long x = 0; x < n_data; ++x) {
                    if (data_ld[static_cast<size_t>(i)][static_cast<size_t>(x)] >
                        data_ld[static_cast<size_t>(j)][static_cast<size_t>(x)]) {
                        ++data_in;
                    }
                }
                const double p_cand = static_cast<double>(mc_in) / static_cast<double>(mc_n);
                const double p_data =
                    n_data > 0 ? static_cast<double>(data_in) / static_cast<double>(n_data) : 0.0;
                worst = std::max(worst, std::abs(p_cand - p_data));
            }
        }
        out[static_cast<size_t>(c)].value = worst;
    }
    return out;
}

int mde_select(const HypothesisList& candidates, const Dataset& data, long mc_n, RngStream& rng) {
    const auto disc = yatracos_discrepancy(candidates, data, mc_n, rng);
    int best = 0;
    for (size_t i = 1; i < disc.size(); ++i) {
        if (disc[i].value < disc[static_cast<size_t>(best)].value) best = static_cast<int>(i);
    }
    return best;
}

}  // namespace dpmix
