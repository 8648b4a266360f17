#pragma once

#include <optional>
#include <string>

#include "dpmix/pipeline.hpp"

namespace dpmix::harness {

struct CommandResult {
    int exit_code = 0;
    json summary;
};

// Exit codes shared by the CLI.
constexpr int kExitOk = 0;
constexpr int kExitInvalidConfig = 2;
constexpr int kExitInsufficientData = 3;
constexpr int kExitAuditFailure = 4;

json load_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& j);
Dataset load_dataset(const std::string& path);
void write_dataset(const std::string& path, const Dataset& data);

/// Fixed neighboring list collections over a line of well-separated
/// single-Gaussian hypotheses. The collections differ in the last list: the
/// base pins candidate A at full score, the neighbor pins candidate B.
struct NeighborInstance {
    MixtureCover cover;
    std::vector<HypothesisList> base;
    std::vector<HypothesisList> neighbor;
};
NeighborInstance dp_audit_instance(int t_rounds, int cover_size, uint64_t seed);

/// Random collections plus a one-list-replaced neighbor for sensitivity
/// audits.
NeighborInstance sensitivity_instance(int t_rounds, int cover_size, int items_per_list,
                                      uint64_t seed);

/// Planted common-member scenario: every list holds one item within alpha of
/// a hidden in-box hypothesis plus far decoys.
struct PlantedInstance {
    MixtureCover cover;
    std::vector<HypothesisList> lists;
    Mixture planted;
    double alpha = 0.1;
    long items_per_list = 0;
};
PlantedInstance planted_instance(int t_rounds, int decoys_per_list, double alpha, uint64_t seed);

/// Exhaustive per-element scores (zeros included) for sensitivity audits.
std::vector<int> full_scores(const std::vector<HypothesisList>& lists, const MixtureCover& cover,
                             double radius, const MixtureMetric& metric);

CommandResult cmd_gen(const json& config, const std::string& out_dir);
CommandResult cmd_learn(const json& config, const std::string& out_dir);
CommandResult cmd_eval(const json& config, const std::string& out_dir, bool frozen_clock);
CommandResult cmd_audit(const json& config, const std::string& out_dir);

/// Applies the seed override, dispatches, and maps errors to exit codes.
int run_command(const std::string& name, json config, const std::string& out_dir,
                std::optional<uint64_t> seed_override, bool frozen_clock);

}  // namespace dpmix::harness
