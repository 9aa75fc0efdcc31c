#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "snp/memory_buffer.hpp"
#include "snp/meta_learner.hpp"
#include "snp/model.hpp"
#include "snp/task_world.hpp"
#include "snp/telemetry.hpp"

namespace snp {

enum class ExpansionMode { Snp, SnpAdd, SnpRemove, SnpInterpolate };

struct ExpansionConfig {
    HyperParams hyper;
    ExpansionMode mode = ExpansionMode::SnpAdd;
    double beta_int = 1.0;  // pull strength toward the target subnetwork (interpolate mode)
    std::optional<int> remove_task_id;
    double remove_residual_beta = 0.0;
    // Drift profile describing how far theta may drift (usually the final
    // training profile). Without memory this is the only radius source, so
    // memoryless runs with beta_meta > 0 must provide it.
    std::optional<DriftProfile> radius_profile;
};

// Algorithm: raise the meta-drift coefficient as accumulated drift
// dist_meta_v approaches the usable radius. The radius is the largest
// profile dist_meta whose dist_base stays within epsilon; when epsilon is
// absent it is estimated from `recovery`. Returns
// max(beta_meta, beta_meta * radius / (radius - dist_meta_v)), capped at
// 100 * beta_meta; the singular case dist_meta_v >= radius returns the cap
// directly. Every call emits an "adaptive_beta" telemetry record.
double adaptive_beta(double beta_meta, double dist_meta_v, std::optional<double> epsilon,
                     const DriftProfile& profile, const RecoveryReport* recovery,
                     Telemetry* telemetry = nullptr, int task_id = -1);

// task_id of the reference with minimal cosine distance; ties break toward
// the lowest task_id.
int nearest_subnetwork(const ParamVector& candidate,
                       const std::vector<std::pair<int, ParamVector>>& references);

// Releases a task for overwrite: its regularization weight drops to
// residual_beta (0 = full release). The entry is kept so the task's drift
// stays measurable; re-registering a fresh support set restores it.
MemoryBuffer remove_subnetwork(MemoryBuffer memory, int task_id, double residual_beta,
                               Telemetry* telemetry = nullptr);

struct TaskExpansionRecord {
    int task_id = 0;
    long epochs_run = 0;
    bool aborted = false;
    double beta_meta_before = 0.0;
    double beta_meta_after = 0.0;
    double dist_meta_v = 0.0;     // last epoch
    double task_loss = 0.0;       // last epoch
    double l_base = 0.0;          // last epoch, beta-weighted sum excluded
    std::optional<double> l_int;  // last epoch, interpolate mode only
    std::optional<int> interpolation_target;
};

struct ExpandResult {
    ParamVector theta;
    std::optional<MemoryBuffer> memory;
    std::vector<TaskExpansionRecord> tasks;
    double beta_meta_final = 0.0;

    bool any_aborted() const {
        for (const auto& t : tasks)
            if (t.aborted) return true;
        return false;
    }
};

// Online phase: processes each new task sequentially for epochs_expand
// epochs. Per epoch the update is
//   theta -= lr_meta * grad(L_task)
//          + beta_meta * grad(dist_meta_v)
//          + sum_t beta_base_t * grad(dist_base_t)    (memory present)
//          + beta_int * grad(dist_int)                (interpolate mode)
// Reference projections theta*_t are fixed at entry. adaptive_beta runs at
// each task boundary (or per epoch when hyper.adaptive_beta_per_epoch); a
// RadiusUnresolvedError rolls theta, memory and beta back to the task
// boundary and marks the task aborted.
ExpandResult expand_space(const ParamVector& theta, const std::vector<Task>& new_tasks,
                          const std::optional<MemoryBuffer>& memory, const ModelConfig& config,
                          const ExpansionConfig& expansion, std::uint64_t seed,
                          Telemetry* telemetry = nullptr);

// expand_space in interpolate mode for a single task: the nearest existing
// subnetwork g is re-selected each epoch, g's own base regularizer is
// relaxed while beta_int pulls the new task's projection toward g's, and the
// task is recorded as an alias of g instead of a new memory entry.
ExpandResult interpolate_subnetworks(const ParamVector& theta, const Task& new_task,
                                     const MemoryBuffer& memory, const ModelConfig& config,
                                     ExpansionConfig expansion, std::uint64_t seed,
                                     Telemetry* telemetry = nullptr);

using ModePredicate = std::function<bool(const ParamVector& base, const Task& task)>;

struct SearchConfig {
    int samples_per_magnitude = 32;
    std::vector<double> drift_magnitudes;  // ascending cosine-drift targets, each in (0, 2]
    double perturbation_scale = 0.01;      // consumed by the flat-basin predicate
};

struct ModeSwitchTrial {
    double magnitude = 0.0;
    int sample = 0;
    double dist_meta = 0.0;
    bool accepted = false;
};

struct ModeSwitchReport {
    std::vector<ModeSwitchTrial> trials;
    bool found = false;
    double found_magnitude = 0.0;
    int found_sample = 0;
};

struct ModeSwitchResult {
    std::optional<ParamVector> theta;  // empty when the search exhausted
    ModeSwitchReport report;
};

// Samples candidate meta parameters at each scheduled cosine-drift magnitude
// (random direction, exact target drift, norm preserved), projects the
// task's base parameters from the stored support, and tests the predicate.
// The first accepted candidate's projection becomes the task's new mode and
// a regularized consolidation run moves theta so the other base parameters
// stay anchored. Exhaustion is a value, not an error.
ModeSwitchResult mode_switch(const ParamVector& theta, const MemoryBuffer& memory, int task_id,
                             const Task& task, const ModePredicate& predicate,
                             const SearchConfig& search, const ModelConfig& config,
                             const HyperParams& hyper, std::uint64_t seed,
                             Telemetry* telemetry = nullptr);

// Accepts a base-parameter candidate when the loss increase under
// `perturbations` random parameter perturbations of relative norm
// `perturbation_scale` stays below `factor` times the unperturbed loss.
ModePredicate flat_basin_predicate(const ModelConfig& config, double perturbation_scale,
                                   int perturbations, double factor, std::uint64_t seed);

}  // namespace snp
