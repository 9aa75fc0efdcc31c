#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <vector>

#include "snp/model.hpp"
#include "snp/param_vector.hpp"

namespace snp {

// A Gaussian-cluster classification task with disjoint support/query pools
// and one unit-norm descriptor per class.
struct Task {
    int task_id = 0;
    int class_count = 0;
    Eigen::MatrixXd support_inputs;  // pool rows grouped by class
    std::vector<int> support_labels;
    Eigen::MatrixXd query_inputs;
    std::vector<int> query_labels;
    Eigen::MatrixXd descriptors;  // class_count x descriptor_dim, unit rows
    std::uint64_t provenance_seed = 0;

    // First K support samples of every class, in class order. This is the
    // deterministic batch used for base-parameter projection and the memory
    // buffer.
    Batch support_batch(int k_shots) const;

    // The whole support pool as one batch.
    Batch train_batch() const;

    // The whole query pool as one batch.
    Batch query_batch() const;
};

struct TaskSuite {
    std::vector<Task> seen;
    // keyed by seen-task position; holds that task's attached unseen tasks
    std::map<int, std::vector<Task>> unseen;

    std::vector<const Task*> all_tasks() const;
    const Task& find(int task_id) const;
};

// Defaults describe the canonical desk-scale protocol: 4 seen tasks (3 for
// meta-training, the last streamed online), 2 unseen tasks attached to each.
struct SuiteSpec {
    int n_seen = 4;
    int n_unseen_per_seen = 2;
    int classes_per_task = 6;
    int samples_per_class = 10;  // support pool size per class
    int query_per_class = 5;
    int input_dim = 10;
    int descriptor_dim = 10;
    double transfer_strength = 0.6;  // fraction of class means an unseen task shares
    double sample_noise = 0.25;
    double descriptor_noise = 0.05;
    double unseen_shift = 0.05;  // rotation size applied to shared class means

    void validate() const;
};

// Pure function of (seed, spec). Seen tasks get ids 0..n_seen-1; the unseen
// task v of seen task t gets id n_seen + t*n_unseen_per_seen + v.
TaskSuite generate_task_suite(std::uint64_t seed, const SuiteSpec& spec);

// Deterministic N-way-K-shot episode: N classes (ascending), K support
// samples per class drawn without replacement, query = the full query pool
// of the drawn classes. Labels are re-indexed against the episode's
// descriptor rows.
std::pair<Batch, Batch> episode_sampler(const Task& task, int n_way, int k_shots,
                                        std::uint64_t seed);

// Symmetric matrix of pairwise cosine distances; diagonal exactly zero.
Eigen::MatrixXd pairwise_model_distance(const std::vector<ParamVector>& checkpoints);

// Single-linkage grouping with two thresholds: distances <= near_threshold
// merge tasks into one group; between groups, min-linkage distance in
// (near_threshold, far_threshold] is Near and beyond is Far.
struct GroupingResult {
    enum class Relation { Same, Near, Far };
    std::vector<int> labels;  // group index per task, ordered by lowest member
    std::vector<std::vector<Relation>> relations;  // group x group
};
GroupingResult group_tasks(const Eigen::MatrixXd& distances, double near_threshold = 0.1,
                           double far_threshold = 0.3);

}  // namespace snp
