#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "snp/meta_learner.hpp"
#include "snp/model.hpp"
#include "snp/task_world.hpp"

namespace snp {

// One evaluation sweep result: accuracies of `method` on `eval_task` right
// after learning stage `stage` (stage 0 = before any stream task).
struct EvalRecord {
    std::string method;
    int stage = 0;
    int eval_task = 0;
    double zs_topk = 0.0;
    double fs_grad = 0.0;
    double fs_ncm = 0.0;
};

class ResultLedger {
public:
    // At most one record per (stage, eval_task, method).
    void add(EvalRecord record);
    const std::vector<EvalRecord>& records() const { return records_; }
    const EvalRecord& find(const std::string& method, int stage, int eval_task) const;
    bool has(const std::string& method, int stage, int eval_task) const;
    std::vector<int> stages_of(const std::string& method) const;
    std::vector<int> tasks_at(const std::string& method, int stage) const;
    void merge(const ResultLedger& other);

    // Fixed schema: method,stage,eval_task,zs_topk,fs_grad,fs_ncm
    void write_csv(std::ostream& out) const;

private:
    std::vector<EvalRecord> records_;
};

// Fraction of query samples whose true class ranks in the top k by
// temperature-scaled cosine similarity; ties break toward lower class index.
double zero_shot_eval(const ParamVector& params, const ModelConfig& config, const Task& task,
                      int top_k);

// One support-gradient projection on an episode, then top-1 classification
// of the episode query with the adapted parameters.
double few_shot_eval_gradient(const ParamVector& theta, const ModelConfig& config,
                              const Task& task, int k_shots, double lr_base, std::uint64_t seed);

// Nearest-class-mean over support embeddings, cosine distance, top-1.
double few_shot_eval_ncm(const ParamVector& params, const ModelConfig& config, const Task& task,
                         int k_shots, std::uint64_t seed);

// Zero-shot + both few-shot protocols for every task in `eval_tasks`.
std::vector<EvalRecord> evaluate_sweep(const ParamVector& params, const ModelConfig& config,
                                       const std::vector<const Task*>& eval_tasks,
                                       const std::string& method, int stage, int top_k,
                                       const HyperParams& hyper, std::uint64_t seed);

struct BaselineResult {
    std::vector<ParamVector> trajectory;  // theta after each stage (index 0 = initial)
    ResultLedger ledger;
};

// Sequentially minimizes the plain loss of each stream task with lr_meta for
// epochs_expand epochs, no regularizers, evaluating after every stage.
BaselineResult run_finetune_baseline(const ParamVector& theta, const std::vector<Task>& stream,
                                     const std::vector<const Task*>& eval_tasks,
                                     const ModelConfig& config, const HyperParams& hyper,
                                     int top_k, std::uint64_t seed);

// Minimizes the mean loss over all tasks simultaneously; needs >= 2 tasks.
BaselineResult run_joint_baseline(const ParamVector& theta, const std::vector<Task>& tasks,
                                  const std::vector<const Task*>& eval_tasks,
                                  const ModelConfig& config, const HyperParams& hyper, int top_k,
                                  std::uint64_t seed);

// Positive/negative split means of a delta set. Deltas >= 0 average into
// pos; deltas < 0 average into neg (reported negative). An empty side is 0.
std::pair<double, double> split_bwt(const std::vector<double>& deltas);

// Which earlier record a stage compares against: below own_method_from_stage
// the baseline method's previous stage, from it onward the method's own
// previous stage.
struct ComparisonPolicy {
    std::string baseline_method = "finetune";
    int own_method_from_stage = 2;

    // (method, stage) of the comparison records for an evaluation at `stage`.
    std::pair<std::string, int> compare_against(const std::string& method, int stage) const;
};

struct BwtEntry {
    std::string method;
    int stage = 0;
    double pos_zs = 0.0, neg_zs = 0.0;
    double pos_fs_grad = 0.0, neg_fs_grad = 0.0;
    double pos_fs_ncm = 0.0, neg_fs_ncm = 0.0;
};

// Per (method, stage >= 1) backward-transfer split means over every task
// present at both the stage and its comparison stage. Throws when a
// comparison record is missing.
std::vector<BwtEntry> bwt_metrics(const ResultLedger& ledger, const ComparisonPolicy& policy);

}  // namespace snp
