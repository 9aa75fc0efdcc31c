#include "snp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>

#include "snp/rng.hpp"

namespace snp {
namespace {

// Hit when fewer than k classes rank strictly better; equal logits rank by
// lower class index.
bool topk_hit(const Eigen::RowVectorXd& logits, int truth, int k) {
    int better = 0;
    for (Eigen::Index c = 0; c < logits.size(); ++c) {
        if (c == truth) continue;
        if (logits[c] > logits[truth] || (logits[c] == logits[truth] && c < truth)) ++better;
    }
    return better < k;
}

double topk_accuracy(const Eigen::MatrixXd& logits, const std::vector<int>& labels, int k) {
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
        if (topk_hit(logits.row(i), labels[static_cast<std::size_t>(i)], k)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

void step_plain(ParamVector& theta, const ModelConfig& config, const Batch& batch, double lr,
                long epoch) {
    try {
        const LossGrad lg = loss_and_grad(theta, config, batch);
        theta = sgd_step(theta, lg.grad, lr);
        if (!theta.all_finite()) throw DivergenceError("baseline: parameters diverged", epoch);
    } catch (const NumericError& e) {
        throw DivergenceError(std::string("baseline: ") + e.what(), epoch);
    }
}

}  // namespace

void ResultLedger::add(EvalRecord record) {
    if (record.zs_topk < 0.0 || record.zs_topk > 1.0 || record.fs_grad < 0.0 ||
        record.fs_grad > 1.0 || record.fs_ncm < 0.0 || record.fs_ncm > 1.0)
        throw ValueError("ResultLedger: accuracies must be in [0, 1]");
    if (has(record.method, record.stage, record.eval_task))
        throw ValueError("ResultLedger: duplicate record for method=" + record.method +
                         " stage=" + std::to_string(record.stage) +
                         " task=" + std::to_string(record.eval_task));
    records_.push_back(std::move(record));
}

bool ResultLedger::has(const std::string& method, int stage, int eval_task) const {
    for (const auto& r : records_)
        if (r.method == method && r.stage == stage && r.eval_task == eval_task) return true;
    return false;
}

const EvalRecord& ResultLedger::find(const std::string& method, int stage, int eval_task) const {
    for (const auto& r : records_)
        if (r.method == method && r.stage == stage && r.eval_task == eval_task) return r;
    throw ValueError("ResultLedger: no record for method=" + method +
                     " stage=" + std::to_string(stage) + " task=" + std::to_string(eval_task));
}

std::vector<int> ResultLedger::stages_of(const std::string& method) const {
    std::set<int> stages;
    for (const auto& r : records_)
        if (r.method == method) stages.insert(r.stage);
    return {stages.begin(), stages.end()};
}

std::vector<int> ResultLedger::tasks_at(const std::string& method, int stage) const {
    std::set<int> tasks;
    for (const auto& r : records_)
        if (r.method == method && r.stage == stage) tasks.insert(r.eval_task);
    return {tasks.begin(), tasks.end()};
}

void ResultLedger::merge(const ResultLedger& other) {
    for (const auto& r : other.records_) add(r);
}

void ResultLedger::write_csv(std::ostream& out) const {
    out << "method,stage,eval_task,zs_topk,fs_grad,fs_ncm\n";
    out << std::setprecision(12);
    for (const auto& r : records_)
        out << r.method << ',' << r.stage << ',' << r.eval_task << ',' << r.zs_topk << ','
            << r.fs_grad << ',' << r.fs_ncm << '\n';
}

double zero_shot_eval(const ParamVector& params, const ModelConfig& config, const Task& task,
                      int top_k) {
    if (top_k < 1 || top_k > task.class_count)
        throw ValueError("zero_shot_eval: top_k out of range");
    const Batch query = task.query_batch();
    const Eigen::MatrixXd logits = forward_logits(params, config, query);
    return topk_accuracy(logits, query.labels, top_k);
}

double few_shot_eval_gradient(const ParamVector& theta, const ModelConfig& config,
                              const Task& task, int k_shots, double lr_base, std::uint64_t seed) {
    const auto [support, query] = episode_sampler(task, task.class_count, k_shots, seed);
    const ParamVector adapted =
        sgd_step(theta, loss_and_grad(theta, config, support).grad, lr_base);
    const Eigen::MatrixXd logits = forward_logits(adapted, config, query);
    return topk_accuracy(logits, query.labels, 1);
}

double few_shot_eval_ncm(const ParamVector& params, const ModelConfig& config, const Task& task,
                         int k_shots, std::uint64_t seed) {
    const auto [support, query] = episode_sampler(task, task.class_count, k_shots, seed);
    const Eigen::MatrixXd support_emb = embed_inputs(params, config, support.inputs);
    const Eigen::Index classes = support.class_count();

    Eigen::MatrixXd means = Eigen::MatrixXd::Zero(classes, support_emb.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(classes);
    for (Eigen::Index i = 0; i < support_emb.rows(); ++i) {
        means.row(support.labels[static_cast<std::size_t>(i)]) += support_emb.row(i);
        counts[support.labels[static_cast<std::size_t>(i)]] += 1.0;
    }
    means.array().colwise() /= counts.array();

    const Eigen::MatrixXd query_emb = embed_inputs(params, config, query.inputs);
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < query_emb.rows(); ++i) {
        int best = 0;
        double best_d = cosine_distance(Eigen::VectorXd(query_emb.row(i)),
                                        Eigen::VectorXd(means.row(0)));
        for (Eigen::Index c = 1; c < classes; ++c) {
            const double d = cosine_distance(Eigen::VectorXd(query_emb.row(i)),
                                             Eigen::VectorXd(means.row(c)));
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        if (best == query.labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(query_emb.rows());
}

std::vector<EvalRecord> evaluate_sweep(const ParamVector& params, const ModelConfig& config,
                                       const std::vector<const Task*>& eval_tasks,
                                       const std::string& method, int stage, int top_k,
                                       const HyperParams& hyper, std::uint64_t seed) {
    std::vector<EvalRecord> out;
    for (const Task* task : eval_tasks) {
        EvalRecord r;
        r.method = method;
        r.stage = stage;
        r.eval_task = task->task_id;
        r.zs_topk = zero_shot_eval(params, config, *task, std::min(top_k, task->class_count));
        const std::uint64_t base =
            seeds::derive(seed, seeds::kEval, static_cast<std::uint64_t>(task->task_id) * 2 + 1);
        r.fs_grad = few_shot_eval_gradient(params, config, *task, hyper.k_shots, hyper.lr_base,
                                           base);
        r.fs_ncm = few_shot_eval_ncm(params, config, *task, hyper.k_shots, base);
        out.push_back(std::move(r));
    }
    return out;
}

BaselineResult run_finetune_baseline(const ParamVector& theta, const std::vector<Task>& stream,
                                     const std::vector<const Task*>& eval_tasks,
                                     const ModelConfig& config, const HyperParams& hyper,
                                     int top_k, std::uint64_t seed) {
    hyper.validate();
    BaselineResult result;
    ParamVector th = theta;
    result.trajectory.push_back(th);
    // one episode seed for every stage so per-task comparisons are paired
    const std::uint64_t eval_seed = seeds::derive(seed, 0);
    for (const auto& r :
         evaluate_sweep(th, config, eval_tasks, "finetune", 0, top_k, hyper, eval_seed))
        result.ledger.add(r);

    int stage = 0;
    for (const auto& task : stream) {
        ++stage;
        const Batch batch = task.train_batch();
        for (long epoch = 0; epoch < hyper.epochs_expand; ++epoch)
            step_plain(th, config, batch, hyper.lr_meta, epoch);
        result.trajectory.push_back(th);
        for (const auto& r :
             evaluate_sweep(th, config, eval_tasks, "finetune", stage, top_k, hyper, eval_seed))
            result.ledger.add(r);
    }
    return result;
}

BaselineResult run_joint_baseline(const ParamVector& theta, const std::vector<Task>& tasks,
                                  const std::vector<const Task*>& eval_tasks,
                                  const ModelConfig& config, const HyperParams& hyper, int top_k,
                                  std::uint64_t seed) {
    hyper.validate();
    if (tasks.size() < 2) throw ValueError("run_joint_baseline: needs at least 2 tasks");
    BaselineResult result;
    ParamVector th = theta;
    result.trajectory.push_back(th);
    const std::uint64_t eval_seed = seeds::derive(seed, 0);
    for (const auto& r :
         evaluate_sweep(th, config, eval_tasks, "joint", 0, top_k, hyper, eval_seed))
        result.ledger.add(r);

    std::vector<Batch> batches;
    for (const auto& t : tasks) batches.push_back(t.train_batch());
    const double inv = 1.0 / static_cast<double>(tasks.size());
    for (long epoch = 0; epoch < hyper.epochs_expand; ++epoch) {
        try {
            Eigen::VectorXd grad = Eigen::VectorXd::Zero(th.size());
            for (const auto& b : batches) grad += loss_and_grad(th, config, b).grad.values();
            th.values() -= hyper.lr_meta * (inv * grad);
            if (!th.all_finite()) throw DivergenceError("joint: parameters diverged", epoch);
        } catch (const NumericError& e) {
            throw DivergenceError(std::string("joint: ") + e.what(), epoch);
        }
    }
    result.trajectory.push_back(th);
    const int stage = static_cast<int>(tasks.size());
    for (const auto& r :
         evaluate_sweep(th, config, eval_tasks, "joint", stage, top_k, hyper, eval_seed))
        result.ledger.add(r);
    return result;
}

std::pair<double, double> split_bwt(const std::vector<double>& deltas) {
    double pos = 0.0, neg = 0.0;
    int n_pos = 0, n_neg = 0;
    for (double d : deltas) {
        if (d >= 0.0) {
            pos += d;
            ++n_pos;
        } else {
            neg += d;
            ++n_neg;
        }
    }
    return {n_pos ? pos / n_pos : 0.0, n_neg ? neg / n_neg : 0.0};
}

std::pair<std::string, int> ComparisonPolicy::compare_against(const std::string& method,
                                                              int stage) const {
    if (stage < 1) throw ValueError("ComparisonPolicy: no comparison before stage 1");
    if (stage >= own_method_from_stage) return {method, stage - 1};
    return {baseline_method, stage - 1};
}

std::vector<BwtEntry> bwt_metrics(const ResultLedger& ledger, const ComparisonPolicy& policy) {
    std::set<std::string> methods;
    for (const auto& r : ledger.records()) methods.insert(r.method);

    std::vector<BwtEntry> out;
    for (const auto& method : methods) {
        for (int stage : ledger.stages_of(method)) {
            if (stage < 1) continue;
            const auto [cmp_method, cmp_stage] = policy.compare_against(method, stage);
            std::vector<double> d_zs, d_fsg, d_ncm;
            for (int task : ledger.tasks_at(method, stage)) {
                const auto& cur = ledger.find(method, stage, task);
                const auto& ref = ledger.find(cmp_method, cmp_stage, task);  // throws if absent
                d_zs.push_back(cur.zs_topk - ref.zs_topk);
                d_fsg.push_back(cur.fs_grad - ref.fs_grad);
                d_ncm.push_back(cur.fs_ncm - ref.fs_ncm);
            }
            BwtEntry e;
            e.method = method;
            e.stage = stage;
            std::tie(e.pos_zs, e.neg_zs) = split_bwt(d_zs);
            std::tie(e.pos_fs_grad, e.neg_fs_grad) = split_bwt(d_fsg);
            std::tie(e.pos_fs_ncm, e.neg_fs_ncm) = split_bwt(d_ncm);
            out.push_back(std::move(e));
        }
    }
    return out;
}

}  // namespace snp
