#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "snp/memory_buffer.hpp"
#include "snp/model.hpp"
#include "snp/task_world.hpp"
#include "snp/telemetry.hpp"

namespace snp {

// Hyperparameters carry the paper-fidelity defaults; desk_scale() swaps in
// the sizes this artifact actually trains with.
struct HyperParams {
    int k_shots = 5;
    long epochs_train = 10000;
    long epochs_expand = 500;
    double lr_base = 0.0005;
    double lr_meta = 0.0005;
    double beta_meta = 0.5;
    double beta_base_default = 0.5;
    double beta_int_default = 1.0;
    int interpolation_samples = 1000;  // S
    std::vector<double> interpolation_coeffs = {0.0001, 0.001, 0.01, 0.1};  // I
    std::optional<double> epsilon = 0.001;
    bool disjoint_meta_batches = false;   // inner=support pool, outer=query pool
    bool adaptive_beta_per_epoch = false; // default: once per task, at task end

    static HyperParams desk_scale();
    void validate() const;
};

enum class Metric { Cosine, Euclidean };

struct DriftSample {
    int sample = 0;     // s
    double coeff = 0.0; // r
    double dist_meta = 0.0;
    double dist_base = 0.0;
};

struct DriftProfile {
    std::vector<DriftSample> entries;
    Metric metric = Metric::Cosine;

    // Largest dist_meta whose dist_base stays within eps; nullopt when no
    // entry qualifies.
    std::optional<double> radius_estimate(double eps) const;
};

// K-shot support batches in task order; throws naming the task that cannot
// produce one.
std::vector<Batch> support_batches(const std::vector<Task>& tasks, int k_shots);

// theta_base_t = theta - lr_base * grad(loss(theta; support_t)), one per task.
std::vector<ParamVector> base_params(const ParamVector& theta, const std::vector<Batch>& supports,
                                     const ModelConfig& config, double lr_base);
std::vector<ParamVector> base_params(const ParamVector& theta, const std::vector<Task>& tasks,
                                     const ModelConfig& config, int k_shots, double lr_base);

// One inner gradient step on `inner`, then loss and gradient on `outer` at
// the adapted point. The returned gradient is the first-order meta gradient:
// the inner step is treated as constant.
template <typename InnerFn, typename OuterFn>
LossGrad first_order_meta(const ParamVector& theta, InnerFn&& inner, OuterFn&& outer,
                          double lr_base) {
    const LossGrad in = inner(theta);
    const ParamVector adapted = sgd_step(theta, in.grad, lr_base);
    return outer(adapted);
}

LossGrad meta_step_loss(const ParamVector& theta, const ModelConfig& config, const Batch& inner,
                        const Batch& outer, double lr_base);
LossGrad task_meta_loss(const ParamVector& theta, const ModelConfig& config, const Task& task,
                        double lr_base, bool disjoint = false);

// S fresh random initializations; for each coefficient r in hyper the
// interpolated parameters are measured against theta (dist_meta) and their
// projections against base_ref (dist_base, summed over tasks). theta_rand
// for sample s is init_params(config, seeds::derive(rng_seed, s)).
DriftProfile sample_drift_profile(const ParamVector& theta,
                                  const std::vector<ParamVector>& base_ref,
                                  const std::vector<Batch>& supports, const ModelConfig& config,
                                  const HyperParams& hyper, std::uint64_t rng_seed,
                                  Metric metric = Metric::Cosine);

// Instrumentation switches for the three update terms.
struct TrainControls {
    bool task_term = true;
    bool meta_term = true;
    bool base_term = true;
};

struct TrainResult {
    ParamVector theta;
    std::optional<MemoryBuffer> memory;
    DriftProfile final_profile;             // last epoch's profile (empty if never sampled)
    std::optional<double> final_radius;     // radius estimate from that profile
};

// Algorithm: per epoch, project base parameters, take per-task first-order
// meta losses, sample a drift profile, and apply
//   theta -= lr_meta * sum_t grad(L_task_t)
//          + beta_meta * grad(L_meta)
//          + grad(sum_t beta_base_t * per-task base drift)
// Distance-term gradients are first-order: loss gradients inside parameter
// maps are held constant, affine dependencies on theta are kept.
// The initialization is init_params(config, seeds::derive(seed, kModelInit));
// epoch e profiles with rng_seed = seeds::derive(seed, kDrift, e).
TrainResult train_space(const std::vector<Task>& tasks, const ModelConfig& config,
                        const HyperParams& hyper, bool store_memory, std::uint64_t seed,
                        Telemetry* telemetry = nullptr, const TrainControls& controls = {});

struct RadiusRecord {
    int task_id = 0;
    double euclidean = 0.0;
    double cosine = 0.0;
};

struct RadiusReport {
    std::vector<RadiusRecord> per_task;
    double max_euclidean = 0.0;  // radius estimate per metric
    double max_cosine = 0.0;
};

// Distance between theta and every task's base parameters, both metrics.
RadiusReport measure_subspace_radius(const ParamVector& theta, const std::vector<Task>& tasks,
                                     const ModelConfig& config, const HyperParams& hyper);

struct RecoveryReport {
    // drift(j, t): cosine distance between task t's base params recomputed
    // after drifting theta to task j's base params, and the originals.
    Eigen::MatrixXd drift;
    Eigen::VectorXd row_mean;
    Eigen::VectorXd row_max;
    double epsilon_estimate = 0.0;  // max over j of row_mean(j)
};

using Projector = std::function<std::vector<ParamVector>(const ParamVector&)>;
RecoveryReport recovery_from_projector(const ParamVector& theta, const Projector& project);
RecoveryReport recovery_check(const ParamVector& theta, const std::vector<Task>& tasks,
                              const ModelConfig& config, const HyperParams& hyper);

struct DriftCurvePoint {
    double r = 0.0;
    double mean_meta_cosine = 0.0;
    double mean_base_cosine = 0.0;
    double mean_meta_euclidean = 0.0;
    double mean_base_euclidean = 0.0;
};

// Mean drift per coefficient over `samples` random directions, in both
// metrics. r_grid must be ascending and inside [0, 1].
std::vector<DriftCurvePoint> interpolation_drift_curve(
    const ParamVector& theta, const std::vector<Task>& tasks, const ModelConfig& config,
    const HyperParams& hyper, const std::vector<double>& r_grid, int samples,
    std::uint64_t rng_seed);

}  // namespace snp
