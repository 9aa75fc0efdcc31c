#include "snp/meta_learner.hpp"

#include <cmath>
#include <string>

#include "snp/rng.hpp"

namespace snp {
namespace {

// One pass over S samples x |I| coefficients. Distances are always recorded
// in both metrics; gradients (first-order, accumulated in s, r, t order) are
// produced on request.
struct ProfilePass {
    std::vector<DriftSample> cosine_entries;
    std::vector<DriftSample> euclidean_entries;
    double l_meta = 0.0;  // cosine sums, the training loss terms
    double l_base = 0.0;
    Eigen::VectorXd grad_meta;           // d l_meta / d theta
    Eigen::VectorXd grad_base_weighted;  // d sum_t beta_t * drift_t / d theta
};

ProfilePass run_profile(const ParamVector& theta, const std::vector<ParamVector>& base_ref,
                        const std::vector<Batch>& supports, const std::vector<double>& betas,
                        const ModelConfig& config, double lr_base, int samples,
                        const std::vector<double>& coeffs, std::uint64_t rng_seed,
                        bool with_grads) {
    if (base_ref.size() != supports.size())
        throw ValueError("drift profile: base_ref and supports disagree in size");
    ProfilePass out;
    if (with_grads) {
        out.grad_meta = Eigen::VectorXd::Zero(theta.size());
        out.grad_base_weighted = Eigen::VectorXd::Zero(theta.size());
    }
    for (int s = 0; s < samples; ++s) {
        const ParamVector theta_rand =
            init_params(config, seeds::derive(rng_seed, static_cast<std::uint64_t>(s)));
        for (double r : coeffs) {
            const ParamVector theta_int = interpolate(theta, theta_rand, r);
            const double dm_cos = cosine_distance(theta, theta_int);
            const double dm_euc = euclidean_distance(theta, theta_int);
            const auto int_base = base_params(theta_int, supports, config, lr_base);
            double db_cos = 0.0, db_euc = 0.0;
            for (std::size_t t = 0; t < supports.size(); ++t) {
                db_cos += cosine_distance(base_ref[t], int_base[t]);
                db_euc += euclidean_distance(base_ref[t], int_base[t]);
            }
            out.cosine_entries.push_back({s, r, dm_cos, db_cos});
            out.euclidean_entries.push_back({s, r, dm_euc, db_euc});
            out.l_meta += dm_cos;
            out.l_base += db_cos;
            if (with_grads) {
                // theta_int depends on theta through the interpolation, so a
                // perturbation of theta moves it by (1 - r).
                const auto gm = cosine_distance_grad(theta, theta_int);
                out.grad_meta += gm.wrt_a + (1.0 - r) * gm.wrt_b;
                for (std::size_t t = 0; t < supports.size(); ++t) {
                    if (betas[t] == 0.0) continue;
                    const auto gb = cosine_distance_grad(base_ref[t], int_base[t]);
                    out.grad_base_weighted += betas[t] * (gb.wrt_a + (1.0 - r) * gb.wrt_b);
                }
            }
        }
    }
    return out;
}

}  // namespace

HyperParams HyperParams::desk_scale() {
    HyperParams h;
    h.epochs_train = 2000;
    h.epochs_expand = 1000;
    h.interpolation_samples = 8;
    h.lr_meta = 0.01;
    h.lr_base = 0.004;
    return h;
}

void HyperParams::validate() const {
    if (k_shots < 1) throw ValueError("HyperParams: K must be >= 1");
    if (epochs_train < 0 || epochs_expand < 0)
        throw ValueError("HyperParams: epoch counts must be nonnegative");
    if (lr_base < 0.0 || lr_meta < 0.0) throw ValueError("HyperParams: learning rates must be >= 0");
    if (beta_meta < 0.0 || beta_base_default < 0.0 || beta_int_default < 0.0)
        throw ValueError("HyperParams: betas must be >= 0");
    if (interpolation_samples < 1) throw ValueError("HyperParams: S must be >= 1");
    if (interpolation_coeffs.empty()) throw ValueError("HyperParams: I must not be empty");
    for (double r : interpolation_coeffs)
        if (r < 0.0 || r > 1.0) throw ValueError("HyperParams: coefficients must be in [0, 1]");
    if (epsilon && *epsilon <= 0.0) throw ValueError("HyperParams: epsilon must be positive");
}

std::optional<double> DriftProfile::radius_estimate(double eps) const {
    std::optional<double> best;
    for (const auto& e : entries)
        if (e.dist_base <= eps && (!best || e.dist_meta > *best)) best = e.dist_meta;
    return best;
}

std::vector<Batch> support_batches(const std::vector<Task>& tasks, int k_shots) {
    std::vector<Batch> out;
    out.reserve(tasks.size());
    for (const auto& t : tasks) out.push_back(t.support_batch(k_shots));
    return out;
}

std::vector<ParamVector> base_params(const ParamVector& theta, const std::vector<Batch>& supports,
                                     const ModelConfig& config, double lr_base) {
    std::vector<ParamVector> out;
    out.reserve(supports.size());
    for (const auto& s : supports)
        out.push_back(sgd_step(theta, loss_and_grad(theta, config, s).grad, lr_base));
    return out;
}

std::vector<ParamVector> base_params(const ParamVector& theta, const std::vector<Task>& tasks,
                                     const ModelConfig& config, int k_shots, double lr_base) {
    return base_params(theta, support_batches(tasks, k_shots), config, lr_base);
}

LossGrad meta_step_loss(const ParamVector& theta, const ModelConfig& config, const Batch& inner,
                        const Batch& outer, double lr_base) {
    return first_order_meta(
        theta, [&](const ParamVector& p) { return loss_and_grad(p, config, inner); },
        [&](const ParamVector& p) { return loss_and_grad(p, config, outer); }, lr_base);
}

LossGrad task_meta_loss(const ParamVector& theta, const ModelConfig& config, const Task& task,
                        double lr_base, bool disjoint) {
    const Batch inner = task.train_batch();
    const Batch outer = disjoint ? task.query_batch() : inner;
    return meta_step_loss(theta, config, inner, outer, lr_base);
}

DriftProfile sample_drift_profile(const ParamVector& theta,
                                  const std::vector<ParamVector>& base_ref,
                                  const std::vector<Batch>& supports, const ModelConfig& config,
                                  const HyperParams& hyper, std::uint64_t rng_seed,
                                  Metric metric) {
    hyper.validate();
    ProfilePass pass = run_profile(theta, base_ref, supports, {}, config, hyper.lr_base,
                                   hyper.interpolation_samples, hyper.interpolation_coeffs,
                                   rng_seed, false);
    DriftProfile profile;
    profile.metric = metric;
    profile.entries = metric == Metric::Cosine ? std::move(pass.cosine_entries)
                                               : std::move(pass.euclidean_entries);
    return profile;
}

TrainResult train_space(const std::vector<Task>& tasks, const ModelConfig& config,
                        const HyperParams& hyper, bool store_memory, std::uint64_t seed,
                        Telemetry* telemetry, const TrainControls& controls) {
    hyper.validate();
    if (tasks.empty()) throw ValueError("train_space: at least one task required");

    const auto supports = support_batches(tasks, hyper.k_shots);
    ParamVector theta = init_params(config, seeds::derive(seed, seeds::kModelInit));

    TrainResult result;
    if (store_memory) {
        MemoryBuffer memory;
        for (std::size_t t = 0; t < tasks.size(); ++t)
            memory.register_task(tasks[t].task_id, supports[t], hyper.beta_base_default);
        result.memory = std::move(memory);
    }

    const std::vector<double> betas(tasks.size(), hyper.beta_base_default);
    const bool base_active = controls.base_term && hyper.beta_base_default != 0.0;
    const bool meta_active = controls.meta_term && hyper.beta_meta != 0.0;
    const bool need_profile = base_active || meta_active;

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(theta.size());
    for (long epoch = 0; epoch < hyper.epochs_train; ++epoch) {
        try {
            const auto base_ref = base_params(theta, supports, config, hyper.lr_base);

            Eigen::VectorXd task_sum = zero;
            std::vector<double> task_losses;
            for (const auto& task : tasks) {
                const LossGrad ml =
                    task_meta_loss(theta, config, task, hyper.lr_base, hyper.disjoint_meta_batches);
                task_losses.push_back(ml.loss);
                task_sum += ml.grad.values();
            }

            ProfilePass profile;
            if (need_profile)
                profile = run_profile(theta, base_ref, supports, betas, config, hyper.lr_base,
                                      hyper.interpolation_samples, hyper.interpolation_coeffs,
                                      seeds::derive(seed, seeds::kDrift,
                                                    static_cast<std::uint64_t>(epoch)),
                                      true);

            const Eigen::VectorXd term_task =
                controls.task_term ? Eigen::VectorXd(hyper.lr_meta * task_sum) : zero;
            const Eigen::VectorXd term_meta =
                meta_active && need_profile ? Eigen::VectorXd(hyper.beta_meta * profile.grad_meta)
                                            : zero;
            const Eigen::VectorXd term_base =
                base_active && need_profile ? profile.grad_base_weighted : zero;
            theta.values() -= term_task + term_meta + term_base;
            if (!theta.all_finite())
                throw DivergenceError("train_space: parameters diverged", epoch);

            if (telemetry) {
                nlohmann::json rec{{"event", "train_epoch"},
                                   {"epoch", epoch},
                                   {"task_losses", task_losses}};
                if (need_profile) {
                    rec["l_meta"] = profile.l_meta;
                    rec["l_base"] = profile.l_base;
                    DriftProfile p;
                    p.entries = profile.cosine_entries;
                    const auto radius = hyper.epsilon ? p.radius_estimate(*hyper.epsilon)
                                                      : std::nullopt;
                    rec["radius"] = radius ? nlohmann::json(*radius) : nlohmann::json(nullptr);
                } else {
                    rec["l_meta"] = nullptr;
                    rec["l_base"] = nullptr;
                    rec["radius"] = nullptr;
                }
                telemetry->emit(rec);
            }

            if (epoch + 1 == hyper.epochs_train && need_profile) {
                result.final_profile.entries = std::move(profile.cosine_entries);
                result.final_profile.metric = Metric::Cosine;
            }
        } catch (const NumericError& e) {
            throw DivergenceError(std::string("train_space: ") + e.what(), epoch);
        }
    }

    if (!result.final_profile.entries.empty() && hyper.epsilon)
        result.final_radius = result.final_profile.radius_estimate(*hyper.epsilon);
    result.theta = std::move(theta);
    return result;
}

RadiusReport measure_subspace_radius(const ParamVector& theta, const std::vector<Task>& tasks,
                                     const ModelConfig& config, const HyperParams& hyper) {
    const auto base = base_params(theta, tasks, config, hyper.k_shots, hyper.lr_base);
    RadiusReport report;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        RadiusRecord rec;
        rec.task_id = tasks[t].task_id;
        rec.euclidean = euclidean_distance(theta, base[t]);
        rec.cosine = cosine_distance(theta, base[t]);
        report.max_euclidean = std::max(report.max_euclidean, rec.euclidean);
        report.max_cosine = std::max(report.max_cosine, rec.cosine);
        report.per_task.push_back(rec);
    }
    return report;
}

RecoveryReport recovery_from_projector(const ParamVector& theta, const Projector& project) {
    const auto base = project(theta);
    const Eigen::Index n = static_cast<Eigen::Index>(base.size());
    RecoveryReport report;
    report.drift.resize(n, n);
    report.row_mean.resize(n);
    report.row_max.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto recomputed = project(base[static_cast<std::size_t>(j)]);
        for (Eigen::Index t = 0; t < n; ++t)
            report.drift(j, t) = cosine_distance(recomputed[static_cast<std::size_t>(t)],
                                                 base[static_cast<std::size_t>(t)]);
        report.row_mean[j] = report.drift.row(j).mean();
        report.row_max[j] = report.drift.row(j).maxCoeff();
    }
    report.epsilon_estimate = n > 0 ? report.row_mean.maxCoeff() : 0.0;
    return report;
}

RecoveryReport recovery_check(const ParamVector& theta, const std::vector<Task>& tasks,
                              const ModelConfig& config, const HyperParams& hyper) {
    const auto supports = support_batches(tasks, hyper.k_shots);
    return recovery_from_projector(theta, [&](const ParamVector& p) {
        return base_params(p, supports, config, hyper.lr_base);
    });
}

std::vector<DriftCurvePoint> interpolation_drift_curve(
    const ParamVector& theta, const std::vector<Task>& tasks, const ModelConfig& config,
    const HyperParams& hyper, const std::vector<double>& r_grid, int samples,
    std::uint64_t rng_seed) {
    if (r_grid.empty()) throw ValueError("interpolation_drift_curve: empty r grid");
    for (std::size_t i = 0; i + 1 < r_grid.size(); ++i)
        if (r_grid[i] > r_grid[i + 1])
            throw ValueError("interpolation_drift_curve: r grid must be ascending");
    if (samples < 1) throw ValueError("interpolation_drift_curve: samples must be >= 1");

    const auto supports = support_batches(tasks, hyper.k_shots);
    const auto base_ref = base_params(theta, supports, config, hyper.lr_base);
    const ProfilePass pass = run_profile(theta, base_ref, supports, {}, config, hyper.lr_base,
                                         samples, r_grid, rng_seed, false);

    std::vector<DriftCurvePoint> curve;
    const std::size_t n_r = r_grid.size();
    for (std::size_t k = 0; k < n_r; ++k) {
        DriftCurvePoint p;
        p.r = r_grid[k];
        for (int s = 0; s < samples; ++s) {
            const auto& ce = pass.cosine_entries[static_cast<std::size_t>(s) * n_r + k];
            const auto& ee = pass.euclidean_entries[static_cast<std::size_t>(s) * n_r + k];
            p.mean_meta_cosine += ce.dist_meta;
            p.mean_base_cosine += ce.dist_base;
            p.mean_meta_euclidean += ee.dist_meta;
            p.mean_base_euclidean += ee.dist_base;
        }
        p.mean_meta_cosine /= samples;
        p.mean_base_cosine /= samples;
        p.mean_meta_euclidean /= samples;
        p.mean_base_euclidean /= samples;
        curve.push_back(p);
    }
    return curve;
}

}  // namespace snp
