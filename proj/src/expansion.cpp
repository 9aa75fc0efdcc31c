#include "snp/expansion.hpp"

#include <cmath>
#include <string>

#include "snp/rng.hpp"

namespace snp {
namespace {

constexpr double kClampFactor = 100.0;

ParamVector project_support(const ParamVector& theta, const ModelConfig& config,
                            const Batch& support, double lr_base) {
    return sgd_step(theta, loss_and_grad(theta, config, support).grad, lr_base);
}

std::vector<std::pair<int, ParamVector>> reference_projections(const ParamVector& theta,
                                                               const MemoryBuffer& memory,
                                                               const ModelConfig& config,
                                                               double lr_base) {
    std::vector<std::pair<int, ParamVector>> refs;
    refs.reserve(memory.size());
    for (const auto& e : memory.entries())
        refs.emplace_back(e.task_id, project_support(theta, config, e.support, lr_base));
    return refs;
}

// Candidate at an exact cosine drift from theta: rotate theta toward a random
// orthogonal direction, keeping its norm.
ParamVector drifted_candidate(const ParamVector& theta, double magnitude, Rng& rng) {
    if (magnitude <= 0.0 || magnitude > 2.0)
        throw ValueError("mode_switch: drift magnitudes must be in (0, 2]");
    const Eigen::Index n = theta.size();
    Eigen::VectorXd dir(n);
    for (Eigen::Index i = 0; i < n; ++i) dir[i] = rng.next_normal();
    const double tn = theta.values().norm();
    const Eigen::VectorXd that = theta.values() / tn;
    Eigen::VectorXd perp = dir - dir.dot(that) * that;
    double pn = perp.norm();
    while (pn == 0.0) {
        for (Eigen::Index i = 0; i < n; ++i) dir[i] = rng.next_normal();
        perp = dir - dir.dot(that) * that;
        pn = perp.norm();
    }
    const double cos = 1.0 - magnitude;
    const double sin = std::sqrt(std::max(0.0, 1.0 - cos * cos));
    return {theta.layout_ptr(), tn * (cos * that + sin * (perp / pn))};
}

}  // namespace

double adaptive_beta(double beta_meta, double dist_meta_v, std::optional<double> epsilon,
                     const DriftProfile& profile, const RecoveryReport* recovery,
                     Telemetry* telemetry, int task_id) {
    if (beta_meta < 0.0) throw ValueError("adaptive_beta: beta_meta must be >= 0");
    if (dist_meta_v < 0.0) throw ValueError("adaptive_beta: dist_meta_v must be >= 0");
    double eps;
    if (epsilon) {
        eps = *epsilon;
    } else {
        if (!recovery)
            throw ValueError("adaptive_beta: epsilon absent and no recovery data to estimate it");
        eps = recovery->epsilon_estimate;
    }

    const auto radius = profile.radius_estimate(eps);
    if (!radius) throw RadiusUnresolvedError("adaptive_beta: radius unresolved");
    const double dist_meta = *radius;

    const double beta_max = kClampFactor * beta_meta;
    double out;
    bool clamped;
    if (dist_meta_v >= dist_meta) {
        out = beta_max;
        clamped = true;
    } else {
        out = std::max(beta_meta, beta_meta * dist_meta / (dist_meta - dist_meta_v));
        clamped = out > beta_max;
        if (clamped) out = beta_max;
    }
    if (telemetry)
        telemetry->emit({{"event", "adaptive_beta"},
                         {"task", task_id},
                         {"before", beta_meta},
                         {"after", out},
                         {"dist_meta_v", dist_meta_v},
                         {"radius", dist_meta},
                         {"epsilon", eps},
                         {"clamped", clamped}});
    return out;
}

int nearest_subnetwork(const ParamVector& candidate,
                       const std::vector<std::pair<int, ParamVector>>& references) {
    if (references.empty()) throw ValueError("nearest_subnetwork: no references");
    int best_id = 0;
    double best = -1.0;
    bool first = true;
    for (const auto& [task_id, params] : references) {
        const double d = cosine_distance(candidate, params);
        if (first || d < best || (d == best && task_id < best_id)) {
            best = d;
            best_id = task_id;
            first = false;
        }
    }
    return best_id;
}

MemoryBuffer remove_subnetwork(MemoryBuffer memory, int task_id, double residual_beta,
                               Telemetry* telemetry) {
    if (residual_beta < 0.0 || residual_beta >= 1.0)
        throw ValueError("remove_subnetwork: residual_beta must be in [0, 1)");
    memory.set_beta(task_id, residual_beta);
    if (telemetry)
        telemetry->emit({{"event", "remove_subnetwork"},
                         {"task", task_id},
                         {"residual_beta", residual_beta}});
    return memory;
}

ExpandResult expand_space(const ParamVector& theta, const std::vector<Task>& new_tasks,
                          const std::optional<MemoryBuffer>& memory, const ModelConfig& config,
                          const ExpansionConfig& expansion, std::uint64_t seed,
                          Telemetry* telemetry) {
    const HyperParams& hyper = expansion.hyper;
    hyper.validate();

    const bool has_memory = memory.has_value();
    if (!has_memory && expansion.mode != ExpansionMode::Snp)
        throw ValueError("expand_space: this mode needs a memory buffer");
    if (has_memory && expansion.mode == ExpansionMode::Snp)
        throw ValueError("expand_space: snp mode runs without memory");
    const bool interpolating = expansion.mode == ExpansionMode::SnpInterpolate;
    if (interpolating && memory->size() == 0)
        throw ValueError("expand_space: interpolate mode needs a nonempty memory");

    ExpandResult result;
    result.theta = theta;
    result.memory = memory;
    double beta_meta = hyper.beta_meta;

    if (expansion.mode == ExpansionMode::SnpRemove) {
        if (!expansion.remove_task_id)
            throw ValueError("expand_space: remove mode needs remove_task_id");
        result.memory = remove_subnetwork(std::move(*result.memory), *expansion.remove_task_id,
                                          expansion.remove_residual_beta, telemetry);
    }

    // Fixed reference projections, computed once at entry from the
    // stored support sets.
    std::vector<std::pair<int, ParamVector>> refs;
    if (has_memory)
        refs = reference_projections(theta, *result.memory, config, hyper.lr_base);

    // Radius inputs for adaptive_beta (skipped entirely when beta_meta == 0:
    // max(0, 0 * ratio) can never leave zero).
    const bool adapt = beta_meta > 0.0;
    DriftProfile profile;
    std::optional<RecoveryReport> recovery;
    std::optional<double> eps = hyper.epsilon;
    if (adapt) {
        if (expansion.radius_profile) {
            profile = *expansion.radius_profile;
        } else if (has_memory) {
            std::vector<Batch> supports;
            std::vector<ParamVector> base_ref;
            for (std::size_t i = 0; i < refs.size(); ++i) {
                supports.push_back(result.memory->entries()[i].support);
                base_ref.push_back(refs[i].second);
            }
            profile = sample_drift_profile(theta, base_ref, supports, config, hyper,
                                           seeds::derive(seed, seeds::kDrift));
        } else {
            throw ValueError("expand_space: no radius profile available for a memoryless run");
        }
        if (!eps) {
            if (!has_memory)
                throw ValueError("expand_space: epsilon absent and no memory to estimate it");
            std::vector<Batch> supports;
            for (const auto& e : result.memory->entries()) supports.push_back(e.support);
            recovery = recovery_from_projector(theta, [&](const ParamVector& p) {
                return base_params(p, supports, config, hyper.lr_base);
            });
        }
    }

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(theta.size());
    for (const auto& task : new_tasks) {
        const ParamVector theta_snapshot = result.theta;
        const std::optional<MemoryBuffer> memory_snapshot = result.memory;
        const double beta_snapshot = beta_meta;

        TaskExpansionRecord rec;
        rec.task_id = task.task_id;
        rec.beta_meta_before = beta_meta;
        const Batch new_support = task.support_batch(hyper.k_shots);

        try {
            std::optional<int> target;
            double last_dist_meta_v = 0.0;
            bool have_dist = false;
            for (long epoch = 0; epoch < hyper.epochs_expand; ++epoch) {
                try {
                    ParamVector& th = result.theta;
                    const ParamVector proj_v = project_support(th, config, new_support,
                                                               hyper.lr_base);
                    if (interpolating && expansion.beta_int > 0.0)
                        target = nearest_subnetwork(proj_v, refs);

                    const LossGrad ml = task_meta_loss(th, config, task, hyper.lr_base,
                                                       hyper.disjoint_meta_batches);
                    const ParamVector successor = sgd_step(th, ml.grad, hyper.lr_meta);
                    const double dist_meta_v = cosine_distance(th, successor);

                    Eigen::VectorXd term_base = zero;
                    double l_base = 0.0;
                    if (has_memory) {
                        for (std::size_t t = 0; t < refs.size(); ++t) {
                            const auto& entry = result.memory->entries()[t];
                            double beta_t = entry.beta_base;
                            if (interpolating && target && entry.task_id == *target)
                                beta_t = 0.0;  // the target is allowed to move
                            if (beta_t == 0.0) continue;
                            const ParamVector fresh =
                                project_support(th, config, entry.support, hyper.lr_base);
                            const double d = cosine_distance(refs[t].second, fresh);
                            l_base += beta_t * d;
                            const auto g = cosine_distance_grad(refs[t].second, fresh);
                            term_base += beta_t * g.wrt_b;
                        }
                    }

                    Eigen::VectorXd term_int = zero;
                    std::optional<double> dist_int;
                    if (interpolating && target && expansion.beta_int > 0.0) {
                        const ParamVector proj_g = project_support(
                            th, config, result.memory->entry(*target).support, hyper.lr_base);
                        dist_int = cosine_distance(proj_v, proj_g);
                        const auto g = cosine_distance_grad(proj_v, proj_g);
                        term_int = expansion.beta_int * (g.wrt_a + g.wrt_b);
                    }

                    const auto gm = cosine_distance_grad(th.values(), successor.values());
                    const Eigen::VectorXd term_meta =
                        beta_meta != 0.0 ? Eigen::VectorXd(beta_meta * (gm.wrt_a + gm.wrt_b))
                                         : zero;
                    const Eigen::VectorXd term_task = hyper.lr_meta * ml.grad.values();

                    th.values() -= ((term_task + term_meta) + term_base) + term_int;
                    if (!th.all_finite())
                        throw DivergenceError("expand_space: parameters diverged", epoch);

                    last_dist_meta_v = dist_meta_v;
                    have_dist = true;
                    rec.epochs_run = epoch + 1;
                    rec.dist_meta_v = dist_meta_v;
                    rec.task_loss = ml.loss;
                    rec.l_base = l_base;
                    rec.l_int = dist_int;

                    if (hyper.adaptive_beta_per_epoch && adapt)
                        beta_meta = adaptive_beta(beta_meta, dist_meta_v, eps, profile,
                                                  recovery ? &*recovery : nullptr, telemetry,
                                                  task.task_id);

                    if (telemetry) {
                        nlohmann::json r{{"event", "expand_epoch"},
                                         {"task", task.task_id},
                                         {"epoch", epoch},
                                         {"task_loss", ml.loss},
                                         {"dist_meta_v", dist_meta_v},
                                         {"l_base", l_base},
                                         {"beta_meta", beta_meta}};
                        r["l_int"] = dist_int ? nlohmann::json(*dist_int) : nlohmann::json(nullptr);
                        telemetry->emit(r);
                    }
                } catch (const NumericError& e) {
                    throw DivergenceError(std::string("expand_space: ") + e.what(), epoch);
                }
            }

            if (adapt && !hyper.adaptive_beta_per_epoch && have_dist)
                beta_meta = adaptive_beta(beta_meta, last_dist_meta_v, eps, profile,
                                          recovery ? &*recovery : nullptr, telemetry,
                                          task.task_id);

            if (has_memory) {
                // beta_int == 0 leaves every interpolation branch inert, so the
                // task is added like any other.
                if (interpolating && expansion.beta_int > 0.0) {
                    if (!target)
                        target = nearest_subnetwork(
                            project_support(result.theta, config, new_support, hyper.lr_base),
                            refs);
                    result.memory->add_alias(task.task_id, *target);
                    rec.interpolation_target = target;
                } else {
                    result.memory->register_task(task.task_id, new_support,
                                                 hyper.beta_base_default);
                }
            }
            rec.beta_meta_after = beta_meta;
        } catch (const RadiusUnresolvedError&) {
            result.theta = theta_snapshot;
            result.memory = memory_snapshot;
            beta_meta = beta_snapshot;
            rec.aborted = true;
            rec.beta_meta_after = beta_meta;
            if (telemetry)
                telemetry->emit({{"event", "rollback"},
                                 {"task", task.task_id},
                                 {"reason", "radius_unresolved"}});
        }
        result.tasks.push_back(std::move(rec));
    }

    result.beta_meta_final = beta_meta;
    return result;
}

ExpandResult interpolate_subnetworks(const ParamVector& theta, const Task& new_task,
                                     const MemoryBuffer& memory, const ModelConfig& config,
                                     ExpansionConfig expansion, std::uint64_t seed,
                                     Telemetry* telemetry) {
    expansion.mode = ExpansionMode::SnpInterpolate;
    return expand_space(theta, {new_task}, memory, config, expansion, seed, telemetry);
}

ModeSwitchResult mode_switch(const ParamVector& theta, const MemoryBuffer& memory, int task_id,
                             const Task& task, const ModePredicate& predicate,
                             const SearchConfig& search, const ModelConfig& config,
                             const HyperParams& hyper, std::uint64_t seed, Telemetry* telemetry) {
    hyper.validate();
    if (!memory.has(task_id))
        throw ValueError("mode_switch: task " + std::to_string(task_id) + " not registered");
    if (search.drift_magnitudes.empty())
        throw ValueError("mode_switch: empty drift schedule");
    for (std::size_t i = 0; i + 1 < search.drift_magnitudes.size(); ++i)
        if (search.drift_magnitudes[i] > search.drift_magnitudes[i + 1])
            throw ValueError("mode_switch: drift schedule must be ascending");
    if (search.samples_per_magnitude < 1)
        throw ValueError("mode_switch: samples_per_magnitude must be >= 1");

    const Batch& stored = memory.entry(task_id).support;

    ModeSwitchResult result;
    std::optional<ParamVector> mode_base;
    for (double magnitude : search.drift_magnitudes) {
        for (int s = 0; s < search.samples_per_magnitude && !mode_base; ++s) {
            Rng rng(seeds::derive(seed, seeds::kModeSwitch,
                                  static_cast<std::uint64_t>(result.report.trials.size())));
            const ParamVector candidate = drifted_candidate(theta, magnitude, rng);
            const ParamVector base = project_support(candidate, config, stored, hyper.lr_base);
            const bool ok = predicate(base, task);
            result.report.trials.push_back(
                {magnitude, s, cosine_distance(theta, candidate), ok});
            if (telemetry)
                telemetry->emit({{"event", "mode_switch_trial"},
                                 {"task", task_id},
                                 {"magnitude", magnitude},
                                 {"sample", s},
                                 {"accepted", ok}});
            if (ok) {
                mode_base = base;
                result.report.found = true;
                result.report.found_magnitude = magnitude;
                result.report.found_sample = s;
            }
        }
        if (mode_base) break;
    }
    if (!mode_base) return result;

    // Regularized consolidation: pull the task's projection toward the found
    // mode while the remaining base parameters stay anchored to their
    // entry-time references.
    ParamVector th = theta;
    const auto refs = reference_projections(th, memory, config, hyper.lr_base);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(th.size());
    for (long epoch = 0; epoch < hyper.epochs_expand; ++epoch) {
        const ParamVector proj = project_support(th, config, stored, hyper.lr_base);
        const auto gt = cosine_distance_grad(proj, *mode_base);
        Eigen::VectorXd term_target = hyper.beta_int_default * gt.wrt_a;

        Eigen::VectorXd term_base = zero;
        for (std::size_t t = 0; t < refs.size(); ++t) {
            const auto& entry = memory.entries()[t];
            if (entry.task_id == task_id || entry.beta_base == 0.0) continue;
            const ParamVector fresh = project_support(th, config, entry.support, hyper.lr_base);
            const auto g = cosine_distance_grad(refs[t].second, fresh);
            term_base += entry.beta_base * g.wrt_b;
        }
        th.values() -= term_target + term_base;
        if (!th.all_finite())
            throw DivergenceError("mode_switch: consolidation diverged", epoch);
    }
    result.theta = std::move(th);
    return result;
}

ModePredicate flat_basin_predicate(const ModelConfig& config, double perturbation_scale,
                                   int perturbations, double factor, std::uint64_t seed) {
    if (perturbation_scale <= 0.0 || perturbations < 1 || factor <= 1.0)
        throw ValueError("flat_basin_predicate: bad parameters");
    return [=](const ParamVector& base, const Task& task) {
        const Batch batch = task.train_batch();
        const double baseline = loss_value(base, config, batch);
        const double norm = base.values().norm();
        for (int j = 0; j < perturbations; ++j) {
            Rng rng(seeds::derive(seed, static_cast<std::uint64_t>(j)));
            Eigen::VectorXd dir(base.size());
            for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = rng.next_normal();
            const double dn = dir.norm();
            if (dn == 0.0) continue;
            const ParamVector perturbed{base.layout_ptr(),
                                        base.values() + (perturbation_scale * norm / dn) * dir};
            if (loss_value(perturbed, config, batch) >= factor * baseline) return false;
        }
        return true;
    };
}

}  // namespace snp
