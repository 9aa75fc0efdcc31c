#include "snp/task_world.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "snp/rng.hpp"

namespace snp {
namespace {

Eigen::VectorXd draw_normal_vector(Rng& rng, int dim) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = rng.next_normal();
    return v;
}

Eigen::VectorXd draw_unit_vector(Rng& rng, int dim) {
    Eigen::VectorXd v = draw_normal_vector(rng, dim);
    double n = v.norm();
    while (n == 0.0) {  // astronomically unlikely, but keep the draw total
        v = draw_normal_vector(rng, dim);
        n = v.norm();
    }
    return v / n;
}

// Shift a unit mean along a random tangent direction and renormalize.
// A zero shift is an exact no-op so perfectly transferable tasks share
// bit-identical class means.
Eigen::VectorXd shift_mean(const Eigen::VectorXd& mean, double shift, Rng& rng) {
    const Eigen::VectorXd dir = draw_normal_vector(rng, static_cast<int>(mean.size()));
    if (shift == 0.0) return mean;
    Eigen::VectorXd tangent = dir - dir.dot(mean) * mean;
    const double n = tangent.norm();
    if (n == 0.0) return mean;
    return (mean + shift * (tangent / n)).normalized();
}

Task make_task(int task_id, const SuiteSpec& spec, const std::vector<Eigen::VectorXd>& means,
               const Eigen::MatrixXd* projector, std::uint64_t task_seed) {
    Rng rng(task_seed);
    const int n = spec.classes_per_task;

    Task task;
    task.task_id = task_id;
    task.class_count = n;
    task.provenance_seed = task_seed;
    task.descriptors.resize(n, spec.descriptor_dim);
    for (int c = 0; c < n; ++c) {
        Eigen::VectorXd base =
            projector ? Eigen::VectorXd(*projector * means[static_cast<std::size_t>(c)])
                      : means[static_cast<std::size_t>(c)];
        const Eigen::VectorXd noise = draw_normal_vector(rng, spec.descriptor_dim);
        Eigen::VectorXd d = base + spec.descriptor_noise * noise;
        const double dn = d.norm();
        task.descriptors.row(c) = (dn == 0.0 ? base : Eigen::VectorXd(d / dn)).transpose();
    }

    task.support_inputs.resize(static_cast<Eigen::Index>(n) * spec.samples_per_class,
                               spec.input_dim);
    for (int c = 0; c < n; ++c)
        for (int s = 0; s < spec.samples_per_class; ++s) {
            const Eigen::Index row = static_cast<Eigen::Index>(c) * spec.samples_per_class + s;
            task.support_inputs.row(row) =
                (means[static_cast<std::size_t>(c)] +
                 spec.sample_noise * draw_normal_vector(rng, spec.input_dim))
                    .transpose();
            task.support_labels.push_back(c);
        }

    task.query_inputs.resize(static_cast<Eigen::Index>(n) * spec.query_per_class, spec.input_dim);
    for (int c = 0; c < n; ++c)
        for (int s = 0; s < spec.query_per_class; ++s) {
            const Eigen::Index row = static_cast<Eigen::Index>(c) * spec.query_per_class + s;
            task.query_inputs.row(row) =
                (means[static_cast<std::size_t>(c)] +
                 spec.sample_noise * draw_normal_vector(rng, spec.input_dim))
                    .transpose();
            task.query_labels.push_back(c);
        }
    return task;
}

std::vector<int> class_rows(const std::vector<int>& labels, int cls) {
    std::vector<int> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == cls) rows.push_back(static_cast<int>(i));
    return rows;
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    }
};

}  // namespace

void SuiteSpec::validate() const {
    if (n_seen < 1) throw ValueError("SuiteSpec: need at least one seen task");
    if (n_unseen_per_seen < 0) throw ValueError("SuiteSpec: n_unseen_per_seen must be >= 0");
    if (classes_per_task < 1 || samples_per_class < 1 || query_per_class < 1)
        throw ValueError("SuiteSpec: per-task counts must be positive");
    if (input_dim < 1 || descriptor_dim < 1) throw ValueError("SuiteSpec: dims must be positive");
    if (transfer_strength < 0.0 || transfer_strength > 1.0)
        throw ValueError("SuiteSpec: transfer_strength must be in [0, 1]");
    if (sample_noise < 0.0 || descriptor_noise < 0.0 || unseen_shift < 0.0)
        throw ValueError("SuiteSpec: noise scales must be nonnegative");
}

Batch Task::support_batch(int k_shots) const {
    if (k_shots < 1) throw ValueError("support_batch: K must be >= 1");
    Batch b;
    b.descriptors = descriptors;
    std::vector<Eigen::Index> rows;
    for (int c = 0; c < class_count; ++c) {
        const auto pool = class_rows(support_labels, c);
        if (static_cast<int>(pool.size()) < k_shots)
            throw ValueError("task " + std::to_string(task_id) + ": class " + std::to_string(c) +
                             " has fewer than K=" + std::to_string(k_shots) +
                             " support samples");
        for (int i = 0; i < k_shots; ++i) {
            rows.push_back(pool[static_cast<std::size_t>(i)]);
            b.labels.push_back(c);
        }
    }
    b.inputs.resize(static_cast<Eigen::Index>(rows.size()), support_inputs.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        b.inputs.row(static_cast<Eigen::Index>(i)) = support_inputs.row(rows[i]);
    return b;
}

Batch Task::train_batch() const {
    Batch b;
    b.inputs = support_inputs;
    b.labels = support_labels;
    b.descriptors = descriptors;
    return b;
}

Batch Task::query_batch() const {
    Batch b;
    b.inputs = query_inputs;
    b.labels = query_labels;
    b.descriptors = descriptors;
    return b;
}

std::vector<const Task*> TaskSuite::all_tasks() const {
    std::vector<const Task*> out;
    for (const auto& t : seen) out.push_back(&t);
    for (const auto& [idx, list] : unseen)
        for (const auto& t : list) out.push_back(&t);
    return out;
}

const Task& TaskSuite::find(int task_id) const {
    for (const auto* t : all_tasks())
        if (t->task_id == task_id) return *t;
    throw ValueError("TaskSuite: no task with id " + std::to_string(task_id));
}

TaskSuite generate_task_suite(std::uint64_t seed, const SuiteSpec& spec) {
    spec.validate();
    const std::uint64_t root = seeds::derive(seed, seeds::kTaskGen);

    // Fixed projector mapping class means into descriptor space when the two
    // dimensionalities differ.
    Eigen::MatrixXd projector;
    const bool needs_projector = spec.descriptor_dim != spec.input_dim;
    if (needs_projector) {
        Rng prng(seeds::derive(root, 0));
        projector.resize(spec.descriptor_dim, spec.input_dim);
        const double scale = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
        for (Eigen::Index i = 0; i < projector.size(); ++i)
            projector.data()[i] = scale * prng.next_normal();
    }
    const Eigen::MatrixXd* proj = needs_projector ? &projector : nullptr;

    TaskSuite suite;
    std::vector<std::vector<Eigen::VectorXd>> seen_means;
    for (int t = 0; t < spec.n_seen; ++t) {
        const std::uint64_t task_seed = seeds::derive(root, 100 + static_cast<std::uint64_t>(t));
        Rng mrng(seeds::derive(task_seed, 0));
        std::vector<Eigen::VectorXd> means;
        for (int c = 0; c < spec.classes_per_task; ++c)
            means.push_back(draw_unit_vector(mrng, spec.input_dim));
        suite.seen.push_back(make_task(t, spec, means, proj, seeds::derive(task_seed, 1)));
        seen_means.push_back(std::move(means));
    }

    const int n_shared =
        static_cast<int>(std::llround(spec.transfer_strength * spec.classes_per_task));
    for (int t = 0; t < spec.n_seen; ++t) {
        for (int v = 0; v < spec.n_unseen_per_seen; ++v) {
            const int task_id = spec.n_seen + t * spec.n_unseen_per_seen + v;
            const std::uint64_t task_seed =
                seeds::derive(root, 10000 + static_cast<std::uint64_t>(task_id));
            Rng mrng(seeds::derive(task_seed, 0));
            std::vector<Eigen::VectorXd> means;
            for (int c = 0; c < spec.classes_per_task; ++c) {
                if (c < n_shared)
                    means.push_back(
                        shift_mean(seen_means[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)],
                                   spec.unseen_shift, mrng));
                else
                    means.push_back(draw_unit_vector(mrng, spec.input_dim));
            }
            suite.unseen[t].push_back(
                make_task(task_id, spec, means, proj, seeds::derive(task_seed, 1)));
        }
    }
    return suite;
}

std::pair<Batch, Batch> episode_sampler(const Task& task, int n_way, int k_shots,
                                        std::uint64_t seed) {
    if (n_way < 1 || n_way > task.class_count)
        throw ValueError("episode_sampler: n_way out of range for task " +
                         std::to_string(task.task_id));
    Rng rng(seed);
    std::vector<int> classes = n_way == task.class_count
                                   ? [&] {
                                         std::vector<int> all(static_cast<std::size_t>(n_way));
                                         std::iota(all.begin(), all.end(), 0);
                                         return all;
                                     }()
                                   : rng.sample_indices(task.class_count, n_way);

    Batch support, query;
    support.descriptors.resize(n_way, task.descriptors.cols());
    for (int i = 0; i < n_way; ++i)
        support.descriptors.row(i) = task.descriptors.row(classes[static_cast<std::size_t>(i)]);
    query.descriptors = support.descriptors;

    std::vector<Eigen::Index> srows;
    for (int i = 0; i < n_way; ++i) {
        const auto pool = class_rows(task.support_labels, classes[static_cast<std::size_t>(i)]);
        if (static_cast<int>(pool.size()) < k_shots)
            throw ValueError("episode_sampler: class " +
                             std::to_string(classes[static_cast<std::size_t>(i)]) +
                             " has fewer than K support samples");
        for (int pick : rng.sample_indices(static_cast<int>(pool.size()), k_shots)) {
            srows.push_back(pool[static_cast<std::size_t>(pick)]);
            support.labels.push_back(i);
        }
    }
    support.inputs.resize(static_cast<Eigen::Index>(srows.size()), task.support_inputs.cols());
    for (std::size_t i = 0; i < srows.size(); ++i)
        support.inputs.row(static_cast<Eigen::Index>(i)) = task.support_inputs.row(srows[i]);

    std::vector<Eigen::Index> qrows;
    for (std::size_t i = 0; i < task.query_labels.size(); ++i) {
        for (int j = 0; j < n_way; ++j) {
            if (task.query_labels[i] == classes[static_cast<std::size_t>(j)]) {
                qrows.push_back(static_cast<Eigen::Index>(i));
                query.labels.push_back(j);
                break;
            }
        }
    }
    query.inputs.resize(static_cast<Eigen::Index>(qrows.size()), task.query_inputs.cols());
    for (std::size_t i = 0; i < qrows.size(); ++i)
        query.inputs.row(static_cast<Eigen::Index>(i)) = task.query_inputs.row(qrows[i]);
    return {std::move(support), std::move(query)};
}

Eigen::MatrixXd pairwise_model_distance(const std::vector<ParamVector>& checkpoints) {
    const Eigen::Index n = static_cast<Eigen::Index>(checkpoints.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double d = cosine_distance(checkpoints[static_cast<std::size_t>(i)],
                                             checkpoints[static_cast<std::size_t>(j)]);
            m(i, j) = d;
            m(j, i) = d;
        }
    return m;
}

GroupingResult group_tasks(const Eigen::MatrixXd& distances, double near_threshold,
                           double far_threshold) {
    if (distances.rows() != distances.cols())
        throw ShapeError("group_tasks: matrix must be square");
    if (near_threshold > far_threshold)
        throw ValueError("group_tasks: thresholds must be ordered");
    const int n = static_cast<int>(distances.rows());

    UnionFind uf(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (distances(i, j) <= near_threshold) uf.unite(i, j);

    // Group labels ordered by each group's lowest member index.
    std::vector<int> root_label(static_cast<std::size_t>(n), -1);
    GroupingResult out;
    out.labels.resize(static_cast<std::size_t>(n));
    int next = 0;
    for (int i = 0; i < n; ++i) {
        const int r = uf.find(i);
        if (root_label[static_cast<std::size_t>(r)] < 0)
            root_label[static_cast<std::size_t>(r)] = next++;
        out.labels[static_cast<std::size_t>(i)] = root_label[static_cast<std::size_t>(r)];
    }

    using Relation = GroupingResult::Relation;
    out.relations.assign(static_cast<std::size_t>(next),
                         std::vector<Relation>(static_cast<std::size_t>(next), Relation::Same));
    std::vector<std::vector<double>> min_link(
        static_cast<std::size_t>(next),
        std::vector<double>(static_cast<std::size_t>(next),
                            std::numeric_limits<double>::infinity()));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const int a = out.labels[static_cast<std::size_t>(i)];
            const int b = out.labels[static_cast<std::size_t>(j)];
            if (a == b) continue;
            auto& cell = min_link[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
            cell = std::min(cell, distances(i, j));
        }
    for (int a = 0; a < next; ++a)
        for (int b = 0; b < next; ++b) {
            if (a == b) continue;
            out.relations[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
                min_link[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] <= far_threshold
                    ? Relation::Near
                    : Relation::Far;
        }
    return out;
}

}  // namespace snp
