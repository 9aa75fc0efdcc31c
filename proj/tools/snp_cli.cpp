// snp: experiment driver for subnetwork-projection training, online
// expansion, drift analysis and the benchmark protocol.
//
// Subcommands: train, expand, analyze, bench, export-suite.
// Exit codes: 0 ok, 2 configuration error, 3 divergence, 4 radius unresolved.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "snp/evaluation.hpp"
#include "snp/expansion.hpp"
#include "snp/meta_learner.hpp"
#include "snp/persistence.hpp"
#include "snp/rng.hpp"
#include "snp/task_world.hpp"
#include "snp/telemetry.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace snp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitRadius = 4;

struct StreamOverrides {
    std::optional<double> lr_meta;
    std::optional<long> epochs_expand;
    std::optional<double> beta_meta;
};

struct ModeSwitchSettings {
    int samples = 32;
    std::vector<double> magnitude_scale = {0.25, 0.5, 1.0, 2.0};
    double perturbation_scale = 0.01;
    int perturbations = 16;
    double factor = 2.0;
    int switch_task = 0;
};

struct ExperimentConfig {
    std::vector<std::uint64_t> seeds = {1};
    std::string out = "out";
    std::string method = "snp";  // train: snp | maml
    std::vector<std::string> methods = {"snp", "snp_add"};  // bench additions
    int n_train_tasks = 3;
    int top_k = 1;
    bool store_memory = true;
    bool paper_fidelity = false;
    bool telemetry = true;
    SuiteSpec suite;
    ModelConfig model;
    HyperParams hyper = HyperParams::desk_scale();
    StreamOverrides stream;
    std::string expand_mode = "add";  // add | remove | interpolate | mode-switch | snp
    double beta_int = 1.0;
    int remove_task = -1;
    double residual_beta = 0.0;
    ModeSwitchSettings mode_switch;
    std::optional<std::string> suite_file;

    HyperParams stream_hyper() const {
        HyperParams h = hyper;
        if (stream.lr_meta) h.lr_meta = *stream.lr_meta;
        if (stream.epochs_expand) h.epochs_expand = *stream.epochs_expand;
        if (stream.beta_meta) h.beta_meta = *stream.beta_meta;
        return h;
    }
};

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    c.paper_fidelity = j.value("paper_fidelity", false);
    c.hyper = c.paper_fidelity ? HyperParams{} : HyperParams::desk_scale();
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    c.out = j.value("out", c.out);
    c.method = j.value("method", c.method);
    if (j.contains("methods")) c.methods = j["methods"].get<std::vector<std::string>>();
    c.n_train_tasks = j.value("n_train_tasks", c.n_train_tasks);
    c.top_k = j.value("top_k", c.top_k);
    c.store_memory = j.value("store_memory", c.store_memory);
    c.telemetry = j.value("telemetry", c.telemetry);
    if (j.contains("suite")) c.suite = suite_spec_from_json(j["suite"]);
    if (j.contains("model")) c.model = model_config_from_json(j["model"]);
    if (j.contains("hyper")) {
        json merged = hyper_to_json(c.hyper);
        merged.update(j["hyper"]);
        c.hyper = hyper_from_json(merged);
    }
    if (j.contains("stream")) {
        const auto& s = j["stream"];
        if (s.contains("lr_meta")) c.stream.lr_meta = s["lr_meta"].get<double>();
        if (s.contains("epochs_expand")) c.stream.epochs_expand = s["epochs_expand"].get<long>();
        if (s.contains("beta_meta")) c.stream.beta_meta = s["beta_meta"].get<double>();
    }
    if (j.contains("expansion")) {
        const auto& e = j["expansion"];
        c.expand_mode = e.value("mode", c.expand_mode);
        c.beta_int = e.value("beta_int", c.beta_int);
        c.remove_task = e.value("remove_task", c.remove_task);
        c.residual_beta = e.value("residual_beta", c.residual_beta);
    }
    if (j.contains("mode_switch")) {
        const auto& m = j["mode_switch"];
        c.mode_switch.samples = m.value("samples", c.mode_switch.samples);
        if (m.contains("magnitude_scale"))
            c.mode_switch.magnitude_scale = m["magnitude_scale"].get<std::vector<double>>();
        c.mode_switch.perturbation_scale =
            m.value("perturbation_scale", c.mode_switch.perturbation_scale);
        c.mode_switch.perturbations = m.value("perturbations", c.mode_switch.perturbations);
        c.mode_switch.factor = m.value("factor", c.mode_switch.factor);
        c.mode_switch.switch_task = m.value("switch_task", c.mode_switch.switch_task);
    }
    if (j.contains("suite_file")) c.suite_file = j["suite_file"].get<std::string>();
    return c;
}

json effective_config(const ExperimentConfig& c) {
    json j{{"seeds", c.seeds},
           {"out", c.out},
           {"method", c.method},
           {"methods", c.methods},
           {"n_train_tasks", c.n_train_tasks},
           {"top_k", c.top_k},
           {"store_memory", c.store_memory},
           {"paper_fidelity", c.paper_fidelity},
           {"telemetry", c.telemetry},
           {"suite", suite_spec_to_json(c.suite)},
           {"model", model_config_to_json(c.model)},
           {"hyper", hyper_to_json(c.hyper)},
           {"expansion",
            {{"mode", c.expand_mode},
             {"beta_int", c.beta_int},
             {"remove_task", c.remove_task},
             {"residual_beta", c.residual_beta}}},
           {"mode_switch",
            {{"samples", c.mode_switch.samples},
             {"magnitude_scale", c.mode_switch.magnitude_scale},
             {"perturbation_scale", c.mode_switch.perturbation_scale},
             {"perturbations", c.mode_switch.perturbations},
             {"factor", c.mode_switch.factor},
             {"switch_task", c.mode_switch.switch_task}}}};
    json stream = json::object();
    if (c.stream.lr_meta) stream["lr_meta"] = *c.stream.lr_meta;
    if (c.stream.epochs_expand) stream["epochs_expand"] = *c.stream.epochs_expand;
    if (c.stream.beta_meta) stream["beta_meta"] = *c.stream.beta_meta;
    j["stream"] = stream;
    if (c.suite_file) j["suite_file"] = *c.suite_file;
    return j;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValueError("cannot open config file " + path);
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ValueError("config file " + path + " is not valid JSON");
    return parse_config(j);
}

TaskSuite obtain_suite(const ExperimentConfig& c, std::uint64_t seed) {
    if (c.suite_file) {
        const SuiteFile sf = load_suite(*c.suite_file);
        return sf.suite;
    }
    return generate_task_suite(seed, c.suite);
}

std::vector<Task> train_tasks_of(const TaskSuite& suite, int n_train) {
    if (n_train < 1 || n_train > static_cast<int>(suite.seen.size()))
        throw ValueError("n_train_tasks must be within the seen task count");
    return {suite.seen.begin(), suite.seen.begin() + n_train};
}

std::vector<Task> stream_tasks_of(const TaskSuite& suite, int n_train) {
    return {suite.seen.begin() + n_train, suite.seen.end()};
}

std::vector<const Task*> eval_tasks_of(const TaskSuite& suite) { return suite.all_tasks(); }

fs::path seed_dir(const ExperimentConfig& c, std::uint64_t seed) {
    fs::path dir = fs::path(c.out) / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValueError("cannot write " + path.string());
    out << text;
}

HyperParams train_hyper_for_method(const ExperimentConfig& c, const std::string& method) {
    HyperParams h = c.hyper;
    if (method == "maml") {
        h.beta_meta = 0.0;
        h.beta_base_default = 0.0;
    } else if (method != "snp") {
        throw ValueError("train method must be snp or maml, got " + method);
    }
    return h;
}

// ---- train ---------------------------------------------------------------

TrainResult run_training(const ExperimentConfig& c, const std::vector<Task>& tasks,
                         std::uint64_t seed, Telemetry* telemetry) {
    return train_space(tasks, c.model, train_hyper_for_method(c, c.method), c.store_memory,
                       seed, telemetry);
}

int cmd_train(const ExperimentConfig& c) {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / "effective_config.json", effective_config(c).dump(2) + "\n");
    for (std::uint64_t seed : c.seeds) {
        const fs::path dir = seed_dir(c, seed);
        const TaskSuite suite = obtain_suite(c, seed);
        const auto tasks = train_tasks_of(suite, c.n_train_tasks);

        std::optional<Telemetry> telemetry;
        if (c.telemetry) telemetry = Telemetry::to_file((dir / "telemetry.jsonl").string());
        const TrainResult r =
            run_training(c, tasks, seed, telemetry ? &*telemetry : nullptr);

        Checkpoint ck;
        ck.params = r.theta;
        ck.config = c.model;
        ck.seed = seed;
        if (!r.final_profile.entries.empty()) ck.drift_profile = r.final_profile;
        ck.radius_estimate = r.final_radius;
        save_checkpoint((dir / "checkpoint.snp").string(), ck);
        if (r.memory) save_memory((dir / "memory.snp").string(), *r.memory);
        std::cout << "seed " << seed << ": checkpoint written to " << dir << "\n";
    }
    return kExitOk;
}

// ---- expand ---------------------------------------------------------------

ExpansionMode parse_mode(const std::string& mode) {
    if (mode == "snp") return ExpansionMode::Snp;
    if (mode == "add") return ExpansionMode::SnpAdd;
    if (mode == "remove") return ExpansionMode::SnpRemove;
    if (mode == "interpolate") return ExpansionMode::SnpInterpolate;
    throw ValueError("unknown expansion mode: " + mode);
}

struct StagedExpansion {
    ParamVector theta;
    std::optional<MemoryBuffer> memory;
    ResultLedger ledger;
    std::vector<TaskExpansionRecord> records;
    bool any_aborted = false;
};

// Runs the stream one task per stage so an evaluation sweep lands at every
// task boundary; beta_meta carries across stages.
StagedExpansion run_staged_expansion(const ExperimentConfig& c, const Checkpoint& ck,
                                     std::optional<MemoryBuffer> memory,
                                     const std::vector<Task>& stream,
                                     const std::vector<const Task*>& eval_tasks,
                                     const std::string& method_label, ExpansionMode mode,
                                     std::uint64_t seed, Telemetry* telemetry) {
    StagedExpansion out;
    out.theta = ck.params;
    out.memory = std::move(memory);

    HyperParams hyper = c.stream_hyper();
    const std::uint64_t eval_seed = seeds::derive(seed, 0);
    for (const auto& r : evaluate_sweep(out.theta, ck.config, eval_tasks, method_label, 0,
                                        c.top_k, hyper, eval_seed))
        out.ledger.add(r);

    ExpansionConfig ec;
    ec.mode = mode;
    ec.beta_int = c.beta_int;
    if (mode == ExpansionMode::SnpRemove) {
        if (c.remove_task < 0) throw ValueError("expansion.remove_task must be set");
        ec.remove_task_id = c.remove_task;
        ec.remove_residual_beta = c.residual_beta;
    }
    if (ck.drift_profile) ec.radius_profile = ck.drift_profile;

    int stage = 0;
    for (const auto& task : stream) {
        ++stage;
        ec.hyper = hyper;
        const auto r = expand_space(out.theta, {task}, out.memory, ck.config, ec,
                                    seeds::derive(seed, seeds::kExpand,
                                                  static_cast<std::uint64_t>(stage)),
                                    telemetry);
        out.theta = r.theta;
        out.memory = r.memory;
        hyper.beta_meta = r.beta_meta_final;
        out.any_aborted = out.any_aborted || r.any_aborted();
        out.records.insert(out.records.end(), r.tasks.begin(), r.tasks.end());
        // remove applies once, before the first stream task
        if (ec.mode == ExpansionMode::SnpRemove) ec.mode = ExpansionMode::SnpAdd;
        for (const auto& rec : evaluate_sweep(out.theta, ck.config, eval_tasks, method_label,
                                              stage, c.top_k, hyper, eval_seed))
            out.ledger.add(rec);
    }
    return out;
}

json expansion_report(const StagedExpansion& r) {
    json tasks = json::array();
    for (const auto& t : r.records) {
        json e{{"task_id", t.task_id},
               {"epochs_run", t.epochs_run},
               {"aborted", t.aborted},
               {"beta_meta_before", t.beta_meta_before},
               {"beta_meta_after", t.beta_meta_after},
               {"dist_meta_v", t.dist_meta_v},
               {"task_loss", t.task_loss},
               {"l_base", t.l_base}};
        e["l_int"] = t.l_int ? json(*t.l_int) : json(nullptr);
        e["interpolation_target"] =
            t.interpolation_target ? json(*t.interpolation_target) : json(nullptr);
        tasks.push_back(e);
    }
    return {{"tasks", tasks}, {"any_aborted", r.any_aborted}};
}

int cmd_expand(const ExperimentConfig& c, const std::string& checkpoint_path,
               const std::string& memory_path) {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / "effective_config.json", effective_config(c).dump(2) + "\n");
    const Checkpoint ck = load_checkpoint(checkpoint_path);

    bool any_aborted = false;
    for (std::uint64_t seed : c.seeds) {
        const fs::path dir = seed_dir(c, seed);
        const TaskSuite suite = obtain_suite(c, seed);
        const auto stream = stream_tasks_of(suite, c.n_train_tasks);
        const auto eval_tasks = eval_tasks_of(suite);

        std::optional<Telemetry> telemetry;
        if (c.telemetry) telemetry = Telemetry::to_file((dir / "telemetry.jsonl").string());
        Telemetry* sink = telemetry ? &*telemetry : nullptr;

        if (c.expand_mode == "mode-switch") {
            if (memory_path.empty()) throw ValueError("mode-switch needs --memory");
            const MemoryBuffer memory = load_memory(memory_path);
            const auto& task = suite.find(c.mode_switch.switch_task);
            SearchConfig search;
            search.samples_per_magnitude = c.mode_switch.samples;
            search.perturbation_scale = c.mode_switch.perturbation_scale;
            if (!ck.radius_estimate)
                throw ValueError("checkpoint carries no radius estimate for the schedule");
            for (double s : c.mode_switch.magnitude_scale)
                search.drift_magnitudes.push_back(s * *ck.radius_estimate);
            const auto pred =
                flat_basin_predicate(ck.config, c.mode_switch.perturbation_scale,
                                     c.mode_switch.perturbations, c.mode_switch.factor,
                                     seeds::derive(seed, seeds::kModeSwitch));
            const auto r = mode_switch(ck.params, memory, c.mode_switch.switch_task, task, pred,
                                       search, ck.config, c.stream_hyper(),
                                       seeds::derive(seed, seeds::kModeSwitch), sink);
            json report{{"found", r.report.found}, {"trials", r.report.trials.size()}};
            if (r.report.found) {
                report["found_magnitude"] = r.report.found_magnitude;
                Checkpoint updated = ck;
                updated.params = *r.theta;
                save_checkpoint((dir / "checkpoint_expanded.snp").string(), updated);
                save_memory((dir / "memory_expanded.snp").string(), memory);
            }
            write_text(dir / "mode_switch.json", report.dump(2) + "\n");
            continue;
        }

        const ExpansionMode mode = parse_mode(c.expand_mode);
        std::optional<MemoryBuffer> memory;
        if (mode != ExpansionMode::Snp) {
            if (memory_path.empty()) throw ValueError("this mode needs --memory");
            memory = load_memory(memory_path);
        }
        const std::string label = mode == ExpansionMode::Snp ? "snp" : "snp_" + c.expand_mode;
        const StagedExpansion r = run_staged_expansion(c, ck, std::move(memory), stream,
                                                       eval_tasks, label, mode, seed, sink);
        any_aborted = any_aborted || r.any_aborted;

        Checkpoint updated = ck;
        updated.params = r.theta;
        save_checkpoint((dir / "checkpoint_expanded.snp").string(), updated);
        if (r.memory) save_memory((dir / "memory_expanded.snp").string(), *r.memory);
        std::ofstream csv(dir / "ledger.csv");
        r.ledger.write_csv(csv);
        write_text(dir / "expansion.json", expansion_report(r).dump(2) + "\n");
    }
    return any_aborted ? kExitRadius : kExitOk;
}

// ---- analyze ---------------------------------------------------------------

std::string csv_radius(const RadiusReport& r) {
    std::ostringstream out;
    out << std::setprecision(12) << "task_id,euclidean,cosine\n";
    for (const auto& rec : r.per_task)
        out << rec.task_id << ',' << rec.euclidean << ',' << rec.cosine << '\n';
    out << "radius," << r.max_euclidean << ',' << r.max_cosine << '\n';
    return out.str();
}

std::string csv_recovery(const RecoveryReport& r) {
    std::ostringstream out;
    out << std::setprecision(12) << "j";
    for (Eigen::Index t = 0; t < r.drift.cols(); ++t) out << ",task" << t;
    out << ",row_mean,row_max\n";
    for (Eigen::Index j = 0; j < r.drift.rows(); ++j) {
        out << j;
        for (Eigen::Index t = 0; t < r.drift.cols(); ++t) out << ',' << r.drift(j, t);
        out << ',' << r.row_mean[j] << ',' << r.row_max[j] << '\n';
    }
    out << "epsilon_estimate," << r.epsilon_estimate << '\n';
    return out.str();
}

std::string csv_curve(const std::vector<DriftCurvePoint>& curve) {
    std::ostringstream out;
    out << std::setprecision(12)
        << "r,mean_meta_cosine,mean_base_cosine,mean_meta_euclidean,mean_base_euclidean\n";
    for (const auto& p : curve)
        out << p.r << ',' << p.mean_meta_cosine << ',' << p.mean_base_cosine << ','
            << p.mean_meta_euclidean << ',' << p.mean_base_euclidean << '\n';
    return out.str();
}

std::string csv_pairwise(const Eigen::MatrixXd& m) {
    std::ostringstream out;
    out << std::setprecision(12);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
        out << '\n';
    }
    return out.str();
}

std::string csv_groups(const GroupingResult& g) {
    std::ostringstream out;
    out << "task,group\n";
    for (std::size_t i = 0; i < g.labels.size(); ++i) out << i << ',' << g.labels[i] << '\n';
    out << "group_a,group_b,relation\n";
    for (std::size_t a = 0; a < g.relations.size(); ++a)
        for (std::size_t b = 0; b < g.relations.size(); ++b) {
            if (a == b) continue;
            out << a << ',' << b << ','
                << (g.relations[a][b] == GroupingResult::Relation::Near ? "near" : "far")
                << '\n';
        }
    return out.str();
}

int cmd_analyze(const ExperimentConfig& c, const std::vector<std::string>& checkpoint_paths,
                const std::vector<double>& r_grid, int curve_samples) {
    if (checkpoint_paths.empty()) throw ValueError("analyze needs at least one --checkpoint");
    fs::create_directories(c.out);
    const fs::path dir(c.out);

    std::vector<Checkpoint> checkpoints;
    for (const auto& p : checkpoint_paths) checkpoints.push_back(load_checkpoint(p));

    const std::uint64_t seed = c.seeds.front();
    const TaskSuite suite = obtain_suite(c, seed);
    const auto tasks = train_tasks_of(suite, c.n_train_tasks);

    const Checkpoint& ck = checkpoints.front();
    write_text(dir / "radius.csv",
               csv_radius(measure_subspace_radius(ck.params, tasks, ck.config, c.hyper)));
    write_text(dir / "recovery.csv",
               csv_recovery(recovery_check(ck.params, tasks, ck.config, c.hyper)));
    write_text(dir / "curve.csv",
               csv_curve(interpolation_drift_curve(ck.params, tasks, ck.config, c.hyper, r_grid,
                                                   curve_samples,
                                                   seeds::derive(seed, seeds::kDrift))));
    if (checkpoints.size() >= 2) {
        std::vector<ParamVector> params;
        for (const auto& x : checkpoints) params.push_back(x.params);
        const Eigen::MatrixXd distances = pairwise_model_distance(params);
        write_text(dir / "pairwise.csv", csv_pairwise(distances));
        write_text(dir / "groups.csv", csv_groups(group_tasks(distances, 0.1, 0.3)));
    }
    return kExitOk;
}

// ---- bench -----------------------------------------------------------------

std::string table_report(const ResultLedger& ledger, const std::vector<BwtEntry>& bwt,
                         const std::vector<std::string>& methods, int stages,
                         const std::vector<int>& eval_ids) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(1);
    for (int stage = 0; stage <= stages; ++stage) {
        out << "== stage " << stage << " (zero-shot % / few-shot %) ==\n";
        out << std::setw(10) << "task";
        for (const auto& m : methods)
            if (!ledger.tasks_at(m, stage).empty()) out << std::setw(18) << m;
        out << '\n';
        for (int id : eval_ids) {
            out << std::setw(10) << id;
            for (const auto& m : methods) {
                if (ledger.tasks_at(m, stage).empty()) continue;
                const auto& r = ledger.find(m, stage, id);
                std::ostringstream cell;
                cell << std::fixed << std::setprecision(1) << 100 * r.zs_topk << " / "
                     << 100 * r.fs_grad;
                out << std::setw(18) << cell.str();
            }
            out << '\n';
        }
        // averages
        out << std::setw(10) << "avg";
        for (const auto& m : methods) {
            if (ledger.tasks_at(m, stage).empty()) continue;
            double zs = 0, fs = 0;
            for (int id : eval_ids) {
                const auto& r = ledger.find(m, stage, id);
                zs += r.zs_topk;
                fs += r.fs_grad;
            }
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(1)
                 << 100 * zs / static_cast<double>(eval_ids.size()) << " / "
                 << 100 * fs / static_cast<double>(eval_ids.size());
            out << std::setw(18) << cell.str();
        }
        out << '\n';
        if (stage >= 1) {
            for (const char* row : {"pos_bwt", "neg_bwt"}) {
                out << std::setw(10) << row;
                for (const auto& m : methods) {
                    if (ledger.tasks_at(m, stage).empty()) continue;
                    const auto it = std::find_if(bwt.begin(), bwt.end(), [&](const BwtEntry& e) {
                        return e.method == m && e.stage == stage;
                    });
                    std::ostringstream cell;
                    if (it != bwt.end()) {
                        const bool pos = std::string(row) == "pos_bwt";
                        cell << std::fixed << std::setprecision(1)
                             << 100 * (pos ? it->pos_zs : it->neg_zs) << " / "
                             << 100 * (pos ? it->pos_fs_grad : it->neg_fs_grad);
                    } else {
                        cell << "-";
                    }
                    out << std::setw(18) << cell.str();
                }
                out << '\n';
            }
        }
        out << '\n';
    }
    return out.str();
}

std::string csv_bwt(const std::vector<BwtEntry>& bwt) {
    std::ostringstream out;
    out << std::setprecision(12)
        << "method,stage,pos_zs,neg_zs,pos_fs_grad,neg_fs_grad,pos_fs_ncm,neg_fs_ncm\n";
    for (const auto& e : bwt)
        out << e.method << ',' << e.stage << ',' << e.pos_zs << ',' << e.neg_zs << ','
            << e.pos_fs_grad << ',' << e.neg_fs_grad << ',' << e.pos_fs_ncm << ','
            << e.neg_fs_ncm << '\n';
    return out.str();
}

int cmd_bench(const ExperimentConfig& c) {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / "effective_config.json", effective_config(c).dump(2) + "\n");

    bool any_aborted = false;
    for (std::uint64_t seed : c.seeds) {
        const fs::path dir = seed_dir(c, seed);
        const TaskSuite suite = obtain_suite(c, seed);
        const auto train_tasks = train_tasks_of(suite, c.n_train_tasks);
        const auto stream = stream_tasks_of(suite, c.n_train_tasks);
        const auto eval_tasks = eval_tasks_of(suite);

        std::optional<Telemetry> telemetry;
        if (c.telemetry) telemetry = Telemetry::to_file((dir / "telemetry.jsonl").string());
        Telemetry* sink = telemetry ? &*telemetry : nullptr;

        // every method starts from the same SNP-trained parameters
        const TrainResult trained =
            train_space(train_tasks, c.model, c.hyper, true, seed, sink);
        Checkpoint ck;
        ck.params = trained.theta;
        ck.config = c.model;
        ck.seed = seed;
        if (!trained.final_profile.entries.empty()) ck.drift_profile = trained.final_profile;
        ck.radius_estimate = trained.final_radius;
        save_checkpoint((dir / "checkpoint.snp").string(), ck);
        if (trained.memory) save_memory((dir / "memory.snp").string(), *trained.memory);

        ResultLedger ledger;
        std::vector<std::string> methods = {"finetune"};  // mandatory baseline
        const HyperParams stream_hyper = c.stream_hyper();

        const BaselineResult ft = run_finetune_baseline(trained.theta, stream, eval_tasks,
                                                        c.model, stream_hyper, c.top_k, seed);
        ledger.merge(ft.ledger);

        for (const auto& method : c.methods) {
            ExpansionMode mode;
            std::optional<MemoryBuffer> memory;
            if (method == "snp") {
                mode = ExpansionMode::Snp;
            } else if (method == "snp_add") {
                mode = ExpansionMode::SnpAdd;
                memory = trained.memory;
            } else if (method == "snp_interpolate") {
                mode = ExpansionMode::SnpInterpolate;
                memory = trained.memory;
            } else if (method == "snp_remove") {
                mode = ExpansionMode::SnpRemove;
                memory = trained.memory;
            } else {
                throw ValueError("unknown bench method: " + method);
            }
            const StagedExpansion r = run_staged_expansion(c, ck, std::move(memory), stream,
                                                           eval_tasks, method, mode, seed, sink);
            any_aborted = any_aborted || r.any_aborted;
            ledger.merge(r.ledger);
            methods.push_back(method);
        }

        if (stream.size() >= 2) {
            const BaselineResult joint = run_joint_baseline(trained.theta, stream, eval_tasks,
                                                            c.model, stream_hyper, c.top_k, seed);
            ledger.merge(joint.ledger);
            methods.push_back("joint");
        }

        const auto bwt = bwt_metrics(ledger, ComparisonPolicy{});
        std::ofstream csv(dir / "ledger.csv");
        ledger.write_csv(csv);
        write_text(dir / "bwt.csv", csv_bwt(bwt));
        std::vector<int> eval_ids;
        for (const Task* t : eval_tasks) eval_ids.push_back(t->task_id);
        write_text(dir / "report.txt",
                   table_report(ledger, bwt, methods, static_cast<int>(stream.size()),
                                eval_ids));
        std::cout << "seed " << seed << ": bench artifacts in " << dir << "\n";
    }
    return any_aborted ? kExitRadius : kExitOk;
}

// ---- export-suite -----------------------------------------------------------

int cmd_export_suite(const ExperimentConfig& c, const std::string& out_path) {
    const std::uint64_t seed = c.seeds.front();
    SuiteFile sf;
    sf.spec = c.suite;
    sf.seed = seed;
    sf.suite = generate_task_suite(seed, c.suite);
    save_suite(out_path, sf);
    std::cout << "suite written to " << out_path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"subnetwork projection laboratory"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, memory_path, out_override, mode_override,
        suite_override, export_path;
    std::vector<std::string> checkpoint_paths;
    std::vector<std::uint64_t> seed_override;
    bool paper_fidelity = false;
    long epochs_override = -1;
    std::vector<double> r_grid = {0.0001, 0.0003, 0.001, 0.003, 0.01, 0.03, 0.1, 0.3};
    int curve_samples = 8;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config (JSON)");
        cmd->add_option("--seed", seed_override, "override the config seed list");
        cmd->add_option("--out", out_override, "override the output directory");
        cmd->add_option("--suite", suite_override, "load the task suite from a file");
        cmd->add_flag("--paper-fidelity", paper_fidelity,
                      "use the paper-scale hyperparameter defaults");
    };

    CLI::App* train = app.add_subcommand("train", "meta-train the parameter space");
    add_common(train);
    train->add_option("--epochs", epochs_override, "override epochs_train");

    CLI::App* expand = app.add_subcommand("expand", "learn new tasks online");
    add_common(expand);
    expand->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    expand->add_option("--memory", memory_path, "memory buffer file");
    expand->add_option("--mode", mode_override, "snp | add | remove | interpolate | mode-switch");
    expand->add_option("--epochs", epochs_override, "override epochs_expand");

    CLI::App* analyze = app.add_subcommand("analyze", "drift reports for checkpoints");
    add_common(analyze);
    analyze->add_option("--checkpoint", checkpoint_paths, "checkpoint file(s)")->required();
    analyze->add_option("--r-grid", r_grid, "interpolation coefficients for the curve");
    analyze->add_option("--curve-samples", curve_samples, "random directions per grid point");

    CLI::App* bench = app.add_subcommand("bench", "methods + baselines + BWT report");
    add_common(bench);

    CLI::App* export_suite = app.add_subcommand("export-suite", "write a canonical task suite");
    add_common(export_suite);
    export_suite->add_option("--out-file", export_path, "destination file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig config =
            config_path.empty() ? ExperimentConfig{} : load_config_file(config_path);
        if (!seed_override.empty()) config.seeds = seed_override;
        if (!out_override.empty()) config.out = out_override;
        if (!suite_override.empty()) config.suite_file = suite_override;
        if (paper_fidelity && !config.paper_fidelity) {
            config.paper_fidelity = true;
            config.hyper = HyperParams{};
        }
        if (!mode_override.empty()) config.expand_mode = mode_override;
        if (config.seeds.empty()) throw ValueError("at least one seed required");
        config.hyper.validate();

        if (train->parsed()) {
            if (epochs_override >= 0) config.hyper.epochs_train = epochs_override;
            return cmd_train(config);
        }
        if (expand->parsed()) {
            if (epochs_override >= 0) {
                config.hyper.epochs_expand = epochs_override;
                config.stream.epochs_expand = epochs_override;
            }
            return cmd_expand(config, checkpoint_path, memory_path);
        }
        if (analyze->parsed()) return cmd_analyze(config, checkpoint_paths, r_grid, curve_samples);
        if (bench->parsed()) return cmd_bench(config);
        if (export_suite->parsed()) return cmd_export_suite(config, export_path);
        return kExitConfig;
    } catch (const RadiusUnresolvedError& e) {
        std::cerr << "radius unresolved: " << e.what() << "\n";
        return kExitRadius;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence at epoch " << e.epoch << ": " << e.what() << "\n";
        return kExitDivergence;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const Error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}
