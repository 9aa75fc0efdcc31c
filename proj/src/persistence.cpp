#include "snp/persistence.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace snp {
namespace {

constexpr char kMagic[] = "SNPF1\n";

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

void write_doubles(std::ostream& out, const double* data, std::uint64_t count) {
    for (std::uint64_t i = 0; i < count; ++i)
        write_u64(out, std::bit_cast<std::uint64_t>(data[i]));
}

void read_doubles(std::istream& in, double* data, std::uint64_t count) {
    for (std::uint64_t i = 0; i < count; ++i) data[i] = std::bit_cast<double>(read_u64(in));
}

void write_container(const std::string& path, const nlohmann::json& manifest,
                     const std::vector<const Eigen::MatrixXd*>& blocks,
                     const std::vector<const Eigen::VectorXd*>& vectors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValueError("cannot open " + path + " for writing");
    out.write(kMagic, sizeof(kMagic) - 1);
    const std::string text = manifest.dump();
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::uint64_t count = 0;
    for (const auto* m : blocks) count += static_cast<std::uint64_t>(m->size());
    for (const auto* v : vectors) count += static_cast<std::uint64_t>(v->size());
    write_u64(out, count);
    for (const auto* v : vectors) write_doubles(out, v->data(), static_cast<std::uint64_t>(v->size()));
    for (const auto* m : blocks) write_doubles(out, m->data(), static_cast<std::uint64_t>(m->size()));
    if (!out) throw ValueError("write to " + path + " failed");
}

struct Container {
    nlohmann::json manifest;
    std::vector<double> payload;
};

Container read_container(const std::string& path, const std::string& expected_kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValueError("cannot open " + path);
    char magic[sizeof(kMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw ValueError(path + ": not a recognized artifact file");
    const std::uint64_t text_len = read_u64(in);
    std::string text(text_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(text_len));
    if (!in) throw ValueError(path + ": truncated manifest");
    Container c;
    c.manifest = nlohmann::json::parse(text, nullptr, false);
    if (c.manifest.is_discarded()) throw ValueError(path + ": malformed manifest");
    if (c.manifest.value("kind", "") != expected_kind)
        throw ValueError(path + ": expected a " + expected_kind + " file");
    if (c.manifest.value("format_version", 0) != 1)
        throw ValueError(path + ": unsupported format version");
    const std::uint64_t count = read_u64(in);
    c.payload.resize(count);
    read_doubles(in, c.payload.data(), count);
    if (!in) throw ValueError(path + ": truncated payload");
    char extra;
    if (in.read(&extra, 1)) throw ValueError(path + ": trailing bytes after payload");
    return c;
}

nlohmann::json layout_to_json(const Layout& layout) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : layout) out.push_back({{"name", e.name}, {"shape", e.shape}});
    return out;
}

nlohmann::json profile_to_json(const DriftProfile& profile) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : profile.entries)
        entries.push_back({e.sample, e.coeff, e.dist_meta, e.dist_base});
    return {{"metric", profile.metric == Metric::Cosine ? "cosine" : "euclidean"},
            {"entries", entries}};
}

DriftProfile profile_from_json(const nlohmann::json& j) {
    DriftProfile p;
    p.metric = j.at("metric") == "euclidean" ? Metric::Euclidean : Metric::Cosine;
    for (const auto& e : j.at("entries"))
        p.entries.push_back({e.at(0).get<int>(), e.at(1).get<double>(), e.at(2).get<double>(),
                             e.at(3).get<double>()});
    return p;
}

Eigen::MatrixXd matrix_from(const std::vector<double>& payload, std::size_t& offset,
                            Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    std::memcpy(m.data(), payload.data() + offset, sizeof(double) * static_cast<std::size_t>(m.size()));
    offset += static_cast<std::size_t>(m.size());
    return m;
}

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& config) {
    return {{"input_dim", config.input_dim},
            {"descriptor_dim", config.descriptor_dim},
            {"embed_dim", config.embed_dim},
            {"hidden", config.hidden},
            {"activation", config.activation == Activation::Tanh ? "tanh" : "relu"},
            {"temperature", config.temperature}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.input_dim = j.value("input_dim", c.input_dim);
    c.descriptor_dim = j.value("descriptor_dim", c.descriptor_dim);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.hidden = j.value("hidden", c.hidden);
    const std::string act = j.value("activation", "tanh");
    if (act != "tanh" && act != "relu") throw ValueError("unknown activation: " + act);
    c.activation = act == "tanh" ? Activation::Tanh : Activation::Relu;
    c.temperature = j.value("temperature", c.temperature);
    c.validate();
    return c;
}

nlohmann::json hyper_to_json(const HyperParams& hyper) {
    nlohmann::json j{{"k_shots", hyper.k_shots},
                     {"epochs_train", hyper.epochs_train},
                     {"epochs_expand", hyper.epochs_expand},
                     {"lr_base", hyper.lr_base},
                     {"lr_meta", hyper.lr_meta},
                     {"beta_meta", hyper.beta_meta},
                     {"beta_base_default", hyper.beta_base_default},
                     {"beta_int_default", hyper.beta_int_default},
                     {"interpolation_samples", hyper.interpolation_samples},
                     {"interpolation_coeffs", hyper.interpolation_coeffs},
                     {"disjoint_meta_batches", hyper.disjoint_meta_batches},
                     {"adaptive_beta_per_epoch", hyper.adaptive_beta_per_epoch}};
    j["epsilon"] = hyper.epsilon ? nlohmann::json(*hyper.epsilon) : nlohmann::json(nullptr);
    return j;
}

HyperParams hyper_from_json(const nlohmann::json& j) {
    HyperParams h;
    h.k_shots = j.value("k_shots", h.k_shots);
    h.epochs_train = j.value("epochs_train", h.epochs_train);
    h.epochs_expand = j.value("epochs_expand", h.epochs_expand);
    h.lr_base = j.value("lr_base", h.lr_base);
    h.lr_meta = j.value("lr_meta", h.lr_meta);
    h.beta_meta = j.value("beta_meta", h.beta_meta);
    h.beta_base_default = j.value("beta_base_default", h.beta_base_default);
    h.beta_int_default = j.value("beta_int_default", h.beta_int_default);
    h.interpolation_samples = j.value("interpolation_samples", h.interpolation_samples);
    h.interpolation_coeffs = j.value("interpolation_coeffs", h.interpolation_coeffs);
    if (j.contains("epsilon")) {
        if (j["epsilon"].is_null())
            h.epsilon.reset();
        else
            h.epsilon = j["epsilon"].get<double>();
    }
    h.disjoint_meta_batches = j.value("disjoint_meta_batches", h.disjoint_meta_batches);
    h.adaptive_beta_per_epoch = j.value("adaptive_beta_per_epoch", h.adaptive_beta_per_epoch);
    h.validate();
    return h;
}

nlohmann::json suite_spec_to_json(const SuiteSpec& spec) {
    return {{"n_seen", spec.n_seen},
            {"n_unseen_per_seen", spec.n_unseen_per_seen},
            {"classes_per_task", spec.classes_per_task},
            {"samples_per_class", spec.samples_per_class},
            {"query_per_class", spec.query_per_class},
            {"input_dim", spec.input_dim},
            {"descriptor_dim", spec.descriptor_dim},
            {"transfer_strength", spec.transfer_strength},
            {"sample_noise", spec.sample_noise},
            {"descriptor_noise", spec.descriptor_noise},
            {"unseen_shift", spec.unseen_shift}};
}

SuiteSpec suite_spec_from_json(const nlohmann::json& j) {
    SuiteSpec s;
    s.n_seen = j.value("n_seen", s.n_seen);
    s.n_unseen_per_seen = j.value("n_unseen_per_seen", s.n_unseen_per_seen);
    s.classes_per_task = j.value("classes_per_task", s.classes_per_task);
    s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
    s.query_per_class = j.value("query_per_class", s.query_per_class);
    s.input_dim = j.value("input_dim", s.input_dim);
    s.descriptor_dim = j.value("descriptor_dim", s.descriptor_dim);
    s.transfer_strength = j.value("transfer_strength", s.transfer_strength);
    s.sample_noise = j.value("sample_noise", s.sample_noise);
    s.descriptor_noise = j.value("descriptor_noise", s.descriptor_noise);
    s.unseen_shift = j.value("unseen_shift", s.unseen_shift);
    s.validate();
    return s;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    nlohmann::json manifest{{"kind", "checkpoint"},
                            {"format_version", 1},
                            {"model_config", model_config_to_json(checkpoint.config)},
                            {"layout", layout_to_json(checkpoint.params.layout())},
                            {"seed", checkpoint.seed}};
    if (checkpoint.drift_profile)
        manifest["drift_profile"] = profile_to_json(*checkpoint.drift_profile);
    if (checkpoint.radius_estimate) manifest["radius_estimate"] = *checkpoint.radius_estimate;
    write_container(path, manifest, {}, {&checkpoint.params.values()});
}

Checkpoint load_checkpoint(const std::string& path) {
    const Container c = read_container(path, "checkpoint");
    Checkpoint out;
    out.config = model_config_from_json(c.manifest.at("model_config"));
    out.seed = c.manifest.at("seed").get<std::uint64_t>();
    const LayoutPtr layout = out.config.layout();
    // cross-check the manifest layout against the derived one
    if (layout_to_json(*layout) != c.manifest.at("layout"))
        throw ValueError(path + ": layout does not match the model config");
    if (static_cast<Eigen::Index>(c.payload.size()) != layout_size(*layout))
        throw ValueError(path + ": payload element count mismatch");
    Eigen::VectorXd values(c.payload.size());
    std::memcpy(values.data(), c.payload.data(), sizeof(double) * c.payload.size());
    out.params = ParamVector(layout, std::move(values));
    if (c.manifest.contains("drift_profile"))
        out.drift_profile = profile_from_json(c.manifest["drift_profile"]);
    if (c.manifest.contains("radius_estimate"))
        out.radius_estimate = c.manifest["radius_estimate"].get<double>();
    return out;
}

void save_memory(const std::string& path, const MemoryBuffer& memory) {
    nlohmann::json tasks = nlohmann::json::array();
    std::vector<const Eigen::MatrixXd*> blocks;
    for (const auto& e : memory.entries()) {
        tasks.push_back({{"task_id", e.task_id},
                         {"beta_base", e.beta_base},
                         {"labels", e.support.labels},
                         {"support_rows", e.support.inputs.rows()},
                         {"input_dim", e.support.inputs.cols()},
                         {"classes", e.support.descriptors.rows()},
                         {"descriptor_dim", e.support.descriptors.cols()}});
        blocks.push_back(&e.support.inputs);
        blocks.push_back(&e.support.descriptors);
    }
    nlohmann::json aliases = nlohmann::json::array();
    for (const auto& [from, to] : memory.aliases()) aliases.push_back({from, to});
    const nlohmann::json manifest{{"kind", "memory"},
                                  {"format_version", 1},
                                  {"tasks", tasks},
                                  {"aliases", aliases}};
    write_container(path, manifest, blocks, {});
}

MemoryBuffer load_memory(const std::string& path) {
    const Container c = read_container(path, "memory");
    std::uint64_t expected = 0;
    for (const auto& t : c.manifest.at("tasks")) {
        expected += t.at("support_rows").get<std::uint64_t>() * t.at("input_dim").get<std::uint64_t>();
        expected += t.at("classes").get<std::uint64_t>() * t.at("descriptor_dim").get<std::uint64_t>();
    }
    if (expected != c.payload.size())
        throw ValueError(path + ": payload element count mismatch");

    MemoryBuffer memory;
    std::size_t offset = 0;
    for (const auto& t : c.manifest.at("tasks")) {
        Batch support;
        support.inputs = matrix_from(c.payload, offset, t.at("support_rows").get<Eigen::Index>(),
                                     t.at("input_dim").get<Eigen::Index>());
        support.descriptors = matrix_from(c.payload, offset, t.at("classes").get<Eigen::Index>(),
                                          t.at("descriptor_dim").get<Eigen::Index>());
        support.labels = t.at("labels").get<std::vector<int>>();
        memory.register_task(t.at("task_id").get<int>(), std::move(support),
                             t.at("beta_base").get<double>());
    }
    for (const auto& a : c.manifest.at("aliases"))
        memory.add_alias(a.at(0).get<int>(), a.at(1).get<int>());
    return memory;
}

void save_suite(const std::string& path, const SuiteFile& suite) {
    nlohmann::json tasks = nlohmann::json::array();
    std::vector<const Eigen::MatrixXd*> blocks;
    auto push_task = [&](const Task& t, const std::string& role, int parent) {
        tasks.push_back({{"task_id", t.task_id},
                         {"role", role},
                         {"parent", parent},
                         {"class_count", t.class_count},
                         {"support_rows", t.support_inputs.rows()},
                         {"query_rows", t.query_inputs.rows()},
                         {"input_dim", t.support_inputs.cols()},
                         {"descriptor_dim", t.descriptors.cols()},
                         {"support_labels", t.support_labels},
                         {"query_labels", t.query_labels},
                         {"provenance_seed", t.provenance_seed}});
        blocks.push_back(&t.support_inputs);
        blocks.push_back(&t.query_inputs);
        blocks.push_back(&t.descriptors);
    };
    for (const auto& t : suite.suite.seen) push_task(t, "seen", -1);
    for (const auto& [parent, list] : suite.suite.unseen)
        for (const auto& t : list) push_task(t, "unseen", parent);

    const nlohmann::json manifest{{"kind", "suite"},
                                  {"format_version", 1},
                                  {"seed", suite.seed},
                                  {"spec", suite_spec_to_json(suite.spec)},
                                  {"tasks", tasks}};
    write_container(path, manifest, blocks, {});
}

SuiteFile load_suite(const std::string& path) {
    const Container c = read_container(path, "suite");
    SuiteFile out;
    out.seed = c.manifest.at("seed").get<std::uint64_t>();
    out.spec = suite_spec_from_json(c.manifest.at("spec"));

    std::uint64_t expected = 0;
    for (const auto& t : c.manifest.at("tasks")) {
        const auto in_dim = t.at("input_dim").get<std::uint64_t>();
        const auto d_dim = t.at("descriptor_dim").get<std::uint64_t>();
        expected += t.at("support_rows").get<std::uint64_t>() * in_dim;
        expected += t.at("query_rows").get<std::uint64_t>() * in_dim;
        expected += t.at("class_count").get<std::uint64_t>() * d_dim;
    }
    if (expected != c.payload.size())
        throw ValueError(path + ": payload element count mismatch");

    std::size_t offset = 0;
    for (const auto& t : c.manifest.at("tasks")) {
        Task task;
        task.task_id = t.at("task_id").get<int>();
        task.class_count = t.at("class_count").get<int>();
        task.provenance_seed = t.at("provenance_seed").get<std::uint64_t>();
        const auto in_dim = t.at("input_dim").get<Eigen::Index>();
        const auto d_dim = t.at("descriptor_dim").get<Eigen::Index>();
        task.support_inputs = matrix_from(c.payload, offset, t.at("support_rows").get<Eigen::Index>(), in_dim);
        task.query_inputs = matrix_from(c.payload, offset, t.at("query_rows").get<Eigen::Index>(), in_dim);
        task.descriptors = matrix_from(c.payload, offset, task.class_count, d_dim);
        task.support_labels = t.at("support_labels").get<std::vector<int>>();
        task.query_labels = t.at("query_labels").get<std::vector<int>>();
        if (t.at("role") == "seen")
            out.suite.seen.push_back(std::move(task));
        else
            out.suite.unseen[t.at("parent").get<int>()].push_back(std::move(task));
    }
    return out;
}

}  // namespace snp
