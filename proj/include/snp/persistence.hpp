#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "snp/memory_buffer.hpp"
#include "snp/meta_learner.hpp"
#include "snp/model.hpp"
#include "snp/task_world.hpp"

namespace snp {

// All artifacts share one container: a magic line, a JSON manifest, then a
// raw payload of little-endian 64-bit floats. Readers validate the element
// count against the manifest before accepting the payload.

struct Checkpoint {
    ParamVector params;
    ModelConfig config;
    std::uint64_t seed = 0;
    std::optional<DriftProfile> drift_profile;  // usually the final training profile
    std::optional<double> radius_estimate;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

void save_memory(const std::string& path, const MemoryBuffer& memory);
MemoryBuffer load_memory(const std::string& path);

struct SuiteFile {
    TaskSuite suite;
    SuiteSpec spec;
    std::uint64_t seed = 0;
};

void save_suite(const std::string& path, const SuiteFile& suite);
SuiteFile load_suite(const std::string& path);

// JSON <-> config helpers shared by the persistence layer and the CLI.
nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json hyper_to_json(const HyperParams& hyper);
HyperParams hyper_from_json(const nlohmann::json& j);
nlohmann::json suite_spec_to_json(const SuiteSpec& spec);
SuiteSpec suite_spec_from_json(const nlohmann::json& j);

}  // namespace snp
