#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace snp {

// Line-delimited JSON event sink. Training and expansion loops emit one
// record per epoch plus events for beta updates, clamps and rollbacks.
// A null sink pointer anywhere in the library means "no telemetry".
class Telemetry {
public:
    static Telemetry to_file(const std::string& path);
    static Telemetry in_memory();
    ~Telemetry();

    Telemetry(Telemetry&&) noexcept;
    Telemetry& operator=(Telemetry&&) noexcept;
    Telemetry(const Telemetry&) = delete;
    Telemetry& operator=(const Telemetry&) = delete;

    void emit(const nlohmann::json& record);

    // Records seen so far (kept in memory in both modes).
    const std::vector<nlohmann::json>& records() const { return records_; }

    std::vector<nlohmann::json> records_of(const std::string& event) const;

private:
    Telemetry() = default;
    struct FileSink;
    std::unique_ptr<FileSink> file_;
    std::vector<nlohmann::json> records_;
};

}  // namespace snp
