#include "snp/telemetry.hpp"

#include <fstream>

#include "snp/errors.hpp"

namespace snp {

struct Telemetry::FileSink {
    std::ofstream out;
};

Telemetry::~Telemetry() = default;
Telemetry::Telemetry(Telemetry&&) noexcept = default;
Telemetry& Telemetry::operator=(Telemetry&&) noexcept = default;

Telemetry Telemetry::to_file(const std::string& path) {
    Telemetry t;
    t.file_ = std::make_unique<FileSink>();
    t.file_->out.open(path, std::ios::trunc);
    if (!t.file_->out) throw ValueError("Telemetry: cannot open " + path);
    return t;
}

Telemetry Telemetry::in_memory() { return Telemetry(); }

void Telemetry::emit(const nlohmann::json& record) {
    records_.push_back(record);
    if (file_) {
        file_->out << record.dump() << '\n';
        file_->out.flush();
    }
}

std::vector<nlohmann::json> Telemetry::records_of(const std::string& event) const {
    std::vector<nlohmann::json> out;
    for (const auto& r : records_)
        if (r.contains("event") && r["event"] == event) out.push_back(r);
    return out;
}

}  // namespace snp
