#include "snp/memory_buffer.hpp"

#include <string>

#include "snp/errors.hpp"

namespace snp {
namespace {

void validate_support(const Batch& support) {
    support.validate();
    const int n = static_cast<int>(support.class_count());
    std::vector<int> counts(static_cast<std::size_t>(n), 0);
    for (int y : support.labels) counts[static_cast<std::size_t>(y)]++;
    for (int c = 0; c < n; ++c)
        if (counts[static_cast<std::size_t>(c)] != counts[0] || counts[0] < 1)
            throw ValueError("MemoryBuffer: support set must be N-way-K-shot "
                             "(equal samples per class)");
}

}  // namespace

void MemoryBuffer::register_task(int task_id, Batch support, double beta_base) {
    if (beta_base < 0.0) throw ValueError("MemoryBuffer: beta_base must be >= 0");
    validate_support(support);
    for (auto& e : entries_) {
        if (e.task_id == task_id) {
            e.support = std::move(support);
            e.beta_base = beta_base;
            return;
        }
    }
    entries_.push_back({task_id, std::move(support), beta_base});
}

bool MemoryBuffer::has(int task_id) const {
    for (const auto& e : entries_)
        if (e.task_id == task_id) return true;
    return false;
}

const MemoryEntry& MemoryBuffer::entry(int task_id) const {
    for (const auto& e : entries_)
        if (e.task_id == task_id) return e;
    throw ValueError("MemoryBuffer: unknown task " + std::to_string(task_id));
}

void MemoryBuffer::set_beta(int task_id, double beta) {
    if (beta < 0.0) throw ValueError("MemoryBuffer: beta_base must be >= 0");
    for (auto& e : entries_) {
        if (e.task_id == task_id) {
            e.beta_base = beta;
            return;
        }
    }
    throw ValueError("MemoryBuffer: unknown task " + std::to_string(task_id));
}

void MemoryBuffer::add_alias(int new_task_id, int target_task_id) {
    if (!has(target_task_id))
        throw ValueError("MemoryBuffer: alias target " + std::to_string(target_task_id) +
                         " is not registered");
    aliases_.emplace_back(new_task_id, target_task_id);
}

}  // namespace snp
