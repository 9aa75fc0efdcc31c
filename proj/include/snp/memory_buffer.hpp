#pragma once

#include <utility>
#include <vector>

#include "snp/model.hpp"

namespace snp {

// One stored N-way-K-shot support set per registered task plus its drift
// regularization coefficient. beta_base == 0 marks a task released for
// overwrite; the entry stays so its drift remains measurable.
struct MemoryEntry {
    int task_id = 0;
    Batch support;
    double beta_base = 0.0;
};

class MemoryBuffer {
public:
    // Registers (or replaces) a task's single support-set instance. The
    // support must hold the same number of samples for every class.
    void register_task(int task_id, Batch support, double beta_base);

    bool has(int task_id) const;
    const MemoryEntry& entry(int task_id) const;
    void set_beta(int task_id, double beta);

    const std::vector<MemoryEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    // Interpolated tasks do not get entries of their own; they map onto an
    // existing subnetwork.
    void add_alias(int new_task_id, int target_task_id);
    const std::vector<std::pair<int, int>>& aliases() const { return aliases_; }

private:
    std::vector<MemoryEntry> entries_;
    std::vector<std::pair<int, int>> aliases_;
};

}  // namespace snp
