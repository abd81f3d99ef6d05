#pragma once

#include <cstdint>
#include <vector>

#include "growlab/tasks/corpus.hpp"
#include "growlab/trainer/config.hpp"
#include "growlab/trainer/trainer.hpp"

namespace growlab {

struct PreparedData {
    CorpusSplit split;
    TrainData data;          // train: corpus train split plus solved primitives; heldout: corpus only
    std::vector<int> lens;   // lens split stream
};

/// Loads the configured corpus (the bundled one when corpus_dir is empty),
/// splits it with `seed`, and mixes `primitive_docs` solved few-shot documents
/// into the training split. Documents are ordered by a seeded shuffle.
PreparedData prepare_data(const DataConfig& cfg, std::uint64_t seed);

}  // namespace growlab
