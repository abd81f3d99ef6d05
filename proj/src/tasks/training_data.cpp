#include "growlab/tasks/training_data.hpp"

#include "growlab/numerics/rng.hpp"
#include "growlab/tasks/primitives.hpp"

namespace growlab {

namespace {

// One query plus the five exemplars of a 5-shot prompt.
constexpr std::size_t kItemsPerDoc = 6;

}  // namespace

PreparedData prepare_data(const DataConfig& cfg, std::uint64_t seed) {
    const std::filesystem::path root = cfg.corpus_dir.empty() ? bundled_corpus_dir() : std::filesystem::path(cfg.corpus_dir);
    const std::vector<std::filesystem::path> roots = {root};
    PreparedData out;
    out.split = ingest_corpus(roots, {cfg.train_fraction, cfg.heldout_fraction, cfg.lens_fraction}, seed);

    std::vector<Document> train = out.split.train;
    for (std::size_t i = 0; i < cfg.primitive_docs; ++i) {
        const Family f = kFamilies[i % kFamilies.size()];
        Rng rng(derive_seed(seed, "primitives/" + std::to_string(i)));
        train.push_back({"primitives/" + to_string(f) + "/" + std::to_string(i), solved_document(f, kItemsPerDoc, rng)});
    }
    Rng order(derive_seed(seed, "train_order"));
    order.shuffle(std::span<Document>(train));

    out.data.train = token_stream(train);
    out.data.heldout = token_stream(out.split.heldout);
    out.lens = token_stream(out.split.lens);
    return out;
}

}  // namespace growlab
