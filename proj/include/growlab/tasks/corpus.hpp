#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace growlab {

/// Byte-level tokenizer: one id (0..255) per byte.
std::vector<int> tokenize(std::string_view text);
/// Inverse of tokenize. Ids outside 0..255 raise InputError.
std::string detokenize(std::span<const int> ids);

struct Document {
    std::string name;  // path relative to the scanned root
    std::string text;
};

struct SplitFractions {
    double train = 0.8;
    double heldout = 0.1;
    double lens = 0.1;
};

/// Documents assigned whole to one of three splits.
struct CorpusSplit {
    std::vector<Document> train;
    std::vector<Document> heldout;
    std::vector<Document> lens;
    SplitFractions fractions;
    std::uint64_t seed = 0;
};

/// Every regular file under each path (or the file itself), one document per
/// file, ordered by path so the result does not depend on directory iteration.
std::vector<Document> load_documents(std::span<const std::filesystem::path> paths);

/// Seeded shuffle, then counts by largest remainder over the fractions.
/// An empty document list raises InputError.
CorpusSplit split_documents(std::vector<Document> docs, const SplitFractions& fractions, std::uint64_t seed);

CorpusSplit ingest_corpus(std::span<const std::filesystem::path> paths, const SplitFractions& fractions,
                          std::uint64_t seed);

/// Directory holding the bundled corpus.
std::filesystem::path bundled_corpus_dir();

/// Token stream of documents joined by a blank line.
std::vector<int> token_stream(std::span<const Document> docs);

}  // namespace growlab
