#include "growlab/tasks/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "growlab/numerics/rng.hpp"
#include "growlab/util/errors.hpp"

namespace growlab {

namespace {

constexpr std::string_view kSeparator = "\n\n";

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::vector<int> tokenize(std::string_view text) {
    std::vector<int> ids(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) ids[i] = static_cast<unsigned char>(text[i]);
    return ids;
}

std::string detokenize(std::span<const int> ids) {
    std::string out(ids.size(), '\0');
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] > 255) throw InputError("token id " + std::to_string(ids[i]) + " is not a byte");
        out[i] = static_cast<char>(static_cast<unsigned char>(ids[i]));
    }
    return out;
}

std::vector<Document> load_documents(std::span<const std::filesystem::path> paths) {
    std::vector<std::pair<std::string, std::filesystem::path>> files;
    for (const auto& root : paths) {
        if (std::filesystem::is_regular_file(root)) {
            files.emplace_back(root.filename().string(), root);
        } else if (std::filesystem::is_directory(root)) {
            for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
                if (e.is_regular_file()) files.emplace_back(e.path().lexically_relative(root).generic_string(), e.path());
            }
        } else {
            throw InputError("corpus path " + root.string() + " does not exist");
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<Document> docs;
    docs.reserve(files.size());
    for (const auto& [name, path] : files) {
        auto text = read_file(path);
        if (!text.empty()) docs.push_back({name, std::move(text)});
    }
    return docs;
}

CorpusSplit split_documents(std::vector<Document> docs, const SplitFractions& fractions, std::uint64_t seed) {
    if (docs.empty()) throw InputError("corpus has no documents");
    const double f[3] = {fractions.train, fractions.heldout, fractions.lens};
    if (f[0] < 0 || f[1] < 0 || f[2] < 0 || std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) {
        throw ContractError("split fractions must be non-negative and sum to 1");
    }
    const std::size_t n = docs.size();
    std::size_t counts[3];
    double rem[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = f[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        rem[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i) {
            if (rem[i] > rem[best]) best = i;
        }
        ++counts[best];
        rem[best] = -1.0;
        ++assigned;
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, "corpus_split"));
    rng.shuffle(std::span<std::size_t>(order));

    CorpusSplit out;
    out.fractions = fractions;
    out.seed = seed;
    std::size_t k = 0;
    for (; k < counts[0]; ++k) out.train.push_back(std::move(docs[order[k]]));
    for (; k < counts[0] + counts[1]; ++k) out.heldout.push_back(std::move(docs[order[k]]));
    for (; k < n; ++k) out.lens.push_back(std::move(docs[order[k]]));
    return out;
}

CorpusSplit ingest_corpus(std::span<const std::filesystem::path> paths, const SplitFractions& fractions,
                          std::uint64_t seed) {
    return split_documents(load_documents(paths), fractions, seed);
}

std::filesystem::path bundled_corpus_dir() {
    return std::filesystem::path(GROWLAB_DATA_DIR) / "corpus";
}

std::vector<int> token_stream(std::span<const Document> docs) {
    std::vector<int> out;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (i > 0) {
            const auto sep = tokenize(kSeparator);
            out.insert(out.end(), sep.begin(), sep.end());
        }
        const auto t = tokenize(docs[i].text);
        out.insert(out.end(), t.begin(), t.end());
    }
    return out;
}

}  // namespace growlab
