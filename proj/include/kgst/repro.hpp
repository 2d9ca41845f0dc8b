#pragma once

#include <cstdint>
#include <string>

#include "kgst/config.hpp"

namespace kgst {

// Builds the pretraining text corpus for the training-split graphs:
// qa_records_per_graph records "Q <sep> A" and graph_text_records_per_graph
// records "GRAPHTEXT <sep> Q <sep> A", with slots sampled per `seed`.
std::vector<std::string> build_pretrain_corpus(
    std::span<const KnowledgeGraph> graphs, const DatasetSplit& split,
    const CorpusConfig& corpus, std::uint64_t seed);

// Tokenizer covering the corpus: every label (plus plural), relation, and
// integers up to the largest node count.
Tokenizer build_tokenizer(std::span<const KnowledgeGraph> graphs);

// Full synthetic pipeline from one seed: graph generation, split, QA
// generation, LM pretraining, soft-token training on the configured cells,
// baseline evaluation, embedding export, and a manifest with the digests of
// every artifact. Returns the manifest.
nlohmann::ordered_json run_repro(const RunConfig& config, std::uint64_t seed,
                                 const std::string& out_dir);

}  // namespace kgst
