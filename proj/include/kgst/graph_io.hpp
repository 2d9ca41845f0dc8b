#pragma once

#include <string>
#include <vector>

#include "kgst/graph.hpp"

namespace kgst {

// Graph JSONL, one graph per line:
// {"graph_id": str, "labels": [str, ...], "relations": [str, ...],
//  "triples": [[h, r, t], ...]}
// where the index into labels/relations is the entity/relation id.

// Rejects rather than repairs: malformed lines raise ParseError with the line
// number, invariant violations raise ValidationError naming graph and rule.
std::vector<KnowledgeGraph> load_graphs(const std::string& path);

void save_graphs(const std::string& path,
                 std::span<const KnowledgeGraph> graphs);

std::string graph_to_jsonl_line(const KnowledgeGraph& graph);
KnowledgeGraph graph_from_jsonl_line(const std::string& line);

}  // namespace kgst
