#include "uptodate/core/types.hpp"

namespace uptodate::core {

void to_json(nlohmann::json& j, const EvidenceBatch& batch) {
  j = nlohmann::json{{"items", batch.items()}, {"total_cost", batch.total_cost()}};
}

void from_json(const nlohmann::json& j, EvidenceBatch& batch) {
  batch = EvidenceBatch{};
  for (const auto& item : j.at("items")) batch.add(item.get<EvidenceItem>());
}

void to_json(nlohmann::json& j, const KnowledgeState& knowledge) { j = knowledge.entries(); }

void from_json(const nlohmann::json& j, KnowledgeState& knowledge) {
  knowledge = KnowledgeState{};
  for (const auto& entry : j) knowledge.append(entry.get<KnowledgeEntry>());
}

}  // namespace uptodate::core
