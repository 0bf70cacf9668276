#include "crossfuse/fusion.hpp"

namespace crossfuse {

const char* variant_name(FusionVariant v) {
  switch (v) {
    case FusionVariant::None: return "none";
    case FusionVariant::Cross: return "cross";
    case FusionVariant::Concat: return "concat";
    case FusionVariant::PlainSum: return "plain-sum";
    case FusionVariant::WeightedSum: return "weighted-sum";
  }
  return "?";
}

FusionVariant parse_variant(const std::string& name) {
  for (auto v : {FusionVariant::None, FusionVariant::Cross, FusionVariant::Concat,
                 FusionVariant::PlainSum, FusionVariant::WeightedSum})
    if (name == variant_name(v)) return v;
  throw ConfigError("unknown fusion variant '" + name +
                    "' (expected none, cross, concat, plain-sum or weighted-sum)");
}

const char* graph_loss_name(GraphLoss l) { return l == GraphLoss::Bpr ? "bpr" : "mse"; }

GraphLoss parse_graph_loss(const std::string& name) {
  if (name == "bpr") return GraphLoss::Bpr;
  if (name == "mse") return GraphLoss::Mse;
  throw ConfigError("unknown graph loss '" + name + "' (expected bpr or mse)");
}

}  // namespace crossfuse
