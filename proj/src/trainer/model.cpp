#include "care/trainer.hpp"

#include "care/error.hpp"

#include <cmath>

namespace care::train {

std::string to_string(Architecture a) { return a == Architecture::Global ? "global" : "hierarchical"; }

std::string to_string(RefinerMode m) { return m == RefinerMode::ClassAware ? "class_aware" : "subgraph_only"; }

Architecture parse_architecture(std::string_view name) {
  if (name == "global") return Architecture::Global;
  if (name == "hierarchical") return Architecture::Hierarchical;
  throw ConfigError("unknown architecture '" + std::string(name) + "' (expected global or hierarchical)");
}

RefinerMode parse_refiner_mode(std::string_view name) {
  if (name == "class_aware") return RefinerMode::ClassAware;
  if (name == "subgraph_only") return RefinerMode::SubgraphOnly;
  throw ConfigError("unknown refiner '" + std::string(name) + "' (expected class_aware or subgraph_only)");
}

void ModelConfig::validate() const {
  if (architecture == Architecture::Hierarchical && backbone != enc::LayerKind::Gin) {
    throw ConfigError("hierarchical architecture requires the gin backbone (gcn and sage are global)");
  }
  if (depth < 1) throw ConfigError("depth must be >= 1");
  if (hidden < 1) throw ConfigError("hidden must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive and finite");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (bag_capacity < 1) throw ConfigError("bag_capacity must be >= 1");
  selector.validate();
  loss.validate();
}

namespace {

const ModelConfig& validated(const ModelConfig& c) {
  c.validate();
  return c;
}

struct Fnv {
  std::uint64_t h = 1469598103934665603ULL;
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= p[k];
      h *= 1099511628211ULL;
    }
  }
};

}  // namespace

Model::Model(const ModelConfig& config, Index feature_dim, int class_count, std::mt19937_64& init_rng)
    : config_(validated(config)),
      feature_dim_(feature_dim),
      class_count_(class_count),
      encoder_(config.backbone, feature_dim, config.hidden, config.depth, init_rng),
      head_w_("head.w", diff::uniform_init(config.hidden, class_count, config.hidden, init_rng)),
      head_b_("head.b", diff::uniform_init(1, class_count, config.hidden, init_rng)) {
  if (class_count < 2) throw ConfigError("classification needs at least two classes");
  if (!config.care_enabled) return;
  const int count = config.architecture == Architecture::Hierarchical ? config.depth : 1;
  const Index m = config.hidden;
  for (int s = 0; s < count; ++s) {
    const std::string prefix = "site." + std::to_string(s);
    Site site;
    site.score = Parameter(prefix + ".score", diff::uniform_init(m, 1, m, init_rng));
    site.refiner = ref::RefinerWeights(prefix, m, init_rng);
    site.state = ref::ClassState(class_count, m, config.bag_capacity);
    sites_.push_back(std::move(site));
  }
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out = encoder_.parameters();
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  for (Site& s : sites_) {
    out.push_back(&s.score);
    for (Parameter* p : s.refiner.parameters()) out.push_back(p);
  }
  return out;
}

bool Model::uses_class_state() const {
  return config_.care_enabled && config_.refiner == RefinerMode::ClassAware;
}

void Model::set_state_mode(ref::StateMode mode) {
  for (Site& s : sites_) s.state.set_mode(mode);
}

void Model::refresh_class_states() {
  if (!uses_class_state()) return;
  for (Site& s : sites_) ref::refresh_class_representations(s.state, s.refiner);
}

std::uint64_t Model::hash() const {
  Fnv f;
  auto& self = const_cast<Model&>(*this);
  for (Parameter* p : self.parameters()) {
    f.bytes(p->value().data(), static_cast<std::size_t>(p->value().size()) * sizeof(double));
  }
  for (const Site& s : sites_) {
    const std::uint64_t h = s.state.hash();
    f.bytes(&h, sizeof(h));
  }
  return f.h;
}

std::vector<enc::GraphOperators> prepare_operators(const graph::Dataset& dataset) {
  std::vector<enc::GraphOperators> ops;
  ops.reserve(dataset.graphs.size());
  for (const auto& g : dataset.graphs) ops.push_back(enc::GraphOperators::from(g.adjacency, g.features));
  return ops;
}

ForwardOutput forward_graph(Model& model, const enc::GraphOperators& graph, diff::ParameterBinding& bind,
                            ForwardMode mode, std::optional<Index> label) {
  const ModelConfig& cfg = model.config();
  if (graph.features.cols() != model.feature_dim()) {
    throw ShapeError("graph features have width " + std::to_string(graph.features.cols()) + ", model expects " +
                     std::to_string(model.feature_dim()));
  }
  if (mode != ForwardMode::Eval && !label) throw ContractError("forward_graph: label required in this mode");
  if (label && (*label < 0 || *label >= model.class_count())) throw DomainError("forward_graph: label out of range");

  diff::Tape& tape = bind.tape();
  const enc::GraphTensors g = enc::bind(tape, graph);
  const std::vector<Tensor> layers = model.encoder().forward(bind, g);
  const enc::ReadoutMode readout_mode = model.encoder().readout_mode();
  const bool hierarchical = cfg.architecture == Architecture::Hierarchical;

  ForwardOutput out;
  if (!cfg.care_enabled) {
    if (hierarchical) {
      out.embedding = enc::readout(layers.front(), readout_mode);
      for (std::size_t l = 1; l < layers.size(); ++l) {
        out.embedding = diff::add(out.embedding, enc::readout(layers[l], readout_mode));
      }
    } else {
      out.embedding = enc::readout(layers.back(), readout_mode);
    }
  } else {
    auto& sites = model.sites();
    for (std::size_t s = 0; s < sites.size(); ++s) {
      Site& site = sites[s];
      const Tensor& h = hierarchical ? layers[s] : layers.back();
      SiteOutput so;
      so.hg = enc::readout(h, readout_mode);
      sel::Selection selection =
          cfg.selector.kind == sel::SelectorKind::SagPool
              ? sel::sagpool_select(graph.adjacency, g.normalized, h, bind(site.score), cfg.selector.pooling_ratio)
              : sel::none_select(graph.adjacency, h);
      so.kept = std::move(selection.kept);
      so.hg_sub = enc::readout(selection.features, readout_mode);
      Tensor refined;
      if (cfg.refiner == RefinerMode::SubgraphOnly) {
        refined = site.refiner.trans.forward(bind, diff::concat_cols(so.hg, so.hg_sub));
        so.hc = so.hg_sub;
        so.chosen = label.value_or(0);
      } else if (mode == ForwardMode::TrueLabel) {
        so.hc = tape.constant(site.state.hc(*label));
        so.chosen = *label;
        refined = ref::refine(so.hg, so.hc, site.refiner, bind);
      } else {
        const std::optional<Index> given = mode == ForwardMode::Train ? label : std::nullopt;
        ref::RefineOutput r = ref::refiner_step(so.hg, so.hg_sub, given, site.state, site.refiner, bind);
        so.hc = r.hc;
        so.chosen = r.chosen;
        refined = r.refined;
      }
      out.embedding = s == 0 ? refined : diff::add(out.embedding, refined);
      out.sites.push_back(std::move(so));
    }
  }
  out.logits = diff::add_row_bias(diff::matmul(out.embedding, bind(model.head_weight())), bind(model.head_bias()));
  return out;
}

}  // namespace care::train
