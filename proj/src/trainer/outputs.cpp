#include "care/trainer.hpp"

#include "care/error.hpp"
#include "care/sepmetrics.hpp"

#include <charconv>
#include <fstream>

namespace care::train {

namespace {

constexpr const char* kCheckpointFormat = "care-checkpoint";
constexpr int kCheckpointVersion = 1;

std::string number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

sep::EmbeddingSet to_set(const EmbeddingDump& d) {
  sep::EmbeddingSet s;
  s.points = d.vectors;
  s.labels.assign(d.labels.begin(), d.labels.end());
  s.ids.assign(d.ids.begin(), d.ids.end());
  return s;
}

}  // namespace

Checkpoint capture(Model& model, int epoch) {
  Checkpoint c;
  c.epoch = epoch;
  for (Parameter* p : model.parameters()) {
    c.names.push_back(p->name());
    c.values.push_back(p->value());
  }
  for (const Site& s : model.sites()) c.states.push_back(s.state);
  return c;
}

void restore(Model& model, const Checkpoint& checkpoint) {
  const std::vector<Parameter*> params = model.parameters();
  if (params.size() != checkpoint.values.size() || model.sites().size() != checkpoint.states.size()) {
    throw ContractError("checkpoint does not match the model layout");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->name() != checkpoint.names[k] || params[k]->rows() != checkpoint.values[k].rows() ||
        params[k]->cols() != checkpoint.values[k].cols()) {
      throw ContractError("checkpoint tensor '" + checkpoint.names[k] + "' does not match parameter '" +
                          params[k]->name() + "'");
    }
    params[k]->value() = checkpoint.values[k];
  }
  for (std::size_t s = 0; s < checkpoint.states.size(); ++s) model.sites()[s].state = checkpoint.states[s];
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t k = 0; k < checkpoint.values.size(); ++k) {
    const Matrix& m = checkpoint.values[k];
    tensors.push_back({{"name", checkpoint.names[k]},
                       {"shape", {m.rows(), m.cols()}},
                       {"data", std::vector<double>(m.data(), m.data() + m.size())}});
  }
  nlohmann::json states = nlohmann::json::array();
  for (const auto& s : checkpoint.states) states.push_back(s.to_json());
  write_json(path, {{"format", kCheckpointFormat},
                    {"version", kCheckpointVersion},
                    {"epoch", checkpoint.epoch},
                    {"tensors", tensors},
                    {"class_states", states}});
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("format") != kCheckpointFormat) throw FormatError(path.string() + ": not a checkpoint");
    if (j.at("version") != kCheckpointVersion) {
      throw FormatError(path.string() + ": unsupported checkpoint version " + j.at("version").dump());
    }
    Checkpoint c;
    c.epoch = j.at("epoch").get<int>();
    for (const auto& t : j.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<Index>>();
      const auto data = t.at("data").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] * shape[1] != static_cast<Index>(data.size())) {
        throw FormatError(path.string() + ": tensor '" + t.at("name").get<std::string>() + "' has a bad shape");
      }
      Matrix m(shape[0], shape[1]);
      std::copy(data.begin(), data.end(), m.data());
      c.names.push_back(t.at("name").get<std::string>());
      c.values.push_back(std::move(m));
    }
    for (const auto& s : j.at("class_states")) c.states.push_back(ref::ClassState::from_json(s));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

nlohmann::json RunResult::to_json() const {
  nlohmann::json per_fold = nlohmann::json::array();
  std::vector<double> accuracies;
  for (const auto& f : folds) {
    per_fold.push_back({{"fold", f.fold},
                        {"test_accuracy", f.test_accuracy},
                        {"stop_epoch", f.stop_epoch},
                        {"best_epoch", f.best_epoch},
                        {"best_val_loss", f.best_val_loss}});
    accuracies.push_back(f.test_accuracy);
  }
  return {{"folds", per_fold},
          {"fold_accuracies", accuracies},
          {"mean_accuracy", mean_accuracy},
          {"std_accuracy", std_accuracy},
          {"mean_epochs", mean_epochs},
          {"std_epochs", std_epochs}};
}

void write_run_outputs(const RunResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_json(dir / "run_result.json", result.to_json());
  write_json(dir / "timing.json", {{"wall_seconds", result.wall_seconds}});
  for (const auto& f : result.folds) {
    const std::string k = std::to_string(f.fold);
    {
      auto out = open_out(dir / ("trace_fold" + k + ".csv"));
      out << "epoch,train_loss,val_loss,train_acc,val_acc\n";
      for (const auto& r : f.trace) {
        out << r.epoch << ',' << number(r.train_loss) << ',' << number(r.val_loss) << ',' << number(r.train_acc)
            << ',' << number(r.val_acc) << '\n';
      }
    }
    {
      auto out = open_out(dir / ("losses_fold" + k + ".csv"));
      out << "epoch,L_cls,L_intra,L_inter,L_class,L_total\n";
      for (const auto& r : f.trace) {
        out << r.epoch << ',' << number(r.l_cls) << ',' << number(r.l_intra) << ',' << number(r.l_inter) << ','
            << number(r.l_class) << ',' << number(r.l_total) << '\n';
      }
    }
    if (!f.train_embeddings.ids.empty()) {
      sep::write_embeddings_csv(dir / ("embeddings_fold" + k + "_train.csv"), to_set(f.train_embeddings));
    }
    if (!f.test_embeddings.ids.empty()) {
      sep::write_embeddings_csv(dir / ("embeddings_fold" + k + "_test.csv"), to_set(f.test_embeddings));
    }
    write_json(dir / ("class_state_fold" + k + ".json"), f.class_states);
  }
}

}  // namespace care::train
