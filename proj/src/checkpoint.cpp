#include <cmath>
#include <cstdio>
#include <limits>

#include <json.hpp>

#include "pai/error.hpp"
#include "pai/io.hpp"
#include "pai/models.hpp"

namespace pai::models {

using ojson = nlohmann::ordered_json;

namespace {

// Losses of runs without a test set are NaN, which JSON cannot hold.
nlohmann::ordered_json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

double double_or_nan(const nlohmann::ordered_json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

/// Visits every parameter matrix in canonical tensor order.
template <class Params, class Fn>
void for_each_matrix(Params& p, Fn&& fn) {
  for (auto& l : p.lstm) {
    fn(l.wx);
    fn(l.wh);
    fn(l.b);
  }
  for (auto& l : p.linear) {
    fn(l.w);
    fn(l.b);
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorKind::CorruptCheckpoint, what); }

}  // namespace

std::string checkpoint_to_string(const Model& model) {
  const auto& s = model.spec();
  ojson j;
  j["format"] = "pai-checkpoint";
  j["version"] = kCheckpointVersion;
  j["spec"] = {{"kind", to_string(s.kind)},
               {"uaim_dim", s.uaim_dim},
               {"cfg_dim", s.cfg_dim},
               {"lstm_hidden", s.lstm_hidden},
               {"lstm_layers", s.lstm_layers},
               {"hier_uaim_hidden", s.hier_uaim_hidden},
               {"hier_cfg_hidden", s.hier_cfg_hidden},
               {"hier_top_hidden", s.hier_top_hidden},
               {"fc_hidden", s.fc_hidden},
               {"mlp_hidden", s.mlp_hidden},
               {"seed", s.seed}};
  j["schema_hash"] = hex64(model.schema_hash);
  if (model.norm) {
    const auto& n = *model.norm;
    j["norm"] = {{"uaim_mean", n.uaim_mean}, {"uaim_std", n.uaim_std}, {"cfg_mean", n.cfg_mean},
                 {"cfg_std", n.cfg_std},     {"computed_on", n.computed_on}};
  } else {
    j["norm"] = nullptr;
  }
  const auto& m = model.meta;
  j["meta"] = {{"epochs", m.epochs},         {"final_train_mse", finite_or_null(m.final_train_mse)},
               {"final_test_mse", finite_or_null(m.final_test_mse)}, {"seed", m.seed},
               {"lr", m.lr},                 {"batch_size", m.batch_size},
               {"converged", m.converged}};

  auto& params = j["params"] = ojson::array();
  const auto names = model.tensor_names();
  std::size_t k = 0;
  for_each_matrix(model.params(), [&](const auto& mat) {
    ojson t;
    t["name"] = names[k++];
    t["rows"] = mat.rows();
    t["cols"] = mat.cols();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(mat.size()));
    for (Eigen::Index r = 0; r < mat.rows(); ++r)
      for (Eigen::Index c = 0; c < mat.cols(); ++c) data.push_back(mat(r, c));
    t["data"] = std::move(data);
    params.push_back(std::move(t));
  });
  return j.dump() + "\n";
}

Model checkpoint_from_string(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("unparseable checkpoint: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "pai-checkpoint") corrupt("not a pai-checkpoint file");
  if (!j.contains("version") || !j["version"].is_number_integer()) corrupt("missing version");
  const int version = j["version"].get<int>();
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::UnsupportedVersion, "checkpoint version " + std::to_string(version));

  try {
    const auto& js = j.at("spec");
    ModelSpec spec;
    spec.kind = model_kind_from_string(js.at("kind").get<std::string>());
    spec.uaim_dim = js.at("uaim_dim").get<int>();
    spec.cfg_dim = js.at("cfg_dim").get<int>();
    spec.lstm_hidden = js.at("lstm_hidden").get<int>();
    spec.lstm_layers = js.at("lstm_layers").get<int>();
    spec.hier_uaim_hidden = js.at("hier_uaim_hidden").get<int>();
    spec.hier_cfg_hidden = js.at("hier_cfg_hidden").get<int>();
    spec.hier_top_hidden = js.at("hier_top_hidden").get<int>();
    spec.fc_hidden = js.at("fc_hidden").get<int>();
    spec.mlp_hidden = js.at("mlp_hidden").get<std::vector<int>>();
    spec.seed = js.at("seed").get<std::uint64_t>();

    Model model(spec);
    model.schema_hash = std::stoull(j.at("schema_hash").get<std::string>(), nullptr, 16);
    if (!j.at("norm").is_null()) {
      const auto& jn = j["norm"];
      dataset::NormStats n;
      n.uaim_mean = jn.at("uaim_mean").get<std::vector<double>>();
      n.uaim_std = jn.at("uaim_std").get<std::vector<double>>();
      n.cfg_mean = jn.at("cfg_mean").get<std::vector<double>>();
      n.cfg_std = jn.at("cfg_std").get<std::vector<double>>();
      n.computed_on = jn.at("computed_on").get<std::size_t>();
      if (n.uaim_mean.size() != static_cast<std::size_t>(spec.uaim_dim) || n.uaim_std.size() != n.uaim_mean.size() ||
          n.cfg_mean.size() != static_cast<std::size_t>(spec.cfg_dim) || n.cfg_std.size() != n.cfg_mean.size())
        corrupt("normalization statistics do not match the model widths");
      model.norm = std::move(n);
    }
    const auto& jm = j.at("meta");
    model.meta.epochs = jm.at("epochs").get<int>();
    model.meta.final_train_mse = double_or_nan(jm.at("final_train_mse"));
    model.meta.final_test_mse = double_or_nan(jm.at("final_test_mse"));
    model.meta.seed = jm.at("seed").get<std::uint64_t>();
    model.meta.lr = jm.at("lr").get<double>();
    model.meta.batch_size = jm.at("batch_size").get<int>();
    model.meta.converged = jm.at("converged").get<bool>();

    const auto& jp = j.at("params");
    const auto names = model.tensor_names();
    if (!jp.is_array() || jp.size() != names.size()) corrupt("parameter tensor count differs from the topology");
    std::size_t k = 0;
    for_each_matrix(model.params(), [&](auto& mat) {
      const auto& t = jp[k];
      if (t.at("name").get<std::string>() != names[k]) corrupt("tensor " + std::to_string(k) + " name mismatch");
      if (t.at("rows").get<Eigen::Index>() != mat.rows() || t.at("cols").get<Eigen::Index>() != mat.cols())
        corrupt("tensor " + names[k] + " shape mismatch");
      const auto data = t.at("data").get<std::vector<double>>();
      if (data.size() != static_cast<std::size_t>(mat.size())) corrupt("tensor " + names[k] + " length mismatch");
      std::size_t i = 0;
      for (Eigen::Index r = 0; r < mat.rows(); ++r)
        for (Eigen::Index c = 0; c < mat.cols(); ++c) mat(r, c) = data[i++];
      ++k;
    });
    return model;
  } catch (const nlohmann::json::exception& e) {
    corrupt(e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::CorruptCheckpoint) throw;
    corrupt(e.what());
  } catch (const std::invalid_argument& e) {
    corrupt(e.what());
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_to_string(model));
}

Model load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_string(read_file(path)); }

}  // namespace pai::models
