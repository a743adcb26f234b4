#include "glyco/checkpoint.hpp"

#include <json.hpp>

#include "glyco/error.hpp"
#include "glyco/textio.hpp"

namespace glyco {

using Json = nlohmann::ordered_json;

namespace {

Json matrix_json(const nn::Matrix& m) {
  Json data = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return Json{{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

nn::Matrix matrix_from(const Json& j) {
  const auto rows = j.at("shape").at(0).get<Eigen::Index>();
  const auto cols = j.at("shape").at(1).get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw Error(ErrorKind::InvalidConfig, "checkpoint tensor data does not match its shape");
  }
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) m(i, j2) = data[static_cast<std::size_t>(i * cols + j2)].get<double>();
  return m;
}

}  // namespace

std::string Checkpoint::config_hash() const { return fnv1a_hex(config_text); }

Checkpoint capture_checkpoint(std::string kind, std::string config_text, std::uint64_t seed,
                              const nn::ParameterStore& store, const nn::AdamState& adam,
                              std::vector<double> normalizer) {
  Checkpoint c;
  c.kind = std::move(kind);
  c.config_text = std::move(config_text);
  c.seed = seed;
  c.normalizer = std::move(normalizer);
  for (const auto& [name, t] : store.entries()) c.params.emplace_back(name, t.value());
  c.adam = adam;
  return c;
}

void restore_parameters(nn::ParameterStore& store, const Checkpoint& ckpt) {
  if (store.entries().size() != ckpt.params.size()) {
    throw Error(ErrorKind::InvalidConfig, "checkpoint has " + std::to_string(ckpt.params.size()) +
                                              " tensors, model expects " + std::to_string(store.entries().size()));
  }
  for (const auto& [name, value] : ckpt.params) {
    nn::Tensor& t = store.at(name);
    if (t.rows() != value.rows() || t.cols() != value.cols()) {
      throw Error(ErrorKind::InvalidConfig, "shape mismatch for tensor " + name);
    }
    t.mutable_value() = value;
  }
}

std::string checkpoint_to_json(const Checkpoint& c) {
  Json j;
  j["glyco"] = {{"config_hash", c.config_hash()}, {"seed", c.seed}};
  j["kind"] = c.kind;
  j["config"] = c.config_text;
  j["normalizer"] = c.normalizer;
  Json params = Json::array();
  for (const auto& [name, m] : c.params) {
    Json p = matrix_json(m);
    p["name"] = name;
    params.push_back(std::move(p));
  }
  j["parameters"] = std::move(params);
  Json m = Json::array(), v = Json::array();
  for (const auto& x : c.adam.m) m.push_back(matrix_json(x));
  for (const auto& x : c.adam.v) v.push_back(matrix_json(x));
  j["optimizer"] = {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps},
                    {"step", c.adam.step},  {"m", std::move(m)},     {"v", std::move(v)}};
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  try {
    const Json j = Json::parse(text);
    Checkpoint c;
    c.kind = j.at("kind").get<std::string>();
    c.config_text = j.at("config").get<std::string>();
    c.seed = j.at("glyco").at("seed").get<std::uint64_t>();
    if (j.at("glyco").at("config_hash").get<std::string>() != c.config_hash()) {
      throw Error(ErrorKind::InvalidConfig, "checkpoint config hash does not match its config");
    }
    c.normalizer = j.at("normalizer").get<std::vector<double>>();
    for (const auto& p : j.at("parameters")) c.params.emplace_back(p.at("name").get<std::string>(), matrix_from(p));
    const auto& o = j.at("optimizer");
    c.adam.lr = o.at("lr").get<double>();
    c.adam.beta1 = o.at("beta1").get<double>();
    c.adam.beta2 = o.at("beta2").get<double>();
    c.adam.eps = o.at("eps").get<double>();
    c.adam.step = o.at("step").get<long long>();
    for (const auto& x : o.at("m")) c.adam.m.push_back(matrix_from(x));
    for (const auto& x : o.at("v")) c.adam.v.push_back(matrix_from(x));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_file(path)); }

}  // namespace glyco
