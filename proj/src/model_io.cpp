#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "softrecon/errors.hpp"
#include "softrecon/models.hpp"
#include "softrecon/version.hpp"

namespace softrecon::model {

namespace {

using nlohmann::json;

/// Doubles as 16-hex-digit IEEE 754 words; bit-faithful across runs.
std::string hex_encode(const double* data, std::size_t n) {
  std::string out;
  out.reserve(n * 16);
  char buf[17];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(data[i])));
    out.append(buf, 16);
  }
  return out;
}

void hex_decode(const std::string& hex, double* data, std::size_t n) {
  if (hex.size() != n * 16) throw CorruptFile("parameter blob has the wrong length");
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (std::size_t k = 0; k < 16; ++k) {
      const char c = hex[i * 16 + k];
      std::uint64_t digit = 0;
      if (c >= '0' && c <= '9') digit = std::uint64_t(c - '0');
      else if (c >= 'a' && c <= 'f') digit = std::uint64_t(c - 'a' + 10);
      else throw CorruptFile("parameter blob contains a non-hex character");
      bits = (bits << 4) | digit;
    }
    data[i] = std::bit_cast<double>(bits);
  }
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  return json{{"rows", m.rows()},
              {"cols", m.cols()},
              {"data", hex_encode(m.data(), std::size_t(m.size()))}};  // column-major
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  Eigen::MatrixXd m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  hex_decode(j.at("data").get<std::string>(), m.data(), std::size_t(m.size()));
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  return json{{"size", v.size()}, {"data", hex_encode(v.data(), std::size_t(v.size()))}};
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.at("size").get<Eigen::Index>());
  hex_decode(j.at("data").get<std::string>(), v.data(), std::size_t(v.size()));
  return v;
}

json doubles_to_json(const std::vector<double>& v) {
  return json{{"size", v.size()}, {"data", hex_encode(v.data(), v.size())}};
}

std::vector<double> doubles_from_json(const json& j) {
  std::vector<double> v(j.at("size").get<std::size_t>());
  hex_decode(j.at("data").get<std::string>(), v.data(), v.size());
  return v;
}

}  // namespace

void save_model(const Regressor& model, const std::string& path) {
  json j;
  j["format_version"] = kFormatVersion;
  j["tool_version"] = kVersion;

  const ModelConfig& c = model.config;
  j["config"] = {{"kind", to_string(c.kind)},
                 {"input_dim", c.input_dim},
                 {"output_dim", c.output_dim},
                 {"hidden_size", c.hidden_size},
                 {"head", to_string(c.head)},
                 {"tanh_lead", c.tanh_lead},
                 {"label_scale", to_string(c.label_scale)},
                 {"window_len", c.window_len},
                 {"channels", c.channels},
                 {"seed", c.seed},
                 {"optimizer",
                  {{"learning_rate", c.opt.learning_rate},
                   {"momentum", c.opt.momentum},
                   {"weight_decay", c.opt.weight_decay},
                   {"batch_size", c.opt.batch_size},
                   {"max_epochs", c.opt.max_epochs},
                   {"patience", c.opt.patience}}},
                 {"svr",
                  {{"c", c.svr.c},
                   {"epsilon", c.svr.epsilon},
                   {"gamma", c.svr.gamma},
                   {"tol", c.svr.tol},
                   {"max_iter", c.svr.max_iter}}}};

  j["label_transform"] = {{"offset", doubles_to_json(model.label_tf.offset)},
                          {"scale", doubles_to_json(model.label_tf.scale)}};
  j["norm_stats_digest"] = model.norm_stats_digest;

  // wall_seconds stays out: model files must be byte-identical across reruns.
  j["report"] = {{"train_loss", doubles_to_json(model.report.train_loss)},
                 {"val_loss", doubles_to_json(model.report.val_loss)},
                 {"epochs_run", model.report.epochs_run},
                 {"best_epoch", model.report.best_epoch},
                 {"best_val_loss", hex_encode(&model.report.best_val_loss, 1)}};

  switch (c.kind) {
    case ModelKind::MVLR:
      j["params"] = {{"w", matrix_to_json(model.mvlr_w)}};
      break;
    case ModelKind::FNN:
      j["params"] = {{"w1", matrix_to_json(model.fnn.w1)},
                     {"b1", vector_to_json(model.fnn.b1)},
                     {"w2", matrix_to_json(model.fnn.w2)},
                     {"b2", vector_to_json(model.fnn.b2)}};
      break;
    case ModelKind::LSTM:
      j["params"] = {{"wx", matrix_to_json(model.lstm.wx)},
                     {"wh", matrix_to_json(model.lstm.wh)},
                     {"b", vector_to_json(model.lstm.b)},
                     {"wy", matrix_to_json(model.lstm.wy)},
                     {"by", vector_to_json(model.lstm.by)}};
      break;
    case ModelKind::SVR: {
      json dims = json::array();
      for (const SvrDim& d : model.svr.dims)
        dims.push_back({{"support_x", matrix_to_json(d.support_x)},
                        {"beta", vector_to_json(d.beta)},
                        {"bias", hex_encode(&d.bias, 1)}});
      j["params"] = {{"gamma", hex_encode(&model.svr.gamma, 1)}, {"dims", dims}};
      break;
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

Regressor load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();

  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::exception& e) {
    throw CorruptFile("model file " + path + ": " + e.what());
  }

  try {
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion)
      throw VersionMismatch("model format " + std::to_string(version) + ", expected " +
                            std::to_string(kFormatVersion));

    Regressor model;
    const json& jc = j.at("config");
    ModelConfig& c = model.config;
    c.kind = model_kind_from_string(jc.at("kind").get<std::string>());
    c.input_dim = jc.at("input_dim").get<int>();
    c.output_dim = jc.at("output_dim").get<int>();
    c.hidden_size = jc.at("hidden_size").get<int>();
    c.head = head_from_string(jc.at("head").get<std::string>());
    c.tanh_lead = jc.at("tanh_lead").get<int>();
    c.window_len = jc.at("window_len").get<int>();
    c.channels = jc.at("channels").get<int>();
    c.seed = jc.at("seed").get<std::uint64_t>();
    c.label_scale = label_scale_from_string(jc.value("label_scale", "per_dim"));
    const json& jo = jc.at("optimizer");
    c.opt.learning_rate = jo.at("learning_rate").get<double>();
    c.opt.momentum = jo.at("momentum").get<double>();
    c.opt.weight_decay = jo.value("weight_decay", 0.0);
    c.opt.batch_size = jo.at("batch_size").get<int>();
    c.opt.max_epochs = jo.at("max_epochs").get<int>();
    c.opt.patience = jo.at("patience").get<int>();
    const json& js = jc.at("svr");
    c.svr.c = js.at("c").get<double>();
    c.svr.epsilon = js.at("epsilon").get<double>();
    c.svr.gamma = js.at("gamma").get<double>();
    c.svr.tol = js.at("tol").get<double>();
    c.svr.max_iter = js.at("max_iter").get<long>();

    model.label_tf.offset = doubles_from_json(j.at("label_transform").at("offset"));
    model.label_tf.scale = doubles_from_json(j.at("label_transform").at("scale"));
    model.norm_stats_digest = j.at("norm_stats_digest").get<std::string>();

    const json& jr = j.at("report");
    model.report.train_loss = doubles_from_json(jr.at("train_loss"));
    model.report.val_loss = doubles_from_json(jr.at("val_loss"));
    model.report.epochs_run = jr.at("epochs_run").get<int>();
    model.report.best_epoch = jr.at("best_epoch").get<int>();
    hex_decode(jr.at("best_val_loss").get<std::string>(), &model.report.best_val_loss, 1);

    const json& jp = j.at("params");
    switch (c.kind) {
      case ModelKind::MVLR:
        model.mvlr_w = matrix_from_json(jp.at("w"));
        break;
      case ModelKind::FNN:
        model.fnn.w1 = matrix_from_json(jp.at("w1"));
        model.fnn.b1 = vector_from_json(jp.at("b1"));
        model.fnn.w2 = matrix_from_json(jp.at("w2"));
        model.fnn.b2 = vector_from_json(jp.at("b2"));
        break;
      case ModelKind::LSTM:
        model.lstm.wx = matrix_from_json(jp.at("wx"));
        model.lstm.wh = matrix_from_json(jp.at("wh"));
        model.lstm.b = vector_from_json(jp.at("b"));
        model.lstm.wy = matrix_from_json(jp.at("wy"));
        model.lstm.by = vector_from_json(jp.at("by"));
        break;
      case ModelKind::SVR: {
        hex_decode(jp.at("gamma").get<std::string>(), &model.svr.gamma, 1);
        for (const json& jd : jp.at("dims")) {
          SvrDim d;
          d.support_x = matrix_from_json(jd.at("support_x"));
          d.beta = vector_from_json(jd.at("beta"));
          hex_decode(jd.at("bias").get<std::string>(), &d.bias, 1);
          model.svr.dims.push_back(std::move(d));
        }
        break;
      }
    }
    return model;
  } catch (const json::exception& e) {
    throw CorruptFile("model file " + path + ": " + e.what());
  }
}

ModelConfig model_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  try {
    if (j.value("format_version", 0) != kFormatVersion)
      throw ConfigError("model config: unsupported or missing format_version");
    ModelConfig c;
    c.kind = model_kind_from_string(j.at("kind").get<std::string>());
    c.hidden_size = j.value("hidden_size", c.hidden_size);
    if (j.contains("head")) c.head = head_from_string(j["head"].get<std::string>());
    if (j.contains("label_scale"))
      c.label_scale = label_scale_from_string(j["label_scale"].get<std::string>());
    c.tanh_lead = j.value("tanh_lead", c.tanh_lead);
    c.seed = j.value("seed", c.seed);
    if (j.contains("optimizer")) {
      const json& jo = j["optimizer"];
      c.opt.learning_rate = jo.value("learning_rate", c.opt.learning_rate);
      c.opt.momentum = jo.value("momentum", c.opt.momentum);
      c.opt.weight_decay = jo.value("weight_decay", c.opt.weight_decay);
      c.opt.batch_size = jo.value("batch_size", c.opt.batch_size);
      c.opt.max_epochs = jo.value("max_epochs", c.opt.max_epochs);
      c.opt.patience = jo.value("patience", c.opt.patience);
    }
    if (j.contains("svr")) {
      const json& js = j["svr"];
      c.svr.c = js.value("c", c.svr.c);
      c.svr.epsilon = js.value("epsilon", c.svr.epsilon);
      c.svr.gamma = js.value("gamma", c.svr.gamma);
      c.svr.tol = js.value("tol", c.svr.tol);
      c.svr.max_iter = js.value("max_iter", c.svr.max_iter);
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

}  // namespace softrecon::model
