#include <istream>
#include <ostream>

#include "json.hpp"
#include "sapa/error.hpp"
#include "sapa/model.hpp"

namespace sapa {

namespace {

using json = nlohmann::ordered_json;

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<E> values, const char* what) {
  for (E v : values) {
    if (to_string(v) == s) return v;
  }
  throw SchemaError(std::string("checkpoint: unknown ") + what + " '" + s + "'");
}

json config_to_json(const ModelConfig& c) {
  return json{{"d_c", c.d_c},
              {"d_s", c.d_s},
              {"use_projection", c.use_projection},
              {"d_proj", c.d_proj},
              {"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"n_layers", c.n_layers},
              {"d_ff", c.d_ff},
              {"fc_widths", c.fc_widths},
              {"activation", to_string(c.activation)},
              {"input", to_string(c.input)},
              {"sequence", to_string(c.sequence)},
              {"positional_encoding", c.positional_encoding},
              {"layer_norm_eps", c.layer_norm_eps},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"lambda1", c.lambda1},
              {"lambda2", c.lambda2},
              {"phoneme_loss", c.phoneme_loss},
              {"speaker_loss", c.speaker_loss}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_c = j.at("d_c").get<std::size_t>();
  c.d_s = j.at("d_s").get<std::size_t>();
  c.use_projection = j.at("use_projection").get<bool>();
  c.d_proj = j.at("d_proj").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.fc_widths = j.at("fc_widths").get<std::array<std::size_t, 4>>();
  c.activation = parse_enum(j.at("activation").get<std::string>(),
                            {Activation::relu, Activation::tanh, Activation::gelu}, "activation");
  c.input = parse_enum(j.at("input").get<std::string>(),
                       {InputMode::fused, InputMode::content_only, InputMode::speaker_only},
                       "input mode");
  c.sequence = parse_enum(j.at("sequence").get<std::string>(),
                          {SequenceMode::segments, SequenceMode::utterance}, "sequence mode");
  c.positional_encoding = j.at("positional_encoding").get<bool>();
  c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.lambda1 = j.at("lambda1").get<double>();
  c.lambda2 = j.at("lambda2").get<double>();
  c.phoneme_loss = j.at("phoneme_loss").get<bool>();
  c.speaker_loss = j.at("speaker_loss").get<bool>();
  return c;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& params,
                      const std::map<std::string, std::string>& metadata) {
  json tensors = json::array();
  params.for_each([&](const std::string& name, const auto& t) {
    tensors.push_back({{"name", name},
                       {"rows", t.rows()},
                       {"cols", t.cols()},
                       {"data", std::vector<double>(t.data(), t.data() + t.size())}});
  });
  json j{{"format", "sapa-checkpoint"},
         {"version", 1},
         {"metadata", metadata},
         {"config", config_to_json(params.config)},
         {"tensors", std::move(tensors)}};
  out << j.dump() << '\n';
  if (!out) throw IoError("failed to write checkpoint");
}

ModelParams read_checkpoint(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what(), 0);
  }
  try {
    if (j.value("format", "") != "sapa-checkpoint") throw SchemaError("not a sapa checkpoint");
    if (j.at("version").get<int>() != 1) throw SchemaError("unsupported checkpoint version");
    ModelConfig cfg = config_from_json(j.at("config"));
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      throw SchemaError(std::string("checkpoint config: ") + e.what());
    }
    ModelParams p = ModelParams::zeros(cfg);
    const auto& tensors = j.at("tensors");
    std::size_t i = 0;
    p.for_each([&](const std::string& name, auto& t) {
      if (i >= tensors.size()) throw SchemaError("checkpoint is missing tensor " + name);
      const auto& tj = tensors[i++];
      if (tj.at("name").get<std::string>() != name) {
        throw SchemaError("checkpoint tensor order: expected " + name + ", found " +
                          tj.at("name").get<std::string>());
      }
      const auto rows = tj.at("rows").get<Eigen::Index>();
      const auto cols = tj.at("cols").get<Eigen::Index>();
      if (rows != t.rows() || cols != t.cols()) {
        throw SchemaError("tensor " + name + " has shape " + std::to_string(rows) + "x" +
                          std::to_string(cols) + ", config implies " + std::to_string(t.rows()) +
                          "x" + std::to_string(t.cols()));
      }
      const auto data = tj.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != t.size()) {
        throw SchemaError("tensor " + name + " has " + std::to_string(data.size()) + " values");
      }
      std::copy(data.begin(), data.end(), t.data());
    });
    if (i != tensors.size()) throw SchemaError("checkpoint has extra tensors");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), 0);
  }
}

}  // namespace sapa
