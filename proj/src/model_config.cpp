// SPDX-License-Identifier: Apache-2.0
#include <nlohmann/json.hpp>

#include "deltaspike/net.hpp"

namespace deltaspike::net {

namespace {

using nlohmann::json;

json layer_to_json(const LayerSpec& s) {
  return {{"kind", s.kind == LayerSpec::Kind::kFc ? "fc" : "conv"},
          {"units", s.units},
          {"kernel_t", s.kernel_t},
          {"kernel_f", s.kernel_f},
          {"dilation_t", s.dilation_t},
          {"dilation_f", s.dilation_f}};
}

LayerSpec layer_from_json(const json& j) {
  LayerSpec s;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "fc") {
    s.kind = LayerSpec::Kind::kFc;
  } else if (kind == "conv") {
    s.kind = LayerSpec::Kind::kConv;
  } else {
    throw ParameterError("model config: unknown layer kind '" + kind + "'");
  }
  s.units = j.at("units").get<std::size_t>();
  s.kernel_t = j.value("kernel_t", std::size_t{1});
  s.kernel_f = j.value("kernel_f", std::size_t{1});
  s.dilation_t = j.value("dilation_t", std::size_t{1});
  s.dilation_f = j.value("dilation_f", std::size_t{1});
  return s;
}

}  // namespace

std::string to_json(const ModelConfig& c) {
  json layers = json::array();
  for (const auto& l : c.layers) layers.push_back(layer_to_json(l));
  json j = {{"input_steps", c.input_steps},     {"input_bins", c.input_bins},
            {"input_channels", c.input_channels}, {"layers", layers},
            {"n_classes", c.n_classes},         {"lateral", c.lateral},
            {"tau_mem", c.tau_mem},             {"dt", c.dt},
            {"threshold_init", c.threshold_init}, {"init_gain", c.init_gain}};
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ModelConfig c;
    c.input_steps = j.at("input_steps").get<std::size_t>();
    c.input_bins = j.at("input_bins").get<std::size_t>();
    c.input_channels = j.at("input_channels").get<std::size_t>();
    for (const auto& l : j.at("layers")) c.layers.push_back(layer_from_json(l));
    c.n_classes = j.at("n_classes").get<std::size_t>();
    c.lateral = j.at("lateral").get<bool>();
    c.tau_mem = j.at("tau_mem").get<double>();
    c.dt = j.at("dt").get<double>();
    c.threshold_init = j.at("threshold_init").get<double>();
    c.init_gain = j.value("init_gain", c.init_gain);
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("model config: ") + e.what());
  }
}

}  // namespace deltaspike::net
