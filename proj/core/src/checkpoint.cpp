// Copyright 2026 The EGT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "egt/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <map>
#include <sstream>
#include <vector>

#include "binary_io.hpp"
#include "egt/errors.hpp"

namespace egt {
namespace {

std::string join(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s[i]);
  }
  return out;
}

void encode_header(std::ostringstream& os, const std::string& name,
                   const Network& net) {
  os << "network name=" << name << " input=" << join(net.input_shape())
     << " layers=" << net.size() << '\n';
  for (const LayerSpec& layer : net.layers()) {
    os << "layer " << to_string(layer.kind);
    switch (layer.kind) {
      case LayerKind::kLinear:
        os << " weight=" << join(layer.weight.shape())
           << " bias=" << join(layer.bias.shape());
        break;
      case LayerKind::kConv2d:
        os << " weight=" << join(layer.weight.shape())
           << " bias=" << join(layer.bias.shape()) << " stride=" << layer.stride
           << " padding=" << layer.padding;
        break;
      case LayerKind::kMaxPool2d:
      case LayerKind::kAvgPool2d:
        os << " window=" << layer.window << " stride=" << layer.stride
           << " padding=" << layer.padding;
        break;
      default:
        break;
    }
    os << '\n';
  }
}

void encode_params(std::string& bytes, const Network& net) {
  for (const LayerSpec& layer : net.layers()) {
    if (!layer.has_params()) continue;
    for (double v : layer.weight.values()) detail::put_f32(bytes, v);
    for (double v : layer.bias.values()) detail::put_f32(bytes, v);
  }
}

std::map<std::string, std::string> parse_fields(const std::string& line,
                                                std::size_t skip,
                                                detail::ByteReader& reader) {
  std::map<std::string, std::string> fields;
  std::istringstream is(line);
  std::string tok;
  for (std::size_t i = 0; i < skip; ++i) is >> tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) reader.fail("malformed header token '" + tok + "'");
    fields[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return fields;
}

std::size_t to_count(const std::string& s, detail::ByteReader& reader) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    reader.fail("malformed number '" + s + "' in header");
  }
  return static_cast<std::size_t>(std::stoull(s));
}

Shape to_shape(const std::string& s, detail::ByteReader& reader) {
  Shape out;
  std::string cur;
  for (char ch : s + ",") {
    if (ch == ',') {
      out.push_back(to_count(cur, reader));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  return out;
}

std::string field(const std::map<std::string, std::string>& f, const char* key,
                  detail::ByteReader& reader) {
  const auto it = f.find(key);
  if (it == f.end()) reader.fail(std::string("header lacks '") + key + "'");
  return it->second;
}

struct PendingNetwork {
  std::string name;
  Shape input;
  std::size_t declared = 0;
  std::vector<LayerSpec> layers;
};

}  // namespace

std::string encode_checkpoint(const FewShotModel& model) {
  validate_head_kind(model.head);
  std::ostringstream os;
  char beta[64];
  std::snprintf(beta, sizeof beta, "%.17g", model.beta);
  os << "EGT1\nmodel head=" << to_string(model.head) << " beta=" << beta << '\n';
  encode_header(os, "encoder", model.encoder);
  if (model.head == HeadKind::kRelation) encode_header(os, "relation", model.relation);
  os << "end\n";
  std::string bytes = os.str();
  encode_params(bytes, model.encoder);
  if (model.head == HeadKind::kRelation) encode_params(bytes, model.relation);
  return bytes;
}

FewShotModel decode_checkpoint(const std::string& bytes, const std::string& source) {
  detail::ByteReader reader(bytes, source);
  if (reader.remaining() < 5 || reader.take(5) != "EGT1\n") {
    throw DataError(source + ": not an EGT1 checkpoint (bad magic bytes)");
  }
  std::string line = reader.line();
  if (line.rfind("model ", 0) != 0) reader.fail("expected model line");
  auto mf = parse_fields(line, 1, reader);
  FewShotModel model;
  try {
    model.head = head_kind_from_string(field(mf, "head", reader));
    model.beta = std::stod(field(mf, "beta", reader));
  } catch (const ConfigError&) {
    reader.fail("unknown head '" + mf["head"] + "'");
  } catch (const std::logic_error&) {
    reader.fail("malformed beta");
  }
  if (!std::isfinite(model.beta) || model.beta <= 0.0) reader.fail("beta must be positive");

  std::vector<PendingNetwork> nets;
  while (true) {
    line = reader.line();
    if (line == "end") break;
    if (line.rfind("network ", 0) == 0) {
      auto f = parse_fields(line, 1, reader);
      nets.push_back({field(f, "name", reader),
                      to_shape(field(f, "input", reader), reader),
                      to_count(field(f, "layers", reader), reader),
                      {}});
      continue;
    }
    if (line.rfind("layer ", 0) != 0 || nets.empty()) {
      reader.fail("unexpected header line '" + line + "'");
    }
    std::istringstream is(line);
    std::string word, kind_name;
    is >> word >> kind_name;
    auto f = parse_fields(line, 2, reader);
    LayerSpec spec;
    try {
      spec.kind = layer_kind_from_string(kind_name);
    } catch (const ConfigError&) {
      reader.fail("unknown layer kind '" + kind_name + "'");
    }
    if (spec.has_params()) {
      spec.weight = Tensor(to_shape(field(f, "weight", reader), reader));
      spec.bias = Tensor(to_shape(field(f, "bias", reader), reader));
    }
    if (f.count("window")) spec.window = to_count(f["window"], reader);
    if (f.count("stride")) spec.stride = to_count(f["stride"], reader);
    if (f.count("padding")) spec.padding = to_count(f["padding"], reader);
    nets.back().layers.push_back(std::move(spec));
  }
  for (PendingNetwork& pn : nets) {
    if (pn.layers.size() != pn.declared) {
      reader.fail("network '" + pn.name + "' declares " +
                  std::to_string(pn.declared) + " layers but lists " +
                  std::to_string(pn.layers.size()));
    }
    for (LayerSpec& layer : pn.layers) {
      if (!layer.has_params()) continue;
      for (double& v : layer.weight.values()) v = reader.f32();
      for (double& v : layer.bias.values()) v = reader.f32();
      if (!layer.weight.all_finite() || !layer.bias.all_finite()) {
        reader.fail("non-finite parameter");
      }
    }
  }
  if (reader.remaining() != 0) reader.fail("trailing bytes after parameters");
  for (PendingNetwork& pn : nets) {
    Network net;
    try {
      net = Network(std::move(pn.input), std::move(pn.layers));
    } catch (const ContractError& e) {
      throw DataError(source + ": network '" + pn.name + "': " + e.what());
    }
    if (pn.name == "encoder") {
      model.encoder = std::move(net);
    } else if (pn.name == "relation") {
      model.relation = std::move(net);
    } else {
      throw DataError(source + ": unknown network '" + pn.name + "'");
    }
  }
  if (model.encoder.size() == 0) throw DataError(source + ": no encoder network");
  if (model.head == HeadKind::kRelation && model.relation.size() == 0) {
    throw DataError(source + ": relation head without relation network");
  }
  if (model.head == HeadKind::kRelation) {
    const Shape& f = model.encoder.output_shape();
    if (f.size() != 3 || model.relation.input_shape() != Shape{2 * f[0], f[1], f[2]}) {
      throw DataError(source + ": relation network input " +
                      shape_to_string(model.relation.input_shape()) +
                      " does not match encoder output " + shape_to_string(f));
    }
  }
  return model;
}

void save_checkpoint(const FewShotModel& model, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(model));
}

FewShotModel load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path), path.string());
}

}  // namespace egt
