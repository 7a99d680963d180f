#include "hecnn/model_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hecnn/errors.hpp"
#include "json.hpp"

namespace hecnn {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'H', 'C', 'N', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 1;

static_assert(std::endian::native == std::endian::little, "tensor IO assumes a little-endian host");

[[noreturn]] void field_error(const std::string& source, const std::string& path,
                              const std::string& what) {
  throw ValidationError(source + ": " + path + ": " + what);
}

std::string line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

json parse_json(std::string_view text, const std::string& source) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    std::string message = e.what();
    if (auto pos = message.find("parse error"); pos != std::string::npos) message = message.substr(pos);
    throw ValidationError(source + ": " + line_col(text, e.byte == 0 ? 0 : e.byte - 1) + ": " +
                          message);
  }
}

int get_int(const json& obj, const std::string& key, const std::string& path,
            const std::string& source, std::optional<int> fallback = std::nullopt) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    field_error(source, path + "." + key, "missing required integer");
  }
  const json& v = obj.at(key);
  if (!v.is_number_integer()) field_error(source, path + "." + key, "expected an integer");
  const auto value = v.get<long long>();
  if (value < 0 || value > (1LL << 40)) field_error(source, path + "." + key, "out of range");
  return static_cast<int>(value);
}

bool get_bool(const json& obj, const std::string& key, bool fallback, const std::string& source) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_boolean()) field_error(source, key, "expected true or false");
  return obj.at(key).get<bool>();
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& path,
                const std::string& source) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) field_error(source, path.empty() ? key : path + "." + key, "unknown field");
  }
}

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos, const std::string& source) {
  if (pos + sizeof(T) > in.size()) throw ValidationError(source + ": truncated tensor container");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

std::vector<Tensor> parse_binary(const std::string& bytes, const std::string& source) {
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(bytes, pos, source);
  if (version != kVersion) {
    throw ValidationError(source + ": unsupported tensor container version " + std::to_string(version));
  }
  const auto count = take<std::uint32_t>(bytes, pos, source);
  std::vector<Tensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto dtype = take<std::uint8_t>(bytes, pos, source);
    if (dtype != kDtypeF64) throw ValidationError(source + ": unsupported dtype " + std::to_string(dtype));
    const auto rank = take<std::uint32_t>(bytes, pos, source);
    if (rank > 8) throw ValidationError(source + ": tensor rank " + std::to_string(rank) + " too large");
    std::vector<std::size_t> shape;
    std::size_t elements = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<std::size_t>(take<std::uint64_t>(bytes, pos, source)));
      elements *= shape.back();
    }
    if (elements > (bytes.size() - pos) / sizeof(double)) {
      throw ValidationError(source + ": truncated tensor container");
    }
    std::vector<double> data(elements);
    for (auto& v : data) v = take<double>(bytes, pos, source);
    out.emplace_back(std::move(shape), std::move(data));
  }
  if (pos != bytes.size()) throw ValidationError(source + ": trailing bytes after tensor container");
  return out;
}

std::vector<Tensor> parse_text(const std::string& text, const std::string& source) {
  std::vector<Tensor> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::size_t expected = 0;
  bool open = false;
  int header_line = 0;
  auto close = [&] {
    if (!open) return;
    if (values.size() != expected) {
      throw ValidationError(source + ": line " + std::to_string(header_line) + ": tensor declares " +
                            std::to_string(expected) + " values, found " + std::to_string(values.size()));
    }
    out.emplace_back(shape, values);
    open = false;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream words(line);
    std::string word;
    if (!(words >> word)) continue;
    if (word == "tensor") {
      close();
      shape.clear();
      values.clear();
      expected = 1;
      std::string dim;
      while (words >> dim) {
        try {
          std::size_t used = 0;
          const long long d = std::stoll(dim, &used);
          if (used != dim.size() || d < 0) throw std::invalid_argument(dim);
          shape.push_back(static_cast<std::size_t>(d));
          expected *= shape.back();
        } catch (const std::exception&) {
          throw ValidationError(source + ": line " + std::to_string(line_no) + ": bad dimension '" + dim + "'");
        }
      }
      open = true;
      header_line = line_no;
      continue;
    }
    if (!open) {
      throw ValidationError(source + ": line " + std::to_string(line_no) +
                            ": values before the first 'tensor' header");
    }
    do {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(word, &used));
        if (used != word.size()) throw std::invalid_argument(word);
      } catch (const std::exception&) {
        throw ValidationError(source + ": line " + std::to_string(line_no) + ": bad number '" + word + "'");
      }
    } while (words >> word);
  }
  close();
  return out;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ModelConfig parse_config(std::string_view text, const std::string& source) {
  const json root = parse_json(text, source);
  if (!root.is_object()) field_error(source, "$", "expected a JSON object");
  check_keys(root,
             {"input_side", "input_channels", "n", "slot_count", "conv", "fc", "final_activation",
              "activation", "name", "comment"},
             "", source);
  ModelConfig config;
  config.input_side = get_int(root, "input_side", "$", source);
  config.input_channels = get_int(root, "input_channels", "$", source, 0);
  config.n = get_int(root, "n", "$", source);
  if (!root.contains("slot_count") || !root.at("slot_count").is_number_integer() ||
      root.at("slot_count").get<long long>() <= 0) {
    field_error(source, "$.slot_count", "expected a positive integer");
  }
  config.slot_count = root.at("slot_count").get<std::size_t>();
  config.final_activation = get_bool(root, "final_activation", false, source);
  config.activation = get_bool(root, "activation", true, source);

  if (root.contains("conv")) {
    if (!root.at("conv").is_array()) field_error(source, "$.conv", "expected an array");
    for (std::size_t i = 0; i < root.at("conv").size(); ++i) {
      const json& layer = root.at("conv")[i];
      const std::string path = "$.conv[" + std::to_string(i) + "]";
      if (!layer.is_object()) field_error(source, path, "expected an object");
      check_keys(layer, {"channels", "filters", "kernel", "stride"}, path, source);
      ConvLayerSpec spec;
      spec.channels = get_int(layer, "channels", path, source);
      spec.filters = get_int(layer, "filters", path, source);
      spec.kernel = get_int(layer, "kernel", path, source);
      spec.stride = get_int(layer, "stride", path, source);
      config.conv.push_back(spec);
    }
  }
  if (!root.contains("fc") || !root.at("fc").is_array()) {
    field_error(source, "$.fc", "expected an array of fully-connected layers");
  }
  for (std::size_t i = 0; i < root.at("fc").size(); ++i) {
    const json& layer = root.at("fc")[i];
    const std::string path = "$.fc[" + std::to_string(i) + "]";
    if (!layer.is_object()) field_error(source, path, "expected an object");
    check_keys(layer, {"in", "out", "ciphertexts"}, path, source);
    FcLayerSpec spec;
    spec.in = get_int(layer, "in", path, source);
    spec.out = get_int(layer, "out", path, source);
    if (layer.contains("ciphertexts")) spec.ciphertexts = get_int(layer, "ciphertexts", path, source);
    config.fc.push_back(spec);
  }
  return config;
}

ModelConfig load_config(const std::string& path) { return parse_config(read_file(path), path); }

std::string config_to_json(const ModelConfig& config) {
  json root;
  root["input_side"] = config.input_side;
  if (config.input_channels > 0) root["input_channels"] = config.input_channels;
  root["n"] = config.n;
  root["slot_count"] = config.slot_count;
  root["conv"] = json::array();
  for (const auto& c : config.conv) {
    root["conv"].push_back(
        {{"channels", c.channels}, {"filters", c.filters}, {"kernel", c.kernel}, {"stride", c.stride}});
  }
  root["fc"] = json::array();
  for (const auto& f : config.fc) {
    json layer = {{"in", f.in}, {"out", f.out}};
    if (f.ciphertexts) layer["ciphertexts"] = *f.ciphertexts;
    root["fc"].push_back(layer);
  }
  root["final_activation"] = config.final_activation;
  root["activation"] = config.activation;
  return root.dump(2) + "\n";
}

std::vector<Tensor> parse_tensors(const std::string& bytes, const std::string& source) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0) return parse_binary(bytes, source);
  return parse_text(bytes, source);
}

std::vector<Tensor> read_tensors(const std::string& path) { return parse_tensors(read_file(path), path); }

std::string tensors_to_binary(const std::vector<Tensor>& tensors) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint8_t>(out, kDtypeF64);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.data()) put<double>(out, v);
  }
  return out;
}

std::string tensors_to_text(const std::vector<Tensor>& tensors) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& t : tensors) {
    out << "tensor";
    for (std::size_t d : t.shape()) out << ' ' << d;
    out << '\n';
    const std::size_t row = t.rank() == 0 ? 1 : t.shape().back();
    for (std::size_t i = 0; i < t.size(); ++i) {
      out << t.data()[i] << ((row == 0 || (i + 1) % row == 0) ? '\n' : ' ');
    }
  }
  return out.str();
}

void write_tensors(const std::string& path, const std::vector<Tensor>& tensors, bool text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out << (text ? tensors_to_text(tensors) : tensors_to_binary(tensors));
  if (!out) throw ValidationError("failed writing " + path);
}

PlainModel model_from_tensors(std::vector<Tensor> tensors, const ModelConfig& config) {
  const std::size_t expected = config.conv.size() + config.fc.size();
  if (tensors.size() != expected) {
    throw ValidationError("weights file holds " + std::to_string(tensors.size()) +
                          " tensors, config needs " + std::to_string(expected));
  }
  PlainModel model;
  for (std::size_t l = 0; l < config.conv.size(); ++l) model.conv.push_back(std::move(tensors[l]));
  for (std::size_t l = 0; l < config.fc.size(); ++l) {
    model.fc.push_back(std::move(tensors[config.conv.size() + l]));
  }
  check_model_shapes(model, config);
  return model;
}

std::vector<Tensor> model_to_tensors(const PlainModel& model) {
  std::vector<Tensor> out = model.conv;
  out.insert(out.end(), model.fc.begin(), model.fc.end());
  return out;
}

CostTable parse_cost_table(std::string_view text, const std::string& source) {
  const json root = parse_json(text, source);
  if (!root.is_object() || !root.contains("rows") || !root.at("rows").is_array()) {
    field_error(source, "$.rows", "expected an array of cost rows");
  }
  check_keys(root, {"rows", "replace", "comment"}, "", source);
  CostTable table = get_bool(root, "replace", false, source) ? CostTable{} : CostTable::builtin_defaults();
  for (std::size_t i = 0; i < root.at("rows").size(); ++i) {
    const json& row = root.at("rows")[i];
    const std::string path = "$.rows[" + std::to_string(i) + "]";
    if (!row.is_object()) field_error(source, path, "expected an object");
    check_keys(row, {"level", "add", "mul", "rot", "cmult"}, path, source);
    const int level = get_int(row, "level", path, source);
    const std::pair<const char*, OpKind> kinds[] = {
        {"add", OpKind::Add}, {"mul", OpKind::Mul}, {"rot", OpKind::Rot}, {"cmult", OpKind::CMult}};
    for (const auto& [key, kind] : kinds) {
      if (!row.contains(key)) continue;
      if (!row.at(key).is_number()) field_error(source, path + "." + key, "expected a number");
      try {
        table.set(kind, level, row.at(key).get<double>());
      } catch (const ValidationError& e) {
        field_error(source, path + "." + key, e.what());
      }
    }
  }
  return table;
}

CostTable load_cost_table(const std::string& path) { return parse_cost_table(read_file(path), path); }

}  // namespace hecnn
