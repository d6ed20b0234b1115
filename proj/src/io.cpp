#include "sgnn/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sgnn/errors.hpp"

namespace fs = std::filesystem;

namespace sgnn {

namespace {

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ParseError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Splits on any of `seps`, dropping empty fields when `collapse` is set.
std::vector<std::string_view> split(std::string_view s, std::string_view seps, bool collapse) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find_first_of(seps, start);
    const auto field = trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (!(collapse && field.empty())) out.push_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end && !s.empty();
}

// Visits non-blank, non-comment lines with their 1-based line numbers.
template <class F>
void for_each_line(const std::string& text, F&& f) {
  std::size_t lineno = 0, start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ++lineno;
    const auto line = trim(std::string_view(text).substr(start, end - start));
    if (!line.empty() && line.front() != '#') f(line, lineno);
    start = end + 1;
  }
}

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

DenseMatrix read_features_csv(const fs::path& file) {
  const auto text = read_file(file);
  std::vector<double> data;
  std::size_t rows = 0, cols = 0;
  for_each_line(text, [&](std::string_view line, std::size_t lineno) {
    const auto fields = split(line, ",", false);
    if (rows == 0) cols = fields.size();
    if (fields.size() != cols) {
      throw ParseError(file.string(), lineno,
                       "expected " + std::to_string(cols) + " values, found " + std::to_string(fields.size()));
    }
    for (auto f : fields) {
      double v = 0.0;
      if (!parse_number(f, v) || !std::isfinite(v)) {
        throw ParseError(file.string(), lineno, "bad feature value '" + std::string(f) + "'");
      }
      data.push_back(v);
    }
    ++rows;
  });
  return DenseMatrix(rows, cols, std::move(data));
}

}  // namespace

DenseMatrix read_features_f32(const fs::path& file) {
  const auto bytes = read_file(file);
  if (bytes.size() < 12 || bytes.compare(0, 4, "GSF1") != 0) {
    throw ParseError(file.string() + ": missing GSF1 header");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t n = read_u32_le(p + 4);
  const std::uint64_t d = read_u32_le(p + 8);
  if (bytes.size() != 12 + 4 * n * d) {
    throw IntegrityError(file.string() + ": header declares " + std::to_string(n) + "x" +
                         std::to_string(d) + " values but the file holds " +
                         std::to_string((bytes.size() - 12) / 4));
  }
  DenseMatrix x(n, d);
  for (std::size_t i = 0; i < n * d; ++i) {
    const std::uint32_t bitsv = read_u32_le(p + 12 + 4 * i);
    const float f = std::bit_cast<float>(bitsv);
    if (!std::isfinite(f)) throw IntegrityError(file.string() + ": non-finite feature value");
    x.values()[i] = static_cast<double>(f);
  }
  return x;
}

void write_features_f32(const DenseMatrix& x, const fs::path& file) {
  std::string out = "GSF1";
  write_u32_le(out, static_cast<std::uint32_t>(x.rows()));
  write_u32_le(out, static_cast<std::uint32_t>(x.cols()));
  out.reserve(12 + 4 * x.size());
  for (double v : x.values()) write_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  write_text(file, out);
}

Graph load_dataset(const fs::path& dir, std::vector<std::string>* warnings) {
  const fs::path meta_file = dir / "meta.json";
  Json meta;
  try {
    meta = Json::parse(read_file(meta_file));
  } catch (const Json::exception& e) {
    throw ParseError(meta_file.string() + ": " + e.what());
  }
  std::size_t n = 0, d = 0, c = 0;
  std::string name;
  try {
    n = meta.at("n").get<std::size_t>();
    d = meta.at("d").get<std::size_t>();
    c = meta.at("c").get<std::size_t>();
    name = meta.value("name", dir.filename().string());
  } catch (const Json::exception& e) {
    throw ParseError(meta_file.string() + ": " + e.what());
  }

  // Edges
  const fs::path edge_file = dir / "edges.tsv";
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t self_loops = 0;
  for_each_line(read_file(edge_file), [&](std::string_view line, std::size_t lineno) {
    const auto f = split(line, " \t,", true);
    std::size_t a = 0, b = 0;
    if (f.size() != 2 || !parse_number(f[0], a) || !parse_number(f[1], b)) {
      throw ParseError(edge_file.string(), lineno, "expected two integer node ids");
    }
    if (a >= n || b >= n) {
      throw ParseError(edge_file.string(), lineno, "node id out of range [0, " + std::to_string(n) + ")");
    }
    if (a == b) {
      ++self_loops;
      return;
    }
    pairs.emplace_back(a, b);
  });
  if (self_loops > 0 && warnings) {
    warnings->push_back(edge_file.string() + ": skipped " + std::to_string(self_loops) + " self-loop line(s)");
  }

  // Labels
  const fs::path label_file = dir / "labels.csv";
  std::vector<int> labels(n, -1);
  bool first = true;
  for_each_line(read_file(label_file), [&](std::string_view line, std::size_t lineno) {
    const auto f = split(line, ",\t ", true);
    std::size_t node = 0;
    int cls = 0;
    const bool ok = f.size() == 2 && parse_number(f[0], node) && parse_number(f[1], cls);
    const bool header = first && !ok && !f.empty() && !parse_number(f[0], node);
    first = false;
    if (header) return;
    if (!ok) throw ParseError(label_file.string(), lineno, "expected 'node,class'");
    if (node >= n) throw ParseError(label_file.string(), lineno, "node id out of range");
    if (cls < 0 || static_cast<std::size_t>(cls) >= c) {
      throw ParseError(label_file.string(), lineno, "class id out of range [0, " + std::to_string(c) + ")");
    }
    if (labels[node] != -1) throw ParseError(label_file.string(), lineno, "duplicate label for node");
    labels[node] = cls;
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) throw IntegrityError(label_file.string() + ": node " + std::to_string(i) + " has no label");
  }

  // Features
  DenseMatrix x;
  if (fs::exists(dir / "features.f32")) {
    x = read_features_f32(dir / "features.f32");
  } else if (fs::exists(dir / "features.csv")) {
    x = read_features_csv(dir / "features.csv");
  } else {
    throw IntegrityError(dir.string() + ": neither features.f32 nor features.csv present");
  }
  if (x.rows() != n || x.cols() != d) {
    throw IntegrityError(dir.string() + ": features are " + std::to_string(x.rows()) + "x" +
                         std::to_string(x.cols()) + " but meta.json declares " + std::to_string(n) +
                         "x" + std::to_string(d));
  }

  Graph g = make_graph(n, pairs, std::move(x), std::move(labels), c);
  g.name = name;
  return g;
}

void save_dataset(const Graph& g, const fs::path& dir, FeatureFormat format) {
  g.validate();
  fs::create_directories(dir);
  std::string edges;
  for (const auto& e : g.edges) edges += std::to_string(e.u) + "\t" + std::to_string(e.v) + "\n";
  write_text(dir / "edges.tsv", edges);
  std::string labels;
  for (std::size_t i = 0; i < g.n; ++i) labels += std::to_string(i) + "," + std::to_string(g.labels[i]) + "\n";
  write_text(dir / "labels.csv", labels);
  if (format == FeatureFormat::Binary) {
    fs::remove(dir / "features.csv");
    write_features_f32(g.features, dir / "features.f32");
  } else {
    fs::remove(dir / "features.f32");
    CsvTable t;
    for (std::size_t r = 0; r < g.n; ++r) {
      auto row = g.features.row(r);
      t.rows.emplace_back(row.begin(), row.end());
    }
    write_text(dir / "features.csv", format_csv(t));
  }
  Json meta = {{"n", g.n}, {"d", g.feature_dim()}, {"c", g.num_classes}, {"name", g.name}};
  write_text(dir / "meta.json", meta.dump(2) + "\n");
}

// ---------------------------------------------------------------- config

Json config_to_json(const TrainConfig& c) {
  const auto& m = c.model;
  return Json{
      {"model", std::string(to_string(m.arch))},
      {"hidden", m.hidden},
      {"heads", m.heads},
      {"output_heads", m.output_heads},
      {"gt_layers", m.gt_layers},
      {"dropout", m.dropout},
      {"attention_slope", m.attention_slope},
      {"activation", std::string(to_string(m.activation))},
      {"activation_slope", m.activation_slope},
      {"edge_mask", m.edge_mask},
      {"mask_renormalize", m.mask_renormalize},
      {"mask_init", m.mask_init},
      {"mask_task_gradient", m.mask_task_gradient},
      {"scope", std::string(to_string(m.scope))},
      {"lr", c.lr},
      {"weight_decay", c.weight_decay},
      {"mask_lr_scale", c.mask_lr_scale},
      {"epochs", c.epochs},
      {"patience", c.patience},
      {"warmup_epochs", c.warmup_epochs},
      {"lambda", c.lambda},
      {"tau", c.tau},
      {"seed", c.seed},
      {"labeled_per_class", c.split.labeled_per_class},
      {"val_size", c.split.val},
      {"test_size", c.split.test},
      {"ablation", std::string(to_string(c.ablation))},
      {"stop_gradient_posterior", c.stop_gradient_posterior},
  };
}

namespace {

template <class T>
T json_get(const Json& v, std::string_view key) {
  try {
    return v.get<T>();
  } catch (const Json::exception&) {
    throw ValidationError("config: bad value for '" + std::string(key) + "'");
  }
}

std::size_t json_count(const Json& v, std::string_view key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ValidationError("config: '" + std::string(key) + "' must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

// Converts a key=value string into the JSON type the key expects.
Json coerce_value(std::string_view key, std::string_view value) {
  static const char* kStrings[] = {"model", "activation", "scope", "ablation"};
  static const char* kBools[] = {"edge_mask", "mask_renormalize", "mask_task_gradient", "stop_gradient_posterior"};
  static const char* kCounts[] = {"hidden", "heads", "output_heads", "gt_layers", "epochs", "patience",
                                  "warmup_epochs", "seed", "labeled_per_class", "val_size", "test_size"};
  for (const char* k : kStrings)
    if (key == k) return std::string(value);
  for (const char* k : kBools) {
    if (key == k) {
      if (value == "true" || value == "1" || value == "on") return true;
      if (value == "false" || value == "0" || value == "off") return false;
      throw ValidationError("config: '" + std::string(key) + "' expects true/false");
    }
  }
  for (const char* k : kCounts) {
    if (key == k) {
      std::uint64_t v = 0;
      if (!parse_number(value, v)) throw ValidationError("config: '" + std::string(key) + "' expects an integer");
      return v;
    }
  }
  double v = 0.0;
  if (!parse_number(value, v)) throw ValidationError("config: '" + std::string(key) + "' expects a number");
  return v;
}

}  // namespace

void apply_config_json(TrainConfig& c, const Json& j) {
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  auto& m = c.model;
  for (const auto& [key, v] : j.items()) {
    if (key == "model") m.arch = parse_architecture(json_get<std::string>(v, key));
    else if (key == "hidden") m.hidden = json_count(v, key);
    else if (key == "heads") m.heads = json_count(v, key);
    else if (key == "output_heads") m.output_heads = json_count(v, key);
    else if (key == "gt_layers") m.gt_layers = json_count(v, key);
    else if (key == "dropout") m.dropout = json_get<double>(v, key);
    else if (key == "attention_slope") m.attention_slope = json_get<double>(v, key);
    else if (key == "activation") m.activation = parse_activation(json_get<std::string>(v, key));
    else if (key == "activation_slope") m.activation_slope = json_get<double>(v, key);
    else if (key == "edge_mask") m.edge_mask = json_get<bool>(v, key);
    else if (key == "mask_renormalize") m.mask_renormalize = json_get<bool>(v, key);
    else if (key == "mask_init") m.mask_init = json_get<double>(v, key);
    else if (key == "mask_task_gradient") m.mask_task_gradient = json_get<bool>(v, key);
    else if (key == "scope") m.scope = parse_scope(json_get<std::string>(v, key));
    else if (key == "lr") c.lr = json_get<double>(v, key);
    else if (key == "weight_decay") c.weight_decay = json_get<double>(v, key);
    else if (key == "mask_lr_scale") c.mask_lr_scale = json_get<double>(v, key);
    else if (key == "epochs") c.epochs = json_count(v, key);
    else if (key == "patience") c.patience = json_count(v, key);
    else if (key == "warmup_epochs") c.warmup_epochs = json_count(v, key);
    else if (key == "lambda") c.lambda = json_get<double>(v, key);
    else if (key == "tau") c.tau = json_get<double>(v, key);
    else if (key == "seed") c.seed = json_get<std::uint64_t>(v, key);
    else if (key == "labeled_per_class") c.split.labeled_per_class = json_count(v, key);
    else if (key == "val_size") c.split.val = json_count(v, key);
    else if (key == "test_size") c.split.test = json_count(v, key);
    else if (key == "ablation") c.ablation = parse_ablation(json_get<std::string>(v, key));
    else if (key == "stop_gradient_posterior") c.stop_gradient_posterior = json_get<bool>(v, key);
    else throw ValidationError("config: unknown key '" + key + "'");
  }
}

void apply_config_entry(TrainConfig& c, std::string_view key, std::string_view value) {
  Json j;
  j[std::string(key)] = coerce_value(key, trim(value));
  apply_config_json(c, j);
}

void apply_config_file(TrainConfig& c, const fs::path& file) {
  const auto text = read_file(file);
  const auto body = trim(text);
  if (!body.empty() && body.front() == '{') {
    try {
      apply_config_json(c, Json::parse(body));
    } catch (const Json::parse_error& e) {
      throw ParseError(file.string() + ": " + e.what());
    }
    return;
  }
  for_each_line(text, [&](std::string_view line, std::size_t lineno) {
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(file.string(), lineno, "expected key=value");
    try {
      apply_config_entry(c, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ParseError(file.string(), lineno, e.what());
    }
  });
}

std::string config_hash(const TrainConfig& c) {
  const std::string canon = config_to_json(c).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ------------------------------------------------------------ checkpoint

namespace {

Json mask_indices(const std::vector<std::uint8_t>& m) {
  Json out = Json::array();
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) out.push_back(i);
  return out;
}

std::vector<std::uint8_t> mask_from_indices(const Json& j, std::size_t n) {
  std::vector<std::uint8_t> m(n, 0);
  for (const auto& v : j) {
    const auto i = v.get<std::size_t>();
    if (i >= n) throw IntegrityError("checkpoint: mask index out of range");
    m[i] = 1;
  }
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const fs::path& file) {
  Model model = ck.model;
  Json params = Json::array();
  for (const auto& p : parameters(model)) {
    params.push_back({{"name", p.name}, {"rows", p.value->rows()}, {"cols", p.value->cols()},
                      {"data", p.value->values()}});
  }
  const std::size_t num_edges =
      std::holds_alternative<GcnModel>(model.net) && std::get<GcnModel>(model.net).mask_logits
          ? std::get<GcnModel>(model.net).mask_logits->rows()
          : 0;
  Json j = {
      {"format", "sgnn-checkpoint"},
      {"version", kCheckpointVersion},
      {"arch", std::string(to_string(ck.model.config.arch))},
      {"dataset", ck.dataset},
      {"config", config_to_json(ck.config)},
      {"config_hash", config_hash(ck.config)},
      {"input_dim", ck.model.input_dim},
      {"num_classes", ck.model.num_classes},
      {"num_edges", num_edges},
      {"nodes", ck.masks.train.size()},
      {"masks",
       {{"train", mask_indices(ck.masks.train)},
        {"val", mask_indices(ck.masks.val)},
        {"test", mask_indices(ck.masks.test)}}},
      {"params", params},
  };
  write_text(file, j.dump() + "\n");
}

Checkpoint load_checkpoint(const fs::path& file) {
  Json j;
  try {
    j = Json::parse(read_file(file));
  } catch (const Json::parse_error& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
  try {
    if (j.at("format") != "sgnn-checkpoint") throw ParseError(file.string() + ": not a checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw IntegrityError(file.string() + ": checkpoint version " + std::to_string(version) +
                           " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint ck;
    ck.dataset = j.value("dataset", "");
    apply_config_json(ck.config, j.at("config"));
    if (config_hash(ck.config) != j.at("config_hash").get<std::string>()) {
      throw IntegrityError(file.string() + ": config hash mismatch");
    }
    std::mt19937_64 rng(0);
    ck.model = init_model(ck.config.model, j.at("input_dim").get<std::size_t>(),
                          j.at("num_classes").get<std::size_t>(), j.at("num_edges").get<std::size_t>(), rng);
    auto refs = parameters(ck.model);
    const auto& params = j.at("params");
    if (params.size() != refs.size()) throw IntegrityError(file.string() + ": parameter count mismatch");
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const auto& p = params[i];
      if (p.at("name").get<std::string>() != refs[i].name) {
        throw IntegrityError(file.string() + ": unexpected parameter " + p.at("name").get<std::string>());
      }
      const auto rows = p.at("rows").get<std::size_t>();
      const auto cols = p.at("cols").get<std::size_t>();
      auto data = p.at("data").get<std::vector<double>>();
      if (rows != refs[i].value->rows() || cols != refs[i].value->cols() || data.size() != rows * cols) {
        throw IntegrityError(file.string() + ": shape mismatch for " + refs[i].name);
      }
      *refs[i].value = DenseMatrix(rows, cols, std::move(data));
    }
    const auto n = j.at("nodes").get<std::size_t>();
    const auto& masks = j.at("masks");
    ck.masks.train = mask_from_indices(masks.at("train"), n);
    ck.masks.val = mask_from_indices(masks.at("val"), n);
    ck.masks.test = mask_from_indices(masks.at("test"), n);
    return ck;
  } catch (const Json::exception& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
}

// ------------------------------------------------------------------- CSV

std::string format_csv(const CsvTable& t) {
  std::string out;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i) out += ',';
    out += t.header[i];
  }
  if (!t.header.empty()) out += '\n';
  char buf[40];
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      std::snprintf(buf, sizeof buf, "%.17g", row[i]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void emit_csv(const CsvTable& t, const fs::path& file) { write_text(file, format_csv(t)); }

CsvTable read_csv(const fs::path& file) {
  const auto text = read_file(file);
  CsvTable t;
  bool first = true;
  for_each_line(text, [&](std::string_view line, std::size_t lineno) {
    const auto fields = split(line, ",", false);
    if (first) {
      first = false;
      double probe = 0.0;
      if (!parse_number(fields.front(), probe)) {
        for (auto f : fields) t.header.emplace_back(f);
        return;
      }
    }
    std::vector<double> row;
    for (auto f : fields) {
      double v = 0.0;
      if (!parse_number(f, v)) throw ParseError(file.string(), lineno, "bad number '" + std::string(f) + "'");
      row.push_back(v);
    }
    if (!t.header.empty() && row.size() != t.header.size()) {
      throw ParseError(file.string(), lineno, "row width differs from the header");
    }
    t.rows.push_back(std::move(row));
  });
  return t;
}

// --------------------------------------------------------------- reports

Json to_json(const EpochRecord& r) {
  return Json{{"epoch", r.epoch},
              {"train_acc", r.train_acc},
              {"val_acc", r.val_acc},
              {"test_acc", r.test_acc},
              {"ce_loss", r.ce_loss},
              {"total_loss", r.total_loss},
              {"warmup", r.warmup},
              {"se_loss", r.se_loss},
              {"effective_edge_ratio", r.effective_edge_ratio},
              {"cross_class_ratio", r.cross_class_ratio},
              {"generalization_gap", r.generalization_gap}};
}

Json to_json(const Evaluation& e) { return Json{{"accuracy", e.accuracy}, {"loss", e.loss}}; }

Json to_json(const SnapshotMetrics& s) {
  return Json{{"train", to_json(s.train)},
              {"val", to_json(s.val)},
              {"test", to_json(s.test)},
              {"effective_edge_ratio", s.effective_edge_ratio},
              {"cross_class_ratio", s.cross_class_ratio},
              {"cross_class_ratio_truth", s.cross_class_ratio_truth},
              {"generalization_gap", s.generalization_gap},
              {"dirichlet_energy", s.dirichlet_energy}};
}

Json to_json(const BoundInputs& b) {
  return Json{{"L", b.L},   {"B", b.B},         {"R0", b.R0},           {"R1", b.R1},
              {"R2", b.R2}, {"R_tilde", b.R_tilde}, {"pi_norm", b.pi_norm}, {"m", b.m},
              {"n", b.n},   {"delta", b.delta}, {"heads", b.heads}};
}

Json to_json(const ComplexityReport& c) {
  return Json{{"tau", c.tau},
              {"eta", c.eta},
              {"eta_tau", c.eta_tau},
              {"eta_mh", c.eta_mh},
              {"effective_edge_ratio", c.effective_edge_ratio},
              {"cross_class_ratio", c.cross_class_ratio}};
}

Json to_json(const BoundReport& b, double empirical_risk) {
  Json terms = Json::array();
  for (const auto& nb : b.bounds) {
    terms.push_back({{"name", nb.name},
                     {"gap", nb.gap},
                     {"empirical_risk", empirical_risk},
                     {"total", nb.gap + empirical_risk}});
  }
  return Json{{"inputs", to_json(b.inputs)}, {"complexity", to_json(b.complexity)}, {"bounds", terms}};
}

Json run_report_json(const RunReport& r) {
  Json history = Json::array();
  for (const auto& e : r.result.history) history.push_back(to_json(e));
  Json j = {
      {"schema_version", kReportSchemaVersion},
      {"kind", "train"},
      {"dataset",
       {{"name", r.dataset}, {"nodes", r.nodes}, {"edges", r.edges}, {"features", r.features},
        {"classes", r.classes}}},
      {"config", config_to_json(r.config)},
      {"config_hash", config_hash(r.config)},
      {"best_epoch", r.result.best_epoch},
      {"epochs_run", r.result.history.size()},
      {"final", to_json(r.result.final)},
      {"history", history},
  };
  if (r.bounds) j["bounds"] = to_json(*r.bounds, 1.0 - r.result.final.train.accuracy);
  return j;
}

namespace {

void require_finite(const Json& j, const std::string& path) {
  if (j.is_number_float() && !std::isfinite(j.get<double>())) {
    throw ValidationError("run report: non-finite value at " + path);
  }
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) require_finite(v, path + "." + k);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) require_finite(j[i], path + "[" + std::to_string(i) + "]");
  }
}

void require(const Json& j, const char* key, bool (Json::*pred)() const noexcept) {
  if (!j.contains(key) || !(j.at(key).*pred)()) {
    throw ValidationError(std::string("run report: missing or mistyped field '") + key + "'");
  }
}

}  // namespace

void validate_run_report(const Json& j) {
  if (!j.is_object()) throw ValidationError("run report: not an object");
  require(j, "schema_version", &Json::is_number_integer);
  if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
    throw ValidationError("run report: unsupported schema version");
  }
  require(j, "kind", &Json::is_string);
  require(j, "dataset", &Json::is_object);
  require(j, "config", &Json::is_object);
  require(j, "config_hash", &Json::is_string);
  require(j, "best_epoch", &Json::is_number_integer);
  require(j, "epochs_run", &Json::is_number_integer);
  require(j, "final", &Json::is_object);
  require(j, "history", &Json::is_array);
  const auto& fin = j.at("final");
  for (const char* split : {"train", "val", "test"}) {
    require(fin, split, &Json::is_object);
    const auto& acc = fin.at(split).at("accuracy");
    if (!acc.is_number() || acc.get<double>() < 0.0 || acc.get<double>() > 1.0) {
      throw ValidationError(std::string("run report: accuracy outside [0, 1] for ") + split);
    }
  }
  for (const auto& e : j.at("history")) {
    require(e, "epoch", &Json::is_number_integer);
    require(e, "val_acc", &Json::is_number);
  }
  require_finite(j, "$");
}

std::string epoch_log_line(const EpochRecord& r) { return to_json(r).dump(); }

void write_text(const fs::path& file, std::string_view text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + file.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed for " + file.string());
}

}  // namespace sgnn
