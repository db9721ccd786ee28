#include "neurozip/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "neurozip/error.hpp"
#include "neurozip/text.hpp"

namespace neurozip {

namespace {

constexpr std::string_view kMagic = "neurozip-checkpoint";

std::string fmt(double x) { return text::format_double(x); }

void write_matrix(std::ostream& out, std::size_t layer, std::string_view name, const Matrix& m) {
  out << "layer " << layer << ' ' << name << ' ' << m.rows() << ' ' << m.cols();
  for (double x : m.values()) out << ' ' << fmt(x);
  out << '\n';
}

class Fields {
 public:
  void add(std::string key, std::string value, std::size_t line) {
    if (!values_.emplace(key, Entry{std::move(value), line, false}).second) {
      throw CheckpointError("line " + std::to_string(line) + ": duplicate key '" + key + "'");
    }
  }

  const std::string& raw(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) throw CheckpointError("missing key '" + key + "'");
    it->second.used = true;
    return it->second.value;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  double number(const std::string& key) {
    double x = 0.0;
    if (!text::parse_double(raw(key), x)) fail(key, "a number");
    return x;
  }

  std::size_t count(const std::string& key) {
    std::uint64_t x = 0;
    if (!text::parse_uint(raw(key), x)) fail(key, "a non-negative integer");
    return static_cast<std::size_t>(x);
  }

  bool flag(const std::string& key) {
    const std::string& v = raw(key);
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    fail(key, "0 or 1");
  }

  template <class Parse>
  auto parsed(const std::string& key, Parse parse) {
    try {
      return parse(raw(key));
    } catch (const ConfigError& e) {
      throw CheckpointError("line " + std::to_string(values_.at(key).line) + ": " + e.what());
    }
  }

  void check_all_used() const {
    for (const auto& [key, entry] : values_) {
      if (!entry.used) throw CheckpointError("line " + std::to_string(entry.line) + ": unknown key '" + key + "'");
    }
  }

 private:
  struct Entry {
    std::string value;
    std::size_t line;
    bool used;
  };

  [[noreturn]] void fail(const std::string& key, const char* expected) const {
    const Entry& e = values_.at(key);
    throw CheckpointError("line " + std::to_string(e.line) + ": '" + key + "' must be " + expected + ", got '" +
                          e.value + "'");
  }

  std::map<std::string, Entry> values_;
};

struct LayerRecord {
  bool has_weight = false;
  bool has_bias = false;
  DenseLayer layer;
};

Matrix parse_matrix(const std::vector<std::string_view>& tokens, std::size_t line) {
  // tokens: layer <idx> <name> <rows> <cols> values...
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  if (!text::parse_uint(tokens[3], rows) || !text::parse_uint(tokens[4], cols)) {
    throw CheckpointError("line " + std::to_string(line) + ": bad layer shape");
  }
  if (tokens.size() != 5 + rows * cols) {
    throw CheckpointError("line " + std::to_string(line) + ": expected " + std::to_string(rows * cols) +
                          " values for a " + std::to_string(rows) + "x" + std::to_string(cols) + " matrix, got " +
                          std::to_string(tokens.size() - 5));
  }
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!text::parse_double(tokens[5 + i], m[i])) {
      throw CheckpointError("line " + std::to_string(line) + ": bad value '" + std::string(tokens[5 + i]) + "'");
    }
  }
  return m;
}

std::array<double, 3> parse_split(const std::string& s) {
  const auto parts = text::split(s, ',');
  if (parts.size() != 3) throw ConfigError("split must have three ratios");
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!text::parse_double(parts[i], out[i])) throw ConfigError("bad split ratio '" + std::string(parts[i]) + "'");
  }
  return out;
}

}  // namespace

MetricSummary summarize(const EvalReport& report) {
  return {report.mode, report.split, report.mse_p, report.mse_q, report.a, report.b, report.violation};
}

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  const TrainConfig& c = ckpt.config;
  out << kMagic << '\n';
  out << "format_version " << ckpt.format_version << '\n';
  out << "config.epochs " << c.epochs << '\n';
  out << "config.lr " << fmt(c.lr) << '\n';
  out << "config.q_g " << fmt(c.penalty.q_g) << '\n';
  out << "config.q_h " << fmt(c.penalty.q_h) << '\n';
  out << "config.norm " << to_string(c.penalty.norm) << '\n';
  out << "config.seed " << c.seed << '\n';
  out << "config.patience " << c.patience << '\n';
  out << "config.batch_size " << c.batch_size << '\n';
  out << "config.activation " << to_string(c.activation) << '\n';
  out << "config.hidden_width " << c.hidden_width << '\n';
  out << "config.hidden_depth " << c.hidden_depth << '\n';
  out << "config.zero_init_output " << (c.zero_init_output ? 1 : 0) << '\n';
  out << "config.mode " << to_string(c.mode) << '\n';
  out << "config.features " << to_string(c.features) << '\n';
  out << "config.beta1 " << fmt(c.beta1) << '\n';
  out << "config.beta2 " << fmt(c.beta2) << '\n';
  out << "config.eps " << fmt(c.eps) << '\n';
  out << "config.weight_decay " << fmt(c.weight_decay) << '\n';
  out << "config.split " << fmt(c.split[0]) << ',' << fmt(c.split[1]) << ',' << fmt(c.split[2]) << '\n';

  const ZipParams& z = ckpt.model.zip;
  out << "zip.alpha_p " << fmt(z.alpha_p) << '\n';
  out << "zip.alpha_i " << fmt(z.alpha_i) << '\n';
  out << "zip.alpha_z " << fmt(z.alpha_z) << '\n';
  out << "zip.beta_p " << fmt(z.beta_p) << '\n';
  out << "zip.beta_i " << fmt(z.beta_i) << '\n';
  out << "zip.beta_z " << fmt(z.beta_z) << '\n';
  out << "mix.a " << fmt(ckpt.model.mix.a) << '\n';
  out << "mix.b " << fmt(ckpt.model.mix.b) << '\n';
  out << "model.features " << to_string(ckpt.model.features) << '\n';
  out << "mlp.activation " << to_string(ckpt.model.mlp.activation) << '\n';
  out << "mlp.layers " << ckpt.model.mlp.layers.size() << '\n';
  for (std::size_t l = 0; l < ckpt.model.mlp.layers.size(); ++l) {
    write_matrix(out, l, "weight", ckpt.model.mlp.layers[l].weight);
    write_matrix(out, l, "bias", ckpt.model.mlp.layers[l].bias);
  }

  const TrainingSummary& t = ckpt.training;
  out << "training.epochs_run " << t.epochs_run << '\n';
  out << "training.best_epoch " << t.best_epoch << '\n';
  out << "training.best_val_loss " << fmt(t.best_val_loss) << '\n';
  out << "training.final_train_loss " << fmt(t.final_train_loss) << '\n';
  out << "training.stopped_early " << (t.stopped_early ? 1 : 0) << '\n';
  out << "data.manifest_hash " << ckpt.manifest_hash << '\n';

  if (ckpt.metrics) {
    const MetricSummary& m = *ckpt.metrics;
    out << "metrics.mode " << to_string(m.mode) << '\n';
    out << "metrics.split " << m.split << '\n';
    out << "metrics.mse_p " << fmt(m.mse_p) << '\n';
    out << "metrics.mse_q " << fmt(m.mse_q) << '\n';
    out << "metrics.a " << fmt(m.a) << '\n';
    out << "metrics.b " << fmt(m.b) << '\n';
    out << "metrics.violation " << fmt(m.violation) << '\n';
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || text::trim(line) != kMagic) {
    throw CheckpointError("not a neurozip checkpoint (missing header line)");
  }
  ++line_no;

  Fields fields;
  std::map<std::size_t, LayerRecord> layers;
  bool ended = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view body = text::trim(line);
    if (body.empty()) continue;
    if (ended) throw CheckpointError("line " + std::to_string(line_no) + ": content after 'end'");
    if (body == "end") {
      ended = true;
      continue;
    }
    if (body.starts_with("layer ")) {
      std::vector<std::string_view> tokens;
      for (std::string_view tok : text::split(body, ' ')) {
        if (!tok.empty()) tokens.push_back(tok);
      }
      std::uint64_t idx = 0;
      if (tokens.size() < 5 || !text::parse_uint(tokens[1], idx) || (tokens[2] != "weight" && tokens[2] != "bias")) {
        throw CheckpointError("line " + std::to_string(line_no) + ": malformed layer record");
      }
      LayerRecord& rec = layers[idx];
      bool& seen = tokens[2] == "weight" ? rec.has_weight : rec.has_bias;
      if (seen) throw CheckpointError("line " + std::to_string(line_no) + ": duplicate layer record");
      seen = true;
      (tokens[2] == "weight" ? rec.layer.weight : rec.layer.bias) = parse_matrix(tokens, line_no);
      continue;
    }
    const std::size_t space = body.find(' ');
    if (space == std::string_view::npos) {
      throw CheckpointError("line " + std::to_string(line_no) + ": expected 'key value'");
    }
    fields.add(std::string(body.substr(0, space)), std::string(text::trim(body.substr(space + 1))), line_no);
  }
  if (!ended) throw CheckpointError("checkpoint is truncated (missing 'end')");

  Checkpoint ckpt;
  const std::size_t version = fields.count("format_version");
  if (version != static_cast<std::size_t>(kCheckpointFormatVersion)) {
    throw CheckpointError("unsupported checkpoint format_version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointFormatVersion) + ")");
  }
  ckpt.format_version = static_cast<int>(version);

  TrainConfig& c = ckpt.config;
  c.epochs = fields.count("config.epochs");
  c.lr = fields.number("config.lr");
  c.penalty.q_g = fields.number("config.q_g");
  c.penalty.q_h = fields.number("config.q_h");
  c.penalty.norm = fields.parsed("config.norm", [](const std::string& s) { return parse_penalty_norm(s); });
  c.seed = fields.count("config.seed");
  c.patience = fields.count("config.patience");
  c.batch_size = fields.count("config.batch_size");
  c.activation = fields.parsed("config.activation", [](const std::string& s) { return parse_activation(s); });
  c.hidden_width = fields.count("config.hidden_width");
  c.hidden_depth = fields.count("config.hidden_depth");
  c.zero_init_output = fields.flag("config.zero_init_output");
  c.mode = fields.parsed("config.mode", [](const std::string& s) { return parse_fit_mode(s); });
  c.features = fields.parsed("config.features", [](const std::string& s) { return parse_feature_mode(s); });
  c.beta1 = fields.number("config.beta1");
  c.beta2 = fields.number("config.beta2");
  c.eps = fields.number("config.eps");
  c.weight_decay = fields.number("config.weight_decay");
  c.split = fields.parsed("config.split", parse_split);

  ZipParams& z = ckpt.model.zip;
  z.alpha_p = fields.number("zip.alpha_p");
  z.alpha_i = fields.number("zip.alpha_i");
  z.alpha_z = fields.number("zip.alpha_z");
  z.beta_p = fields.number("zip.beta_p");
  z.beta_i = fields.number("zip.beta_i");
  z.beta_z = fields.number("zip.beta_z");
  ckpt.model.mix.a = fields.number("mix.a");
  ckpt.model.mix.b = fields.number("mix.b");
  ckpt.model.features = fields.parsed("model.features", [](const std::string& s) { return parse_feature_mode(s); });
  ckpt.model.mlp.activation =
      fields.parsed("mlp.activation", [](const std::string& s) { return parse_activation(s); });

  const std::size_t layer_count = fields.count("mlp.layers");
  if (layers.size() != layer_count) {
    throw CheckpointError("mlp.layers says " + std::to_string(layer_count) + " layers, found records for " +
                          std::to_string(layers.size()));
  }
  for (std::size_t l = 0; l < layer_count; ++l) {
    auto it = layers.find(l);
    if (it == layers.end() || !it->second.has_weight || !it->second.has_bias) {
      throw CheckpointError("layer " + std::to_string(l) + " is incomplete");
    }
    ckpt.model.mlp.layers.push_back(std::move(it->second.layer));
  }
  if (layer_count > 0) {
    try {
      ckpt.model.mlp.validate();
    } catch (const ModelError& e) {
      throw CheckpointError(std::string("inconsistent layer shapes: ") + e.what());
    }
  }

  TrainingSummary& t = ckpt.training;
  t.epochs_run = fields.count("training.epochs_run");
  t.best_epoch = fields.count("training.best_epoch");
  t.best_val_loss = fields.number("training.best_val_loss");
  t.final_train_loss = fields.number("training.final_train_loss");
  t.stopped_early = fields.flag("training.stopped_early");
  ckpt.manifest_hash = fields.raw("data.manifest_hash");

  if (fields.has("metrics.mode")) {
    MetricSummary m;
    m.mode = fields.parsed("metrics.mode", [](const std::string& s) { return parse_fit_mode(s); });
    m.split = fields.raw("metrics.split");
    m.mse_p = fields.number("metrics.mse_p");
    m.mse_q = fields.number("metrics.mse_q");
    m.a = fields.number("metrics.a");
    m.b = fields.number("metrics.b");
    m.violation = fields.number("metrics.violation");
    ckpt.metrics = m;
  }
  fields.check_all_used();
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  write_checkpoint(ckpt, out);
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace neurozip
