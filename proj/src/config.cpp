#include "fundus/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "fundus/csv.hpp"
#include "fundus/error.hpp"
#include "fundus/rng.hpp"

namespace fundus::cfg {

namespace {

// ---- minimal TOML subset ----------------------------------------------
// Supported: [section] tables one level deep, key = value lines, comments,
// and values of type string / integer / float / boolean / flat array.

struct TomlValue {
  enum class Kind { boolean, integer, real, string, array };
  Kind kind = Kind::string;
  bool b = false;
  long long i = 0;
  double d = 0.0;
  std::string s;
  std::vector<TomlValue> arr;
};

using TomlSection = std::vector<std::pair<std::string, TomlValue>>;
using TomlDoc = std::vector<std::pair<std::string, TomlSection>>;  // "" = root

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Removes a trailing comment, respecting quoted strings.
std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == '"') in_str = false;
    } else if (c == '"') {
      in_str = true;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

TomlValue parse_scalar(const std::string& raw, int line_no);

TomlValue parse_value(const std::string& raw, int line_no) {
  if (!raw.empty() && raw.front() == '[') {
    require_input(raw.back() == ']',
                  "config line " + std::to_string(line_no) + ": unterminated array");
    TomlValue v;
    v.kind = TomlValue::Kind::array;
    const std::string inner = trim(raw.substr(1, raw.size() - 2));
    if (inner.empty()) return v;
    // Split on commas outside strings.
    std::vector<std::string> parts;
    std::string cur;
    bool in_str = false;
    for (std::size_t i = 0; i < inner.size(); ++i) {
      const char c = inner[i];
      if (in_str) {
        cur += c;
        if (c == '\\' && i + 1 < inner.size()) cur += inner[++i];
        else if (c == '"') in_str = false;
      } else if (c == '"') {
        cur += c;
        in_str = true;
      } else if (c == ',') {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    parts.push_back(cur);
    for (const auto& p : parts) v.arr.push_back(parse_scalar(trim(p), line_no));
    return v;
  }
  return parse_scalar(raw, line_no);
}

TomlValue parse_scalar(const std::string& raw, int line_no) {
  TomlValue v;
  require_input(!raw.empty(),
                "config line " + std::to_string(line_no) + ": empty value");
  if (raw == "true" || raw == "false") {
    v.kind = TomlValue::Kind::boolean;
    v.b = raw == "true";
    return v;
  }
  if (raw.front() == '"') {
    require_input(raw.size() >= 2 && raw.back() == '"',
                  "config line " + std::to_string(line_no) + ": unterminated string");
    v.kind = TomlValue::Kind::string;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
      char c = raw[i];
      if (c == '\\') {
        require_input(i + 2 < raw.size(), "config line " +
                                              std::to_string(line_no) +
                                              ": bad escape");
        const char esc = raw[++i];
        switch (esc) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default:
            throw UsageError("config line " + std::to_string(line_no) +
                             ": unsupported escape \\" + std::string(1, esc));
        }
      }
      v.s += c;
    }
    return v;
  }
  // Number: integer when it parses fully without . e E, else float.
  const bool looks_int =
      raw.find_first_of(".eE") == std::string::npos ||
      (raw.size() > 1 && (raw[0] == '0') && raw.find("x") != std::string::npos);
  if (looks_int) {
    long long iv = 0;
    const auto res = std::from_chars(raw.data(), raw.data() + raw.size(), iv);
    if (res.ec == std::errc{} && res.ptr == raw.data() + raw.size()) {
      v.kind = TomlValue::Kind::integer;
      v.i = iv;
      return v;
    }
  }
  {
    char* end = nullptr;
    const double dv = std::strtod(raw.c_str(), &end);
    require_input(end == raw.c_str() + raw.size() && std::isfinite(dv),
                  "config line " + std::to_string(line_no) + ": bad value: " + raw);
    v.kind = TomlValue::Kind::real;
    v.d = dv;
    return v;
  }
}

TomlDoc parse_toml_doc(const std::string& text) {
  TomlDoc doc;
  doc.push_back({"", {}});
  std::size_t section_idx = 0;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string raw_line =
        text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string line = trim(strip_comment(raw_line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      require_input(line.back() == ']' && line.size() > 2,
                    "config line " + std::to_string(line_no) + ": bad section");
      const std::string name = trim(line.substr(1, line.size() - 2));
      for (const auto& [existing, _] : doc)
        require_input(existing != name, "config line " + std::to_string(line_no) +
                                            ": duplicate section [" + name + "]");
      doc.push_back({name, {}});
      section_idx = doc.size() - 1;
      continue;
    }
    const std::size_t eq = line.find('=');
    require_input(eq != std::string::npos,
                  "config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    require_input(!key.empty() &&
                      key.find_first_not_of(
                          "abcdefghijklmnopqrstuvwxyz"
                          "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_") ==
                          std::string::npos,
                  "config line " + std::to_string(line_no) + ": bad key: " + key);
    auto& section = doc[section_idx].second;
    for (const auto& [k, _] : section)
      require_input(k != key, "config line " + std::to_string(line_no) +
                                  ": duplicate key: " + key);
    section.emplace_back(key, parse_value(trim(line.substr(eq + 1)), line_no));
  }
  return doc;
}

// ---- typed extraction ---------------------------------------------------

struct SectionReader {
  const std::string section;
  const TomlSection* kv = nullptr;
  std::set<std::string>* consumed = nullptr;

  const TomlValue* find(const std::string& key) const {
    if (!kv) return nullptr;
    for (const auto& [k, v] : *kv)
      if (k == key) {
        consumed->insert(section + "." + key);
        return &v;
      }
    return nullptr;
  }
  std::string where(const std::string& key) const {
    return section.empty() ? key : section + "." + key;
  }
  void get(const std::string& key, bool& out) const {
    if (const auto* v = find(key)) {
      require_input(v->kind == TomlValue::Kind::boolean,
                    "config: " + where(key) + " must be a boolean");
      out = v->b;
    }
  }
  void get(const std::string& key, int& out) const {
    if (const auto* v = find(key)) {
      require_input(v->kind == TomlValue::Kind::integer,
                    "config: " + where(key) + " must be an integer");
      out = static_cast<int>(v->i);
    }
  }
  void get(const std::string& key, std::uint64_t& out) const {
    if (const auto* v = find(key)) {
      require_input(v->kind == TomlValue::Kind::integer && v->i >= 0,
                    "config: " + where(key) + " must be a non-negative integer");
      out = static_cast<std::uint64_t>(v->i);
    }
  }
  void get(const std::string& key, double& out) const {
    if (const auto* v = find(key)) {
      if (v->kind == TomlValue::Kind::real) out = v->d;
      else if (v->kind == TomlValue::Kind::integer) out = static_cast<double>(v->i);
      else throw UsageError("config: " + where(key) + " must be a number");
    }
  }
  void get(const std::string& key, std::string& out) const {
    if (const auto* v = find(key)) {
      require_input(v->kind == TomlValue::Kind::string,
                    "config: " + where(key) + " must be a string");
      out = v->s;
    }
  }
  void get(const std::string& key, std::vector<double>& out) const {
    if (const auto* v = find(key)) {
      require_input(v->kind == TomlValue::Kind::array,
                    "config: " + where(key) + " must be an array");
      out.clear();
      for (const auto& e : v->arr) {
        if (e.kind == TomlValue::Kind::real) out.push_back(e.d);
        else if (e.kind == TomlValue::Kind::integer)
          out.push_back(static_cast<double>(e.i));
        else throw UsageError("config: " + where(key) + " must hold numbers");
      }
    }
  }
  void get(const std::string& key, std::vector<int>& out) const {
    if (const auto* v = find(key)) {
      require_input(v->kind == TomlValue::Kind::array,
                    "config: " + where(key) + " must be an array");
      out.clear();
      for (const auto& e : v->arr) {
        require_input(e.kind == TomlValue::Kind::integer,
                      "config: " + where(key) + " must hold integers");
        out.push_back(static_cast<int>(e.i));
      }
    }
  }
  void get(const std::string& key, std::vector<std::string>& out) const {
    if (const auto* v = find(key)) {
      require_input(v->kind == TomlValue::Kind::array,
                    "config: " + where(key) + " must be an array");
      out.clear();
      for (const auto& e : v->arr) {
        require_input(e.kind == TomlValue::Kind::string,
                      "config: " + where(key) + " must hold strings");
        out.push_back(e.s);
      }
    }
  }
  // Two-element numeric range.
  void get_range(const std::string& key, double& lo, double& hi) const {
    std::vector<double> v = {lo, hi};
    get(key, v);
    require_input(v.size() == 2,
                  "config: " + where(key) + " must be a 2-element array");
    lo = v[0];
    hi = v[1];
  }
};

// ---- canonical emission -------------------------------------------------

std::string toml_string(const std::string& s) {
  std::string out = "\"";
  for (const char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c; break;
    }
  }
  return out + "\"";
}

std::string toml_array_d(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i)
    out += (i ? ", " : "") + format_double(v[i]);
  return out + "]";
}

std::string toml_array_i(const std::vector<int>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i)
    out += (i ? ", " : "") + std::to_string(v[i]);
  return out + "]";
}

std::string toml_array_s(const std::vector<std::string>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i)
    out += (i ? ", " : "") + toml_string(v[i]);
  return out + "]";
}

}  // namespace

RunConfig RunConfig::parse_toml(const std::string& text) {
  const TomlDoc doc = parse_toml_doc(text);
  const std::set<std::string> known_sections = {
      "", "data", "quality", "augment", "pretrain", "finetune", "eval", "sweep"};
  for (const auto& [name, _] : doc)
    require_input(known_sections.count(name) != 0,
                  "config: unknown section [" + name + "]");

  std::set<std::string> consumed;
  auto reader = [&](const std::string& name) {
    SectionReader r{name, nullptr, &consumed};
    for (const auto& [n, kv] : doc)
      if (n == name) r.kv = &kv;
    return r;
  };

  RunConfig c;
  {
    auto r = reader("");
    r.get("seed", c.seed);
    r.get("jobs", c.jobs);
  }
  {
    auto r = reader("data");
    r.get("manifest", c.data.manifest);
    r.get("unlabeled_manifest", c.data.unlabeled_manifest);
    r.get("train_manifest", c.data.train_manifest);
    r.get("test_manifest", c.data.test_manifest);
    r.get("synth_n", c.data.synth_n);
    r.get("synth_size", c.data.synth_size);
    r.get("synth_styles", c.data.synth_styles);
  }
  {
    auto r = reader("quality");
    r.get("min_luminance", c.quality.min_luminance);
    r.get("min_sharpness", c.quality.min_sharpness);
    r.get("max_clipped", c.quality.max_clipped);
  }
  {
    auto r = reader("augment");
    auto& p = c.augment.policy;
    r.get("p_hflip", p.p_hflip);
    r.get_range("rotation_deg", p.rotation_min_deg, p.rotation_max_deg);
    r.get("jitter_brightness", p.jitter_brightness);
    r.get("jitter_contrast", p.jitter_contrast);
    r.get("jitter_saturation", p.jitter_saturation);
    r.get_range("crop_scale", p.crop_scale_min, p.crop_scale_max);
    r.get("p_blur", p.p_blur);
    r.get_range("blur_sigma", p.blur_sigma_min, p.blur_sigma_max);
    r.get("p_nst", p.p_nst);
    r.get("nst_alpha", p.nst_alpha);
    r.get("nst_epsilon", p.nst_epsilon);
    r.get("out_size", p.out_size);
    r.get("style_dir", c.augment.style_dir);
  }
  {
    auto r = reader("pretrain");
    auto& t = c.pretrain.train;
    r.get("batch_size", t.batch_size);
    r.get("temperature", t.temperature);
    r.get("max_epochs", t.max_epochs);
    std::string opt = nn::optimizer_name(t.optimizer);
    r.get("optimizer", opt);
    t.optimizer = nn::parse_optimizer(opt);
    r.get("learning_rate", t.learning_rate);
    r.get("saturation_patience", t.saturation_patience);
    r.get("saturation_delta", t.saturation_delta);

    auto& e = c.pretrain.encoder;
    std::string family = nn::EncoderConfig::family_name(e.family);
    r.get("encoder_family", family);
    e.family = nn::EncoderConfig::parse_family(family);
    std::vector<int> blocks, channels;
    for (const auto& s : e.stages) {
      blocks.push_back(s.blocks);
      channels.push_back(s.channels);
    }
    r.get("stage_blocks", blocks);
    r.get("stage_channels", channels);
    require_input(blocks.size() == channels.size() && !blocks.empty(),
                  "config: stage_blocks and stage_channels must align");
    e.stages.clear();
    for (std::size_t i = 0; i < blocks.size(); ++i)
      e.stages.push_back({blocks[i], channels[i]});
    r.get("embedding_dim", e.embedding_dim);
    r.get("input_size", e.input_size);
    r.get("proj_hidden_dim", c.pretrain.head.hidden_dim);
    r.get("proj_output_dim", c.pretrain.head.output_dim);
  }
  {
    auto r = reader("finetune");
    auto& t = c.finetune.train;
    r.get("epochs", t.epochs);
    r.get("learning_rate", t.learning_rate);
    std::string opt = nn::optimizer_name(t.optimizer);
    r.get("optimizer", opt);
    t.optimizer = nn::parse_optimizer(opt);
    r.get("batch_size", t.batch_size);
    r.get("freeze_encoder", t.freeze_encoder);
    r.get("grid_search", c.finetune.grid_search);
    r.get("folds", c.finetune.grid.folds);
    r.get("lr_grid", c.finetune.grid.lr_grid);
    std::vector<std::string> opt_grid;
    for (const auto o : c.finetune.grid.optimizer_grid)
      opt_grid.push_back(nn::optimizer_name(o));
    r.get("optimizer_grid", opt_grid);
    c.finetune.grid.optimizer_grid.clear();
    for (const auto& o : opt_grid)
      c.finetune.grid.optimizer_grid.push_back(nn::parse_optimizer(o));
    r.get("batch_grid", c.finetune.grid.batch_grid);
    r.get("label_fraction", c.finetune.label_fraction);
    r.get("val_fraction", c.finetune.val_fraction);
  }
  {
    auto r = reader("eval");
    r.get("bootstrap_resamples", c.eval.bootstrap_resamples);
  }
  {
    auto r = reader("sweep");
    r.get("fractions", c.sweep.fractions);
    r.get("seeds", c.sweep.seeds);
    r.get("batch_sizes", c.sweep.batch_sizes);
    r.get("research_per_fraction", c.sweep.research_per_fraction);
  }

  for (const auto& [name, kv] : doc)
    for (const auto& [key, _] : kv) {
      const std::string full = name + "." + key;
      require_input(consumed.count(full) != 0,
                    "config: unknown key " +
                        (name.empty() ? key : "[" + name + "] " + key));
    }

  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  return parse_toml(read_text_file(path));
}

void RunConfig::validate() const {
  require_input(jobs >= 1, "config: jobs must be >= 1");
  augment.policy.validate();
  pretrain.train.validate();
  pretrain.encoder.validate();
  pretrain.head.validate();
  finetune.train.validate();
  finetune.grid.validate();
  require_input(finetune.label_fraction > 0.0 && finetune.label_fraction <= 1.0,
                "config: label_fraction must be in (0,1]");
  require_input(finetune.val_fraction > 0.0 && finetune.val_fraction < 1.0,
                "config: val_fraction must be in (0,1)");
  require_input(eval.bootstrap_resamples >= 100,
                "config: bootstrap_resamples must be >= 100");
  require_input(!sweep.fractions.empty(), "config: sweep fractions empty");
  for (const double f : sweep.fractions)
    require_input(f > 0.0 && f <= 1.0, "config: sweep fraction out of (0,1]");
  require_input(sweep.seeds >= 1, "config: sweep seeds must be >= 1");
  require_input(data.synth_n >= 4, "config: synth_n must be >= 4");
  require_input(data.synth_size >= 8, "config: synth_size must be >= 8");
}

std::string RunConfig::canonical_toml() const {
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) {
    out += k + " = " + v + "\n";
  };
  kv("seed", std::to_string(seed));
  kv("jobs", std::to_string(jobs));

  out += "\n[data]\n";
  kv("manifest", toml_string(data.manifest));
  kv("unlabeled_manifest", toml_string(data.unlabeled_manifest));
  kv("train_manifest", toml_string(data.train_manifest));
  kv("test_manifest", toml_string(data.test_manifest));
  kv("synth_n", std::to_string(data.synth_n));
  kv("synth_size", std::to_string(data.synth_size));
  kv("synth_styles", std::to_string(data.synth_styles));

  out += "\n[quality]\n";
  kv("min_luminance", format_double(quality.min_luminance));
  kv("min_sharpness", format_double(quality.min_sharpness));
  kv("max_clipped", format_double(quality.max_clipped));

  out += "\n[augment]\n";
  const auto& p = augment.policy;
  kv("p_hflip", format_double(p.p_hflip));
  kv("rotation_deg", toml_array_d({p.rotation_min_deg, p.rotation_max_deg}));
  kv("jitter_brightness", format_double(p.jitter_brightness));
  kv("jitter_contrast", format_double(p.jitter_contrast));
  kv("jitter_saturation", format_double(p.jitter_saturation));
  kv("crop_scale", toml_array_d({p.crop_scale_min, p.crop_scale_max}));
  kv("p_blur", format_double(p.p_blur));
  kv("blur_sigma", toml_array_d({p.blur_sigma_min, p.blur_sigma_max}));
  kv("p_nst", format_double(p.p_nst));
  kv("nst_alpha", format_double(p.nst_alpha));
  kv("nst_epsilon", format_double(p.nst_epsilon));
  kv("out_size", std::to_string(p.out_size));
  kv("style_dir", toml_string(augment.style_dir));

  out += "\n[pretrain]\n";
  const auto& t = pretrain.train;
  kv("batch_size", std::to_string(t.batch_size));
  kv("temperature", format_double(t.temperature));
  kv("max_epochs", std::to_string(t.max_epochs));
  kv("optimizer", toml_string(nn::optimizer_name(t.optimizer)));
  kv("learning_rate", format_double(t.learning_rate));
  kv("saturation_patience", std::to_string(t.saturation_patience));
  kv("saturation_delta", format_double(t.saturation_delta));
  kv("encoder_family",
     toml_string(nn::EncoderConfig::family_name(pretrain.encoder.family)));
  std::vector<int> blocks, channels;
  for (const auto& s : pretrain.encoder.stages) {
    blocks.push_back(s.blocks);
    channels.push_back(s.channels);
  }
  kv("stage_blocks", toml_array_i(blocks));
  kv("stage_channels", toml_array_i(channels));
  kv("embedding_dim", std::to_string(pretrain.encoder.embedding_dim));
  kv("input_size", std::to_string(pretrain.encoder.input_size));
  kv("proj_hidden_dim", std::to_string(pretrain.head.hidden_dim));
  kv("proj_output_dim", std::to_string(pretrain.head.output_dim));

  out += "\n[finetune]\n";
  const auto& f = finetune.train;
  kv("epochs", std::to_string(f.epochs));
  kv("learning_rate", format_double(f.learning_rate));
  kv("optimizer", toml_string(nn::optimizer_name(f.optimizer)));
  kv("batch_size", std::to_string(f.batch_size));
  kv("freeze_encoder", f.freeze_encoder ? "true" : "false");
  kv("grid_search", finetune.grid_search ? "true" : "false");
  kv("folds", std::to_string(finetune.grid.folds));
  kv("lr_grid", toml_array_d(finetune.grid.lr_grid));
  std::vector<std::string> opt_grid;
  for (const auto o : finetune.grid.optimizer_grid)
    opt_grid.push_back(nn::optimizer_name(o));
  kv("optimizer_grid", toml_array_s(opt_grid));
  kv("batch_grid", toml_array_i(finetune.grid.batch_grid));
  kv("label_fraction", format_double(finetune.label_fraction));
  kv("val_fraction", format_double(finetune.val_fraction));

  out += "\n[eval]\n";
  kv("bootstrap_resamples", std::to_string(eval.bootstrap_resamples));

  out += "\n[sweep]\n";
  kv("fractions", toml_array_d(sweep.fractions));
  kv("seeds", std::to_string(sweep.seeds));
  kv("batch_sizes", toml_array_i(sweep.batch_sizes));
  kv("research_per_fraction", sweep.research_per_fraction ? "true" : "false");
  return out;
}

std::string RunConfig::digest() const { return to_hex(fnv1a64(canonical_toml())); }

}  // namespace fundus::cfg
