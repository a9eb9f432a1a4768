#include "flowforge/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "flowforge/errors.hpp"
#include "flowforge/yaml.hpp"

namespace flowforge::config {

namespace {

using yaml::Node;

[[noreturn]] void invalid(const std::string& key, const std::string& what) {
  throw ConfigError("config key '" + key + "': " + what);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::uint64_t to_uint(const Node& n, const std::string& key) {
  if (!n.is_scalar()) invalid(key, "expected an integer");
  const std::string& s = n.text();
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    invalid(key, "expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

double to_double(const Node& n, const std::string& key) {
  if (!n.is_scalar()) invalid(key, "expected a number");
  const std::string& s = n.text();
  if (s == ".inf") return INFINITY;
  if (s == "-.inf") return -INFINITY;
  if (s == ".nan") return NAN;
  double v = 0;
  const char* begin = s.data() + (!s.empty() && s.front() == '+' ? 1 : 0);
  auto [end, ec] = std::from_chars(begin, s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    invalid(key, "expected a number, got '" + s + "'");
  }
  return v;
}

bool to_bool(const Node& n, const std::string& key) {
  if (n.is_scalar() && !n.quoted()) {
    if (n.text() == "true") return true;
    if (n.text() == "false") return false;
  }
  invalid(key, "expected true or false");
}

std::string to_string(const Node& n, const std::string& key) {
  if (!n.is_scalar()) invalid(key, "expected a string");
  return n.text();
}

// Reads keys out of one map, remembering which ones were consumed so that
// leftovers can be rejected.
class Section {
 public:
  Section(const Node* node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && node_->is_null()) node_ = nullptr;
    if (node_ && !node_->is_map()) invalid(path_.empty() ? "<root>" : path_, "expected a map");
  }

  const Node* get(const std::string& key) {
    used_.insert(key);
    if (!node_) return nullptr;
    const Node* n = node_->find(key);
    return (n && n->is_null()) ? nullptr : n;
  }

  std::string key(const std::string& k) const { return join(path_, k); }

  template <typename T>
  void read_uint(const std::string& k, T& out) {
    if (const Node* n = get(k)) out = static_cast<T>(to_uint(*n, key(k)));
  }
  void read_double(const std::string& k, double& out) {
    if (const Node* n = get(k)) out = to_double(*n, key(k));
  }
  void read_string(const std::string& k, std::string& out) {
    if (const Node* n = get(k)) out = to_string(*n, key(k));
  }
  void read_bool(const std::string& k, bool& out) {
    if (const Node* n = get(k)) out = to_bool(*n, key(k));
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [k, v] : node_->entries()) {
      if (!used_.contains(k)) {
        throw ConfigError("unknown config key '" + join(path_, k) + "' (line " +
                          std::to_string(v.line()) + ")");
      }
    }
  }

 private:
  const Node* node_;
  std::string path_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) invalid(key, what);
}

void read_model(Section& root, ModelSection& m) {
  Section s(root.get("model"), "model");
  s.read_string("name", m.name);
  if (const Node* n = s.get("hidden_dims")) {
    if (!n->is_list()) invalid("model.hidden_dims", "expected a list");
    m.hidden_dims.clear();
    for (const auto& it : n->items()) m.hidden_dims.push_back(to_uint(it, "model.hidden_dims"));
  }
  s.read_uint("embed_dim", m.embed_dim);
  s.read_uint("num_conditions", m.num_conditions);
  s.read_double("mode_std", m.mode_std);
  if (const Node* n = s.get("modes")) {
    const std::string key = "model.modes";
    if (!n->is_list()) invalid(key, "expected a list (one entry per condition)");
    m.modes.clear();
    for (const auto& cond : n->items()) {
      if (!cond.is_list()) invalid(key, "each condition must be a list of [x, y] points");
      auto& out = m.modes.emplace_back();
      for (const auto& pt : cond.items()) {
        if (!pt.is_list() || pt.items().size() != 2) invalid(key, "each mode must be [x, y]");
        out.push_back({to_double(pt.items()[0], key), to_double(pt.items()[1], key)});
      }
    }
  }
  s.finish();

  require(!m.name.empty(), "model.name", "must be non-empty");
  require(!m.hidden_dims.empty(), "model.hidden_dims", "needs at least one hidden layer");
  for (std::size_t h : m.hidden_dims) require(h >= 1, "model.hidden_dims", "widths must be >= 1");
  require(m.embed_dim >= 1, "model.embed_dim", "must be >= 1");
  require(m.num_conditions >= 1, "model.num_conditions", "must be >= 1");
  require(m.mode_std > 0.0 && std::isfinite(m.mode_std), "model.mode_std", "must be > 0");
  require(m.modes.size() == m.num_conditions, "model.modes",
          "needs exactly num_conditions entries");
  for (const auto& c : m.modes) require(!c.empty(), "model.modes", "every condition needs a mode");
}

void read_pretrain(Section& root, PretrainSection& p) {
  Section s(root.get("pretrain"), "pretrain");
  s.read_uint("steps", p.steps);
  s.read_uint("batch_size", p.batch_size);
  s.read_double("lr", p.lr);
  s.finish();
  require(p.batch_size >= 1, "pretrain.batch_size", "must be >= 1");
  require(p.lr >= 0.0 && std::isfinite(p.lr), "pretrain.lr", "must be >= 0");
}

void read_scheduler(Section& root, SchedulerSection& c, std::vector<std::string>& warnings) {
  Section s(root.get("scheduler"), "scheduler");
  s.read_string("dynamics", c.dynamics);
  s.read_double("eta", c.eta);
  s.read_uint("n_steps", c.n_steps);
  s.read_double("t_min", c.t_min);
  s.read_double("t_max", c.t_max);
  s.finish();
  require(c.eta >= 0.0 && std::isfinite(c.eta), "scheduler.eta", "must be >= 0");
  require(c.n_steps >= 1, "scheduler.n_steps", "must be >= 1");
  require(c.t_min >= 0.001 && c.t_min < c.t_max && c.t_max <= 0.999, "scheduler.t_min",
          "need 0.001 <= t_min < t_max <= 0.999");
  if (c.eta == 0.0 && c.dynamics != "ode") {
    warnings.push_back("scheduler.eta is 0: stochastic steps degenerate to ODE steps");
  }
}

void read_trainer(Section& root, TrainerSection& t) {
  Section s(root.get("trainer"), "trainer");
  s.read_string("trainer_type", t.trainer_type);
  s.read_uint("group_size", t.group_size);
  s.read_double("clip_eps", t.clip_eps);
  s.read_uint("mix_k", t.mix_k);
  s.read_double("nft_beta", t.nft_beta);
  s.read_string("timestep_strategy", t.timestep_strategy);
  s.read_double("logit_normal_loc", t.logit_normal_loc);
  s.read_double("logit_normal_scale", t.logit_normal_scale);
  s.read_double("lr", t.lr);
  s.read_uint("total_steps", t.total_steps);
  s.read_uint("inner_epochs", t.inner_epochs);
  s.read_uint("timesteps_per_sample", t.timesteps_per_sample);
  s.finish();
  require(!t.trainer_type.empty(), "trainer.trainer_type", "must be non-empty");
  require(t.group_size >= 2, "trainer.group_size", "must be >= 2");
  require(t.clip_eps > 0.0, "trainer.clip_eps", "must be > 0");
  require(t.mix_k == 1 || t.mix_k == 2, "trainer.mix_k", "must be 1 or 2");
  require(t.nft_beta >= 0.0, "trainer.nft_beta", "must be >= 0");
  require(t.timestep_strategy == "uniform" || t.timestep_strategy == "logit_normal" ||
              t.timestep_strategy == "discrete",
          "trainer.timestep_strategy", "must be uniform, logit_normal or discrete");
  require(t.logit_normal_scale > 0.0, "trainer.logit_normal_scale", "must be > 0");
  require(t.lr >= 0.0 && std::isfinite(t.lr), "trainer.lr", "must be >= 0");
  require(t.inner_epochs >= 1, "trainer.inner_epochs", "must be >= 1");
  require(t.timesteps_per_sample >= 1, "trainer.timesteps_per_sample", "must be >= 1");
}

void read_rewards(Section& root, std::vector<rewards::RewardSpec>& out) {
  const Node* n = root.get("rewards");
  if (!n) return;
  if (!n->is_list()) invalid("rewards", "expected a list");
  out.clear();
  for (std::size_t i = 0; i < n->items().size(); ++i) {
    const std::string path = "rewards[" + std::to_string(i) + "]";
    Section s(&n->items()[i], path);
    rewards::RewardSpec spec;
    s.read_string("name", spec.name);
    s.read_string("backend", spec.backend_id);
    s.read_double("weight", spec.weight);
    if (const Node* p = s.get("params")) {
      if (!p->is_map()) invalid(path + ".params", "expected a map");
      for (const auto& [k, v] : p->entries()) spec.params[k] = to_double(v, path + ".params." + k);
    }
    s.finish();
    require(!spec.name.empty(), path + ".name", "is required");
    require(!spec.backend_id.empty(), path + ".backend", "is required");
    require(std::isfinite(spec.weight), path + ".weight", "must be finite");
    for (const auto& prev : out) {
      require(prev.name != spec.name, path + ".name", "duplicate reward name '" + spec.name + "'");
    }
    out.push_back(std::move(spec));
  }
  require(!out.empty(), "rewards", "needs at least one reward");
}

void read_cache(Section& root, CacheSection& c) {
  Section s(root.get("cache"), "cache");
  s.read_bool("enabled", c.enabled);
  s.read_string("dir", c.dir);
  s.finish();
  require(!c.dir.empty(), "cache.dir", "must be non-empty");
}

}  // namespace

ParsedConfig parse_config(std::string_view text) {
  const Node doc = yaml::parse(text);
  ParsedConfig out;
  RunConfig& c = out.config;
  Section root(&doc, "");
  root.read_uint("seed", c.seed);
  root.read_string("output_dir", c.output_dir);
  root.read_string("advantage_mode", c.advantage_mode);
  read_model(root, c.model);
  read_pretrain(root, c.pretrain);
  read_scheduler(root, c.scheduler, out.warnings);
  read_trainer(root, c.trainer);
  read_rewards(root, c.rewards);
  read_cache(root, c.cache);
  root.finish();
  require(rewards::parse_advantage_mode(c.advantage_mode).has_value(), "advantage_mode",
          "must be weighted_sum or gdpo");
  return out;
}

ParsedConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const RunConfig& c) {
  using yaml::format_double;
  auto str = [](const std::string& s) { return Node::scalar(s, true); };
  auto num = [](double v) { return Node::scalar(format_double(v)); };
  auto uint = [](std::uint64_t v) { return Node::scalar(std::to_string(v)); };

  Node root = Node::map();
  root.set("seed", uint(c.seed));
  root.set("output_dir", str(c.output_dir));
  root.set("advantage_mode", str(c.advantage_mode));

  Node& m = root.set("model", Node::map());
  m.set("name", str(c.model.name));
  Node& hd = m.set("hidden_dims", Node::list());
  for (std::size_t h : c.model.hidden_dims) hd.push(uint(h));
  m.set("embed_dim", uint(c.model.embed_dim));
  m.set("num_conditions", uint(c.model.num_conditions));
  m.set("mode_std", num(c.model.mode_std));
  Node& modes = m.set("modes", Node::list());
  for (const auto& cond : c.model.modes) {
    Node& cn = modes.push(Node::list());
    for (const auto& pt : cond) {
      Node& pn = cn.push(Node::list());
      for (double v : pt) pn.push(num(v));
    }
  }

  Node& p = root.set("pretrain", Node::map());
  p.set("steps", uint(c.pretrain.steps));
  p.set("batch_size", uint(c.pretrain.batch_size));
  p.set("lr", num(c.pretrain.lr));

  Node& s = root.set("scheduler", Node::map());
  s.set("dynamics", str(c.scheduler.dynamics));
  s.set("eta", num(c.scheduler.eta));
  s.set("n_steps", uint(c.scheduler.n_steps));
  s.set("t_min", num(c.scheduler.t_min));
  s.set("t_max", num(c.scheduler.t_max));

  const TrainerSection& tc = c.trainer;
  Node& t = root.set("trainer", Node::map());
  t.set("trainer_type", str(tc.trainer_type));
  t.set("group_size", uint(tc.group_size));
  t.set("clip_eps", num(tc.clip_eps));
  t.set("mix_k", uint(tc.mix_k));
  t.set("nft_beta", num(tc.nft_beta));
  t.set("timestep_strategy", str(tc.timestep_strategy));
  t.set("logit_normal_loc", num(tc.logit_normal_loc));
  t.set("logit_normal_scale", num(tc.logit_normal_scale));
  t.set("lr", num(tc.lr));
  t.set("total_steps", uint(tc.total_steps));
  t.set("inner_epochs", uint(tc.inner_epochs));
  t.set("timesteps_per_sample", uint(tc.timesteps_per_sample));

  Node& rw = root.set("rewards", Node::list());
  for (const auto& spec : c.rewards) {
    Node& r = rw.push(Node::map());
    r.set("name", str(spec.name));
    r.set("backend", str(spec.backend_id));
    r.set("weight", num(spec.weight));
    if (!spec.params.empty()) {
      Node& pr = r.set("params", Node::map());
      for (const auto& [k, v] : spec.params) pr.set(k, num(v));
    }
  }

  Node& ch = root.set("cache", Node::map());
  ch.set("enabled", Node::scalar(c.cache.enabled ? "true" : "false"));
  ch.set("dir", str(c.cache.dir));
  return yaml::emit(root);
}

model::ToyDataSpec data_spec(const RunConfig& config) {
  model::ToyDataSpec spec;
  spec.mode_std = config.model.mode_std;
  for (const auto& cond : config.model.modes) {
    auto& out = spec.modes.emplace_back();
    for (const auto& pt : cond) out.emplace_back(pt);
  }
  spec.validate();
  return spec;
}

rewards::AdvantageMode advantage_mode(const RunConfig& config) {
  const auto m = rewards::parse_advantage_mode(config.advantage_mode);
  if (!m) throw ConfigError("advantage_mode must be weighted_sum or gdpo");
  return *m;
}

}  // namespace flowforge::config
