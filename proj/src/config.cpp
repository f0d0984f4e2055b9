#include "psd/config.hpp"

#include "psd/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace psd {

using nlohmann::json;

namespace {

std::string type_name(const json& j) { return j.type_name(); }

// Reads one JSON object, remembering which keys were consumed so that any
// leftover key can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError("config: " + label() + " must be an object, got " + type_name(j_));
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  void opt_null(const char* key) { seen_.insert(key); }

  template <class T>
  void opt(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    read(j_.at(key), join(key), out);
  }

  template <class T>
  void req(const char* key, T& out) {
    if (!j_.contains(key)) throw ConfigError("config: missing required field '" + join(key) + "'");
    opt(key, out);
  }

  /// null maps to NaN (meaning "use the default rule").
  void opt_nullable(const char* key, double& out) {
    if (j_.contains(key) && j_.at(key).is_null()) {
      seen_.insert(key);
      out = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    opt(key, out);
  }

  ObjectReader child(const char* key) {
    seen_.insert(key);
    return ObjectReader(j_.at(key), join(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("config: unknown key '" + join(it.key()) + "'");
    }
  }

 private:
  std::string label() const { return path_.empty() ? "document" : "'" + path_ + "'"; }
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  static void read(const json& v, const std::string& p, bool& out) {
    if (!v.is_boolean()) throw ConfigError("config: '" + p + "' must be a boolean");
    out = v.get<bool>();
  }
  static void read(const json& v, const std::string& p, int& out) {
    if (!v.is_number_integer()) throw ConfigError("config: '" + p + "' must be an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      throw ConfigError("config: '" + p + "' out of range");
    }
    out = static_cast<int>(x);
  }
  static void read(const json& v, const std::string& p, unsigned long long& out) {
    if (!v.is_number_unsigned()) {
      throw ConfigError("config: '" + p + "' must be a non-negative integer");
    }
    out = v.get<unsigned long long>();
  }
  static void read(const json& v, const std::string& p, unsigned long& out) {
    unsigned long long x = 0;
    read(v, p, x);
    out = static_cast<unsigned long>(x);
  }
  static void read(const json& v, const std::string& p, double& out) {
    if (!v.is_number()) throw ConfigError("config: '" + p + "' must be a number");
    out = v.get<double>();
  }
  static void read(const json& v, const std::string& p, std::string& out) {
    if (!v.is_string()) throw ConfigError("config: '" + p + "' must be a string");
    out = v.get<std::string>();
  }
  static void read(const json& v, const std::string& p, std::vector<int>& out) {
    if (!v.is_array()) throw ConfigError("config: '" + p + "' must be an array of integers");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      int x = 0;
      read(v[i], p + "[" + std::to_string(i) + "]", x);
      out.push_back(x);
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string recompute_name(reward::Recompute r) {
  return r == reward::Recompute::per_minibatch ? "per_minibatch" : "per_epoch";
}

reward::Recompute recompute_from(const std::string& s) {
  if (s == "per_minibatch") return reward::Recompute::per_minibatch;
  if (s == "per_epoch") return reward::Recompute::per_epoch;
  throw ConfigError("config: 'reward.recompute' must be per_minibatch or per_epoch");
}

std::string skill_kind_name(metra::SkillKind k) {
  return k == metra::SkillKind::continuous ? "continuous" : "discrete";
}

metra::SkillKind skill_kind_from(const std::string& s) {
  if (s == "continuous") return metra::SkillKind::continuous;
  if (s == "discrete") return metra::SkillKind::discrete;
  throw ConfigError("config: 'metra.kind' must be continuous or discrete");
}

json to_json(const RunConfig& c) {
  json j;
  j["env"] = {{"name", std::string(envs::to_string(c.env.name))},
              {"episode_length", c.env.episode_length}};
  const auto& e = c.encoder;
  j["encoder"] = {{"d", e.d},
                  {"D", e.D},
                  {"k", e.k},
                  {"eps", e.eps},
                  {"lambda1", e.lambda1},
                  {"lambda2", e.lambda2},
                  {"lr", e.lr},
                  {"batch", e.batch},
                  {"hidden_layers", e.hidden_layers},
                  {"hidden_units", e.hidden_units},
                  {"allow_planar", e.allow_planar},
                  {"steps_per_epoch", e.steps_per_epoch}};
  const auto& a = c.agent;
  j["agent"] = {{"gamma", a.gamma},
                {"lr", a.lr},
                {"tau", a.tau},
                {"batch", a.batch},
                {"episodes_per_epoch", a.episodes_per_epoch},
                {"grad_steps_per_epoch", a.grad_steps_per_epoch},
                {"auto_entropy", a.auto_entropy},
                {"target_entropy", std::isnan(a.target_entropy) ? json(nullptr) : json(a.target_entropy)},
                {"init_alpha", a.init_alpha},
                {"hidden_layers", a.hidden_layers},
                {"hidden_units", a.hidden_units},
                {"buffer_capacity", a.buffer_capacity}};
  const auto& r = c.reward;
  j["reward"] = {{"kappa", r.kappa},
                 {"v_star", r.v_star},
                 {"use_ext", r.use_ext},
                 {"alpha_psd", r.alpha_psd},
                 {"recompute", recompute_name(r.recompute)}};
  const auto& b = c.bounds;
  j["bounds"] = {{"L_min", b.L_min},
                 {"L_max", b.L_max},
                 {"floor", b.floor},
                 {"N", b.N},
                 {"alpha", b.alpha},
                 {"beta", b.beta},
                 {"interval_episodes", b.interval_episodes},
                 {"eval_episodes", b.eval_episodes},
                 {"num_periods", b.num_periods},
                 {"adaptive", b.adaptive}};
  if (c.metra) {
    const auto& m = *c.metra;
    j["metra"] = {{"skill_dim", m.skill_dim},
                  {"kind", skill_kind_name(m.kind)},
                  {"eps_m", m.eps_m},
                  {"lambda_m_init", m.lambda_m_init},
                  {"lambda_lr", m.lambda_lr},
                  {"lr", m.lr},
                  {"alpha_psd", m.alpha_psd},
                  {"batch", m.batch},
                  {"hidden_layers", m.hidden_layers},
                  {"hidden_units", m.hidden_units},
                  {"mutual_conditioning", m.mutual_conditioning}};
  }
  if (c.high_level) {
    const auto& h = *c.high_level;
    j["high_level"] = {{"H", h.H},
                       {"gamma", h.gamma},
                       {"gae_lambda", h.gae_lambda},
                       {"clip", h.clip},
                       {"lr_actor", h.lr_actor},
                       {"lr_critic", h.lr_critic},
                       {"episodes_per_epoch", h.episodes_per_epoch},
                       {"grad_steps", h.grad_steps},
                       {"batch", h.batch},
                       {"entropy_coef", h.entropy_coef},
                       {"epochs", h.epochs},
                       {"hidden_layers", h.hidden_layers},
                       {"hidden_units", h.hidden_units},
                       {"eval_episodes", h.eval_episodes},
                       {"episode_length", h.episode_length},
                       {"action_space", h.action_space}};
  }
  j["seed"] = c.seed;
  j["epochs"] = c.epochs;
  j["workers"] = c.workers;
  j["out_dir"] = c.out_dir;
  j["checkpoint_every"] = c.checkpoint_every;
  j["dump_skills"] = c.dump_skills;
  j["hann_window"] = c.hann_window;
  return j;
}

RunConfig from_json(const json& root) {
  RunConfig c;
  ObjectReader top(root, "");
  if (!top.has("env")) throw ConfigError("config: missing required field 'env.name'");
  {
    ObjectReader r = top.child("env");
    std::string name;
    r.req("name", name);
    int len = c.env.episode_length;
    r.opt("episode_length", len);
    r.finish();
    c.env = envs::EnvSpec::make(envs::env_name_from_string(name), len);
  }
  if (top.has("encoder")) {
    ObjectReader r = top.child("encoder");
    auto& e = c.encoder;
    r.opt("d", e.d);
    r.opt("D", e.D);
    r.opt("k", e.k);
    r.opt("eps", e.eps);
    r.opt("lambda1", e.lambda1);
    r.opt("lambda2", e.lambda2);
    r.opt("lr", e.lr);
    r.opt("batch", e.batch);
    r.opt("hidden_layers", e.hidden_layers);
    r.opt("hidden_units", e.hidden_units);
    r.opt("allow_planar", e.allow_planar);
    r.opt("steps_per_epoch", e.steps_per_epoch);
    r.finish();
  }
  if (top.has("agent")) {
    ObjectReader r = top.child("agent");
    auto& a = c.agent;
    r.opt("gamma", a.gamma);
    r.opt("lr", a.lr);
    r.opt("tau", a.tau);
    r.opt("batch", a.batch);
    r.opt("episodes_per_epoch", a.episodes_per_epoch);
    r.opt("grad_steps_per_epoch", a.grad_steps_per_epoch);
    r.opt("auto_entropy", a.auto_entropy);
    r.opt_nullable("target_entropy", a.target_entropy);
    r.opt("init_alpha", a.init_alpha);
    r.opt("hidden_layers", a.hidden_layers);
    r.opt("hidden_units", a.hidden_units);
    r.opt("buffer_capacity", a.buffer_capacity);
    r.finish();
  }
  if (top.has("reward")) {
    ObjectReader r = top.child("reward");
    auto& w = c.reward;
    r.opt("kappa", w.kappa);
    r.opt("v_star", w.v_star);
    r.opt("use_ext", w.use_ext);
    r.opt("alpha_psd", w.alpha_psd);
    std::string rc = recompute_name(w.recompute);
    r.opt("recompute", rc);
    w.recompute = recompute_from(rc);
    r.finish();
  }
  if (top.has("bounds")) {
    ObjectReader r = top.child("bounds");
    auto& b = c.bounds;
    r.opt("L_min", b.L_min);
    r.opt("L_max", b.L_max);
    r.opt("floor", b.floor);
    r.opt("N", b.N);
    r.opt("alpha", b.alpha);
    r.opt("beta", b.beta);
    r.opt("interval_episodes", b.interval_episodes);
    r.opt("eval_episodes", b.eval_episodes);
    r.opt("num_periods", b.num_periods);
    r.opt("adaptive", b.adaptive);
    r.finish();
  }
  if (top.has("metra") && !root.at("metra").is_null()) {
    ObjectReader r = top.child("metra");
    metra::MetraConfig m;
    r.opt("skill_dim", m.skill_dim);
    std::string kind = skill_kind_name(m.kind);
    r.opt("kind", kind);
    m.kind = skill_kind_from(kind);
    r.opt("eps_m", m.eps_m);
    r.opt("lambda_m_init", m.lambda_m_init);
    r.opt("lambda_lr", m.lambda_lr);
    r.opt("lr", m.lr);
    r.opt("alpha_psd", m.alpha_psd);
    r.opt("batch", m.batch);
    r.opt("hidden_layers", m.hidden_layers);
    r.opt("hidden_units", m.hidden_units);
    r.opt("mutual_conditioning", m.mutual_conditioning);
    r.finish();
    c.metra = m;
  } else if (top.has("metra")) {
    top.opt_null("metra");
  }
  if (top.has("high_level") && !root.at("high_level").is_null()) {
    ObjectReader r = top.child("high_level");
    hierarchy::HighLevelConfig h;
    r.opt("H", h.H);
    r.opt("gamma", h.gamma);
    r.opt("gae_lambda", h.gae_lambda);
    r.opt("clip", h.clip);
    r.opt("lr_actor", h.lr_actor);
    r.opt("lr_critic", h.lr_critic);
    r.opt("episodes_per_epoch", h.episodes_per_epoch);
    r.opt("grad_steps", h.grad_steps);
    r.opt("batch", h.batch);
    r.opt("entropy_coef", h.entropy_coef);
    r.opt("epochs", h.epochs);
    r.opt("hidden_layers", h.hidden_layers);
    r.opt("hidden_units", h.hidden_units);
    r.opt("eval_episodes", h.eval_episodes);
    r.opt("episode_length", h.episode_length);
    r.opt("action_space", h.action_space);
    r.finish();
    c.high_level = h;
  } else if (top.has("high_level")) {
    top.opt_null("high_level");
  }
  top.req("seed", c.seed);
  top.req("epochs", c.epochs);
  top.opt("workers", c.workers);
  top.opt("out_dir", c.out_dir);
  top.opt("checkpoint_every", c.checkpoint_every);
  top.opt("dump_skills", c.dump_skills);
  top.opt("hann_window", c.hann_window);
  top.finish();
  c.validate();
  return c;
}

}  // namespace

void RunConfig::validate() const {
  env.validate();
  encoder.validate();
  agent.validate();
  reward.validate();
  bounds.validate();
  if (metra) metra->validate();
  if (high_level) high_level->validate();
  if (epochs < 0) throw ConfigError("config: 'epochs' must be >= 0");
  if (workers < 1) throw ConfigError("config: 'workers' must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("config: 'checkpoint_every' must be >= 0");
  if (dump_skills < 0) throw ConfigError("config: 'dump_skills' must be >= 0");
  if (bounds.L_min < 1) throw ConfigError("config: 'bounds.L_min' must be >= 1");
}

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return from_json(j);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const RunConfig& cfg, int indent) { return to_json(cfg).dump(indent); }

RunConfig default_config(envs::EnvName env) {
  RunConfig c;
  c.env = envs::EnvSpec::make(env);
  c.epochs = 1;
  if (env == envs::EnvName::ring_plane) {
    c.metra = metra::MetraConfig{};
  }
  if (env == envs::EnvName::tempo_track) {
    c.high_level = hierarchy::HighLevelConfig{};
  }
  return c;
}

bool operator==(const RunConfig& a, const RunConfig& b) { return dump_config(a) == dump_config(b); }

}  // namespace psd
