#include "psd/checkpoint.hpp"

#include "psd/errors.hpp"

#include <json.hpp>

#include <bit>
#include <unordered_map>
#include <cstring>
#include <fstream>
#include <sstream>

namespace psd::ckpt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'P', 'S', 'D', 'C', 'K', 'P', 'T', '1'};

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint: truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

NamedArray from_matrix(std::string name, const Matrix& m, int rank) {
  NamedArray a;
  a.name = std::move(name);
  if (rank == 1) {
    a.dims = {static_cast<std::uint32_t>(m.size())};
  } else {
    a.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  }
  a.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.data.push_back(m(r, c));
  return a;
}

class ArrayIndex {
 public:
  explicit ArrayIndex(const std::vector<NamedArray>& arrays) {
    for (const auto& a : arrays) by_name_.emplace(a.name, &a);
  }

  const NamedArray& at(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw DataError("checkpoint: missing array '" + name + "'");
    return *it->second;
  }

  /// Fills `out` (already sized rows x cols) from a rank-1 or rank-2 array.
  void fill(const std::string& name, Matrix& out) const {
    const NamedArray& a = at(name);
    if (a.data.size() != static_cast<std::size_t>(out.size()))
      throw DataError("checkpoint: array '" + name + "' has the wrong size");
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = a.data[k++];
  }

  Matrix matrix(const std::string& name) const {
    const NamedArray& a = at(name);
    if (a.dims.size() != 2) throw DataError("checkpoint: array '" + name + "' is not rank 2");
    Matrix m(a.dims[0], a.dims[1]);
    fill(name, m);
    return m;
  }

  Vector vector(const std::string& name) const {
    const NamedArray& a = at(name);
    if (a.dims.size() != 1) throw DataError("checkpoint: array '" + name + "' is not rank 1");
    return Eigen::Map<const Vector>(a.data.data(), static_cast<Eigen::Index>(a.data.size()));
  }

 private:
  std::unordered_map<std::string, const NamedArray*> by_name_;
};

void add_params(std::vector<NamedArray>& out, const std::string& group, const nn::ParamSet& p) {
  for (const auto& e : p) out.push_back(from_matrix(group + "/" + e.name, e.value, static_cast<int>(e.shape.size())));
}

void add_adam(std::vector<NamedArray>& out, json& meta, const std::string& group,
              const nn::ParamSet& p, const nn::AdamState& s) {
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    const int rank = static_cast<int>(p[i].shape.size());
    out.push_back(from_matrix(group + ".m/" + p[i].name, s.m[i], rank));
    out.push_back(from_matrix(group + ".v/" + p[i].name, s.v[i], rank));
  }
  meta["adam"][group] = {{"step", s.step}, {"lr", s.lr}, {"beta1", s.beta1}, {"beta2", s.beta2}, {"eps", s.eps}};
}

void restore_params(const ArrayIndex& idx, const std::string& group, nn::ParamSet& p) {
  for (auto& e : p) idx.fill(group + "/" + e.name, e.value);
}

void restore_adam(const ArrayIndex& idx, const json& meta, const std::string& group,
                  const nn::ParamSet& p, nn::AdamState& s) {
  const json& j = meta.at("adam").at(group);
  s.step = j.at("step").get<std::int64_t>();
  s.lr = j.at("lr").get<double>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.eps = j.at("eps").get<double>();
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    idx.fill(group + ".m/" + p[i].name, s.m[i]);
    idx.fill(group + ".v/" + p[i].name, s.v[i]);
  }
}

json bounds_json(const sampling::SamplingBounds& b) {
  return {{"L_min", b.L_min},
          {"L_max", b.L_max},
          {"updated_once_min", b.updated_once_min},
          {"updated_once_max", b.updated_once_max}};
}

}  // namespace

std::string encode_archive(const Archive& archive) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.arrays.size()));
  for (const auto& a : archive.arrays) {
    if (a.name.size() > 0xFFFF) throw DataError("checkpoint: array name too long: " + a.name);
    std::size_t n = 1;
    for (auto d : a.dims) n *= d;
    if (n != a.data.size()) throw DataError("checkpoint: dims do not match payload for " + a.name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(a.name.size()));
    out += a.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(a.dims.size()));
    for (auto d : a.dims) put<std::uint32_t>(out, d);
    const std::size_t at = out.size();
    out.resize(at + a.data.size() * sizeof(double));
    if (!a.data.empty()) std::memcpy(out.data() + at, a.data.data(), a.data.size() * sizeof(double));
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.metadata.size()));
  out += archive.metadata;
  return out;
}

Archive decode_archive(const std::string& bytes) {
  Reader in(bytes);
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint: bad magic (not a PSDCKPT1 file)");
  in.take(sizeof(kMagic));
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  Archive archive;
  const auto count = in.get<std::uint32_t>();
  archive.arrays.resize(count);
  for (auto& a : archive.arrays) {
    a.name = in.take(in.get<std::uint16_t>());
    const auto rank = in.get<std::uint8_t>();
    std::size_t n = 1;
    for (int r = 0; r < rank; ++r) {
      a.dims.push_back(in.get<std::uint32_t>());
      n *= a.dims.back();
    }
    const std::string payload = in.take(n * sizeof(double));
    a.data.resize(n);
    if (n) std::memcpy(a.data.data(), payload.data(), payload.size());
  }
  archive.metadata = in.take(in.get<std::uint32_t>());
  if (!in.done()) throw DataError("checkpoint: trailing bytes after metadata");
  return archive;
}

std::string serialize(const train::TrainerState& st) {
  Archive ar;
  json meta;
  auto& arrays = ar.arrays;
  const auto& ag = st.agent;

  add_params(arrays, "policy", ag.policy);
  add_params(arrays, "q1", ag.q1);
  add_params(arrays, "q2", ag.q2);
  add_params(arrays, "q1_target", ag.q1_target);
  add_params(arrays, "q2_target", ag.q2_target);
  add_params(arrays, "log_alpha", ag.log_alpha);
  add_adam(arrays, meta, "opt.policy", ag.policy, ag.policy_opt);
  add_adam(arrays, meta, "opt.q1", ag.q1, ag.q1_opt);
  add_adam(arrays, meta, "opt.q2", ag.q2, ag.q2_opt);
  add_adam(arrays, meta, "opt.alpha", ag.log_alpha, ag.alpha_opt);

  add_params(arrays, "phi", st.phi);
  add_adam(arrays, meta, "opt.phi", st.phi, st.phi_opt);
  if (st.metra_shape) {
    add_params(arrays, "phi_m", st.phi_m);
    add_adam(arrays, meta, "opt.phi_m", st.phi_m, st.phi_m_opt);
  }

  json episodes = json::array();
  std::size_t i = 0;
  for (const auto& ep : st.buffer.episodes()) {
    const std::string p = "buffer/" + std::to_string(i++) + "/";
    arrays.push_back(from_matrix(p + "s", ep.s, 2));
    arrays.push_back(from_matrix(p + "a", ep.a, 2));
    arrays.push_back(from_matrix(p + "s_next", ep.s_next, 2));
    arrays.push_back(from_matrix(p + "v_x", ep.v_x, 1));
    arrays.push_back(from_matrix(p + "z", ep.z, 1));
    Vector done(static_cast<Eigen::Index>(ep.done.size()));
    for (std::size_t t = 0; t < ep.done.size(); ++t) done(static_cast<Eigen::Index>(t)) = ep.done[t];
    arrays.push_back(from_matrix(p + "done", done, 1));
    episodes.push_back({{"id", ep.id}, {"L", ep.L}});
  }

  std::ostringstream rng;
  rng << st.rng;
  meta["config"] = json::parse(dump_config(st.cfg));
  meta["episodes_meta"] = std::move(episodes);
  meta["bounds"] = bounds_json(st.bounds);
  meta["lambda_m"] = st.lambda_m;
  meta["rng"] = rng.str();
  meta["epoch"] = st.epoch;
  meta["episodes"] = st.episodes;
  meta["next_eval_episode"] = st.next_eval_episode;
  ar.metadata = meta.dump();
  return encode_archive(ar);
}

train::TrainerState deserialize(const std::string& bytes) {
  const Archive ar = decode_archive(bytes);
  json meta;
  try {
    meta = json::parse(ar.metadata);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("checkpoint: metadata is not valid JSON: ") + e.what());
  }
  const ArrayIndex idx(ar.arrays);

  try {
    // A fresh trainer supplies every name and shape; values are then overwritten.
    train::TrainerState st = train::make_trainer(parse_config(meta.at("config").dump()));
    auto& ag = st.agent;
    restore_params(idx, "policy", ag.policy);
    restore_params(idx, "q1", ag.q1);
    restore_params(idx, "q2", ag.q2);
    restore_params(idx, "q1_target", ag.q1_target);
    restore_params(idx, "q2_target", ag.q2_target);
    restore_params(idx, "log_alpha", ag.log_alpha);
    restore_adam(idx, meta, "opt.policy", ag.policy, ag.policy_opt);
    restore_adam(idx, meta, "opt.q1", ag.q1, ag.q1_opt);
    restore_adam(idx, meta, "opt.q2", ag.q2, ag.q2_opt);
    restore_adam(idx, meta, "opt.alpha", ag.log_alpha, ag.alpha_opt);
    restore_params(idx, "phi", st.phi);
    restore_adam(idx, meta, "opt.phi", st.phi, st.phi_opt);
    if (st.metra_shape) {
      restore_params(idx, "phi_m", st.phi_m);
      restore_adam(idx, meta, "opt.phi_m", st.phi_m, st.phi_m_opt);
    }

    st.buffer.clear();
    const json& eps = meta.at("episodes_meta");
    for (std::size_t i = 0; i < eps.size(); ++i) {
      const std::string p = "buffer/" + std::to_string(i) + "/";
      Episode ep;
      ep.id = eps[i].at("id").get<std::int64_t>();
      ep.L = eps[i].at("L").get<int>();
      ep.s = idx.matrix(p + "s");
      ep.a = idx.matrix(p + "a");
      ep.s_next = idx.matrix(p + "s_next");
      ep.v_x = idx.vector(p + "v_x");
      ep.z = idx.vector(p + "z");
      const Vector done = idx.vector(p + "done");
      ep.done.resize(static_cast<std::size_t>(done.size()));
      for (Eigen::Index t = 0; t < done.size(); ++t) ep.done[static_cast<std::size_t>(t)] = done(t) != 0.0;
      st.buffer.push_episode(std::move(ep));
    }

    const json& b = meta.at("bounds");
    st.bounds.L_min = b.at("L_min").get<int>();
    st.bounds.L_max = b.at("L_max").get<int>();
    st.bounds.updated_once_min = b.at("updated_once_min").get<bool>();
    st.bounds.updated_once_max = b.at("updated_once_max").get<bool>();
    st.lambda_m = meta.at("lambda_m").get<double>();
    std::istringstream rng(meta.at("rng").get<std::string>());
    rng >> st.rng;
    if (!rng) throw DataError("checkpoint: unreadable RNG state");
    st.epoch = meta.at("epoch").get<int>();
    st.episodes = meta.at("episodes").get<std::int64_t>();
    st.next_eval_episode = meta.at("next_eval_episode").get<std::int64_t>();
    return st;
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: malformed metadata: ") + e.what());
  }
}

void save(const train::TrainerState& state, const std::filesystem::path& path) {
  const std::string bytes = serialize(state);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

train::TrainerState load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace psd::ckpt
