#pragma once

// Text checkpoint for PolicyParams. Every double is written as a hexfloat, so
// a save/load cycle is bit-exact. Output rows of the actor are stored one per
// line and keyed by actuator, matrices by component and layer.
//
//   vsr-policy 1
//   kind gat
//   mode local
//   layout 36 25
//   env <task> <episode_length>          (optional)
//   sim <name> <value>                   (optional, repeated)
//   actor.gat.w_self 12 32 <values...>
//   actor.hidden.0.weight 32 64 <values...>
//   actor.head.row 1,2,3 <bias> <log_std> <weights...>
//   critic.head.weight 1 64 <values...>
//   end

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "vsr/policy.hpp"
#include "vsr/sim.hpp"

namespace vsr {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Environment the policy was evaluated in. Lets replay reproduce a recorded
/// return without the original config.
struct CheckpointEnv {
  TaskSpec task;
  SimParams sim;
};

struct Checkpoint {
  PolicyParams params;
  std::optional<CheckpointEnv> env;
};

namespace detail {

inline std::string hex(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
  if (ec != std::errc{}) throw CheckpointError("cannot format value");
  return std::string(buf, end);
}

inline double parse_hex(const std::string& s, int line) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  bool neg = false;
  if (first != last && *first == '-') {
    neg = true;
    ++first;
  }
  auto [ptr, ec] = std::from_chars(first, last, v, std::chars_format::hex);
  if (ec != std::errc{} || ptr != last)
    throw CheckpointError("line " + std::to_string(line) + ": bad number '" + s + "'");
  return neg ? -v : v;
}

inline void write_matrix(std::ostream& out, const std::string& name, const Mat& m) {
  out << name << ' ' << m.rows() << ' ' << m.cols();
  for (Eigen::Index i = 0; i < m.size(); ++i) out << ' ' << hex(m.data()[i]);
  out << '\n';
}

inline void write_network(std::ostream& out, const std::string& prefix, const Network& net, bool actor) {
  if (net.gat) {
    write_matrix(out, prefix + ".gat.w_self", net.gat->w_self);
    write_matrix(out, prefix + ".gat.w_edge", net.gat->w_edge);
    write_matrix(out, prefix + ".gat.att_dst", net.gat->att_dst);
    write_matrix(out, prefix + ".gat.att_msg", net.gat->att_msg);
  }
  for (std::size_t l = 0; l < net.hidden.size(); ++l) {
    write_matrix(out, prefix + ".hidden." + std::to_string(l) + ".weight", net.hidden[l].weight);
    write_matrix(out, prefix + ".hidden." + std::to_string(l) + ".bias", net.hidden[l].bias);
  }
  if (actor) {
    const auto& h = net.head;
    for (Eigen::Index r = 0; r < h.weight.rows(); ++r) {
      out << prefix << ".head.row " << to_string(h.keys[static_cast<std::size_t>(r)]) << ' ' << hex(h.bias(0, r)) << ' '
          << hex(h.log_std(0, r));
      for (Eigen::Index c = 0; c < h.weight.cols(); ++c) out << ' ' << hex(h.weight(r, c));
      out << '\n';
    }
  } else {
    write_matrix(out, prefix + ".head.weight", net.head.weight);
    write_matrix(out, prefix + ".head.bias", net.head.bias);
  }
}

inline ActuatorKey parse_key(const std::string& s, int line) {
  ActuatorKey k;
  int code = 0;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> k.col >> c1 >> k.row >> c2 >> code) || c1 != ',' || c2 != ',' || code < 0 || code >= kVoxelTypeCount)
    throw CheckpointError("line " + std::to_string(line) + ": bad actuator key '" + s + "'");
  k.type = static_cast<VoxelType>(code);
  return k;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  const PolicyParams& p = ck.params;
  std::ostringstream out;
  out << "vsr-policy " << kCheckpointVersion << '\n';
  out << "kind " << to_string(p.kind) << '\n';
  out << "mode " << to_string(p.mode) << '\n';
  out << "layout " << p.layout.max_nodes << ' ' << p.layout.action_slots << '\n';
  if (ck.env) {
    out << "env " << to_string(ck.env->task.kind) << ' ' << ck.env->task.episode_length << '\n';
    SimParams sim = ck.env->sim;
    for_each_field(sim, [&](const char* name, double& v) { out << "sim " << name << ' ' << detail::hex(v) << '\n'; });
    out << "sim substeps " << sim.substeps << '\n';
  }
  detail::write_network(out, "actor", p.actor, true);
  detail::write_network(out, "critic", p.critic, false);
  out << "end\n";
  return out.str();
}

inline std::string serialize_checkpoint(const PolicyParams& p) { return serialize_checkpoint(Checkpoint{p, std::nullopt}); }

inline Checkpoint deserialize_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  auto fail = [&](const std::string& msg) { throw CheckpointError("line " + std::to_string(line) + ": " + msg); };

  Checkpoint ck;
  PolicyParams& p = ck.params;
  std::map<std::string, Mat> matrices;
  std::vector<std::tuple<ActuatorKey, double, double, std::vector<double>>> rows;
  bool saw_header = false, saw_end = false, saw_kind = false;
  std::optional<CheckpointEnv> env;

  while (std::getline(in, raw)) {
    ++line;
    std::istringstream ls(raw);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (saw_end) fail("content after end");
    if (!saw_header) {
      int version = 0;
      if (tag != "vsr-policy" || !(ls >> version)) fail("missing vsr-policy header");
      if (version != kCheckpointVersion) fail("unsupported version " + std::to_string(version));
      saw_header = true;
      continue;
    }
    if (tag == "end") {
      saw_end = true;
    } else if (tag == "kind") {
      std::string v;
      ls >> v;
      if (v == "gat") p.kind = ControllerKind::Gat;
      else if (v == "mlp") p.kind = ControllerKind::Mlp;
      else fail("unknown kind '" + v + "'");
      saw_kind = true;
    } else if (tag == "mode") {
      std::string v;
      ls >> v;
      if (v == "global") p.mode = FeatureMode::GlobalTransfer;
      else if (v == "local") p.mode = FeatureMode::LocalTransfer;
      else fail("unknown mode '" + v + "'");
    } else if (tag == "layout") {
      if (!(ls >> p.layout.max_nodes >> p.layout.action_slots)) fail("bad layout");
    } else if (tag == "env") {
      std::string task;
      env.emplace();
      if (!(ls >> task >> env->task.episode_length)) fail("bad env line");
      auto kind = parse_task(task);
      if (!kind) fail("unknown task '" + task + "'");
      env->task.kind = *kind;
    } else if (tag == "sim") {
      if (!env) fail("sim line before env line");
      std::string name, value;
      if (!(ls >> name >> value)) fail("bad sim line");
      bool found = false;
      if (name == "substeps") {
        env->sim.substeps = std::stoi(value);
        found = true;
      }
      for_each_field(env->sim, [&](const char* n, double& v) {
        if (name == n) {
          v = detail::parse_hex(value, line);
          found = true;
        }
      });
      if (!found) fail("unknown sim field '" + name + "'");
    } else if (tag == "actor.head.row") {
      std::string key, b, s;
      if (!(ls >> key >> b >> s)) fail("bad head row");
      std::vector<double> w;
      std::string tok;
      while (ls >> tok) w.push_back(detail::parse_hex(tok, line));
      rows.emplace_back(detail::parse_key(key, line), detail::parse_hex(b, line), detail::parse_hex(s, line), std::move(w));
    } else {
      long r = 0, c = 0;
      if (!(ls >> r >> c) || r < 0 || c < 0) fail("bad matrix shape for '" + tag + "'");
      Mat m(r, c);
      std::string tok;
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        if (!(ls >> tok)) fail("too few values for '" + tag + "'");
        m.data()[i] = detail::parse_hex(tok, line);
      }
      if (ls >> tok) fail("too many values for '" + tag + "'");
      if (!matrices.emplace(tag, std::move(m)).second) fail("duplicate entry '" + tag + "'");
    }
  }
  if (!saw_header) throw CheckpointError("empty checkpoint");
  if (!saw_end) throw CheckpointError("truncated checkpoint: missing end");
  if (!saw_kind) throw CheckpointError("missing kind");

  auto take = [&](const std::string& name) {
    auto it = matrices.find(name);
    if (it == matrices.end()) throw CheckpointError("missing entry '" + name + "'");
    Mat m = std::move(it->second);
    matrices.erase(it);
    return m;
  };
  auto read_network = [&](const std::string& prefix, Network& net) {
    if (p.kind == ControllerKind::Gat) {
      GatLayer g;
      g.w_self = take(prefix + ".gat.w_self");
      g.w_edge = take(prefix + ".gat.w_edge");
      g.att_dst = take(prefix + ".gat.att_dst");
      g.att_msg = take(prefix + ".gat.att_msg");
      net.gat = std::move(g);
    }
    for (int l = 0; matrices.count(prefix + ".hidden." + std::to_string(l) + ".weight"); ++l) {
      Dense d;
      d.weight = take(prefix + ".hidden." + std::to_string(l) + ".weight");
      d.bias = take(prefix + ".hidden." + std::to_string(l) + ".bias");
      net.hidden.push_back(std::move(d));
    }
  };
  read_network("actor", p.actor);
  read_network("critic", p.critic);
  p.critic.head.weight = take("critic.head.weight");
  p.critic.head.bias = take("critic.head.bias");
  if (!matrices.empty()) throw CheckpointError("unknown entry '" + matrices.begin()->first + "'");

  const auto k = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index width = p.actor.hidden.empty() ? 0 : p.actor.hidden.back().weight.cols();
  auto& head = p.actor.head;
  head.weight.resize(k, width);
  head.bias.resize(1, k);
  head.log_std.resize(1, k);
  for (Eigen::Index r = 0; r < k; ++r) {
    auto& [key, b, s, w] = rows[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(w.size()) != width) throw CheckpointError("actor head row width mismatch");
    head.keys.push_back(key);
    head.bias(0, r) = b;
    head.log_std(0, r) = s;
    for (Eigen::Index c = 0; c < width; ++c) head.weight(r, c) = w[static_cast<std::size_t>(c)];
  }
  ck.env = env;
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path);
  out << serialize_checkpoint(ck);
  if (!out) throw CheckpointError("write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace vsr
