#include "fireset/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fireset/errors.hpp"

namespace fireset {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

struct Reader {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes->size()) throw IoError("truncated file");
  }
  std::uint32_t u32() {
    need(4);
    const auto* p = bytes->data() + pos;
    pos += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes->data() + pos), n);
    pos += n;
    return s;
  }
};

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open: " + path.string());
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw IoError("read failed: " + path.string());
  return bytes;
}

}  // namespace

std::vector<std::uint8_t> encode_entity(const Entity& e) {
  e.validate();
  std::vector<std::uint8_t> out;
  out.reserve(32 + e.data.size() * 4);
  out.insert(out.end(), {'W', 'I', 'S', 'P'});
  put_u32(out, kEntityVersion);
  for (std::size_t v : {e.F, e.T, e.T_h, e.H, e.W}) put_u32(out, static_cast<std::uint32_t>(v));
  for (const auto& name : e.channels) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
  }
  for (float f : e.data) put_f32(out, f);
  return out;
}

Entity decode_entity(const std::vector<std::uint8_t>& bytes) {
  Reader r{&bytes};
  if (r.str(4) != "WISP") throw IoError("bad entity magic");
  const std::uint32_t version = r.u32();
  if (version != kEntityVersion)
    throw IoError("unsupported entity version " + std::to_string(version));
  Entity e;
  e.F = r.u32();
  e.T = r.u32();
  e.T_h = r.u32();
  e.H = r.u32();
  e.W = r.u32();
  for (std::size_t i = 0; i < e.F; ++i) {
    const std::uint32_t len = r.u32();
    e.channels.push_back(r.str(len));
  }
  const std::size_t n = e.F * e.T * e.H * e.W;
  e.data.resize(n);
  r.need(n * 4);
  for (std::size_t i = 0; i < n; ++i) e.data[i] = r.f32();
  if (r.pos != bytes.size()) throw IoError("trailing bytes in entity file");
  e.valid_box = default_valid_box(e.H, e.W);
  e.validate();
  return e;
}

void write_entity(const std::filesystem::path& path, const Entity& e) {
  write_bytes(path, encode_entity(e));
}

Entity read_entity(const std::filesystem::path& path) { return decode_entity(read_bytes(path)); }

nlohmann::ordered_json model_config_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["Q"] = c.Q;
  j["L"] = c.L;
  j["d_e"] = c.d_e;
  j["patch_stride"] = c.patch_stride;
  j["n_heads"] = c.n_heads;
  j["H"] = c.H;
  j["W"] = c.W;
  j["memory_steps"] = c.memory_steps;
  j["dropout"] = c.dropout;
  nlohmann::ordered_json sched = nlohmann::ordered_json::object();
  for (const auto& [k, v] : c.alpha_schedule) sched[std::to_string(k)] = v;
  j["alpha_schedule"] = sched;
  j["seed"] = c.seed;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.Q = j.at("Q").get<std::size_t>();
  c.L = j.at("L").get<std::size_t>();
  c.d_e = j.at("d_e").get<std::size_t>();
  c.patch_stride = j.at("patch_stride").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.H = j.at("H").get<std::size_t>();
  c.W = j.at("W").get<std::size_t>();
  c.memory_steps = j.at("memory_steps").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.alpha_schedule.clear();
  for (const auto& [k, v] : j.at("alpha_schedule").items())
    c.alpha_schedule[static_cast<std::size_t>(std::stoul(k))] = v.get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Network<float>& net,
                      const CheckpointMeta& meta) {
  nlohmann::ordered_json header;
  header["format"] = "WSPC";
  header["version"] = 1;
  header["model"] = model_config_json(net.cfg);
  header["seed"] = meta.seed;
  header["step"] = meta.step;
  header["val_map"] = meta.val_map;
  nlohmann::ordered_json index = nlohmann::ordered_json::object();
  std::size_t offset = 0;
  for (const auto& [name, t] : net.params.all()) {
    index[name] = {offset, t.size()};
    offset += t.size();
  }
  header["params"] = index;
  header["param_count"] = offset;

  const std::string htext = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(8 + htext.size() + offset * 4);
  out.insert(out.end(), {'W', 'S', 'P', 'C'});
  put_u32(out, static_cast<std::uint32_t>(htext.size()));
  out.insert(out.end(), htext.begin(), htext.end());
  for (const auto& [name, t] : net.params.all())
    for (float v : t.values()) put_f32(out, v);
  write_bytes(path, out);
}

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  Reader r{&bytes};
  if (r.str(4) != "WSPC") throw IoError("bad checkpoint magic");
  const std::uint32_t hlen = r.u32();
  const auto header = nlohmann::json::parse(r.str(hlen));

  LoadedCheckpoint out;
  out.net = Network<float>::init(model_config_from_json(header.at("model")));
  out.meta.seed = header.at("seed").get<std::uint64_t>();
  out.meta.step = header.at("step").get<std::uint64_t>();
  out.meta.val_map = header.at("val_map").get<double>();

  const std::size_t total = header.at("param_count").get<std::size_t>();
  if (total != out.net.params.count())
    throw IoError("checkpoint parameter count does not match its config");
  r.need(total * 4);
  for (const auto& [name, entry] : header.at("params").items()) {
    const std::size_t offset = entry.at(0).get<std::size_t>();
    const std::size_t count = entry.at(1).get<std::size_t>();
    auto& t = out.net.params.at(name);
    if (t.size() != count) throw IoError("checkpoint index mismatch for '" + name + "'");
    Reader pr{&bytes};
    pr.pos = r.pos + offset * 4;
    for (std::size_t i = 0; i < count; ++i) t.values_mut()[i] = pr.f32();
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, std::size_t W, std::size_t H,
               const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != W * H) throw ShapeError("pgm pixel count mismatch");
  std::vector<std::uint8_t> out;
  const std::string header =
      "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), pixels.begin(), pixels.end());
  write_bytes(path, out);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

}  // namespace fireset
