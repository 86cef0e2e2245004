#include "maskvc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "maskvc/error.hpp"

namespace maskvc {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'M', 'A', 'S', 'K', 'V', 'C', 'C', 'K'};

enum class Kind : std::uint8_t { kF32 = 0, kF64 = 1, kI64 = 2, kText = 3 };

struct Section {
  Kind kind;
  std::uint64_t count;
  std::string bytes;
};

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }

  void section(const std::string& name, Kind kind, const void* data, std::uint64_t count,
               std::size_t elem) {
    pod(static_cast<std::uint32_t>(name.size()));
    raw(name.data(), name.size());
    pod(static_cast<std::uint8_t>(kind));
    pod(count);
    raw(data, count * elem);
    ++sections_;
  }
  void f32(const std::string& name, const std::vector<float>& v) {
    section(name, Kind::kF32, v.data(), v.size(), sizeof(float));
  }
  void f64(const std::string& name, const std::vector<double>& v) {
    section(name, Kind::kF64, v.data(), v.size(), sizeof(double));
  }
  void i64(const std::string& name, std::int64_t v) {
    section(name, Kind::kI64, &v, 1, sizeof(v));
  }
  void text(const std::string& name, const std::string& s) {
    section(name, Kind::kText, s.data(), s.size(), 1);
  }

  std::uint32_t sections() const { return sections_; }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
  std::uint32_t sections_ = 0;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <typename T>
  T pod() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorKind::kFormat, "checkpoint is truncated");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

std::size_t elem_size(Kind k) {
  switch (k) {
    case Kind::kF32:
      return 4;
    case Kind::kF64:
    case Kind::kI64:
      return 8;
    case Kind::kText:
      return 1;
  }
  throw Error(ErrorKind::kFormat, "unknown checkpoint section kind");
}

template <typename Net>
void add_net(Writer& w, const std::string& name, const Net& n, const AdamMoments<float>& mo) {
  w.f32(name + ".params", n.params);
  w.f32(name + ".adam_m", mo.m);
  w.f32(name + ".adam_v", mo.v);
  w.i64(name + ".adam_steps", mo.steps);
}

void add_stats(Writer& w, const std::string& name, const NormStats& s) {
  w.f64(name + ".mean", s.mean);
  w.f64(name + ".std", s.std);
  w.text(name + ".id", s.corpus_id);
}

class SectionMap {
 public:
  explicit SectionMap(std::map<std::string, Section> m) : m_(std::move(m)) {}

  const Section& get(const std::string& name, Kind kind) const {
    auto it = m_.find(name);
    if (it == m_.end()) throw Error(ErrorKind::kFormat, "checkpoint lacks section " + name);
    if (it->second.kind != kind)
      throw Error(ErrorKind::kFormat, "checkpoint section " + name + " has the wrong type");
    return it->second;
  }
  template <typename T>
  std::vector<T> array(const std::string& name, Kind kind) const {
    const auto& s = get(name, kind);
    std::vector<T> v(s.count);
    std::memcpy(v.data(), s.bytes.data(), s.bytes.size());
    return v;
  }
  std::int64_t i64(const std::string& name) const {
    auto v = array<std::int64_t>(name, Kind::kI64);
    if (v.size() != 1) throw Error(ErrorKind::kFormat, "checkpoint section " + name + " not scalar");
    return v[0];
  }
  std::string text(const std::string& name) const { return get(name, Kind::kText).bytes; }

 private:
  std::map<std::string, Section> m_;
};

template <typename Net>
void fill_net(const SectionMap& s, const std::string& name, Net& n, AdamMoments<float>& mo) {
  auto params = s.array<float>(name + ".params", Kind::kF32);
  auto m = s.array<float>(name + ".adam_m", Kind::kF32);
  auto v = s.array<float>(name + ".adam_v", Kind::kF32);
  if (params.size() != n.params.size() || m.size() != n.params.size() ||
      v.size() != n.params.size())
    throw Error(ErrorKind::kCheckpoint,
                name + ": checkpoint holds " + std::to_string(params.size()) +
                    " parameters, the configured network has " + std::to_string(n.params.size()));
  n.params = std::move(params);
  mo.m = std::move(m);
  mo.v = std::move(v);
  mo.steps = s.i64(name + ".adam_steps");
}

NormStats read_stats(const SectionMap& s, const std::string& name) {
  return {s.array<double>(name + ".mean", Kind::kF64), s.array<double>(name + ".std", Kind::kF64),
          s.text(name + ".id")};
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
  const auto& st = ck.state;
  Writer body;
  body.text("config", ck.config.to_ini());
  body.text("stft", ck.stft.to_text());
  add_stats(body, "stats_x", ck.stats_x);
  add_stats(body, "stats_y", ck.stats_y);
  add_net(body, "g_xy", st.nets.g_xy, st.opt_g_xy);
  add_net(body, "g_yx", st.nets.g_yx, st.opt_g_yx);
  add_net(body, "d_x", st.nets.d_x, st.opt_d_x);
  add_net(body, "d_y", st.nets.d_y, st.opt_d_y);
  add_net(body, "d2_x", st.nets.d2_x, st.opt_d2_x);
  add_net(body, "d2_y", st.nets.d2_y, st.opt_d2_y);
  body.i64("iteration", st.iteration);
  body.i64("rng_seed", static_cast<std::int64_t>(st.seed));

  Writer head;
  head.raw(kMagic, sizeof(kMagic));
  head.pod(kCheckpointVersion);
  head.pod(ck.config.hash());
  head.pod(body.sections());

  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    f.write(head.bytes().data(), static_cast<std::streamsize>(head.bytes().size()));
    f.write(body.bytes().data(), static_cast<std::streamsize>(body.bytes().size()));
    f.flush();
    if (!f) throw Error(ErrorKind::kIo, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot move checkpoint into place: " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path, const TrainConfig* expected, bool force) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, "cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  Reader r(ss.str());

  const std::string magic = r.take(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorKind::kFormat, path.string() + " is not a checkpoint (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::kFormat, "unsupported checkpoint version " + std::to_string(version));
  const auto stored_hash = r.pod<std::uint64_t>();
  const auto count = r.pod<std::uint32_t>();
  std::map<std::string, Section> sections;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.pod<std::uint32_t>();
    std::string name = r.take(name_len);
    const auto kind = static_cast<Kind>(r.pod<std::uint8_t>());
    const auto n = r.pod<std::uint64_t>();
    const std::size_t es = elem_size(kind);
    if (n > (std::uint64_t{1} << 40) / es) throw Error(ErrorKind::kFormat, "section too large");
    sections[name] = Section{kind, n, r.take(n * es)};
  }
  if (!r.done()) throw Error(ErrorKind::kFormat, "trailing bytes after checkpoint sections");
  SectionMap s(std::move(sections));

  Checkpoint ck;
  const TrainConfig stored = TrainConfig::parse_ini(s.text("config"));
  if (stored.hash() != stored_hash)
    throw Error(ErrorKind::kFormat, "checkpoint config does not match its recorded hash");
  if (expected && expected->hash() != stored_hash && !force)
    throw Error(ErrorKind::kCheckpoint,
                "config hash mismatch: checkpoint " + hex(stored_hash) + ", requested " +
                    hex(expected->hash()) + " (use --force to override)");
  ck.config = expected ? *expected : stored;
  ck.stft = StftConfig::parse_text(s.text("stft"));
  ck.stats_x = read_stats(s, "stats_x");
  ck.stats_y = read_stats(s, "stats_y");

  auto& st = ck.state;
  st.nets = make_networks<float>(ck.config);
  fill_net(s, "g_xy", st.nets.g_xy, st.opt_g_xy);
  fill_net(s, "g_yx", st.nets.g_yx, st.opt_g_yx);
  fill_net(s, "d_x", st.nets.d_x, st.opt_d_x);
  fill_net(s, "d_y", st.nets.d_y, st.opt_d_y);
  fill_net(s, "d2_x", st.nets.d2_x, st.opt_d2_x);
  fill_net(s, "d2_y", st.nets.d2_y, st.opt_d2_y);
  st.iteration = s.i64("iteration");
  st.seed = static_cast<std::uint64_t>(s.i64("rng_seed"));
  return ck;
}

std::string describe_checkpoint(const Checkpoint& ck) {
  const auto& n = ck.state.nets;
  std::ostringstream os;
  os << "format_version: " << kCheckpointVersion << '\n'
     << "config_hash: " << hex(ck.config.hash()) << '\n'
     << "iteration: " << ck.state.iteration << '\n'
     << "rng_seed: " << ck.state.seed << '\n'
     << "converter_params: " << count_params(n.g_xy) << " (x2)\n"
     << "converter_in_channels: " << n.g_xy.spec.in_channels << '\n'
     << "discriminator_params: " << count_params(n.d_x) << " (x4)\n"
     << "stats_x: " << ck.stats_x.corpus_id << " (" << ck.stats_x.mean.size() << " bins)\n"
     << "stats_y: " << ck.stats_y.corpus_id << " (" << ck.stats_y.mean.size() << " bins)\n"
     << "[config]\n"
     << ck.config.to_ini() << "[stft]\n"
     << ck.stft.to_text();
  return os.str();
}

}  // namespace maskvc
