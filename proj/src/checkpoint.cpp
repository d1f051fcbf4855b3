// SPDX-License-Identifier: Apache-2.0
#include "latnmt/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "latnmt/errors.hpp"

namespace latnmt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[8] = {'L', 'A', 'T', 'N', 'M', 'T', 'C', 'K'};

class Writer {
 public:
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void put_raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(const char* what) {
    const auto n = get<std::uint32_t>(what);
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void get_raw(char* p, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(pos_, std::string("truncated while reading ") + what);
    }
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::map<std::string, std::string> settings_of(const ModelConfig& c, const Hyperparams& hp) {
  auto num = [](auto v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {
      {"cell", std::string(to_string(c.cell))},
      {"compose", std::string(to_string(c.compose))},
      {"src_vocab", num(c.src_vocab)},
      {"tgt_vocab", num(c.tgt_vocab)},
      {"embed_dim", num(c.embed_dim)},
      {"hidden_dim", num(c.hidden_dim)},
      {"lr", num(hp.lr)},
      {"batch", num(hp.batch)},
      {"clip", num(hp.clip)},
      {"rmsprop_rho", num(hp.rmsprop_rho)},
      {"rmsprop_eps", num(hp.rmsprop_eps)},
      {"rmsprop_momentum", num(hp.rmsprop_momentum)},
      {"max_src_chars", num(hp.max_src_chars)},
      {"max_tgt_words", num(hp.max_tgt_words)},
      {"patience_epochs", num(hp.patience_epochs)},
      {"seed", num(hp.seed)},
      {"max_updates", num(hp.max_updates)},
      {"max_epochs", num(hp.max_epochs)},
  };
}

void write_tensors(Writer& w, const ParameterStore& store, const std::string& prefix) {
  const auto tensors = store.tensors();
  w.put(static_cast<std::uint64_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.put_string(prefix + t.name);
    w.put(std::uint32_t{2});
    w.put(static_cast<std::uint64_t>(t.tensor->rows()));
    w.put(static_cast<std::uint64_t>(t.tensor->cols()));
    const auto v = t.tensor->values();
    w.put_raw(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
}

void read_tensors(Reader& r, ParameterStore& store, const std::string& prefix) {
  const std::size_t at = r.offset();
  const auto count = r.get<std::uint64_t>("tensor count");
  auto tensors = store.tensors();
  if (count != tensors.size()) {
    throw FormatError(at, "expected " + std::to_string(tensors.size()) + " tensors, found " +
                              std::to_string(count));
  }
  for (auto& t : tensors) {
    const std::size_t name_at = r.offset();
    const std::string name = r.get_string("tensor name");
    if (name != prefix + t.name) {
      throw FormatError(name_at, "expected tensor \"" + prefix + t.name + "\", found \"" + name + "\"");
    }
    const std::size_t rank_at = r.offset();
    const auto rank = r.get<std::uint32_t>("tensor rank");
    if (rank != 2) throw FormatError(rank_at, "tensor " + name + " has unsupported rank");
    const auto rows = r.get<std::uint64_t>("tensor shape");
    const auto cols = r.get<std::uint64_t>("tensor shape");
    if (rows != t.tensor->rows() || cols != t.tensor->cols()) {
      throw FormatError(rank_at, "tensor " + name + " has shape " + std::to_string(rows) + "x" +
                                     std::to_string(cols) + ", expected " +
                                     std::to_string(t.tensor->rows()) + "x" +
                                     std::to_string(t.tensor->cols()));
    }
    auto v = t.tensor->values();
    r.get_raw(reinterpret_cast<char*>(v.data()), v.size() * sizeof(double), "tensor values");
  }
}

template <class T>
T parse_number(const std::map<std::string, std::string>& s, const std::string& key,
               std::size_t offset) {
  const auto it = s.find(key);
  if (it == s.end()) throw FormatError(offset, "missing setting \"" + key + "\"");
  T v{};
  const auto& text = it->second;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError(offset, "bad value for setting \"" + key + "\": " + text);
  }
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  if (!(ckpt.params.config == ckpt.config)) {
    throw StateError("checkpoint parameters do not match its configuration");
  }
  Writer w;
  w.put_raw(kMagic, sizeof kMagic);
  w.put(kCheckpointVersion);
  w.put(ckpt.src_fingerprint);
  w.put(ckpt.tgt_fingerprint);
  const auto settings = settings_of(ckpt.config, ckpt.hp);
  w.put(static_cast<std::uint32_t>(settings.size()));
  for (const auto& [k, v] : settings) {
    w.put_string(k);
    w.put_string(v);
  }
  write_tensors(w, ckpt.params, "");
  w.put(static_cast<std::uint8_t>(ckpt.optimizer ? 1 : 0));
  if (ckpt.optimizer) {
    w.put(ckpt.optimizer->step);
    write_tensors(w, ckpt.optimizer->n, "n/");
    write_tensors(w, ckpt.optimizer->m, "m/");
  }
  return w.take();
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[sizeof kMagic];
  r.get_raw(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError(0, "not a checkpoint file");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version) +
                       " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  ckpt.src_fingerprint = r.get<std::uint64_t>("fingerprint");
  ckpt.tgt_fingerprint = r.get<std::uint64_t>("fingerprint");

  const std::size_t settings_at = r.offset();
  const auto n = r.get<std::uint32_t>("settings count");
  std::map<std::string, std::string> s;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t at = r.offset();
    std::string key = r.get_string("setting key");
    std::string value = r.get_string("setting value");
    if (!s.emplace(std::move(key), std::move(value)).second) {
      throw FormatError(at, "duplicate setting");
    }
  }
  try {
    ckpt.config.cell = parse_cell_kind(s.count("cell") ? s.at("cell") : "");
    ckpt.config.compose = parse_compose_mode(s.count("compose") ? s.at("compose") : "");
  } catch (const DataError& e) {
    throw FormatError(settings_at, e.what());
  }
  auto u = [&](const char* key) { return parse_number<std::size_t>(s, key, settings_at); };
  auto d = [&](const char* key) { return parse_number<double>(s, key, settings_at); };
  ckpt.config.src_vocab = u("src_vocab");
  ckpt.config.tgt_vocab = u("tgt_vocab");
  ckpt.config.embed_dim = u("embed_dim");
  ckpt.config.hidden_dim = u("hidden_dim");
  auto& hp = ckpt.hp;
  hp.embed_dim = ckpt.config.embed_dim;
  hp.hidden = ckpt.config.hidden_dim;
  hp.lr = d("lr");
  hp.batch = u("batch");
  hp.clip = d("clip");
  hp.rmsprop_rho = d("rmsprop_rho");
  hp.rmsprop_eps = d("rmsprop_eps");
  hp.rmsprop_momentum = d("rmsprop_momentum");
  hp.max_src_chars = u("max_src_chars");
  hp.max_tgt_words = u("max_tgt_words");
  hp.patience_epochs = u("patience_epochs");
  hp.seed = parse_number<std::uint64_t>(s, "seed", settings_at);
  hp.max_updates = u("max_updates");
  hp.max_epochs = u("max_epochs");

  try {
    ckpt.params = ParameterStore::zeros(ckpt.config);
  } catch (const InternalError& e) {
    throw FormatError(settings_at, e.what());
  }
  read_tensors(r, ckpt.params, "");
  const std::size_t flag_at = r.offset();
  const auto flag = r.get<std::uint8_t>("optimizer flag");
  if (flag > 1) throw FormatError(flag_at, "bad optimizer flag");
  if (flag == 1) {
    RmspropState opt = RmspropState::zeros_like(ckpt.params);
    opt.step = r.get<std::uint64_t>("optimizer step");
    read_tensors(r, opt.n, "n/");
    read_tensors(r, opt.m, "m/");
    ckpt.optimizer = std::move(opt);
  }
  if (!r.done()) throw FormatError(r.offset(), "trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot rename " + tmp + " to " + path);
}

Checkpoint load_checkpoint(const std::string& path, const Vocab* src, const Vocab* tgt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  Checkpoint ckpt = parse_checkpoint(buf.str());
  if (src && src->fingerprint() != ckpt.src_fingerprint) {
    throw FingerprintError("source vocabulary does not match the checkpoint " + path);
  }
  if (tgt && tgt->fingerprint() != ckpt.tgt_fingerprint) {
    throw FingerprintError("target vocabulary does not match the checkpoint " + path);
  }
  return ckpt;
}

}  // namespace latnmt
