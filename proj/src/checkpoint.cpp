#include "minikd/checkpoint.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace minikd {

namespace {

constexpr std::array<char, 4> kMagic = {'M', 'K', 'D', 'C'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t crc32_update(std::uint32_t crc, const unsigned char* data, std::size_t len) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

class ByteSink {
 public:
  void put_bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buffer_.insert(buffer_.end(), b, b + n);
  }
  void put_u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
    put_bytes(b, 4);
  }
  void put_u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
    put_bytes(b, 8);
  }
  void put_i32(std::int32_t v) { put_u32(static_cast<std::uint32_t>(v)); }
  void put_f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(bits);
  }
  void put_string(const std::string& s) {
    put_u32(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  const std::vector<unsigned char>& bytes() const { return buffer_; }

 private:
  std::vector<unsigned char> buffer_;
};

class ByteSource {
 public:
  ByteSource(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}
  void get_bytes(void* p, std::size_t n) {
    if (pos_ + n > size_) throw CheckpointError("checkpoint: truncated file");
    std::memcpy(p, data_ + pos_, n);
    pos_ += n;
  }
  std::uint32_t get_u32() {
    unsigned char b[4];
    get_bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint64_t get_u64() {
    unsigned char b[8];
    get_bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::int32_t get_i32() { return static_cast<std::int32_t>(get_u32()); }
  double get_f64() {
    const std::uint64_t bits = get_u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string get_string() {
    const std::uint32_t n = get_u32();
    std::string s(n, '\0');
    get_bytes(s.data(), n);
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void put_config(ByteSink& sink, const ModelConfig& c) {
  sink.put_i32(c.num_layers);
  sink.put_i32(c.hidden_size);
  sink.put_i32(c.ffn_size);
  sink.put_i32(c.num_heads);
  sink.put_i32(c.vocab_size);
  sink.put_i32(c.max_seq_len);
  sink.put_i32(c.type_vocab_size);
  sink.put_i32(c.num_labels);
  sink.put_i32(c.task_kind == TaskKind::regression ? 1 : 0);
  sink.put_f64(c.dropout_rate);
  sink.put_f64(c.layer_norm_eps);
}

ModelConfig get_config(ByteSource& src) {
  ModelConfig c;
  c.num_layers = src.get_i32();
  c.hidden_size = src.get_i32();
  c.ffn_size = src.get_i32();
  c.num_heads = src.get_i32();
  c.vocab_size = src.get_i32();
  c.max_seq_len = src.get_i32();
  c.type_vocab_size = src.get_i32();
  c.num_labels = src.get_i32();
  c.task_kind = src.get_i32() == 1 ? TaskKind::regression : TaskKind::classification;
  c.dropout_rate = src.get_f64();
  c.layer_norm_eps = src.get_f64();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const TransformerWeights& weights, const AdamState* optimizer_state) {
  ByteSink sink;
  sink.put_bytes(kMagic.data(), kMagic.size());
  sink.put_u32(kVersion);
  put_config(sink, config);

  const auto named = weights.named_parameters();
  sink.put_u32(static_cast<std::uint32_t>(named.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, t] : named) {
    sink.put_string(name);
    sink.put_u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) sink.put_u64(d);
    sink.put_u64(offset);
    offset += t.numel() * sizeof(double);
  }
  for (const auto& [name, t] : named) {
    for (double v : t.values()) sink.put_f64(v);
  }

  if (optimizer_state) {
    if (optimizer_state->m.size() != named.size()) {
      throw CheckpointError("checkpoint: optimizer state does not match parameter count");
    }
    sink.put_u32(1);
    sink.put_u64(static_cast<std::uint64_t>(optimizer_state->step));
    for (std::size_t i = 0; i < named.size(); ++i) {
      for (double v : optimizer_state->m[i]) sink.put_f64(v);
      for (double v : optimizer_state->v[i]) sink.put_f64(v);
    }
  } else {
    sink.put_u32(0);
  }

  const std::uint32_t crc = crc32_update(0, sink.bytes().data(), sink.bytes().size());
  ByteSink tail;
  tail.put_u32(crc);

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_checkpoint: cannot write " + path);
  os.write(reinterpret_cast<const char*>(sink.bytes().data()),
           static_cast<std::streamsize>(sink.bytes().size()));
  os.write(reinterpret_cast<const char*>(tail.bytes().data()),
           static_cast<std::streamsize>(tail.bytes().size()));
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot read " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < kMagic.size() + 8) throw CheckpointError("checkpoint: file too small");

  const std::size_t body = bytes.size() - 4;
  ByteSource tail(bytes.data() + body, 4);
  const std::uint32_t stored_crc = tail.get_u32();
  const std::uint32_t actual_crc = crc32_update(0, bytes.data(), body);
  if (stored_crc != actual_crc) {
    throw CheckpointError("checkpoint: checksum mismatch over bytes [0, " + std::to_string(body) +
                          ") of " + path);
  }

  ByteSource src(bytes.data(), body);
  std::array<char, 4> magic;
  src.get_bytes(magic.data(), magic.size());
  if (magic != kMagic) throw CheckpointError("checkpoint: bad magic bytes");
  const std::uint32_t version = src.get_u32();
  if (version != kVersion) {
    throw CheckpointError("checkpoint: format version " + std::to_string(version) +
                          " is not supported (expected " + std::to_string(kVersion) + ")");
  }

  LoadedCheckpoint out;
  out.config = get_config(src);
  out.config.validate();

  // Skeleton in canonical parameter order; the manifest must match it.
  std::mt19937_64 rng(0);
  out.weights = init_weights(out.config, rng);
  auto named = out.weights.named_parameters();

  const std::uint32_t count = src.get_u32();
  if (count != named.size()) {
    throw CheckpointError("checkpoint: manifest has " + std::to_string(count) +
                          " tensors, config implies " + std::to_string(named.size()));
  }
  std::uint64_t expected_offset = 0;
  for (auto& [name, t] : named) {
    const std::string stored_name = src.get_string();
    if (stored_name != name) {
      throw CheckpointError("checkpoint: manifest entry '" + stored_name + "' where '" + name +
                            "' was expected");
    }
    const std::uint32_t rank = src.get_u32();
    Shape shape(rank);
    for (auto& d : shape) d = src.get_u64();
    if (shape != t.shape()) {
      throw CheckpointError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) +
                            ", config implies " + shape_str(t.shape()));
    }
    const std::uint64_t off = src.get_u64();
    if (off != expected_offset) {
      throw CheckpointError("checkpoint: tensor '" + name + "' at offset " + std::to_string(off) +
                            ", expected " + std::to_string(expected_offset));
    }
    expected_offset += t.numel() * sizeof(double);
  }
  for (auto& [name, t] : named) {
    for (double& v : t.values_mut()) v = src.get_f64();
  }

  const std::uint32_t has_state = src.get_u32();
  if (has_state == 1) {
    out.has_optimizer_state = true;
    out.optimizer_state.step = static_cast<long long>(src.get_u64());
    for (auto& [name, t] : named) {
      std::vector<double> m(t.numel()), v(t.numel());
      for (double& x : m) x = src.get_f64();
      for (double& x : v) x = src.get_f64();
      out.optimizer_state.m.push_back(std::move(m));
      out.optimizer_state.v.push_back(std::move(v));
    }
  } else if (has_state != 0) {
    throw CheckpointError("checkpoint: malformed optimizer-state flag");
  }
  if (src.pos() != body) throw CheckpointError("checkpoint: trailing bytes after payload");
  return out;
}

TransformerWeights clone_weights(const TransformerWeights& weights) {
  TransformerWeights out;
  out.token_emb = weights.token_emb.clone();
  out.pos_emb = weights.pos_emb.clone();
  out.seg_emb = weights.seg_emb.clone();
  out.emb_ln_gain = weights.emb_ln_gain.clone();
  out.emb_ln_bias = weights.emb_ln_bias.clone();
  for (const LayerWeights& lw : weights.layers) {
    LayerWeights c;
    c.wq = lw.wq.clone();
    c.bq = lw.bq.clone();
    c.wk = lw.wk.clone();
    c.bk = lw.bk.clone();
    c.wv = lw.wv.clone();
    c.bv = lw.bv.clone();
    c.wo = lw.wo.clone();
    c.bo = lw.bo.clone();
    c.attn_ln_gain = lw.attn_ln_gain.clone();
    c.attn_ln_bias = lw.attn_ln_bias.clone();
    c.ffn_w1 = lw.ffn_w1.clone();
    c.ffn_b1 = lw.ffn_b1.clone();
    c.ffn_w2 = lw.ffn_w2.clone();
    c.ffn_b2 = lw.ffn_b2.clone();
    c.ffn_ln_gain = lw.ffn_ln_gain.clone();
    c.ffn_ln_bias = lw.ffn_ln_bias.clone();
    out.layers.push_back(std::move(c));
  }
  out.pooler_w = weights.pooler_w.clone();
  out.pooler_b = weights.pooler_b.clone();
  out.task_w = weights.task_w.clone();
  out.task_b = weights.task_b.clone();
  out.mlm_bias = weights.mlm_bias.clone();
  return out;
}

}  // namespace minikd
