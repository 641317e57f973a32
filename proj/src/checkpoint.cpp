#include "lcg/checkpoint.hpp"

namespace lcg {

namespace {

constexpr std::size_t kMaxRank = 8;

void write_table(ByteWriter& w, std::span<const NamedTensor> table) {
  w.u32(static_cast<std::uint32_t>(table.size()));
  for (const NamedTensor& t : table) {
    if (t.name.size() > UINT16_MAX) throw std::length_error("tensor name too long: " + t.name);
    if (t.value.shape().size() > kMaxRank) throw std::invalid_argument("tensor rank too large: " + t.name);
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.raw(t.name);
    w.u8(static_cast<std::uint8_t>(t.dtype));
    w.u8(static_cast<std::uint8_t>(t.value.shape().size()));
    for (std::size_t d : t.value.shape()) w.u64(d);
    for (std::size_t i = 0; i < t.value.size(); ++i) {
      if (t.dtype == Dtype::F32) {
        w.f32(static_cast<float>(t.value[i]));
      } else {
        w.f64(t.value[i]);
      }
    }
  }
}

std::vector<NamedTensor> read_table(ByteReader& r) {
  const std::uint32_t count = r.u32();
  if (count > r.remaining() / 4) throw FormatError("truncated: tensor table too long", r.offset());
  std::vector<NamedTensor> table;
  table.reserve(count);
  for (std::uint32_t n = 0; n < count; ++n) {
    NamedTensor t;
    t.name = r.raw(r.u16());
    const std::size_t dtype_at = r.offset();
    const std::uint8_t dtype = r.u8();
    if (dtype > static_cast<std::uint8_t>(Dtype::F32)) {
      throw FormatError("invalid dtype " + std::to_string(dtype) + " for " + t.name, dtype_at);
    }
    t.dtype = static_cast<Dtype>(dtype);
    const std::size_t rank_at = r.offset();
    const std::uint8_t rank = r.u8();
    if (rank > kMaxRank) throw FormatError("rank " + std::to_string(rank) + " too large", rank_at);
    Shape shape(rank);
    std::size_t elements = 1;
    const std::size_t width = t.dtype == Dtype::F32 ? 4 : 8;
    for (auto& d : shape) {
      const std::size_t at = r.offset();
      d = r.u64();
      if (d == 0 || d > r.remaining() / width || elements > r.remaining() / width / d) {
        throw FormatError("bad extent for " + t.name, at);
      }
      elements *= d;
    }
    r.require(elements * width, "tensor payload");
    std::vector<double> data(elements);
    for (double& v : data) v = t.dtype == Dtype::F32 ? static_cast<double>(r.f32()) : r.f64();
    t.value = Tensor(std::move(shape), std::move(data));
    table.push_back(std::move(t));
  }
  return table;
}

Tensor rounded(const Tensor& t, Dtype dtype) {
  if (dtype == Dtype::F64) return t;
  Tensor out = t;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(out[i]);
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.raw("LCGC");
  w.u16(kCheckpointVersion);
  w.blob(ckpt.config);
  w.u64(ckpt.step);
  write_table(w, ckpt.params);
  w.u64(ckpt.optimizer_step);
  write_table(w, ckpt.first_moment);
  write_table(w, ckpt.second_moment);
  w.blob(ckpt.rng_state);
  w.seal();
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("LCGC");
  const std::size_t version_at = r.offset();
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  Checkpoint c;
  c.config = r.blob();
  c.step = r.u64();
  c.params = read_table(r);
  c.optimizer_step = r.u64();
  c.first_moment = read_table(r);
  c.second_moment = read_table(r);
  c.rng_state = r.blob();
  r.verify_seal();
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

std::vector<NamedTensor> named_tensors(const ModelWeights<Tensor>& w, Dtype dtype) {
  std::vector<NamedTensor> table;
  visit_params("", [&](const std::string& name, const Tensor& t) {
    table.push_back({name, dtype, rounded(t, dtype)});
  }, w);
  return table;
}

void assign_tensors(ModelWeights<Tensor>& w, std::span<const NamedTensor> table) {
  std::size_t i = 0;
  visit_params("", [&](const std::string& name, Tensor& t) {
    if (i >= table.size()) throw std::invalid_argument("checkpoint is missing tensor " + name);
    const NamedTensor& src = table[i++];
    if (src.name != name) {
      throw std::invalid_argument("checkpoint tensor " + src.name + " found where " + name +
                                  " was expected");
    }
    if (src.value.shape() != t.shape()) throw_shape_error("checkpoint " + name, src.value.shape(), t.shape());
    t = src.value;
  }, w);
  if (i != table.size()) {
    throw std::invalid_argument("checkpoint has " + std::to_string(table.size() - i) +
                                " unexpected trailing tensors");
  }
}

Checkpoint make_checkpoint(const Trainer& trainer, std::string config, Dtype dtype) {
  Checkpoint c;
  c.config = std::move(config);
  c.step = trainer.steps_done();
  c.params = named_tensors(trainer.params(), dtype);
  c.optimizer_step = trainer.optimizer_state().step;
  c.first_moment = named_tensors(trainer.optimizer_state().m, dtype);
  c.second_moment = named_tensors(trainer.optimizer_state().v, dtype);
  c.rng_state = trainer.rng_state();
  return c;
}

void restore_trainer(Trainer& trainer, const Checkpoint& ckpt) {
  ModelWeights<Tensor> params = trainer.params();
  assign_tensors(params, ckpt.params);
  AdamState state = make_adam_state(params);
  state.step = ckpt.optimizer_step;
  assign_tensors(state.m, ckpt.first_moment);
  assign_tensors(state.v, ckpt.second_moment);
  trainer.restore(std::move(state), std::move(params), ckpt.rng_state);
}

ModelWeights<Tensor> checkpoint_weights(const Checkpoint& ckpt, const ModelConfig& cfg) {
  ModelWeights<Tensor> w = init_model(cfg, 0);
  assign_tensors(w, ckpt.params);
  return w;
}

}  // namespace lcg
