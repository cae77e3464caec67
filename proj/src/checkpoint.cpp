#include "oa/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>

namespace oa {

namespace {

constexpr std::string_view kMagic = "OACKPT1";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}

  std::uint64_t uint(int bytes, const char* what) {
    need(static_cast<std::size_t>(bytes), what);
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b_[pos_ + i]);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == b_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) {
      throw std::runtime_error(std::string("checkpoint truncated reading ") + what + " at byte " +
                               std::to_string(pos_));
    }
  }

  std::string_view b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const std::string& metadata, const ParamList& params) {
  std::string out(kMagic);
  put_u32(out, static_cast<std::uint32_t>(metadata.size()));
  out += metadata;
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p.tensor.data()) put_f64(out, v);
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size(), "magic") != kMagic) throw std::runtime_error("not an OACKPT1 checkpoint");
  Checkpoint ckpt;
  ckpt.metadata = std::string(r.take(r.uint(4, "metadata length"), "metadata"));
  const auto count = r.uint(4, "tensor count");
  for (std::uint64_t t = 0; t < count; ++t) {
    std::string name(r.take(r.uint(4, "name length"), "name"));
    const auto rank = r.uint(4, "rank");
    Shape shape;
    for (std::uint64_t k = 0; k < rank; ++k) shape.push_back(r.uint(4, "dimension"));
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = std::bit_cast<double>(r.uint(8, "tensor data"));
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw std::runtime_error("checkpoint has trailing bytes at byte " + std::to_string(r.pos()));
  return ckpt;
}

void write_checkpoint(const std::string& path, const std::string& metadata, const ParamList& params) {
  const std::string bytes = serialize_checkpoint(metadata, params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

void load_parameters(const Checkpoint& ckpt, const ParamList& targets) {
  std::map<std::string, const Tensor*> stored;
  for (const auto& [name, t] : ckpt.tensors) stored[name] = &t;
  if (stored.size() != targets.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(stored.size()) + " tensors, model expects " +
                             std::to_string(targets.size()));
  }
  for (const auto& p : targets) {
    auto it = stored.find(p.name);
    if (it == stored.end()) throw std::runtime_error("checkpoint is missing tensor " + p.name);
    if (it->second->shape() != p.tensor.shape()) {
      throw std::runtime_error("checkpoint tensor " + p.name + " has shape " + shape_string(it->second->shape()) +
                               ", model expects " + shape_string(p.tensor.shape()));
    }
  }
  for (const auto& p : targets) {
    const auto src = stored[p.name]->data();
    Tensor target = p.tensor;  // shares storage with the model
    auto dst = target.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace oa
