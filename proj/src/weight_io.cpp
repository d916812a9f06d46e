#include "pyconv/weight_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace pyconv {

WeightFormatError::WeightFormatError(const std::string& what, std::uint64_t offset)
    : std::runtime_error("weight file: " + what + " at byte " + std::to_string(offset)), offset_(offset) {}

namespace {

constexpr char kMagic[4] = {'P', 'Y', 'C', 'V'};

template <typename U>
void put(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t pos() const { return pos_; }

  void need(std::uint64_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw WeightFormatError(std::string("truncated ") + what + " (needs " + std::to_string(n) + " bytes, " +
                                  std::to_string(bytes_.size() - pos_) + " remain)",
                              pos_);
    }
  }

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take(std::uint64_t n, const char* what) {
    need(n, what);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string_view bytes_;
  std::uint64_t pos_ = 0;
};

template <typename T>
void put_tensor(std::string& out, const Tensor<T>& t) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  put<std::uint8_t>(out, sizeof(T) == 4 ? 0 : 1);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (std::int64_t d : t.dims()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  for (std::int64_t i = 0; i < t.size(); ++i) put<Bits>(out, std::bit_cast<Bits>(t[i]));
}

template <typename T>
Tensor<T> get_tensor(Reader& r, Dims dims, std::int64_t count) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  r.need(static_cast<std::uint64_t>(count) * sizeof(T), "tensor data");
  Tensor<T> t(std::move(dims));
  for (std::int64_t i = 0; i < count; ++i) t[i] = std::bit_cast<T>(r.get<Bits>("tensor data"));
  return t;
}

}  // namespace

const AnyTensor* WeightFile::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

template <typename T>
void WeightFile::add_all(const ParamStore<T>& store, const std::string& prefix) {
  for (std::size_t i = 0; i < store.size(); ++i) add(prefix + store.names()[i], store.tensors()[i]);
}

std::string encode_weights(const WeightFile& file) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kWeightFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& [name, t] : file.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    std::visit([&](const auto& x) { put_tensor(out, x); }, t);
  }
  return out;
}

WeightFile decode_weights(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4, "magic") != std::string_view(kMagic, 4)) throw WeightFormatError("bad magic", 0);
  const std::uint64_t version_at = r.pos();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kWeightFormatVersion) {
    throw WeightFormatError("unsupported version " + std::to_string(version), version_at);
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  WeightFile file;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = r.get<std::uint32_t>("name length");
    std::string name(r.take(name_len, "name"));
    const std::uint64_t dtype_at = r.pos();
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype > 1) throw WeightFormatError("unknown dtype " + std::to_string(dtype), dtype_at);
    const auto rank = r.get<std::uint8_t>("rank");
    Dims dims;
    std::int64_t elems = 1;
    for (int a = 0; a < rank; ++a) {
      const std::uint64_t at = r.pos();
      const auto d = r.get<std::uint64_t>("extent");
      if (d == 0 || d > (1ULL << 40) || static_cast<std::uint64_t>(elems) * d > (1ULL << 40)) {
        throw WeightFormatError("bad extent " + std::to_string(d), at);
      }
      dims.push_back(static_cast<std::int64_t>(d));
      elems *= static_cast<std::int64_t>(d);
    }
    if (dims.empty()) dims.push_back(1);
    if (dtype == 0) {
      file.add(name, get_tensor<float>(r, std::move(dims), elems));
    } else {
      file.add(name, get_tensor<double>(r, std::move(dims), elems));
    }
  }
  if (r.pos() != bytes.size()) throw WeightFormatError("trailing bytes", r.pos());
  return file;
}

void save_weight_file(const std::string& path, const WeightFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::string bytes = encode_weights(file);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

WeightFile load_weight_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

template <typename T>
Tensor<T> as_tensor(const AnyTensor& t) {
  return std::visit(
      [](const auto& x) -> Tensor<T> {
        if constexpr (std::is_same_v<typename std::decay_t<decltype(x)>::value_type, T>) {
          return x;
        } else {
          return x.template cast<T>();
        }
      },
      t);
}

template <typename T>
void load_into(const WeightFile& file, ParamStore<T>& store, const std::string& prefix) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string name = prefix + store.names()[i];
    const AnyTensor* t = file.find(name);
    if (!t) throw std::invalid_argument("weight file has no tensor " + name);
    Tensor<T> v = as_tensor<T>(*t);
    if (v.dims() != store.tensors()[i].dims()) {
      throw std::invalid_argument("weight file tensor " + name + " has the wrong shape");
    }
    store.tensors()[i] = std::move(v);
  }
}

WeightFile train_state_file(const TrainState& state) {
  WeightFile f;
  f.add_all(state.params);
  f.add_all(state.buffers);
  f.add_all(state.velocity, "velocity/");
  f.add("train/epoch", Tensor<double>({1}, {static_cast<double>(state.epoch)}));
  return f;
}

TrainState train_state_from_file(const WeightFile& file, const NetworkGraph& net) {
  TrainState s = init_train_state(net, 0);
  load_into(file, s.params);
  load_into(file, s.buffers);
  load_into(file, s.velocity, "velocity/");
  const AnyTensor* e = file.find("train/epoch");
  if (!e) throw std::invalid_argument("weight file has no tensor train/epoch");
  s.epoch = static_cast<int>(as_tensor<double>(*e)[0]);
  return s;
}

template void WeightFile::add_all<float>(const ParamStore<float>&, const std::string&);
template void WeightFile::add_all<double>(const ParamStore<double>&, const std::string&);
template Tensor<float> as_tensor<float>(const AnyTensor&);
template Tensor<double> as_tensor<double>(const AnyTensor&);
template void load_into<float>(const WeightFile&, ParamStore<float>&, const std::string&);
template void load_into<double>(const WeightFile&, ParamStore<double>&, const std::string&);

}  // namespace pyconv
