#include "fundus/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fundus/error.hpp"
#include "fundus/rng.hpp"

namespace fundus::ssl {

namespace {

constexpr char kMagic[8] = {'F', 'N', 'C', 'K', 'P', 'T', '0', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    require_input(pos + n <= buf.size(), "checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json meta = nlohmann::json::parse(ckpt.extra_json);
  meta["config_digest"] = ckpt.config_digest;
  meta["epoch"] = ckpt.epoch;
  meta["final_loss"] = ckpt.final_loss;
  meta["seed"] = ckpt.seed;
  const std::string meta_str = meta.dump();

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u64(out, meta_str.size());
  out += meta_str;
  for (const auto& [name, tensor] : ckpt.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(tensor.shape.size()));
    std::size_t count = 1;
    for (const int d : tensor.shape) {
      put_u32(out, static_cast<std::uint32_t>(d));
      count *= static_cast<std::size_t>(d);
    }
    require(count == tensor.data.size(),
            "checkpoint: tensor size mismatch for " + name);
    const std::size_t old = out.size();
    out.resize(old + count * 4);
    std::memcpy(out.data() + old, tensor.data.data(), count * 4);
  }
  put_u64(out, fnv1a64(out.data(), out.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), "checkpoint: cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(f.good(), "checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require_input(f.good(), "checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());

  require_input(buf.size() >= sizeof(kMagic) + 8, "checkpoint: truncated file");
  require_input(std::memcmp(buf.data(), kMagic, sizeof(kMagic)) == 0,
                "checkpoint: bad magic in " + path);
  const std::uint64_t stored_digest = [&] {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(buf[buf.size() - 8 + static_cast<std::size_t>(i)]))
           << (8 * i);
    return v;
  }();
  const std::uint64_t digest = fnv1a64(buf.data(), buf.size() - 8);
  require_input(digest == stored_digest,
                "checkpoint: digest mismatch (corrupt file): " + path);

  Reader r{buf, sizeof(kMagic)};
  const std::uint64_t meta_len = r.u64();
  const std::string meta_str = r.bytes(meta_len);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_str);
  } catch (const std::exception&) {
    throw UsageError("checkpoint: bad metadata JSON in " + path);
  }

  Checkpoint ckpt;
  ckpt.config_digest = meta.value("config_digest", "");
  ckpt.epoch = meta.value("epoch", 0);
  ckpt.final_loss = meta.value("final_loss", 0.0);
  ckpt.seed = meta.value("seed", std::uint64_t{0});
  meta.erase("config_digest");
  meta.erase("epoch");
  meta.erase("final_loss");
  meta.erase("seed");
  ckpt.extra_json = meta.dump();

  const std::size_t end = buf.size() - 8;
  while (r.pos < end) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    require_input(rank <= 8, "checkpoint: implausible tensor rank");
    NamedTensor t;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t d = r.u32();
      require_input(d > 0, "checkpoint: zero dim in " + name);
      t.shape.push_back(static_cast<int>(d));
      count *= d;
    }
    r.need(count * 4);
    t.data.resize(count);
    std::memcpy(t.data.data(), buf.data() + r.pos, count * 4);
    r.pos += count * 4;
    ckpt.tensors.emplace(name, std::move(t));
  }
  require_input(r.pos == end, "checkpoint: trailing garbage in " + path);
  return ckpt;
}

Checkpoint snapshot_params(const nn::ParamRegistry& reg,
                           std::span<const float> theta) {
  Checkpoint ckpt;
  for (const auto& spec : reg.tensors) {
    NamedTensor t;
    t.shape = spec.shape;
    t.data.assign(theta.begin() + static_cast<std::ptrdiff_t>(spec.offset),
                  theta.begin() + static_cast<std::ptrdiff_t>(spec.offset + spec.size));
    ckpt.tensors.emplace(spec.name, std::move(t));
  }
  return ckpt;
}

void restore_params(const Checkpoint& ckpt, const nn::ParamRegistry& reg,
                    std::span<float> theta, const std::string& prefix) {
  std::string problems;
  for (const auto& spec : reg.tensors) {
    if (!spec.name.starts_with(prefix)) continue;
    const auto it = ckpt.tensors.find(spec.name);
    if (it == ckpt.tensors.end()) {
      problems += "\n  missing tensor: " + spec.name;
      continue;
    }
    if (it->second.shape != spec.shape) {
      auto shape_str = [](const std::vector<int>& s) {
        std::string out = "[";
        for (std::size_t i = 0; i < s.size(); ++i)
          out += (i ? "," : "") + std::to_string(s[i]);
        return out + "]";
      };
      problems += "\n  shape mismatch: " + spec.name + " checkpoint " +
                  shape_str(it->second.shape) + " vs config " +
                  shape_str(spec.shape);
      continue;
    }
  }
  require_input(problems.empty(),
                "checkpoint incompatible with encoder config:" + problems);
  for (const auto& spec : reg.tensors) {
    if (!spec.name.starts_with(prefix)) continue;
    const auto& t = ckpt.tensors.at(spec.name);
    std::copy(t.data.begin(), t.data.end(),
              theta.begin() + static_cast<std::ptrdiff_t>(spec.offset));
  }
}

}  // namespace fundus::ssl
