#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hifm/csv.hpp"
#include "hifm/data.hpp"
#include "hifm/errors.hpp"
#include "hifm/model.hpp"
#include "hifm/regression.hpp"

namespace hifm::io {

inline std::uint64_t fnv1a64(const char* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "' for checksum");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  char buf[24];
  std::snprintf(buf, sizeof(buf), "fnv1a:%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return buf;
}

// Write-then-rename so readers never observe a partial file.
inline void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + tmp + "'");
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

enum class ChainFormat { csv, binary };

inline constexpr char kChainMagic[16] = {'H', 'I', 'F', 'M', '-', 'C', 'H', 'A',
                                         'I', 'N', '-', '0', '0', '0', '1', '\0'};

namespace detail {

inline std::string flatten_csv(const std::vector<ChainState>& draws,
                               const std::function<const double*(const ChainState&)>& block,
                               Eigen::Index block_size) {
  std::ostringstream out;
  for (Eigen::Index c = 0; c < block_size; ++c) out << (c ? "," : "") << "c" << c;
  out << "\n";
  for (const auto& draw : draws) {
    const double* values = block(draw);
    for (Eigen::Index c = 0; c < block_size; ++c) {
      out << (c ? "," : "") << csv::format_double(values[c]);
    }
    out << "\n";
  }
  return out.str();
}

inline void append_u64(std::string& bytes, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

inline void append_f64(std::string& bytes, const double* values, std::size_t count) {
  static_assert(sizeof(double) == 8);
  const std::size_t offset = bytes.size();
  bytes.resize(offset + 8 * count);
  std::memcpy(bytes.data() + offset, values, 8 * count);
}

}  // namespace detail

// Serialized layout (documented in the README): chain_meta.json carries the
// schema, scaling constants, hyperparameters, dimensions, and per-file
// checksums. Parameter draws go either to one CSV per block (row = draw,
// columns = row-major flattened parameters) or to chain.bin (16-byte magic,
// little-endian u64 dims, then f64 draws in the same order). Factor scores and
// latent matrices are training-row quantities and are not serialized.
inline std::vector<std::string> write_chain(const FittedModel& model, const std::string& dir,
                                            ChainFormat format) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const PosteriorChain& chain = model.chain;
  if (chain.draws.empty()) throw ValidationError("write_chain: empty chain");
  const int k = chain.k_star;
  const int L = static_cast<int>(chain.draws.front().groups.size());
  const int p = static_cast<int>(chain.draws.front().groups.front().lambda.rows());

  std::vector<std::string> files;
  if (format == ChainFormat::csv) {
    auto write_block = [&](const std::string& name,
                           const std::function<const double*(const ChainState&)>& block,
                           Eigen::Index size) {
      atomic_write(dir + "/" + name, detail::flatten_csv(chain.draws, block, size));
      files.push_back(name);
    };
    write_block("pi0.csv", [](const ChainState& s) { return s.shared.pi0.data(); }, k);
    write_block("phi.csv", [](const ChainState& s) { return s.shared.phi.data(); },
                static_cast<Eigen::Index>(p) * k);
    for (int l = 0; l < L; ++l) {
      write_block("lambda_pop" + std::to_string(l + 1) + ".csv",
                  [l](const ChainState& s) { return s.groups[l].lambda.data(); },
                  static_cast<Eigen::Index>(p) * (k + 1));
      write_block("w_pop" + std::to_string(l + 1) + ".csv",
                  [l](const ChainState& s) { return s.groups[l].w.data(); }, k);
      write_block("sigma2_pop" + std::to_string(l + 1) + ".csv",
                  [l](const ChainState& s) { return s.groups[l].sigma2.data(); }, p);
    }
  } else {
    std::string bytes(kChainMagic, sizeof(kChainMagic));
    detail::append_u64(bytes, static_cast<std::uint64_t>(k));
    detail::append_u64(bytes, static_cast<std::uint64_t>(L));
    detail::append_u64(bytes, static_cast<std::uint64_t>(p));
    detail::append_u64(bytes, chain.draws.size());
    for (const auto& draw : chain.draws) {
      detail::append_f64(bytes, draw.shared.pi0.data(), k);
      detail::append_f64(bytes, draw.shared.phi.data(), static_cast<std::size_t>(p) * k);
      for (int l = 0; l < L; ++l) {
        detail::append_f64(bytes, draw.groups[l].lambda.data(),
                           static_cast<std::size_t>(p) * (k + 1));
        detail::append_f64(bytes, draw.groups[l].w.data(), k);
        detail::append_f64(bytes, draw.groups[l].sigma2.data(), p);
      }
    }
    atomic_write(dir + "/chain.bin", bytes);
    files.push_back("chain.bin");
  }

  nlohmann::json meta;
  meta["format"] = format == ChainFormat::csv ? "csv" : "binary";
  meta["k_star"] = k;
  meta["populations"] = L;
  meta["variables"] = p;
  meta["draws"] = chain.draws.size();
  meta["dataset_fingerprint"] = chain.dataset_fingerprint;
  meta["mh"] = {{"proposals", chain.mh.proposals},
                {"accepts", chain.mh.accepts},
                {"acceptance_rate", chain.mh.acceptance_rate()},
                {"checked_binary_cells", chain.mh.checked_binary_cells},
                {"sign_violations", chain.mh.sign_violations}};
  meta["hyper"] = {{"alpha0", chain.hyper.alpha0},
                   {"alpha_l", chain.hyper.alpha_l},
                   {"tau", chain.hyper.tau},
                   {"sigma_shape", chain.hyper.sigma_shape},
                   {"sigma_rate", chain.hyper.sigma_rate},
                   {"k_star", chain.hyper.k_star},
                   {"mh_tuning_c", chain.hyper.mh_tuning_c},
                   {"n_iter", chain.hyper.n_iter},
                   {"n_burnin", chain.hyper.n_burnin},
                   {"thin", chain.hyper.thin},
                   {"weight_threshold", chain.hyper.weight_threshold}};
  nlohmann::json schema = nlohmann::json::array();
  for (const auto& c : model.schema) {
    schema.push_back({{"name", c.name}, {"type", type_name(c.type)}, {"role", role_name(c.role)}});
  }
  meta["schema"] = schema;
  meta["scaling"] = {
      {"center", std::vector<double>(model.scaling.center.data(),
                                     model.scaling.center.data() + model.scaling.center.size())},
      {"scale", std::vector<double>(model.scaling.scale.data(),
                                    model.scaling.scale.data() + model.scaling.scale.size())}};
  nlohmann::json checksums;
  for (const auto& f : files) checksums[f] = file_checksum(dir + "/" + f);
  meta["checksums"] = checksums;
  atomic_write(dir + "/chain_meta.json", meta.dump(2) + "\n");
  files.push_back("chain_meta.json");
  return files;
}

inline FittedModel read_chain(const std::string& dir) {
  std::ifstream meta_in(dir + "/chain_meta.json");
  if (!meta_in) throw ValidationError("cannot open '" + dir + "/chain_meta.json'");
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const std::exception& e) {
    throw ValidationError("chain metadata is not valid JSON: " + std::string(e.what()));
  }

  for (const auto& [file, checksum] : meta.at("checksums").items()) {
    const std::string actual = file_checksum(dir + "/" + file);
    if (actual != checksum.get<std::string>()) {
      throw ValidationError("chain file '" + file + "' failed its integrity check (" + actual +
                            " != " + checksum.get<std::string>() + ")");
    }
  }

  FittedModel model;
  const int k = meta.at("k_star").get<int>();
  const int L = meta.at("populations").get<int>();
  const int p = meta.at("variables").get<int>();
  const std::size_t n_draws = meta.at("draws").get<std::size_t>();
  model.chain.k_star = k;
  model.chain.dataset_fingerprint = meta.at("dataset_fingerprint").get<std::uint64_t>();
  model.chain.mh.proposals = meta.at("mh").at("proposals").get<long>();
  model.chain.mh.accepts = meta.at("mh").at("accepts").get<long>();
  model.chain.mh.checked_binary_cells = meta.at("mh").at("checked_binary_cells").get<long>();
  model.chain.mh.sign_violations = meta.at("mh").at("sign_violations").get<long>();
  const auto& hyper = meta.at("hyper");
  model.chain.hyper.alpha0 = hyper.at("alpha0").get<double>();
  model.chain.hyper.alpha_l = hyper.at("alpha_l").get<std::vector<double>>();
  model.chain.hyper.tau = hyper.at("tau").get<double>();
  model.chain.hyper.sigma_shape = hyper.at("sigma_shape").get<double>();
  model.chain.hyper.sigma_rate = hyper.at("sigma_rate").get<double>();
  model.chain.hyper.k_star = hyper.at("k_star").get<int>();
  model.chain.hyper.mh_tuning_c = hyper.at("mh_tuning_c").get<double>();
  model.chain.hyper.n_iter = hyper.at("n_iter").get<long>();
  model.chain.hyper.n_burnin = hyper.at("n_burnin").get<long>();
  model.chain.hyper.thin = hyper.at("thin").get<long>();
  model.chain.hyper.weight_threshold = hyper.at("weight_threshold").get<double>();

  for (const auto& c : meta.at("schema")) {
    model.schema.push_back({c.at("name").get<std::string>(),
                            parse_type(c.at("type").get<std::string>()),
                            parse_role(c.at("role").get<std::string>())});
  }
  const auto center = meta.at("scaling").at("center").get<std::vector<double>>();
  const auto scale = meta.at("scaling").at("scale").get<std::vector<double>>();
  model.scaling.center = Eigen::Map<const Eigen::VectorXd>(center.data(), center.size());
  model.scaling.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), scale.size());

  auto blank_state = [&] {
    ChainState state;
    state.shared.pi0.resize(k);
    state.shared.theta0.resize(k);
    state.shared.phi.resize(p, k);
    state.groups.resize(L);
    for (auto& g : state.groups) {
      g.lambda.resize(p, k + 1);
      g.w.resize(k);
      g.sigma2.resize(p);
    }
    return state;
  };

  const std::string format = meta.at("format").get<std::string>();
  if (format == "csv") {
    auto read_block = [&](const std::string& name, Eigen::Index size,
                          const std::function<double*(ChainState&)>& block) {
      const auto rows = csv::read_rows(dir + "/" + name);
      if (rows.size() != n_draws + 1) {
        throw ValidationError("chain block '" + name + "' has " + std::to_string(rows.size() - 1) +
                              " draws, metadata says " + std::to_string(n_draws));
      }
      if (model.chain.draws.empty()) {
        model.chain.draws.resize(n_draws);
        for (auto& s : model.chain.draws) s = blank_state();
      }
      for (std::size_t d = 0; d < n_draws; ++d) {
        if (static_cast<Eigen::Index>(rows[d + 1].size()) != size) {
          throw ValidationError("chain block '" + name + "' row " + std::to_string(d + 1) +
                                " has wrong width");
        }
        double* out = block(model.chain.draws[d]);
        for (Eigen::Index c = 0; c < size; ++c) {
          out[c] = csv::parse_double(rows[d + 1][c], name);
        }
      }
    };
    read_block("pi0.csv", k, [](ChainState& s) { return s.shared.pi0.data(); });
    read_block("phi.csv", static_cast<Eigen::Index>(p) * k,
               [](ChainState& s) { return s.shared.phi.data(); });
    for (int l = 0; l < L; ++l) {
      read_block("lambda_pop" + std::to_string(l + 1) + ".csv",
                 static_cast<Eigen::Index>(p) * (k + 1),
                 [l](ChainState& s) { return s.groups[l].lambda.data(); });
      read_block("w_pop" + std::to_string(l + 1) + ".csv", k,
                 [l](ChainState& s) { return s.groups[l].w.data(); });
      read_block("sigma2_pop" + std::to_string(l + 1) + ".csv", p,
                 [l](ChainState& s) { return s.groups[l].sigma2.data(); });
    }
  } else if (format == "binary") {
    std::ifstream in(dir + "/chain.bin", std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + dir + "/chain.bin'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    if (bytes.size() < 16 + 32 || std::memcmp(bytes.data(), kChainMagic, 16) != 0) {
      throw ValidationError("chain.bin: bad magic header");
    }
    std::size_t offset = 16;
    auto take_u64 = [&] {
      std::uint64_t v = 0;
      for (int b = 0; b < 8; ++b) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + b])) << (8 * b);
      }
      offset += 8;
      return v;
    };
    if (take_u64() != static_cast<std::uint64_t>(k) || take_u64() != static_cast<std::uint64_t>(L) ||
        take_u64() != static_cast<std::uint64_t>(p) || take_u64() != n_draws) {
      throw ValidationError("chain.bin: dimensions disagree with metadata");
    }
    auto take_f64 = [&](double* out, std::size_t count) {
      if (offset + 8 * count > bytes.size()) {
        throw ValidationError("chain.bin: truncated payload");
      }
      std::memcpy(out, bytes.data() + offset, 8 * count);
      offset += 8 * count;
    };
    model.chain.draws.resize(n_draws);
    for (auto& s : model.chain.draws) {
      s = blank_state();
      take_f64(s.shared.pi0.data(), k);
      take_f64(s.shared.phi.data(), static_cast<std::size_t>(p) * k);
      for (int l = 0; l < L; ++l) {
        take_f64(s.groups[l].lambda.data(), static_cast<std::size_t>(p) * (k + 1));
        take_f64(s.groups[l].w.data(), k);
        take_f64(s.groups[l].sigma2.data(), p);
      }
    }
  } else {
    throw ValidationError("unknown chain format '" + format + "'");
  }
  for (auto& s : model.chain.draws) {
    s.shared.theta0 = s.shared.pi0 * static_cast<double>(k);
  }
  return model;
}

}  // namespace hifm::io
