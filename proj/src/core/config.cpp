// SPDX-License-Identifier: Apache-2.0
#include "swattn/config.hpp"

#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "swattn/errors.hpp"

namespace swattn {

AttentionConfig AttentionConfig::long_context_default() { return AttentionConfig{}; }

AttentionConfig AttentionConfig::pooling_profile(std::size_t block) {
  AttentionConfig cfg;
  cfg.block_size = block;
  cfg.c1_length = block / 2;
  cfg.c1_stride = block / 4;
  cfg.c2_length = 2 * block;
  cfg.c2_stride = block;
  cfg.cmp_length = 5;
  cfg.cmp_stride = 4;
  return cfg;
}

AttentionConfig AttentionConfig::small_profile() {
  AttentionConfig cfg = pooling_profile(16);
  cfg.n = 256;
  cfg.with_heads(4, 2, 16);
  cfg.init_blocks = 1;
  cfg.local_blocks = 3;
  cfg.topk_blocks = 2;
  cfg.window = 16;
  return cfg;
}

AttentionConfig& AttentionConfig::with_heads(std::size_t h_q, std::size_t h_kv,
                                             std::size_t d_h) {
  query_heads = h_q;
  kv_heads = h_kv;
  head_dim = d_h;
  group_size = h_kv == 0 ? 0 : h_q / h_kv;
  model_dim = h_q * d_h;
  return *this;
}

double AttentionConfig::logit_scale() const {
  return 1.0 / std::sqrt(static_cast<double>(head_dim));
}

double AttentionConfig::compressed_logit_scale() const {
  return scale_compressed_scores ? logit_scale() : 1.0;
}

namespace {

// Field table shared by equality and JSON conversion.
template <typename Cfg, typename F>
void for_each_extent(Cfg& cfg, F&& f) {
  f("n", cfg.n);
  f("d", cfg.model_dim);
  f("d_h", cfg.head_dim);
  f("h_q", cfg.query_heads);
  f("h_kv", cfg.kv_heads);
  f("G", cfg.group_size);
  f("B", cfg.block_size);
  f("l_C1", cfg.c1_length);
  f("s_C1", cfg.c1_stride);
  f("l_C2", cfg.c2_length);
  f("s_C2", cfg.c2_stride);
  f("l", cfg.cmp_length);
  f("s", cfg.cmp_stride);
  f("N_init", cfg.init_blocks);
  f("N_local", cfg.local_blocks);
  f("k_top", cfg.topk_blocks);
  f("w", cfg.window);
  f("switch_threshold", cfg.switch_threshold);
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

bool operator==(const AttentionConfig& a, const AttentionConfig& b) {
  bool equal = a.scale_compressed_scores == b.scale_compressed_scores &&
               a.experimental == b.experimental;
  std::vector<std::size_t> lhs;
  for_each_extent(a, [&](const char*, const std::size_t& v) { lhs.push_back(v); });
  std::size_t i = 0;
  for_each_extent(b, [&](const char*, const std::size_t& v) {
    equal = equal && lhs[i++] == v;
  });
  return equal;
}

const AttentionConfig& validate_config(const AttentionConfig& cfg) {
  for_each_extent(cfg, [](const char* name, const std::size_t& v) {
    if (v == 0 && std::string(name) != "k_top" &&
        std::string(name) != "switch_threshold") {
      throw ConfigError("positive_extents",
                        std::string(name) + " must be strictly positive");
    }
  });
  if (cfg.query_heads % cfg.kv_heads != 0) {
    throw ConfigError("group_divisibility",
                      "h_q = " + std::to_string(cfg.query_heads) +
                          " is not divisible by h_kv = " +
                          std::to_string(cfg.kv_heads));
  }
  if (cfg.group_size != cfg.query_heads / cfg.kv_heads) {
    throw ConfigError("group_size", "G must equal h_q / h_kv = " +
                                        std::to_string(cfg.query_heads / cfg.kv_heads));
  }
  if (cfg.c1_stride > cfg.c1_length || cfg.c2_stride > cfg.c2_length ||
      cfg.cmp_stride > cfg.cmp_length) {
    throw ConfigError("pool_stride", "every pooling stride must not exceed its length");
  }
  if (!cfg.experimental) {
    if (cfg.c1_length % cfg.c1_stride != 0) {
      throw ConfigError("c1_profile", "s_C1 must divide l_C1");
    }
    if ((cfg.cmp_length - 1) % cfg.cmp_stride != 0) {
      throw ConfigError("cmp_profile", "s must divide l - 1");
    }
    if (cfg.cmp_stride * cfg.c1_stride != cfg.block_size) {
      throw ConfigError("block_alignment",
                        "s * s_C1 must equal B so max-pooled scores align with "
                        "selection blocks");
    }
  }
  const std::size_t needed = ceil_div(cfg.window, cfg.block_size) + 1;
  if (cfg.local_blocks < needed) {
    throw ConfigError("window_coverage",
                      "N_local = " + std::to_string(cfg.local_blocks) +
                          " but ceil(w/B)+1 = " + std::to_string(needed));
  }
  return cfg;
}

void to_json(nlohmann::json& j, const AttentionConfig& cfg) {
  j = nlohmann::json::object();
  for_each_extent(cfg, [&](const char* name, const std::size_t& v) { j[name] = v; });
  j["scale_compressed"] = cfg.scale_compressed_scores;
  j["experimental"] = cfg.experimental;
}

void from_json(const nlohmann::json& j, AttentionConfig& cfg) {
  if (!j.is_object()) throw ConfigError("json", "config must be a JSON object");
  cfg = AttentionConfig::long_context_default();
  std::size_t consumed = 0;
  for_each_extent(cfg, [&](const char* name, std::size_t& v) {
    if (auto it = j.find(name); it != j.end()) {
      if (!it->is_number_unsigned()) {
        throw ConfigError("json", std::string(name) + " must be a non-negative integer");
      }
      v = it->get<std::size_t>();
      ++consumed;
    }
  });
  for (auto [key, flag] : {std::pair{"scale_compressed", &cfg.scale_compressed_scores},
                           std::pair{"experimental", &cfg.experimental}}) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_boolean()) throw ConfigError("json", std::string(key) + " must be a boolean");
      *flag = it->get<bool>();
      ++consumed;
    }
  }
  // G follows the head counts unless given explicitly.
  if (!j.contains("G") && cfg.kv_heads != 0) cfg.group_size = cfg.query_heads / cfg.kv_heads;
  if (consumed != j.size()) {
    for (const auto& [key, _] : j.items()) {
      bool known = key == "scale_compressed" || key == "experimental";
      for_each_extent(cfg, [&](const char* name, const std::size_t&) {
        known = known || key == name;
      });
      if (!known) throw ConfigError("json", "unknown config key '" + key + "'");
    }
  }
}

AttentionConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("json", "cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("json", std::string("parse error: ") + e.what());
  }
  return j.get<AttentionConfig>();
}

}  // namespace swattn
