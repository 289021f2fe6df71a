// SPDX-License-Identifier: Apache-2.0
#include "swattn/attention_shape.hpp"

#include <string>

#include "swattn/errors.hpp"

namespace swattn {
namespace {

std::string describe(const Tensor& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.rank(); ++i) {
    if (i != 0) s += ", ";
    s += std::to_string(t.shape()[i]);
  }
  return s + "]";
}

}  // namespace

AttentionShape check_qk_shapes(const Tensor& q, const Tensor& k, const AttentionConfig& cfg) {
  if (q.rank() != 3 || k.rank() != 3) {
    throw ShapeError("Q and K must be rank 3, got " + describe(q) + " and " + describe(k));
  }
  if (cfg.kv_heads == 0 || cfg.query_heads % cfg.kv_heads != 0) {
    throw ShapeError("h_q must be a multiple of h_kv");
  }
  AttentionShape s;
  s.q_len = q.extent(0);
  s.kv_len = k.extent(0);
  s.query_heads = cfg.query_heads;
  s.kv_heads = cfg.kv_heads;
  s.group_size = cfg.query_heads / cfg.kv_heads;
  s.head_dim = cfg.head_dim;
  if (s.q_len == 0 || s.kv_len == 0) throw ShapeError("sequence length must be positive");
  if (s.q_len > s.kv_len) throw ShapeError("more query rows than key rows");
  if (q.extent(1) != s.query_heads || q.extent(2) != s.head_dim) {
    throw ShapeError("Q shape " + describe(q) + " does not match h_q = " +
                     std::to_string(s.query_heads) + ", d_h = " + std::to_string(s.head_dim));
  }
  if (k.extent(1) != s.kv_heads || k.extent(2) != s.head_dim) {
    throw ShapeError("K shape " + describe(k) + " does not match h_kv = " +
                     std::to_string(s.kv_heads) + ", d_h = " + std::to_string(s.head_dim));
  }
  return s;
}

AttentionShape check_qkv_shapes(const Tensor& q, const Tensor& k, const Tensor& v,
                                const AttentionConfig& cfg) {
  AttentionShape s = check_qk_shapes(q, k, cfg);
  if (v.shape() != k.shape()) {
    throw ShapeError("V shape " + describe(v) + " differs from K shape " + describe(k));
  }
  return s;
}

}  // namespace swattn
