// SPDX-License-Identifier: Apache-2.0
#include "latnmt/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "latnmt/errors.hpp"

namespace latnmt {

namespace {

template <class Store, class Out>
void collect(Store& s, Out& out) {
  auto add = [&out](std::string name, auto& m) { out.push_back({std::move(name), &m}); };
  auto add_cell = [&add](const std::string& prefix, auto& c) {
    add(prefix + "u", c.u);
    add(prefix + "u_r", c.u_r);
    add(prefix + "u_z", c.u_z);
    add(prefix + "w", c.w);
    add(prefix + "w_r", c.w_r);
    add(prefix + "w_z", c.w_z);
  };
  auto add_direction = [&](const std::string& prefix, auto& d) {
    add_cell(prefix + "cell.", d.cell);
    if (d.gate_input) {
      add(prefix + "gate_input.b", d.gate_input->b_g);
      add(prefix + "gate_input.u", d.gate_input->u_g);
    }
    if (d.gate_state) {
      add(prefix + "gate_state.b", d.gate_state->b_g);
      add(prefix + "gate_state.u", d.gate_state->u_g);
    }
  };
  add("dec.att.u_a", s.dec.att.u_a);
  add("dec.att.v_a", s.dec.att.v_a);
  add("dec.att.w_a", s.dec.att.w_a);
  add_cell("dec.cell.", s.dec.cell);
  add("dec.init.w", s.dec.w_init);
  add("dec.out.w_m", s.dec.w_m);
  add("dec.out.w_o", s.dec.w_o);
  add("dec.out.w_s", s.dec.w_s);
  add("dec.out.w_y", s.dec.w_y);
  add("dec.tgt_emb", s.dec.tgt_emb);
  add_direction("enc.bwd.", s.enc.bwd);
  add_direction("enc.fwd.", s.enc.fwd);
  add("src_emb", s.src_emb);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
}

}  // namespace

ParameterStore ParameterStore::zeros(const ModelConfig& config) {
  if (config.embed_dim == 0 || config.hidden_dim == 0) {
    throw DimensionError("model dimensions must be positive");
  }
  if (config.src_vocab < 4 || config.tgt_vocab < 4) {
    throw DimensionError("vocabularies need at least one non-reserved token");
  }
  const std::size_t e = config.embed_dim;
  const std::size_t d = config.hidden_dim;
  const std::size_t dd = 2 * d;  // annotation width
  ParameterStore s;
  s.config = config;
  s.src_emb = Matrix(config.src_vocab, e);
  s.enc.kind = config.cell;
  s.enc.mode = config.compose;
  s.enc.fwd = LatticeCellParams::zeros(config.cell, config.compose, e, d);
  s.enc.bwd = LatticeCellParams::zeros(config.cell, config.compose, e, d);
  s.dec.att = {Matrix(d, d), Matrix(d, dd), Matrix(d, 1)};
  s.dec.cell = CellParams::zeros(e + dd, d);
  s.dec.tgt_emb = Matrix(config.tgt_vocab, e);
  s.dec.w_y = Matrix(d, e);
  s.dec.w_s = Matrix(d, d);
  s.dec.w_m = Matrix(d, dd);
  s.dec.w_o = Matrix(config.tgt_vocab, d);
  s.dec.w_init = Matrix(d, d);
  return s;
}

ParameterStore ParameterStore::initialized(const ModelConfig& config, std::uint64_t seed) {
  ParameterStore s = zeros(config);
  Rng rng(seed);
  for (auto& [name, m] : s.tensors()) {
    if (name.find(".gate_") != std::string::npos) continue;
    double bound = 0.1;
    if (name != "src_emb" && name != "dec.tgt_emb") {
      bound = std::sqrt(6.0 / static_cast<double>(m->rows() + m->cols()));
    }
    for (double& v : m->values()) v = rng.uniform(-bound, bound);
  }
  return s;
}

std::vector<NamedTensor> ParameterStore::tensors() {
  std::vector<NamedTensor> out;
  collect(*this, out);
  return out;
}

std::vector<ConstNamedTensor> ParameterStore::tensors() const {
  std::vector<ConstNamedTensor> out;
  collect(*this, out);
  return out;
}

std::vector<std::span<double>> ParameterStore::spans() {
  std::vector<std::span<double>> out;
  for (auto& t : tensors()) out.push_back(t.tensor->values());
  return out;
}

void ParameterStore::set_zero() {
  for (auto& t : tensors()) t.tensor->fill(0.0);
}

void ParameterStore::scale(double factor) {
  for (auto& t : tensors()) {
    for (double& v : t.tensor->values()) v *= factor;
  }
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.tensor->size();
  return n;
}

bool same_values(const ParameterStore& a, const ParameterStore& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].name != tb[i].name || !ta[i].tensor->same_shape(*tb[i].tensor)) return false;
    const auto va = ta[i].tensor->values();
    const auto vb = tb[i].tensor->values();
    if (std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace latnmt
