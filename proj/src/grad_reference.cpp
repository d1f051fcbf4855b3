// SPDX-License-Identifier: Apache-2.0
#include "latnmt/grad_reference.hpp"

#include <quadmath.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "latnmt/errors.hpp"

namespace latnmt {

namespace {

using quad = __float128;

inline double r_exp(double x) { return std::exp(x); }
inline double r_tanh(double x) { return std::tanh(x); }
inline double r_log(double x) { return std::log(x); }
inline quad r_exp(quad x) { return expq(x); }
inline quad r_tanh(quad x) { return tanhq(x); }
inline quad r_log(quad x) { return logq(x); }

template <class T>
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<T> v;

  Mat() = default;
  explicit Mat(const Matrix& m) : rows(m.rows()), cols(m.cols()), v(m.values().begin(), m.values().end()) {}
  explicit Mat(std::span<const double> x) : rows(x.size()), cols(1), v(x.begin(), x.end()) {}

  std::vector<T> mul(const std::vector<T>& x) const {
    std::vector<T> out(rows, T(0));
    for (std::size_t r = 0; r < rows; ++r) {
      T acc = 0;
      for (std::size_t c = 0; c < cols; ++c) acc += v[r * cols + c] * x[c];
      out[r] = acc;
    }
    return out;
  }
  std::vector<T> row(std::size_t r) const {
    return std::vector<T>(v.begin() + r * cols, v.begin() + (r + 1) * cols);
  }
};

template <class T>
T sig(T x) {
  return T(1) / (T(1) + r_exp(-x));
}

template <class T>
struct RefCell {
  const Mat<T>*u, *u_r, *u_z, *w, *w_r, *w_z;
  const Mat<T>*gi_u = nullptr, *gi_b = nullptr, *gs_u = nullptr, *gs_b = nullptr;
};

template <class T>
std::vector<T> ref_gru(const RefCell<T>& p, const std::vector<T>& x, const std::vector<T>& h) {
  const auto wr = p.w_r->mul(x), ur = p.u_r->mul(h);
  const auto wz = p.w_z->mul(x), uz = p.u_z->mul(h);
  const std::size_t d = h.size();
  std::vector<T> r(d), z(d), rh(d);
  for (std::size_t i = 0; i < d; ++i) {
    r[i] = sig(wr[i] + ur[i]);
    z[i] = sig(wz[i] + uz[i]);
    rh[i] = r[i] * h[i];
  }
  const auto wx = p.w->mul(x), urh = p.u->mul(rh);
  std::vector<T> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    const T cand = r_tanh(wx[i] + urh[i]);
    out[i] = z[i] * h[i] + (T(1) - z[i]) * cand;
  }
  return out;
}

template <class T>
std::vector<T> ref_compose(const std::vector<std::vector<T>>& vs, ComposeMode mode, const Mat<T>* gu,
                           const Mat<T>* gb) {
  if (vs.size() == 1) return vs.front();
  const std::size_t d = vs.front().size();
  std::vector<T> out(d);
  if (mode == ComposeMode::pool) {
    for (std::size_t i = 0; i < d; ++i) {
      T best = vs[0][i];
      for (const auto& v : vs) best = std::max(best, v[i]);
      out[i] = best;
    }
    return out;
  }
  std::vector<T> raw(vs.size());
  T total = 0;
  for (std::size_t k = 0; k < vs.size(); ++k) {
    T s = gb->v[0];
    for (std::size_t i = 0; i < d; ++i) s += gu->v[i] * vs[k][i];
    raw[k] = sig(s);
    total += raw[k];
  }
  for (std::size_t i = 0; i < d; ++i) {
    T acc = 0;
    for (std::size_t k = 0; k < vs.size(); ++k) acc += raw[k] / total * vs[k][i];
    out[i] = acc;
  }
  return out;
}

template <class T>
std::vector<T> ref_cell(CellKind kind, ComposeMode mode, const RefCell<T>& p,
                        const std::vector<std::vector<T>>& xs, const std::vector<std::vector<T>>& hs) {
  switch (kind) {
    case CellKind::gru:
      if (xs.size() != 1) throw TopologyError("reference gru takes one input");
      return ref_gru(p, xs[0], hs[0]);
    case CellKind::swl:
      return ref_gru(p, ref_compose(xs, mode, p.gi_u, p.gi_b), ref_compose(hs, mode, p.gs_u, p.gs_b));
    case CellKind::dwl: {
      std::vector<std::vector<T>> branch;
      for (std::size_t k = 0; k < xs.size(); ++k) branch.push_back(ref_gru(p, xs[k], hs[k]));
      return ref_compose(branch, mode, p.gs_u, p.gs_b);
    }
  }
  throw InternalError("unknown cell kind");
}

// Perturbs one entry at a time of `targets` and differences `objective`.
template <class T, class F>
std::vector<Vector> central_differences(std::vector<Mat<T>*>& targets, F objective) {
  const T h = T(1e-5);
  std::vector<Vector> grads;
  for (Mat<T>* m : targets) {
    Vector g(m->v.size());
    for (std::size_t i = 0; i < m->v.size(); ++i) {
      const T saved = m->v[i];
      m->v[i] = saved + h;
      const T up = objective();
      m->v[i] = saved - h;
      const T down = objective();
      m->v[i] = saved;
      g[i] = static_cast<double>((up - down) / (T(2) * h));
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Cell instances

template <class T>
struct CellCopy {
  std::vector<Mat<T>> cell;   // u, u_r, u_z, w, w_r, w_z
  std::vector<Mat<T>> gates;  // gate_input b, u; gate_state b, u (when present)
  std::vector<Mat<T>> xs, hs;
  Mat<T> upstream;
  RefCell<T> view;
  bool has_input_gate = false, has_state_gate = false;

  explicit CellCopy(const CellCheckInstance& inst) : upstream(inst.upstream) {
    const auto& c = inst.params.cell;
    for (const Matrix* m : {&c.u, &c.u_r, &c.u_z, &c.w, &c.w_r, &c.w_z}) cell.emplace_back(*m);
    for (const auto* g : {&inst.params.gate_input, &inst.params.gate_state}) {
      if (!*g) continue;
      gates.emplace_back((*g)->b_g);
      gates.emplace_back((*g)->u_g);
    }
    has_input_gate = inst.params.gate_input.has_value();
    has_state_gate = inst.params.gate_state.has_value();
    for (const auto& x : inst.xs) xs.emplace_back(std::span<const double>(x));
    for (const auto& h : inst.hs) hs.emplace_back(std::span<const double>(h));
    view = {&cell[0], &cell[1], &cell[2], &cell[3], &cell[4], &cell[5]};
    std::size_t g = 0;
    if (has_input_gate) {
      view.gi_b = &gates[g++];
      view.gi_u = &gates[g++];
    }
    if (has_state_gate) {
      view.gs_b = &gates[g++];
      view.gs_u = &gates[g++];
    }
  }

  std::vector<Mat<T>*> targets() {
    std::vector<Mat<T>*> out;
    for (auto& m : cell) out.push_back(&m);
    for (auto& m : gates) out.push_back(&m);
    for (std::size_t k = 0; k < xs.size(); ++k) {
      out.push_back(&xs[k]);
      out.push_back(&hs[k]);
    }
    return out;
  }

  T objective(CellKind kind, ComposeMode mode) const {
    std::vector<T> h;
    if (kind == CellKind::gru) {
      h = hs.front().v;
      for (const auto& x : xs) h = ref_gru(view, x.v, h);
    } else {
      std::vector<std::vector<T>> xv, hv;
      for (std::size_t k = 0; k < xs.size(); ++k) {
        xv.push_back(xs[k].v);
        hv.push_back(hs[k].v);
      }
      h = ref_cell(kind, mode, view, xv, hv);
    }
    T f = 0;
    for (std::size_t i = 0; i < h.size(); ++i) f += upstream.v[i] * h[i];
    return f;
  }
};

template <class T>
std::vector<Vector> cell_gradients(const CellCheckInstance& inst) {
  CellCopy<T> copy(inst);
  auto targets = copy.targets();
  return central_differences<T>(targets, [&]() { return copy.objective(inst.kind, inst.mode); });
}

// ---------------------------------------------------------------------------
// Whole model

template <class T>
struct ModelCopy {
  std::map<std::string, Mat<T>> t;
  std::vector<std::string> order;

  explicit ModelCopy(const ParameterStore& store) {
    for (const auto& nt : store.tensors()) {
      t.emplace(nt.name, Mat<T>(*nt.tensor));
      order.push_back(nt.name);
    }
  }
  const Mat<T>& at(const std::string& name) const { return t.at(name); }
  const Mat<T>* find(const std::string& name) const {
    const auto it = t.find(name);
    return it == t.end() ? nullptr : &it->second;
  }

  RefCell<T> side(const std::string& s) const {
    const std::string c = "enc." + s + ".cell.";
    RefCell<T> p{&at(c + "u"), &at(c + "u_r"), &at(c + "u_z"), &at(c + "w"), &at(c + "w_r"), &at(c + "w_z")};
    p.gi_u = find("enc." + s + ".gate_input.u");
    p.gi_b = find("enc." + s + ".gate_input.b");
    p.gs_u = find("enc." + s + ".gate_state.u");
    p.gs_b = find("enc." + s + ".gate_state.b");
    return p;
  }
};

template <class T>
std::vector<std::vector<T>> ref_direction(const WordLattice& lat, std::span<const TokenId> ids,
                                          const Mat<T>& emb, const RefCell<T>& p, CellKind kind,
                                          ComposeMode mode) {
  const std::size_t n = lat.length();
  const std::size_t d = p.u->rows;
  std::vector<std::vector<T>> states(n + 1, std::vector<T>(d, T(0)));
  for (std::size_t v = 1; v <= n; ++v) {
    std::vector<std::size_t> inc;
    for (std::size_t i = 0; i < lat.edges().size(); ++i) {
      if (lat.edges()[i].end == v) inc.push_back(i);
    }
    if (inc.empty()) continue;
    std::sort(inc.begin(), inc.end(),
              [&](std::size_t a, std::size_t b) { return lat.edges()[a].start < lat.edges()[b].start; });
    std::vector<std::vector<T>> xs, hs;
    for (std::size_t i : inc) {
      xs.push_back(emb.row(ids[i]));
      hs.push_back(states[lat.edges()[i].start]);
    }
    states[v] = ref_cell(kind, mode, p, xs, hs);
  }
  return states;
}

template <class T>
T ref_loss(const SourceInstance& src, std::span<const TokenId> target, const ModelCopy<T>& m,
           CellKind kind, ComposeMode mode) {
  const auto& emb = m.at("src_emb");
  const auto f = ref_direction(src.lattice, src.ids, emb, m.side("fwd"), kind, mode);
  const auto b = ref_direction(src.reversed, src.reversed_ids, emb, m.side("bwd"), kind, mode);
  const std::size_t n = src.lattice.length();
  std::vector<std::vector<T>> ann;
  for (std::size_t i = 1; i <= n; ++i) {
    auto a = f[i];
    a.insert(a.end(), b[n - i].begin(), b[n - i].end());
    ann.push_back(std::move(a));
  }
  auto s = m.at("dec.init.w").mul(b[n]);
  for (auto& v : s) v = r_tanh(v);

  const RefCell<T> dc{&m.at("dec.cell.u"), &m.at("dec.cell.u_r"), &m.at("dec.cell.u_z"),
                      &m.at("dec.cell.w"), &m.at("dec.cell.w_r"), &m.at("dec.cell.w_z")};
  const auto& v_a = m.at("dec.att.v_a").v;
  std::vector<std::vector<T>> keys;
  for (const auto& h : ann) keys.push_back(m.at("dec.att.u_a").mul(h));
  T loss = 0;
  TokenId prev = kBos;
  for (TokenId y : target) {
    const auto q = m.at("dec.att.w_a").mul(s);
    std::vector<T> scores(n);
    T top = 0;
    for (std::size_t i = 0; i < n; ++i) {
      T e = 0;
      for (std::size_t a = 0; a < q.size(); ++a) e += v_a[a] * r_tanh(q[a] + keys[i][a]);
      scores[i] = e;
      top = i == 0 ? e : std::max(top, e);
    }
    T z = 0;
    for (auto& e : scores) {
      e = r_exp(e - top);
      z += e;
    }
    std::vector<T> ctx(ann.front().size(), T(0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < ctx.size(); ++c) ctx[c] += scores[i] / z * ann[i][c];
    }
    auto input = m.at("dec.tgt_emb").row(prev);
    const auto emb_prev = input;
    input.insert(input.end(), ctx.begin(), ctx.end());
    s = ref_gru(dc, input, s);
    const auto ty = m.at("dec.out.w_y").mul(emb_prev);
    const auto ts = m.at("dec.out.w_s").mul(s);
    const auto tm = m.at("dec.out.w_m").mul(ctx);
    std::vector<T> hidden(ty.size());
    for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = r_tanh(ty[i] + ts[i] + tm[i]);
    const auto logits = m.at("dec.out.w_o").mul(hidden);
    T lt = logits[0];
    for (const auto& l : logits) lt = std::max(lt, l);
    T sum = 0;
    for (const auto& l : logits) sum += r_exp(l - lt);
    loss -= logits[y] - lt - r_log(sum);
    prev = y;
  }
  return loss;
}

template <class T>
std::vector<Vector> sequence_gradients(const SourceInstance& src, std::span<const TokenId> target,
                                       const ParameterStore& store) {
  ModelCopy<T> m(store);
  std::vector<Mat<T>*> targets;
  for (const auto& name : m.order) targets.push_back(&m.t.at(name));
  return central_differences<T>(
      targets, [&]() { return ref_loss(src, target, m, store.config.cell, store.config.compose); });
}

}  // namespace

std::vector<std::span<const double>> cell_check_entries(const CellCheckInstance& inst) {
  std::vector<std::span<const double>> out;
  const auto& c = inst.params.cell;
  for (const Matrix* m : {&c.u, &c.u_r, &c.u_z, &c.w, &c.w_r, &c.w_z}) out.push_back(m->values());
  for (const auto* g : {&inst.params.gate_input, &inst.params.gate_state}) {
    if (!*g) continue;
    out.push_back((*g)->b_g.values());
    out.push_back((*g)->u_g.values());
  }
  for (std::size_t k = 0; k < inst.xs.size(); ++k) {
    out.push_back(inst.xs[k]);
    out.push_back(inst.hs[k]);
  }
  return out;
}

std::vector<Vector> numeric_cell_gradients(const CellCheckInstance& inst, OraclePrecision precision) {
  return precision == OraclePrecision::binary128 ? cell_gradients<quad>(inst)
                                                 : cell_gradients<double>(inst);
}

double reference_cell_objective(const CellCheckInstance& inst) {
  return CellCopy<double>(inst).objective(inst.kind, inst.mode);
}

std::vector<Vector> numeric_sequence_gradients(const SourceInstance& src,
                                               std::span<const TokenId> target,
                                               const ParameterStore& store,
                                               OraclePrecision precision) {
  return precision == OraclePrecision::binary128 ? sequence_gradients<quad>(src, target, store)
                                                 : sequence_gradients<double>(src, target, store);
}

double reference_sequence_loss(const SourceInstance& src, std::span<const TokenId> target,
                               const ParameterStore& store) {
  return ref_loss(src, target, ModelCopy<double>(store), store.config.cell, store.config.compose);
}

}  // namespace latnmt
