#include "symca/mcr.hpp"

#include <algorithm>
#include <deque>
#include <sstream>
#include <unordered_map>

#include <boost/functional/hash.hpp>

namespace symca {

Int floor_div(const Int& a, const Int& n) {
  Int q = a / n;
  if ((a % n) != 0 && ((a < 0) != (n < 0))) q -= 1;
  return q;
}

Int floor_mod(const Int& a, const Int& n) { return a - n * floor_div(a, n); }

namespace {

// ---------------------------------------------------------------------------
// Binomial-basis polynomials.
//
// A normalized expression denotes an integer-valued polynomial in the loop
// counters; we represent it as a finite sum  sum_J c_J * prod_v C(s(v), J_v)
// over monomials J (variable -> degree). This basis makes the recurrence
// operations exact and trivial:
//   - the indefinite sum along i bumps i's degree by one,
//   - evaluating at i = 0 drops every monomial with positive i-degree,
//   - incrementing/decrementing i is an integer change of basis.
// ---------------------------------------------------------------------------

using Mono = std::vector<std::pair<LoopVar, uint32_t>>; // sorted by var name

struct MonoLess {
  bool operator()(const Mono& a, const Mono& b) const {
    size_t n = std::min(a.size(), b.size());
    for (size_t i = 0; i < n; ++i) {
      if (a[i].first->name != b[i].first->name)
        return a[i].first->name < b[i].first->name;
      if (a[i].second != b[i].second) return a[i].second < b[i].second;
    }
    return a.size() < b.size();
  }
};

using Poly = std::map<Mono, Int, MonoLess>;

void padd_term(Poly& p, const Mono& m, const Int& c) {
  if (c == 0) return;
  auto it = p.find(m);
  if (it == p.end()) {
    p.emplace(m, c);
  } else {
    it->second += c;
    if (it->second == 0) p.erase(it);
  }
}

Poly padd(const Poly& a, const Poly& b) {
  Poly r = a;
  for (auto& [m, c] : b) padd_term(r, m, c);
  return r;
}

Poly psub(const Poly& a, const Poly& b) {
  Poly r = a;
  for (auto& [m, c] : b) padd_term(r, m, -c);
  return r;
}

Int binom(const Int& n, uint32_t k) {
  Int acc = 1;
  for (uint32_t t = 1; t <= k; ++t) {
    acc *= (n - t + 1);
    acc /= t; // exact: acc is C(n, t) after each step
  }
  return acc;
}

// C(n,a)*C(n,b) = sum_{c=max(a,b)}^{a+b} C(c,a)*C(a,a+b-c) * C(n,c)
void mono_var_product(uint32_t a, uint32_t b,
                      std::vector<std::pair<uint32_t, Int>>& out) {
  out.clear();
  for (uint32_t c = std::max(a, b); c <= a + b; ++c)
    out.emplace_back(c, binom(Int(c), a) * binom(Int(a), a + b - c));
}

Poly pmul(const Poly& a, const Poly& b) {
  Poly r;
  std::vector<std::pair<uint32_t, Int>> expand;
  for (auto& [ma, ca] : a) {
    for (auto& [mb, cb] : b) {
      // merge the two monomials, expanding shared variables
      std::vector<std::pair<Mono, Int>> partial{{Mono{}, ca * cb}};
      size_t ia = 0, ib = 0;
      auto push_factor = [&](LoopVar v, uint32_t d) {
        for (auto& [m, c] : partial) m.emplace_back(v, d);
      };
      while (ia < ma.size() || ib < mb.size()) {
        if (ib == mb.size() ||
            (ia < ma.size() && ma[ia].first->name < mb[ib].first->name)) {
          push_factor(ma[ia].first, ma[ia].second);
          ++ia;
        } else if (ia == ma.size() || mb[ib].first->name < ma[ia].first->name) {
          push_factor(mb[ib].first, mb[ib].second);
          ++ib;
        } else {
          LoopVar v = ma[ia].first;
          mono_var_product(ma[ia].second, mb[ib].second, expand);
          std::vector<std::pair<Mono, Int>> next;
          next.reserve(partial.size() * expand.size());
          for (auto& [m, c] : partial) {
            for (auto& [deg, w] : expand) {
              Mono m2 = m;
              m2.emplace_back(v, deg);
              next.emplace_back(std::move(m2), c * w);
            }
          }
          partial = std::move(next);
          ++ia;
          ++ib;
        }
      }
      for (auto& [m, c] : partial) padd_term(r, m, c);
    }
  }
  return r;
}

uint32_t mono_degree(const Mono& m, LoopVar v) {
  for (auto& [var, d] : m)
    if (var == v) return d;
  return 0;
}

Mono mono_with_degree(const Mono& m, LoopVar v, uint32_t d) {
  Mono r;
  r.reserve(m.size() + 1);
  bool placed = false;
  for (auto& [var, deg] : m) {
    if (var == v) continue;
    if (!placed && v->name < var->name) {
      if (d > 0) r.emplace_back(v, d);
      placed = true;
    }
    r.emplace_back(var, deg);
  }
  if (!placed && d > 0) r.emplace_back(v, d);
  return r;
}

// sum_{k=0}^{n-1} C(k,d) = C(n,d+1): bump the degree of i in every monomial.
Poly psum_along(const Poly& p, LoopVar i) {
  Poly r;
  for (auto& [m, c] : p)
    padd_term(r, mono_with_degree(m, i, mono_degree(m, i) + 1), c);
  return r;
}

// W(m) = V(m-1) via C(m-1,j) = sum_{t<=j} (-1)^(j-t) C(m,t)
Poly pshift(const Poly& p, LoopVar i) {
  Poly r;
  for (auto& [m, c] : p) {
    uint32_t j = mono_degree(m, i);
    if (j == 0) {
      padd_term(r, m, c);
      continue;
    }
    for (uint32_t t = 0; t <= j; ++t)
      padd_term(r, mono_with_degree(m, i, t), ((j - t) % 2 == 0) ? c : -c);
  }
  return r;
}

// W(m) = V(m+1) via C(m+1,j) = C(m,j) + C(m,j-1)
Poly pshift_back(const Poly& p, LoopVar i) {
  Poly r;
  for (auto& [m, c] : p) {
    uint32_t j = mono_degree(m, i);
    padd_term(r, m, c);
    if (j > 0) padd_term(r, mono_with_degree(m, i, j - 1), c);
  }
  return r;
}

Poly pinit(const Poly& p, LoopVar i) {
  Poly r;
  for (auto& [m, c] : p)
    if (mono_degree(m, i) == 0) padd_term(r, m, c);
  return r;
}

Int peval(const Poly& p, const Env& sigma) {
  Int acc = 0;
  for (auto& [m, c] : p) {
    Int term = c;
    for (auto& [v, d] : m) term *= binom(Int(sigma.get(v)), d);
    acc += term;
  }
  return acc;
}

} // namespace

// ---------------------------------------------------------------------------
// Interning context
// ---------------------------------------------------------------------------

namespace {

struct BinKey {
  uint8_t op;
  uint64_t l, r;
  bool operator==(const BinKey&) const = default;
};
struct BinKeyHash {
  size_t operator()(const BinKey& k) const {
    size_t h = k.op;
    boost::hash_combine(h, k.l);
    boost::hash_combine(h, k.r);
    return h;
  }
};
struct RecKey {
  uint64_t start, step;
  uint32_t var;
  bool operator==(const RecKey&) const = default;
};
struct RecKeyHash {
  size_t operator()(const RecKey& k) const {
    size_t h = k.var;
    boost::hash_combine(h, k.start);
    boost::hash_combine(h, k.step);
    return h;
  }
};
struct IntHash {
  size_t operator()(const Int& v) const { return boost::hash<Int>{}(v); }
};
struct OpVarKey {
  const McrNode* e;
  LoopVar v;
  bool operator==(const OpVarKey&) const = default;
};
struct OpVarKeyHash {
  size_t operator()(const OpVarKey& k) const {
    size_t h = std::hash<const void*>{}(k.e);
    boost::hash_combine(h, std::hash<const void*>{}(k.v));
    return h;
  }
};
struct SubstKey {
  const McrNode* e;
  LoopVar v;
  const McrNode* expr;
  bool operator==(const SubstKey&) const = default;
};
struct SubstKeyHash {
  size_t operator()(const SubstKey& k) const {
    size_t h = std::hash<const void*>{}(k.e);
    boost::hash_combine(h, std::hash<const void*>{}(k.v));
    boost::hash_combine(h, std::hash<const void*>{}(k.expr));
    return h;
  }
};

} // namespace

struct McrContext::Impl {
  std::deque<LoopVarInfo> var_storage;
  std::unordered_map<std::string, LoopVar> vars;

  std::deque<McrNode> nodes;
  std::unordered_map<Int, Mcr, IntHash> consts;
  std::unordered_map<BinKey, Mcr, BinKeyHash> binops;
  std::unordered_map<RecKey, Mcr, RecKeyHash> addrecs;

  std::unordered_map<Mcr, Poly> poly;
  std::unordered_map<Mcr, Mcr> norm;
  std::unordered_map<Mcr, std::vector<LoopVar>> vars_of;
  std::unordered_map<OpVarKey, Mcr, OpVarKeyHash> init_memo;
  std::unordered_map<OpVarKey, Mcr, OpVarKeyHash> shift_memo;
  std::unordered_map<OpVarKey, Mcr, OpVarKeyHash> shift_back_memo;
  std::unordered_map<SubstKey, std::optional<Mcr>, SubstKeyHash> subst_memo;

  const Poly& poly_of(McrContext& ctx, Mcr e);
  Mcr canon(McrContext& ctx, const Poly& p);
};

McrContext::McrContext() : impl_(std::make_unique<Impl>()) {}
McrContext::~McrContext() = default;

LoopVar McrContext::var(std::string_view name) {
  auto it = impl_->vars.find(std::string(name));
  if (it != impl_->vars.end()) return it->second;
  impl_->var_storage.push_back(
      LoopVarInfo{std::string(name), uint32_t(impl_->var_storage.size())});
  LoopVar v = &impl_->var_storage.back();
  impl_->vars.emplace(v->name, v);
  return v;
}

LoopVar McrContext::find_var(std::string_view name) const {
  auto it = impl_->vars.find(std::string(name));
  return it == impl_->vars.end() ? nullptr : it->second;
}

Mcr McrContext::constant(Int v) {
  auto it = impl_->consts.find(v);
  if (it != impl_->consts.end()) return it->second;
  impl_->nodes.push_back(McrNode{});
  McrNode& n = impl_->nodes.back();
  n.kind = McrKind::Constant;
  n.uid = next_uid_++;
  n.value = std::move(v);
  impl_->consts.emplace(n.value, &n);
  return &n;
}

Mcr McrContext::binop(McrKind op, Mcr a, Mcr b) {
  if (op != McrKind::Add && op != McrKind::Sub && op != McrKind::Mul)
    throw std::invalid_argument("binop: operator must be +, - or *");
  BinKey key{uint8_t(op), a->uid, b->uid};
  auto it = impl_->binops.find(key);
  if (it != impl_->binops.end()) return it->second;
  impl_->nodes.push_back(McrNode{});
  McrNode& n = impl_->nodes.back();
  n.kind = op;
  n.uid = next_uid_++;
  n.lhs = a;
  n.rhs = b;
  impl_->binops.emplace(key, &n);
  return &n;
}

Mcr McrContext::addrec(Mcr start, Mcr step, LoopVar i) {
  if (mentions(start, i))
    throw std::invalid_argument("addrec: start of {start,+,step}_" + i->name +
                                " mentions " + i->name);
  RecKey key{start->uid, step->uid, i->index};
  auto it = impl_->addrecs.find(key);
  if (it != impl_->addrecs.end()) return it->second;
  impl_->nodes.push_back(McrNode{});
  McrNode& n = impl_->nodes.back();
  n.kind = McrKind::AddRec;
  n.uid = next_uid_++;
  n.start = start;
  n.step = step;
  n.loop = i;
  impl_->addrecs.emplace(key, &n);
  return &n;
}

const std::vector<LoopVar>& McrContext::vars_of(Mcr e) {
  auto it = impl_->vars_of.find(e);
  if (it != impl_->vars_of.end()) return it->second;
  std::vector<LoopVar> vs;
  switch (e->kind) {
  case McrKind::Constant:
    break;
  case McrKind::Add:
  case McrKind::Sub:
  case McrKind::Mul: {
    vs = vars_of(e->lhs);
    for (LoopVar v : vars_of(e->rhs)) vs.push_back(v);
    break;
  }
  case McrKind::AddRec: {
    vs = vars_of(e->start);
    for (LoopVar v : vars_of(e->step)) vs.push_back(v);
    vs.push_back(e->loop);
    break;
  }
  }
  std::sort(vs.begin(), vs.end(), ByName{});
  vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
  return impl_->vars_of.emplace(e, std::move(vs)).first->second;
}

bool McrContext::mentions(Mcr e, LoopVar i) {
  const auto& vs = vars_of(e);
  return std::binary_search(vs.begin(), vs.end(), i, ByName{});
}

const Poly& McrContext::Impl::poly_of(McrContext& ctx, Mcr e) {
  auto it = poly.find(e);
  if (it != poly.end()) return it->second;
  Poly p;
  switch (e->kind) {
  case McrKind::Constant:
    padd_term(p, Mono{}, e->value);
    break;
  case McrKind::Add:
    p = padd(poly_of(ctx, e->lhs), poly_of(ctx, e->rhs));
    break;
  case McrKind::Sub:
    p = psub(poly_of(ctx, e->lhs), poly_of(ctx, e->rhs));
    break;
  case McrKind::Mul:
    p = pmul(poly_of(ctx, e->lhs), poly_of(ctx, e->rhs));
    break;
  case McrKind::AddRec:
    p = padd(poly_of(ctx, e->start), psum_along(poly_of(ctx, e->step), e->loop));
    break;
  }
  return poly.emplace(e, std::move(p)).first->second;
}

Mcr McrContext::Impl::canon(McrContext& ctx, const Poly& p) {
  if (p.empty()) return ctx.constant(0);
  // largest variable by name becomes the outermost recurrence
  LoopVar outer = nullptr;
  uint32_t maxdeg = 0;
  for (auto& [m, c] : p) {
    for (auto& [v, d] : m) {
      if (outer == nullptr || outer->name < v->name) {
        outer = v;
        maxdeg = d;
      } else if (v == outer) {
        maxdeg = std::max(maxdeg, d);
      }
    }
  }
  if (outer == nullptr) return ctx.constant(p.begin()->second);
  std::vector<Poly> coeff(maxdeg + 1);
  for (auto& [m, c] : p)
    padd_term(coeff[mono_degree(m, outer)], mono_with_degree(m, outer, 0), c);
  Mcr chain = canon(ctx, coeff[maxdeg]);
  for (uint32_t d = maxdeg; d-- > 0;)
    chain = ctx.addrec(canon(ctx, coeff[d]), chain, outer);
  return chain;
}

Mcr McrContext::normalize(Mcr e) {
  auto it = impl_->norm.find(e);
  if (it != impl_->norm.end()) return it->second;
  Mcr r = impl_->canon(*this, impl_->poly_of(*this, e));
  impl_->norm.emplace(e, r);
  impl_->norm.emplace(r, r); // canonical forms are fixed points
  return r;
}

Int McrContext::eval(Mcr e, const Env& sigma) {
  return peval(impl_->poly_of(*this, e), sigma);
}

namespace {

Mcr init_raw(McrContext& ctx, Mcr e, LoopVar i) {
  switch (e->kind) {
  case McrKind::Constant:
    return e;
  case McrKind::Add:
  case McrKind::Sub:
  case McrKind::Mul:
    return ctx.binop(e->kind, init_raw(ctx, e->lhs, i), init_raw(ctx, e->rhs, i));
  case McrKind::AddRec:
    if (e->loop == i) return e->start;
    return ctx.addrec(init_raw(ctx, e->start, i), init_raw(ctx, e->step, i),
                      e->loop);
  }
  throw std::logic_error("unreachable");
}

Mcr shift_raw(McrContext& ctx, Mcr e, LoopVar i) {
  switch (e->kind) {
  case McrKind::Constant:
    return e;
  case McrKind::Add:
  case McrKind::Sub:
  case McrKind::Mul:
    return ctx.binop(e->kind, shift_raw(ctx, e->lhs, i),
                     shift_raw(ctx, e->rhs, i));
  case McrKind::AddRec: {
    Mcr step = shift_raw(ctx, e->step, i);
    if (e->loop == i) {
      Mcr start = ctx.sub(e->start, init_raw(ctx, step, i));
      return ctx.addrec(ctx.normalize(start), ctx.normalize(step), i);
    }
    return ctx.addrec(ctx.normalize(shift_raw(ctx, e->start, i)),
                      ctx.normalize(step), e->loop);
  }
  }
  throw std::logic_error("unreachable");
}

std::optional<Mcr> subst_raw(McrContext& ctx, Mcr e, LoopVar i, Mcr expr) {
  switch (e->kind) {
  case McrKind::Constant:
    return e;
  case McrKind::Add:
  case McrKind::Sub:
  case McrKind::Mul: {
    auto s1 = subst_raw(ctx, e->lhs, i, expr);
    if (!s1) return std::nullopt;
    auto s2 = subst_raw(ctx, e->rhs, i, expr);
    if (!s2) return std::nullopt;
    return ctx.binop(e->kind, *s1, *s2);
  }
  case McrKind::AddRec: {
    if (e->loop != i) {
      auto s1 = subst_raw(ctx, e->start, i, expr);
      if (!s1) return std::nullopt;
      auto s2 = subst_raw(ctx, e->step, i, expr);
      if (!s2) return std::nullopt;
      // The rebuilt start may pick up variables of expr, including this
      // recurrence's own variable; the heuristic fails there.
      if (ctx.mentions(*s1, e->loop)) return std::nullopt;
      return ctx.addrec(*s1, *s2, e->loop);
    }
    if (ctx.mentions(ctx.normalize(e->step), i)) return std::nullopt;
    return ctx.add(e->start, ctx.mul(e->step, expr));
  }
  }
  throw std::logic_error("unreachable");
}

} // namespace

Mcr McrContext::init(Mcr e, LoopVar i) {
  OpVarKey key{e, i};
  auto it = impl_->init_memo.find(key);
  if (it != impl_->init_memo.end()) return it->second;
  Mcr r = normalize(init_raw(*this, e, i));
  impl_->init_memo.emplace(key, r);
  return r;
}

Mcr McrContext::shift(Mcr e, LoopVar i) {
  OpVarKey key{e, i};
  auto it = impl_->shift_memo.find(key);
  if (it != impl_->shift_memo.end()) return it->second;
  Mcr r = normalize(shift_raw(*this, e, i));
  impl_->shift_memo.emplace(key, r);
  return r;
}

Mcr McrContext::shift_back(Mcr e, LoopVar i) {
  OpVarKey key{e, i};
  auto it = impl_->shift_back_memo.find(key);
  if (it != impl_->shift_back_memo.end()) return it->second;
  Mcr r = impl_->canon(*this, pshift_back(impl_->poly_of(*this, e), i));
  impl_->shift_back_memo.emplace(key, r);
  return r;
}

std::optional<Mcr> McrContext::subst(Mcr e, LoopVar i, Mcr expr) {
  if (mentions(expr, i))
    throw std::invalid_argument("subst: replacement for " + i->name +
                                " mentions " + i->name);
  SubstKey key{e, i, expr};
  auto it = impl_->subst_memo.find(key);
  if (it != impl_->subst_memo.end()) return it->second;
  std::optional<Mcr> r = subst_raw(*this, normalize(e), i, expr);
  if (r) r = normalize(*r);
  impl_->subst_memo.emplace(key, r);
  return r;
}

std::optional<Int> McrContext::const_diff(Mcr e1, Mcr e2) {
  Poly d = psub(impl_->poly_of(*this, e1), impl_->poly_of(*this, e2));
  if (d.empty()) return Int(0);
  if (d.size() == 1 && d.begin()->first.empty()) return d.begin()->second;
  return std::nullopt;
}

std::optional<Int> McrContext::const_mod(Mcr e, const Int& m) {
  const Poly& p = impl_->poly_of(*this, e);
  Int base = 0;
  for (auto& [mono, c] : p) {
    if (mono.empty())
      base = c;
    else if (floor_mod(c, m) != 0)
      return std::nullopt;
  }
  return floor_mod(base, m);
}

std::string McrContext::to_string(Mcr e) const {
  std::ostringstream os;
  switch (e->kind) {
  case McrKind::Constant:
    os << e->value;
    break;
  case McrKind::Add:
    os << "(" << to_string(e->lhs) << " + " << to_string(e->rhs) << ")";
    break;
  case McrKind::Sub:
    os << "(" << to_string(e->lhs) << " - " << to_string(e->rhs) << ")";
    break;
  case McrKind::Mul:
    os << "(" << to_string(e->lhs) << " * " << to_string(e->rhs) << ")";
    break;
  case McrKind::AddRec:
    os << "{" << to_string(e->start) << ",+," << to_string(e->step) << "}_"
       << e->loop->name;
    break;
  }
  return os.str();
}

} // namespace symca
