// mcr.hpp
//
// Multivariate chains of recurrences: the expression language used for
// symbolic addresses and loop bounds. Expressions are built from integer
// constants, +/-/* and add recurrences {start,+,step}_i, where i is a loop
// variable counting back-edge traversals since the loop was last entered.
//
// All expressions are interned in an McrContext (one per analysis session);
// structurally equal expressions share a node, so equality is pointer
// equality and derived operations can be memoized per node.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace symca {

using Int = boost::multiprecision::cpp_int;

class McrContext;

struct LoopVarInfo {
  std::string name;
  uint32_t index; // creation order within the owning context
};

/// Loop variables are interned; two are equal iff their names are equal.
using LoopVar = const LoopVarInfo*;

struct ByName {
  bool operator()(LoopVar a, LoopVar b) const { return a->name < b->name; }
};

enum class McrKind : uint8_t { Constant, Add, Sub, Mul, AddRec };

class McrNode {
public:
  McrKind kind;
  uint64_t uid; // intern sequence number, stable within a context

  Int value;                 // Constant
  const McrNode* lhs = nullptr; // Add/Sub/Mul
  const McrNode* rhs = nullptr;
  const McrNode* start = nullptr; // AddRec; never mentions `loop`
  const McrNode* step = nullptr;
  LoopVar loop = nullptr;

private:
  friend class McrContext;
  McrNode() = default;
};

/// Interned expression handle. Owned by an McrContext; compare with ==.
using Mcr = const McrNode*;

/// Environment sigma mapping loop variables to iteration counts.
/// Unbound variables read as 0, so environments over a subset of the
/// variables are usable as the all-zeros initial state.
class Env {
public:
  uint64_t get(LoopVar v) const {
    auto it = vals_.find(v);
    return it == vals_.end() ? 0 : it->second;
  }
  void set(LoopVar v, uint64_t x) { vals_[v] = x; }
  Env with(LoopVar v, uint64_t x) const {
    Env e = *this;
    e.set(v, x);
    return e;
  }
  const std::map<LoopVar, uint64_t, ByName>& values() const { return vals_; }

  bool operator==(const Env& o) const { return vals_ == o.vals_; }
  bool operator<(const Env& o) const { return vals_ < o.vals_; }

private:
  std::map<LoopVar, uint64_t, ByName> vals_;
};

namespace detail {
struct PolyStore; // binomial-basis polynomial cache, private to mcr.cpp
}

/// Owns and interns every expression of one analysis session, together with
/// the memo tables for the derived operations. Single-threaded; the nodes it
/// hands out are immutable and may be read from anywhere.
class McrContext {
public:
  McrContext();
  ~McrContext();
  McrContext(const McrContext&) = delete;
  McrContext& operator=(const McrContext&) = delete;

  LoopVar var(std::string_view name);
  /// Looks a variable up without creating it.
  LoopVar find_var(std::string_view name) const;

  Mcr constant(Int v);
  Mcr binop(McrKind op, Mcr a, Mcr b);
  Mcr add(Mcr a, Mcr b) { return binop(McrKind::Add, a, b); }
  Mcr sub(Mcr a, Mcr b) { return binop(McrKind::Sub, a, b); }
  Mcr mul(Mcr a, Mcr b) { return binop(McrKind::Mul, a, b); }
  /// Throws std::invalid_argument if `start` mentions `i`.
  Mcr addrec(Mcr start, Mcr step, LoopVar i);

  /// Loop variables occurring in e as add-recurrence subscripts,
  /// sorted by name.
  const std::vector<LoopVar>& vars_of(Mcr e);
  bool mentions(Mcr e, LoopVar i);

  /// Value of e under sigma. Total; arbitrary precision.
  Int eval(Mcr e, const Env& sigma);

  /// Canonical form: constants folded, sums/products combined, one pure
  /// nested add recurrence per variable, outermost variable largest by name.
  /// Idempotent and evaluation-preserving; normalized nodes are fixed points.
  Mcr normalize(Mcr e);

  /// eval(init(e,i), s) == eval(e, s[i->0]); result normalized.
  Mcr init(Mcr e, LoopVar i);

  /// eval(shift(e,i), s[i->s(i)+1]) == eval(e, s); result normalized.
  /// Bijective on normalized expressions for fixed i.
  Mcr shift(Mcr e, LoopVar i);

  /// Inverse of shift on normalized expressions.
  Mcr shift_back(Mcr e, LoopVar i);

  /// eval(subst(e,i,expr), s) == eval(e, s[i -> eval(expr,s)]) whenever the
  /// substitution succeeds; nullopt is the distinguished failure outcome.
  /// Throws std::invalid_argument if expr mentions i (caller bug).
  std::optional<Mcr> subst(Mcr e, LoopVar i, Mcr expr);

  /// n such that e1 - e2 evaluates to n under every environment, or nullopt.
  std::optional<Int> const_diff(Mcr e1, Mcr e2);

  /// Residue r with 0 <= r < m such that eval(e, s) is congruent to r mod m
  /// for every environment, or nullopt when the residue varies.
  std::optional<Int> const_mod(Mcr e, const Int& m);

  /// "{4096,+,4}_i" style rendering for diagnostics and tests.
  std::string to_string(Mcr e) const;

  uint64_t node_count() const { return next_uid_; }

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  uint64_t next_uid_ = 0;
};

/// Floored division and modulo: fmod(a,n) is in [0,n) for n > 0.
Int floor_div(const Int& a, const Int& n);
Int floor_mod(const Int& a, const Int& n);

} // namespace symca
