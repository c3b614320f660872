#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace rwfn {

// A real value in [0, 1]. Construction from an out-of-range or NaN value throws.
class TruthDegree {
 public:
  constexpr TruthDegree() = default;
  explicit TruthDegree(double value);

  constexpr double value() const noexcept { return value_; }

  friend auto operator<=>(const TruthDegree&, const TruthDegree&) = default;

 private:
  double value_ = 0.0;
};

enum class Connective { negation, conjunction, disjunction, implication };

std::size_t arity(Connective kind);

// Lukasiewicz connectives on raw doubles. Inputs are assumed to be in [0, 1].
namespace lukasiewicz {

inline double negation(double a) { return 1.0 - a; }
double conjunction(double a, double b);
double disjunction(double a, double b);
double implication(double a, double b);

// Partial derivatives of a binary connective. At kinks the non-constant
// linear piece is used.
std::array<double, 2> partials(Connective kind, double a, double b);

}  // namespace lukasiewicz

TruthDegree eval_connective(Connective kind, std::span<const TruthDegree> operands);

using PredicateId = std::uint32_t;

// Predicate applied to a tuple of terms. In ground formulas the terms are
// constant ids; in constraint templates they are variable indices.
struct Atom {
  PredicateId predicate = 0;
  std::vector<std::uint32_t> args;

  friend auto operator<=>(const Atom&, const Atom&) = default;
};

class Formula {
 public:
  enum class Kind { atom, negation, conjunction, disjunction, implication };

  static Formula make_atom(Atom atom);
  static Formula make_not(Formula child);
  static Formula make_and(Formula left, Formula right);
  static Formula make_or(Formula left, Formula right);
  static Formula make_implies(Formula left, Formula right);

  Kind kind() const noexcept { return kind_; }
  const Atom& atom() const;
  const std::vector<Formula>& children() const noexcept { return children_; }

  // Applies fn to every atom, left to right.
  void for_each_atom(const std::function<void(const Atom&)>& fn) const;
  // Returns a copy with every atom's terms rewritten through map_term.
  Formula map_terms(const std::function<std::uint32_t(std::uint32_t)>& map_term) const;

  friend bool operator==(const Formula&, const Formula&) = default;

 private:
  Formula(Kind kind, Atom atom, std::vector<Formula> children)
      : kind_(kind), atom_(std::move(atom)), children_(std::move(children)) {}

  Kind kind_ = Kind::atom;
  Atom atom_;
  std::vector<Formula> children_;
};

Connective to_connective(Formula::Kind kind);

using AtomDegrees = std::map<Atom, TruthDegree>;

TruthDegree eval_formula(const Formula& formula, const AtomDegrees& degrees);

inline constexpr double kDefaultMeanClamp = 1e-12;

// ((1/N) sum max(d_i, eps)^p)^(1/p); p = 0 is the geometric-mean limit.
TruthDegree generalized_mean(std::span<const TruthDegree> degrees, int p,
                             double epsilon = kDefaultMeanClamp);

// Raw-double variant used by training. When gradient is non-empty it receives
// d(mean)/d(degree_i); clamped entries get zero.
double generalized_mean(std::span<const double> degrees, int p, double epsilon,
                        std::span<double> gradient);

}  // namespace rwfn
