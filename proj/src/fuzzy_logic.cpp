#include "rwfn/fuzzy_logic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rwfn/error.hpp"

namespace rwfn {

TruthDegree::TruthDegree(double value) : value_(value) {
  require(value >= 0.0 && value <= 1.0, ErrorKind::invalid_argument,
          "truth degree out of [0,1]: " + std::to_string(value));
}

std::size_t arity(Connective kind) { return kind == Connective::negation ? 1 : 2; }

namespace lukasiewicz {

double conjunction(double a, double b) { return std::max(0.0, a + b - 1.0); }
double disjunction(double a, double b) { return std::min(1.0, a + b); }
double implication(double a, double b) { return std::min(1.0, 1.0 - a + b); }

std::array<double, 2> partials(Connective kind, double a, double b) {
  switch (kind) {
    case Connective::negation: return {-1.0, 0.0};
    case Connective::conjunction:
      return a + b - 1.0 >= 0.0 ? std::array{1.0, 1.0} : std::array{0.0, 0.0};
    case Connective::disjunction:
      return a + b <= 1.0 ? std::array{1.0, 1.0} : std::array{0.0, 0.0};
    case Connective::implication:
      return 1.0 - a + b <= 1.0 ? std::array{-1.0, 1.0} : std::array{0.0, 0.0};
  }
  return {0.0, 0.0};
}

}  // namespace lukasiewicz

TruthDegree eval_connective(Connective kind, std::span<const TruthDegree> operands) {
  require(operands.size() == arity(kind), ErrorKind::invalid_argument,
          "connective expects " + std::to_string(arity(kind)) + " operands, got " +
              std::to_string(operands.size()));
  const double a = operands[0].value();
  switch (kind) {
    case Connective::negation: return TruthDegree(lukasiewicz::negation(a));
    case Connective::conjunction: return TruthDegree(lukasiewicz::conjunction(a, operands[1].value()));
    case Connective::disjunction: return TruthDegree(lukasiewicz::disjunction(a, operands[1].value()));
    case Connective::implication: return TruthDegree(lukasiewicz::implication(a, operands[1].value()));
  }
  return TruthDegree(0.0);
}

Formula Formula::make_atom(Atom atom) { return Formula(Kind::atom, std::move(atom), {}); }

Formula Formula::make_not(Formula child) {
  std::vector<Formula> children;
  children.push_back(std::move(child));
  return Formula(Kind::negation, {}, std::move(children));
}

Formula Formula::make_and(Formula left, Formula right) {
  std::vector<Formula> children;
  children.push_back(std::move(left));
  children.push_back(std::move(right));
  return Formula(Kind::conjunction, {}, std::move(children));
}

Formula Formula::make_or(Formula left, Formula right) {
  std::vector<Formula> children;
  children.push_back(std::move(left));
  children.push_back(std::move(right));
  return Formula(Kind::disjunction, {}, std::move(children));
}

Formula Formula::make_implies(Formula left, Formula right) {
  std::vector<Formula> children;
  children.push_back(std::move(left));
  children.push_back(std::move(right));
  return Formula(Kind::implication, {}, std::move(children));
}

const Atom& Formula::atom() const {
  require(kind_ == Kind::atom, ErrorKind::invalid_argument, "formula node is not an atom");
  return atom_;
}

void Formula::for_each_atom(const std::function<void(const Atom&)>& fn) const {
  if (kind_ == Kind::atom) {
    fn(atom_);
    return;
  }
  for (const auto& child : children_) child.for_each_atom(fn);
}

Formula Formula::map_terms(const std::function<std::uint32_t(std::uint32_t)>& map_term) const {
  if (kind_ == Kind::atom) {
    Atom mapped{atom_.predicate, {}};
    mapped.args.reserve(atom_.args.size());
    for (auto t : atom_.args) mapped.args.push_back(map_term(t));
    return make_atom(std::move(mapped));
  }
  std::vector<Formula> children;
  children.reserve(children_.size());
  for (const auto& child : children_) children.push_back(child.map_terms(map_term));
  return Formula(kind_, {}, std::move(children));
}

Connective to_connective(Formula::Kind kind) {
  switch (kind) {
    case Formula::Kind::negation: return Connective::negation;
    case Formula::Kind::conjunction: return Connective::conjunction;
    case Formula::Kind::disjunction: return Connective::disjunction;
    case Formula::Kind::implication: return Connective::implication;
    case Formula::Kind::atom: break;
  }
  fail(ErrorKind::invalid_argument, "atom node has no connective");
}

TruthDegree eval_formula(const Formula& formula, const AtomDegrees& degrees) {
  if (formula.kind() == Formula::Kind::atom) {
    const auto it = degrees.find(formula.atom());
    if (it == degrees.end()) {
      fail(ErrorKind::lookup,
           "no truth degree supplied for atom with predicate " +
               std::to_string(formula.atom().predicate));
    }
    return it->second;
  }
  std::vector<TruthDegree> operands;
  operands.reserve(formula.children().size());
  for (const auto& child : formula.children()) operands.push_back(eval_formula(child, degrees));
  return eval_connective(to_connective(formula.kind()), operands);
}

double generalized_mean(std::span<const double> degrees, int p, double epsilon,
                        std::span<double> gradient) {
  require(!degrees.empty(), ErrorKind::invalid_argument, "generalized_mean of an empty list");
  require(epsilon > 0.0, ErrorKind::invalid_argument, "generalized_mean: epsilon must be positive");
  require(gradient.empty() || gradient.size() == degrees.size(), ErrorKind::invalid_argument,
          "generalized_mean: gradient size mismatch");
  const double n = static_cast<double>(degrees.size());

  if (p == 0) {
    double log_sum = 0.0;
    for (double d : degrees) log_sum += std::log(std::max(d, epsilon));
    const double mean = std::exp(log_sum / n);
    for (std::size_t i = 0; i < gradient.size(); ++i) {
      gradient[i] = degrees[i] > epsilon ? mean / (n * degrees[i]) : 0.0;
    }
    return mean;
  }

  double power_sum = 0.0;
  for (double d : degrees) power_sum += std::pow(std::max(d, epsilon), p);
  const double mean = std::pow(power_sum / n, 1.0 / p);
  if (!gradient.empty()) {
    // d mean / d x_i = (1/N) mean^(1-p) x_i^(p-1)
    const double scale = std::pow(mean, 1.0 - p) / n;
    for (std::size_t i = 0; i < gradient.size(); ++i) {
      gradient[i] = degrees[i] > epsilon ? scale * std::pow(degrees[i], p - 1) : 0.0;
    }
  }
  return mean;
}

TruthDegree generalized_mean(std::span<const TruthDegree> degrees, int p, double epsilon) {
  std::vector<double> raw;
  raw.reserve(degrees.size());
  for (auto d : degrees) raw.push_back(d.value());
  const double mean = generalized_mean(raw, p, epsilon, {});
  // pow round-off can push the mean of all-ones a hair outside [0, 1].
  return TruthDegree(std::clamp(mean, 0.0, 1.0));
}

}  // namespace rwfn
