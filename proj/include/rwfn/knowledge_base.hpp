#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rwfn/fuzzy_logic.hpp"
#include "rwfn/numeric.hpp"
#include "rwfn/scene_data.hpp"

namespace rwfn {

struct BoxRef {
  std::uint32_t scene = 0;
  std::uint32_t box = 0;

  friend auto operator<=>(const BoxRef&, const BoxRef&) = default;
};

using ConstantId = std::uint32_t;

// Predicates P = P1 (unary, ids [0, |P1|)) followed by P2 (binary), plus the
// constants C: one per bounding box, numbered scene by scene.
class Signature {
 public:
  Signature() = default;
  Signature(std::vector<std::string> unary, std::vector<std::string> binary);

  static Signature from_dataset(const Dataset& dataset, bool with_constants = true);

  void add_constants(const std::vector<SceneAnnotation>& scenes);

  std::size_t unary_count() const { return unary_.size(); }
  std::size_t binary_count() const { return binary_.size(); }
  std::size_t predicate_count() const { return unary_.size() + binary_.size(); }

  PredicateId unary_id(std::uint32_t class_index) const;
  PredicateId binary_id(std::uint32_t relation_index) const;
  std::size_t arity(PredicateId id) const;
  const std::string& name(PredicateId id) const;
  std::optional<PredicateId> find(std::string_view name) const;
  // Index into P1 or P2 of the given predicate.
  std::uint32_t local_index(PredicateId id) const;

  const std::vector<std::string>& unary_names() const { return unary_; }
  const std::vector<std::string>& binary_names() const { return binary_; }
  bool same_predicates(const Signature& other) const {
    return unary_ == other.unary_ && binary_ == other.binary_;
  }

  const std::vector<BoxRef>& constants() const { return constants_; }
  std::size_t scene_count() const { return scene_offsets_.empty() ? 0 : scene_offsets_.size() - 1; }
  std::size_t box_count(std::uint32_t scene) const;
  ConstantId constant(std::uint32_t scene, std::uint32_t box) const;

 private:
  std::vector<std::string> unary_;
  std::vector<std::string> binary_;
  std::vector<BoxRef> constants_;
  std::vector<std::uint32_t> scene_offsets_;
};

struct ExampleAtom {
  Atom atom;
  bool positive = true;

  Formula as_formula() const;
  friend auto operator<=>(const ExampleAtom&, const ExampleAtom&) = default;
};

// Universally quantified formula. Atom terms in the body are variable indices.
struct Constraint {
  std::vector<std::string> variables;
  Formula body = Formula::make_atom(Atom{});
  std::string text;
};

// One constraint per non-empty line:
//   forall x,y: above(x,y) -> !car(x)
// Connectives: ! (not), & (and), | (or), -> (implies, right associative),
// parentheses. '#' starts a comment.
std::vector<Constraint> parse_constraints(std::string_view text, const Signature& signature);
std::vector<Constraint> load_constraints(const std::filesystem::path& path,
                                         const Signature& signature);

// Positive atoms for every label and annotated triple; negative atoms for the
// remaining (box, class) and ordered (box, box', relation) combinations, each
// kept with probability negative_rate.
std::vector<ExampleAtom> build_examples(const std::vector<SceneAnnotation>& scenes,
                                        const Signature& signature, double negative_rate,
                                        Rng& rng);

// One ground formula per assignment of the variables to ordered distinct
// boxes of the given scene.
std::vector<Formula> instantiate_constraints(const std::vector<Constraint>& constraints,
                                             const Signature& signature, std::uint32_t scene);

enum class KbMode { expl, prior };

std::string to_string(KbMode mode);
KbMode parse_kb_mode(const std::string& name);

struct KnowledgeBase {
  Signature signature;
  KbMode mode = KbMode::expl;
  std::vector<ExampleAtom> examples;
  std::vector<Constraint> constraints;
  std::vector<Formula> ground_constraints;

  // Examples (as atoms or negated atoms) followed by ground constraints.
  std::vector<Formula> formulas() const;
};

// expl keeps only the examples; prior also grounds every constraint in every
// scene of the signature. Exact duplicates collapse; contradictions throw.
KnowledgeBase assemble_kb(const Signature& signature, std::vector<ExampleAtom> examples,
                          std::vector<Constraint> constraints, KbMode mode);

}  // namespace rwfn
