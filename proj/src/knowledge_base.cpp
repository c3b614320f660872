#include "rwfn/knowledge_base.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rwfn/error.hpp"

namespace rwfn {

Signature::Signature(std::vector<std::string> unary, std::vector<std::string> binary)
    : unary_(std::move(unary)), binary_(std::move(binary)) {
  std::set<std::string> seen;
  for (const auto& names : {&unary_, &binary_}) {
    for (const auto& n : *names) {
      require(!n.empty(), ErrorKind::schema, "predicate names must be non-empty");
      require(seen.insert(n).second, ErrorKind::schema, "duplicate predicate name '" + n + "'");
    }
  }
  scene_offsets_.push_back(0);
}

Signature Signature::from_dataset(const Dataset& dataset, bool with_constants) {
  Signature sig(dataset.classes, dataset.predicates);
  if (with_constants) sig.add_constants(dataset.scenes);
  return sig;
}

void Signature::add_constants(const std::vector<SceneAnnotation>& scenes) {
  if (scene_offsets_.empty()) scene_offsets_.push_back(0);
  for (const auto& scene : scenes) {
    const auto s = static_cast<std::uint32_t>(scene_offsets_.size() - 1);
    for (std::uint32_t b = 0; b < scene.boxes.size(); ++b) constants_.push_back({s, b});
    scene_offsets_.push_back(static_cast<std::uint32_t>(constants_.size()));
  }
}

PredicateId Signature::unary_id(std::uint32_t class_index) const {
  require(class_index < unary_.size(), ErrorKind::schema,
          "unknown class index " + std::to_string(class_index));
  return class_index;
}

PredicateId Signature::binary_id(std::uint32_t relation_index) const {
  require(relation_index < binary_.size(), ErrorKind::schema,
          "unknown relation index " + std::to_string(relation_index));
  return static_cast<PredicateId>(unary_.size() + relation_index);
}

std::size_t Signature::arity(PredicateId id) const {
  require(id < predicate_count(), ErrorKind::lookup, "unknown predicate id " + std::to_string(id));
  return id < unary_.size() ? 1 : 2;
}

const std::string& Signature::name(PredicateId id) const {
  require(id < predicate_count(), ErrorKind::lookup, "unknown predicate id " + std::to_string(id));
  return id < unary_.size() ? unary_[id] : binary_[id - unary_.size()];
}

std::optional<PredicateId> Signature::find(std::string_view name) const {
  for (std::size_t i = 0; i < unary_.size(); ++i) {
    if (unary_[i] == name) return static_cast<PredicateId>(i);
  }
  for (std::size_t i = 0; i < binary_.size(); ++i) {
    if (binary_[i] == name) return static_cast<PredicateId>(unary_.size() + i);
  }
  return std::nullopt;
}

std::uint32_t Signature::local_index(PredicateId id) const {
  return arity(id) == 1 ? id : static_cast<std::uint32_t>(id - unary_.size());
}

std::size_t Signature::box_count(std::uint32_t scene) const {
  require(scene < scene_count(), ErrorKind::lookup, "unknown scene " + std::to_string(scene));
  return scene_offsets_[scene + 1] - scene_offsets_[scene];
}

ConstantId Signature::constant(std::uint32_t scene, std::uint32_t box) const {
  require(box < box_count(scene), ErrorKind::lookup,
          "scene " + std::to_string(scene) + " has no box " + std::to_string(box));
  return scene_offsets_[scene] + box;
}

Formula ExampleAtom::as_formula() const {
  auto f = Formula::make_atom(atom);
  return positive ? f : Formula::make_not(std::move(f));
}

// ---- constraint text ------------------------------------------------------

namespace {

class ConstraintParser {
 public:
  ConstraintParser(std::string_view line, std::size_t line_no, const Signature& sig)
      : text_(line), line_no_(line_no), sig_(sig) {}

  Constraint parse() {
    Constraint c;
    c.text = std::string(trim(text_));
    expect_word("forall");
    c.variables.push_back(identifier());
    while (accept(",")) c.variables.push_back(identifier());
    for (std::size_t i = 0; i < c.variables.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (c.variables[i] == c.variables[j]) error("variable '" + c.variables[i] + "' repeated");
      }
    }
    expect(":");
    variables_ = &c.variables;
    c.body = implication();
    skip_space();
    if (pos_ != text_.size()) error("unexpected trailing input");
    return c;
  }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  }

  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorKind::parse, "constraint line " + std::to_string(line_no_) + ", column " +
                               std::to_string(pos_ + 1) + ": " + what);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(std::string_view token) {
    skip_space();
    if (text_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }

  void expect(std::string_view token) {
    if (!accept(token)) error("expected '" + std::string(token) + "'");
  }

  std::string identifier() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    if (start == pos_) error("expected identifier");
    return std::string(text_.substr(start, pos_ - start));
  }

  void expect_word(std::string_view word) {
    if (identifier() != word) error("expected '" + std::string(word) + "'");
  }

  Formula implication() {
    Formula left = disjunction();
    if (accept("->")) return Formula::make_implies(std::move(left), implication());
    return left;
  }

  Formula disjunction() {
    Formula left = conjunction();
    while (accept("|")) left = Formula::make_or(std::move(left), conjunction());
    return left;
  }

  Formula conjunction() {
    Formula left = unary();
    while (accept("&")) left = Formula::make_and(std::move(left), unary());
    return left;
  }

  Formula unary() {
    if (accept("!")) return Formula::make_not(unary());
    if (accept("(")) {
      Formula inner = implication();
      expect(")");
      return inner;
    }
    return atom();
  }

  Formula atom() {
    const std::string name = identifier();
    const auto id = sig_.find(name);
    if (!id) error("unknown predicate '" + name + "'");
    Atom a{*id, {}};
    expect("(");
    do {
      const std::string var = identifier();
      const auto it = std::find(variables_->begin(), variables_->end(), var);
      if (it == variables_->end()) error("undeclared variable '" + var + "'");
      a.args.push_back(static_cast<std::uint32_t>(it - variables_->begin()));
    } while (accept(","));
    expect(")");
    if (a.args.size() != sig_.arity(*id)) {
      error("predicate '" + name + "' expects " + std::to_string(sig_.arity(*id)) + " arguments");
    }
    return Formula::make_atom(std::move(a));
  }

  std::string_view text_;
  std::size_t line_no_;
  const Signature& sig_;
  std::size_t pos_ = 0;
  const std::vector<std::string>* variables_ = nullptr;
};

}  // namespace

std::vector<Constraint> parse_constraints(std::string_view text, const Signature& signature) {
  std::vector<Constraint> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view() : text.substr(eol + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    out.push_back(ConstraintParser(line, line_no, signature).parse());
  }
  return out;
}

std::vector<Constraint> load_constraints(const std::filesystem::path& path,
                                         const Signature& signature) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open constraint file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_constraints(buffer.str(), signature);
}

// ---- examples -------------------------------------------------------------

std::vector<ExampleAtom> build_examples(const std::vector<SceneAnnotation>& scenes,
                                        const Signature& signature, double negative_rate,
                                        Rng& rng) {
  require(negative_rate > 0.0 && negative_rate <= 1.0, ErrorKind::invalid_argument,
          "negative sampling rate must lie in (0, 1]");
  require(signature.scene_count() == scenes.size(), ErrorKind::invalid_argument,
          "signature constants do not match the scene list");
  const auto keep_negative = [&]() { return negative_rate >= 1.0 || rng.uniform() < negative_rate; };

  std::vector<ExampleAtom> out;
  for (std::uint32_t s = 0; s < scenes.size(); ++s) {
    const auto& scene = scenes[s];
    require(signature.box_count(s) == scene.boxes.size(), ErrorKind::invalid_argument,
            "signature constants do not match scene " + std::to_string(s));
    for (std::uint32_t b = 0; b < scene.boxes.size(); ++b) {
      const auto& label = scene.boxes[b].label;
      if (!label) continue;
      require(*label < signature.unary_count(), ErrorKind::schema,
              "scene " + std::to_string(s) + " box " + std::to_string(b) + ": unknown label");
      const ConstantId c = signature.constant(s, b);
      for (std::uint32_t cls = 0; cls < signature.unary_count(); ++cls) {
        const bool positive = cls == *label;
        if (!positive && !keep_negative()) continue;
        out.push_back({{signature.unary_id(cls), {c}}, positive});
      }
    }

    std::set<Triple> annotated;
    for (const auto& t : scene.triples) {
      require(t.predicate < signature.binary_count(), ErrorKind::schema,
              "scene " + std::to_string(s) + ": unknown relation index " + std::to_string(t.predicate));
      annotated.insert(t);
    }
    for (std::uint32_t a = 0; a < scene.boxes.size(); ++a) {
      for (std::uint32_t b = 0; b < scene.boxes.size(); ++b) {
        if (a == b) continue;
        const ConstantId ca = signature.constant(s, a);
        const ConstantId cb = signature.constant(s, b);
        for (std::uint32_t r = 0; r < signature.binary_count(); ++r) {
          const bool positive = annotated.count({a, r, b}) > 0;
          if (!positive && !keep_negative()) continue;
          out.push_back({{signature.binary_id(r), {ca, cb}}, positive});
        }
      }
    }
  }
  return out;
}

std::vector<Formula> instantiate_constraints(const std::vector<Constraint>& constraints,
                                             const Signature& signature, std::uint32_t scene) {
  std::vector<Formula> out;
  const auto n = static_cast<std::uint32_t>(signature.box_count(scene));
  for (const auto& c : constraints) {
    const std::size_t k = c.variables.size();
    if (k == 0 || k > n) continue;
    std::vector<std::uint32_t> assignment(k, 0);
    std::vector<bool> used(n, false);
    // Depth-first enumeration of ordered k-tuples of distinct boxes.
    const auto recurse = [&](auto&& self, std::size_t depth) -> void {
      if (depth == k) {
        out.push_back(c.body.map_terms(
            [&](std::uint32_t var) { return signature.constant(scene, assignment.at(var)); }));
        return;
      }
      for (std::uint32_t b = 0; b < n; ++b) {
        if (used[b]) continue;
        used[b] = true;
        assignment[depth] = b;
        self(self, depth + 1);
        used[b] = false;
      }
    };
    recurse(recurse, 0);
  }
  return out;
}

std::string to_string(KbMode mode) { return mode == KbMode::prior ? "prior" : "expl"; }

KbMode parse_kb_mode(const std::string& name) {
  if (name == "expl") return KbMode::expl;
  if (name == "prior") return KbMode::prior;
  fail(ErrorKind::invalid_argument, "unknown kb mode '" + name + "' (expected expl or prior)");
}

std::vector<Formula> KnowledgeBase::formulas() const {
  std::vector<Formula> out;
  out.reserve(examples.size() + ground_constraints.size());
  for (const auto& e : examples) out.push_back(e.as_formula());
  out.insert(out.end(), ground_constraints.begin(), ground_constraints.end());
  return out;
}

KnowledgeBase assemble_kb(const Signature& signature, std::vector<ExampleAtom> examples,
                          std::vector<Constraint> constraints, KbMode mode) {
  KnowledgeBase kb;
  kb.signature = signature;
  kb.mode = mode;

  std::map<Atom, bool> polarity;
  for (auto& e : examples) {
    require(e.atom.args.size() == signature.arity(e.atom.predicate), ErrorKind::schema,
            "example atom arity does not match predicate '" + signature.name(e.atom.predicate) + "'");
    const auto [it, inserted] = polarity.emplace(e.atom, e.positive);
    if (!inserted) {
      require(it->second == e.positive, ErrorKind::consistency,
              "atom of predicate '" + signature.name(e.atom.predicate) +
                  "' is both a positive and a negative example");
      continue;
    }
    kb.examples.push_back(std::move(e));
  }

  if (mode == KbMode::prior) {
    for (std::uint32_t s = 0; s < signature.scene_count(); ++s) {
      auto ground = instantiate_constraints(constraints, signature, s);
      std::move(ground.begin(), ground.end(), std::back_inserter(kb.ground_constraints));
    }
    kb.constraints = std::move(constraints);
  }
  return kb;
}

}  // namespace rwfn
