#include "hkt/data/listops.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "hkt/error.hpp"

namespace hkt::data {

namespace {

int op_token(Op op) {
  switch (op) {
    case Op::max: return tok::kMax;
    case Op::min: return tok::kMin;
    case Op::med: return tok::kMed;
    case Op::sm: return tok::kSm;
  }
  return tok::kMax;
}

bool is_op_token(int t) { return t >= tok::kMax && t <= tok::kSm; }

Op token_op(int t) { return static_cast<Op>(t - tok::kMax); }

int apply(Op op, std::vector<int>& args) {
  switch (op) {
    case Op::max: return *std::max_element(args.begin(), args.end());
    case Op::min: return *std::min_element(args.begin(), args.end());
    case Op::med: {
      // lower median
      std::sort(args.begin(), args.end());
      return args[(args.size() - 1) / 2];
    }
    case Op::sm: {
      int s = 0;
      for (int a : args) s += a;
      return s % 10;
    }
  }
  return 0;
}

std::unique_ptr<Expr> sample_at(const ListOpsSpec& spec, std::size_t depth, num::Prng& rng) {
  auto e = std::make_unique<Expr>();
  e->op = static_cast<Op>(rng.below(4));
  const std::size_t arity = 2 + rng.below(spec.max_arity - 1);
  e->children.resize(arity);
  for (auto& c : e->children) {
    if (depth < spec.max_depth && rng.uniform() < spec.subexpr_prob)
      c.sub = sample_at(spec, depth + 1, rng);
    else
      c.digit = static_cast<int>(rng.below(10));
  }
  return e;
}

void render_into(const Expr& e, std::vector<int>& out) {
  out.push_back(op_token(e.op));
  for (const auto& c : e.children) {
    if (c.sub) render_into(*c.sub, out);
    else out.push_back(c.digit);
  }
  out.push_back(tok::kClose);
}

struct Parser {
  std::span<const int> t;
  std::size_t pos = 0;

  int expr() {
    if (pos >= t.size()) throw ParseError("unexpected end of input", pos);
    if (!is_op_token(t[pos])) throw ParseError("expected an operator", pos);
    const Op op = token_op(t[pos++]);
    std::vector<int> args;
    while (true) {
      if (pos >= t.size()) throw ParseError("missing ']'", pos);
      const int v = t[pos];
      if (v == tok::kClose) {
        ++pos;
        break;
      }
      if (v >= 0 && v <= 9) {
        args.push_back(v);
        ++pos;
      } else if (is_op_token(v)) {
        args.push_back(expr());
      } else {
        throw ParseError("unexpected token " + std::to_string(v), pos);
      }
    }
    if (args.empty()) throw ParseError("operator with no arguments", pos - 1);
    return apply(op, args);
  }
};

}  // namespace

int evaluate(const Expr& e) {
  std::vector<int> args;
  args.reserve(e.children.size());
  for (const auto& c : e.children) args.push_back(c.sub ? evaluate(*c.sub) : c.digit);
  return apply(e.op, args);
}

std::vector<int> render(const Expr& e) {
  std::vector<int> out;
  render_into(e, out);
  return out;
}

std::size_t rendered_length(const Expr& e) {
  std::size_t n = 2;
  for (const auto& c : e.children) n += c.sub ? rendered_length(*c.sub) : 1;
  return n;
}

std::unique_ptr<Expr> sample_expr(const ListOpsSpec& spec, num::Prng& rng) {
  return sample_at(spec, 1, rng);
}

int evaluate_listops(std::span<const int> tokens) {
  std::size_t start = 0;
  while (start < tokens.size() && tokens[start] == tok::kPad) ++start;
  if (start < tokens.size() && tokens[start] == tok::kBegin) ++start;
  Parser p{tokens, start};
  const int v = p.expr();
  if (p.pos != tokens.size()) throw ParseError("trailing tokens after expression", p.pos);
  return v;
}

std::vector<int> parse_tokens(const std::string& text) {
  std::vector<int> out;
  std::istringstream in(text);
  std::string w;
  std::size_t i = 0;
  while (in >> w) {
    if (w == "[MAX") out.push_back(tok::kMax);
    else if (w == "[MIN") out.push_back(tok::kMin);
    else if (w == "[MED") out.push_back(tok::kMed);
    else if (w == "[SM") out.push_back(tok::kSm);
    else if (w == "]") out.push_back(tok::kClose);
    else if (w == "<pad>") out.push_back(tok::kPad);
    else if (w == "<s>") out.push_back(tok::kBegin);
    else if (w.size() == 1 && w[0] >= '0' && w[0] <= '9') out.push_back(w[0] - '0');
    else throw ParseError("unknown symbol '" + w + "'", i);
    ++i;
  }
  return out;
}

std::string format_tokens(std::span<const int> tokens) {
  static const char* names[] = {"[MAX", "[MIN", "[MED", "[SM", "]", "<pad>", "<s>"};
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    const int t = tokens[i];
    if (t >= 0 && t <= 9) out += char('0' + t);
    else if (t >= tok::kMax && t < tok::kVocab) out += names[t - tok::kMax];
    else out += "?" + std::to_string(t);
  }
  return out;
}

std::vector<int> frame(std::span<const int> expr, std::size_t seq_len) {
  if (expr.size() + 1 > seq_len)
    throw ConfigError("expression of " + std::to_string(expr.size()) +
                      " tokens does not fit seq_len " + std::to_string(seq_len));
  std::vector<int> seq(seq_len, tok::kPad);
  const std::size_t start = seq_len - expr.size();
  seq[start - 1] = tok::kBegin;
  std::copy(expr.begin(), expr.end(), seq.begin() + static_cast<std::ptrdiff_t>(start));
  return seq;
}

ListOpsSplits generate_listops(const ListOpsSpec& spec) {
  if (spec.max_depth < 1) throw ConfigError("max_depth must be >= 1");
  if (spec.max_arity < 2) throw ConfigError("max_arity must be >= 2");
  // smallest expression: op, two digits, close, plus BEGIN
  if (spec.seq_len < 5)
    throw ConfigError("seq_len " + std::to_string(spec.seq_len) +
                      " cannot hold any expression (need >= 5)");

  const std::size_t total = spec.n_train + spec.n_val + spec.n_test;
  num::Prng rng(spec.seed);
  std::set<std::vector<int>> seen;
  Dataset all;
  std::size_t attempts = 0;
  const std::size_t max_attempts = 1000 * total + 10000;
  while (all.size() < total) {
    if (++attempts > max_attempts)
      throw ConfigError("could not draw " + std::to_string(total) +
                        " distinct expressions fitting seq_len " + std::to_string(spec.seq_len));
    auto e = sample_expr(spec, rng);
    if (rendered_length(*e) + 1 > spec.seq_len) continue;
    auto seq = frame(render(*e), spec.seq_len);
    if (!seen.insert(seq).second) continue;
    all.labels.push_back(evaluate(*e));
    all.sequences.push_back(std::move(seq));
  }

  ListOpsSplits out;
  auto take = [&](Dataset& d, std::size_t from, std::size_t n) {
    d.sequences.assign(all.sequences.begin() + from, all.sequences.begin() + from + n);
    d.labels.assign(all.labels.begin() + from, all.labels.begin() + from + n);
  };
  take(out.train, 0, spec.n_train);
  take(out.val, spec.n_train, spec.n_val);
  take(out.test, spec.n_train + spec.n_val, spec.n_test);
  return out;
}

}  // namespace hkt::data
