#include "skyweave/spec_lang.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>

namespace skyweave {

const char* to_string(Diagnostic::Kind k) {
  switch (k) {
    case Diagnostic::Kind::SyntaxError: return "SyntaxError";
    case Diagnostic::Kind::UnresolvedName: return "UnresolvedName";
    case Diagnostic::Kind::AlphabetMismatch: return "AlphabetMismatch";
    case Diagnostic::Kind::FragmentError: return "FragmentError";
    case Diagnostic::Kind::PartitionOverlap: return "PartitionOverlap";
    case Diagnostic::Kind::PartialMap: return "PartialMap";
  }
  return "?";
}

std::string format(const Diagnostic& d, const std::string& file) {
  std::ostringstream os;
  if (!file.empty()) os << file << ":";
  os << d.span.line << ":" << d.span.col << ": " << to_string(d.kind) << ": " << d.message;
  return os.str();
}

namespace {

// ---------------------------------------------------------------- lexer

enum class T {
  Word, Int, Arrow, Or2, Turnstile, Bar, And2, Not, Ne, Box, LBrack, RBrack, Diamond,
  Lt, Le, Gt, Ge, Eq, Assign, DotDot, Dot, Backslash, Plus, Minus, Star, Slash, Percent,
  LParen, RParen, LBrace, RBrace, Comma, Colon, Semi, End, Bad
};

struct Tok {
  T t;
  std::string text;
  SourceSpan span;
};

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '?'; }

// Length of a "{ident}" interpolation at s[i], or 0.
std::size_t interp_len(const std::string& s, std::size_t i) {
  if (i >= s.size() || s[i] != '{') return 0;
  std::size_t j = i + 1;
  if (j >= s.size() || !(std::isalpha(static_cast<unsigned char>(s[j])) || s[j] == '_')) return 0;
  while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
  if (j >= s.size() || s[j] != '}') return 0;
  return j + 1 - i;
}

std::vector<Tok> lex(const std::string& s) {
  std::vector<Tok> out;
  std::size_t i = 0;
  int line = 1, col = 1;
  auto adv = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < s.size(); ++k, ++i) {
      if (s[i] == '\n') { ++line; col = 1; }
      else ++col;
    }
  };
  while (i < s.size()) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) { adv(1); continue; }
    if (c == '/' && i + 1 < s.size() && s[i + 1] == '/') {
      while (i < s.size() && s[i] != '\n') adv(1);
      continue;
    }
    if (c == '/' && i + 1 < s.size() && s[i + 1] == '*') {
      adv(2);
      while (i < s.size() && !(s[i] == '*' && i + 1 < s.size() && s[i + 1] == '/')) adv(1);
      adv(2);
      continue;
    }
    Tok t{T::Bad, {}, {line, col, line, col}};
    std::size_t start = i;
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      if (j < s.size() && (std::isalpha(static_cast<unsigned char>(s[j])) || s[j] == '_')) {
        while (j < s.size() && word_char(s[j])) ++j;
        t.t = T::Bad;
      } else {
        t.t = T::Int;
      }
      adv(j - i);
    } else if (word_char(c)) {
      std::size_t j = i;
      while (j < s.size()) {
        if (word_char(s[j])) { ++j; continue; }
        if (std::size_t n = interp_len(s, j); n && j > start) { j += n; continue; }
        if (s[j] == '.' && j + 1 < s.size() && (word_char(s[j + 1]) || interp_len(s, j + 1))) { ++j; continue; }
        break;
      }
      t.t = T::Word;
      adv(j - i);
    } else {
      auto two = [&](char a, char b) { return c == a && i + 1 < s.size() && s[i + 1] == b; };
      std::size_t n = 2;
      if (two('-', '>')) t.t = T::Arrow;
      else if (two('|', '|')) t.t = T::Or2;
      else if (two('|', '-')) t.t = T::Turnstile;
      else if (two('&', '&')) t.t = T::And2;
      else if (two('!', '=')) t.t = T::Ne;
      else if (two('[', ']')) t.t = T::Box;
      else if (two('<', '>')) t.t = T::Diamond;
      else if (two('<', '=')) t.t = T::Le;
      else if (two('>', '=')) t.t = T::Ge;
      else if (two('=', '=')) t.t = T::Eq;
      else if (two('.', '.')) t.t = T::DotDot;
      else {
        n = 1;
        switch (c) {
          case '|': t.t = T::Bar; break;
          case '!': t.t = T::Not; break;
          case '[': t.t = T::LBrack; break;
          case ']': t.t = T::RBrack; break;
          case '<': t.t = T::Lt; break;
          case '>': t.t = T::Gt; break;
          case '=': t.t = T::Assign; break;
          case '.': t.t = T::Dot; break;
          case '\\': t.t = T::Backslash; break;
          case '+': t.t = T::Plus; break;
          case '-': t.t = T::Minus; break;
          case '*': t.t = T::Star; break;
          case '/': t.t = T::Slash; break;
          case '%': t.t = T::Percent; break;
          case '(': t.t = T::LParen; break;
          case ')': t.t = T::RParen; break;
          case '{': t.t = T::LBrace; break;
          case '}': t.t = T::RBrace; break;
          case ',': t.t = T::Comma; break;
          case ':': t.t = T::Colon; break;
          case ';': t.t = T::Semi; break;
          default: t.t = T::Bad;
        }
      }
      adv(n);
    }
    t.text = s.substr(start, i - start);
    t.span.end_line = line;
    t.span.end_col = std::max(1, col - 1);
    out.push_back(std::move(t));
  }
  out.push_back({T::End, "", {line, col, line, col}});
  return out;
}

// ---------------------------------------------------------------- parser

struct ParseErr {
  Diagnostic::Kind kind;
  std::string msg;
  SourceSpan span;
};

constexpr int kMaxDepth = 200;
constexpr std::size_t kMaxExpansion = 2'000'000;

bool is_upper_name(const std::string& w) {
  if (w.empty() || !std::isupper(static_cast<unsigned char>(w[0]))) return false;
  return std::all_of(w.begin(), w.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

bool is_ident(const std::string& w) {
  if (w.empty() || !(std::isalpha(static_cast<unsigned char>(w[0])) || w[0] == '_')) return false;
  return std::all_of(w.begin(), w.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

class Parser {
 public:
  explicit Parser(const std::string& text) : toks_(lex(text)) {}

  ParseResult run() {
    while (peek().t != T::End) {
      std::size_t start = pos_;
      try {
        decl();
      } catch (const ParseErr& e) {
        result_.diagnostics.push_back({e.kind, e.msg, e.span});
        recover(start);
      } catch (const std::exception& e) {
        result_.diagnostics.push_back({Diagnostic::Kind::SyntaxError, e.what(), peek().span});
        recover(start);
      }
      depth_ = 0;
      env_.clear();
      suppress_ = 0;
    }
    return std::move(result_);
  }

 private:
  std::vector<Tok> toks_;
  std::size_t pos_ = 0;
  ParseResult result_;
  std::map<std::string, long> consts_;
  std::map<std::string, std::set<std::string>> sets_;
  std::map<std::string, long> env_;
  int depth_ = 0;
  int suppress_ = 0;

  Document& doc() { return result_.doc; }
  const Tok& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  const Tok& next() {
    const Tok& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  bool at(T t) const { return peek().t == t; }
  bool at_word(std::string_view w) const { return peek().t == T::Word && peek().text == w; }
  bool accept(T t) {
    if (!at(t)) return false;
    next();
    return true;
  }
  bool accept_word(std::string_view w) {
    if (!at_word(w)) return false;
    next();
    return true;
  }
  [[noreturn]] void fail(const std::string& msg, Diagnostic::Kind k = Diagnostic::Kind::SyntaxError) const {
    throw ParseErr{k, msg, peek().span};
  }
  const Tok& expect(T t, const char* what) {
    if (!at(t)) fail(std::string("expected ") + what + (peek().t == T::End ? " before end of input" : ", found '" + peek().text + "'"));
    return next();
  }
  void expect_word(std::string_view w) {
    if (!accept_word(w)) fail("expected '" + std::string(w) + "'");
  }

  struct DepthGuard {
    Parser& p;
    explicit DepthGuard(Parser& q) : p(q) {
      if (++p.depth_ > kMaxDepth) p.fail("nesting too deep");
    }
    ~DepthGuard() { --p.depth_; }
  };

  SourceSpan span_from(std::size_t start) const {
    SourceSpan s = toks_[start].span;
    const Tok& last = toks_[pos_ > start ? pos_ - 1 : start];
    s.end_line = last.span.end_line;
    s.end_col = last.span.end_col;
    return s;
  }

  void recover(std::size_t start) {
    bool block = toks_[start].t == T::Word && toks_[start].text == "problem";
    if (pos_ < start) pos_ = start;
    if (pos_ == start && !at(T::End)) next();
    int braces = 0;
    if (block) {
      // skip to the brace that closes the block
      for (std::size_t k = start; k < pos_; ++k) {
        if (toks_[k].t == T::LBrace) ++braces;
        if (toks_[k].t == T::RBrace) --braces;
      }
    }
    while (!at(T::End)) {
      if (block) {
        if (at(T::LBrace)) ++braces;
        if (at(T::RBrace) && --braces <= 0) {
          next();
          accept(T::Dot);
          return;
        }
        next();
        continue;
      }
      if (accept(T::Dot)) return;
      next();
    }
  }

  // ---- integer expressions (C-like, comparisons and logic yield 0/1)
  long int_expr() { return int_or(); }
  long int_or() {
    long v = int_and();
    while (accept(T::Or2)) {
      long r = int_and();
      v = (v || r) ? 1 : 0;
    }
    return v;
  }
  long int_and() {
    long v = int_eq();
    while (accept(T::And2)) {
      long r = int_eq();
      v = (v && r) ? 1 : 0;
    }
    return v;
  }
  long int_eq() {
    long v = int_rel();
    for (;;) {
      if (accept(T::Eq)) v = (v == int_rel());
      else if (accept(T::Ne)) v = (v != int_rel());
      else return v;
    }
  }
  long int_rel() {
    long v = int_add();
    for (;;) {
      if (accept(T::Lt)) v = v < int_add();
      else if (accept(T::Le)) v = v <= int_add();
      else if (accept(T::Gt)) v = v > int_add();
      else if (accept(T::Ge)) v = v >= int_add();
      else return v;
    }
  }
  long int_add() {
    long v = int_mul();
    for (;;) {
      if (accept(T::Plus)) v += int_mul();
      else if (accept(T::Minus)) v -= int_mul();
      else return v;
    }
  }
  long int_mul() {
    long v = int_unary();
    for (;;) {
      if (accept(T::Star)) v *= int_unary();
      else if (at(T::Slash) || at(T::Percent)) {
        bool div = next().t == T::Slash;
        long r = int_unary();
        if (r == 0) fail("division by zero");
        v = div ? v / r : v % r;
      } else return v;
    }
  }
  long int_unary() {
    DepthGuard g(*this);
    if (accept(T::Minus)) return -int_unary();
    if (accept(T::Not)) return !int_unary();
    if (accept(T::LParen)) {
      long v = int_expr();
      expect(T::RParen, "')'");
      return v;
    }
    if (at(T::Int)) {
      const std::string& txt = next().text;
      if (txt.size() > 12) fail("integer literal too large");
      return std::stol(txt);
    }
    if (at(T::Word)) {
      const std::string& w = peek().text;
      if (auto it = env_.find(w); it != env_.end()) { next(); return it->second; }
      if (auto it = consts_.find(w); it != consts_.end()) { next(); return it->second; }
      fail("unknown integer name '" + w + "'", Diagnostic::Kind::UnresolvedName);
    }
    fail("expected integer expression");
  }

  // Substitutes {var} interpolations.
  std::string interpolate(const std::string& w) {
    std::string out;
    for (std::size_t i = 0; i < w.size();) {
      if (std::size_t n = interp_len(w, i)) {
        std::string var = w.substr(i + 1, n - 2);
        auto it = env_.find(var);
        long v;
        if (it != env_.end()) v = it->second;
        else if (auto c = consts_.find(var); c != consts_.end()) v = c->second;
        else fail("unknown index '" + var + "'", Diagnostic::Kind::UnresolvedName);
        out += std::to_string(v);
        i += n;
      } else {
        out += w[i++];
      }
    }
    return out;
  }

  // word ('[' index-or-range ']')*  ->  one or more labels
  std::vector<std::string> label_family() {
    const Tok& w = expect(T::Word, "label");
    std::vector<std::string> acc{interpolate(w.text)};
    while (at(T::LBrack)) {
      next();
      // optional "var:" binder, ignored
      if (peek().t == T::Word && peek(1).t == T::Colon && !env_.count(peek().text)) {
        next();
        next();
      }
      long lo = int_expr(), hi = lo;
      if (accept(T::DotDot)) hi = int_expr();
      expect(T::RBrack, "']'");
      if (hi < lo) fail("empty range");
      if (static_cast<std::size_t>(hi - lo + 1) * acc.size() > kMaxExpansion) fail("range too large");
      std::vector<std::string> nx;
      for (auto& a : acc)
        for (long v = lo; v <= hi; ++v) nx.push_back(a + "." + std::to_string(v));
      acc = std::move(nx);
    }
    for (auto& l : acc)
      if (!is_valid_label(l)) fail("invalid label '" + l + "'");
    return acc;
  }

  std::string single_label() {
    auto ls = label_family();
    if (ls.size() != 1) fail("expected a single label");
    return ls[0];
  }

  std::set<std::string> set_literal() {
    expect(T::LBrace, "'{'");
    std::set<std::string> out;
    if (accept(T::RBrace)) return out;
    do {
      for (auto& l : label_family()) out.insert(l);
      if (out.size() > kMaxExpansion) fail("set too large");
    } while (accept(T::Comma));
    expect(T::RBrace, "'}'");
    return out;
  }

  std::set<std::string> set_term() {
    if (at(T::LBrace)) return set_literal();
    if (at(T::Word)) {
      auto it = sets_.find(peek().text);
      if (it == sets_.end()) fail("unknown set '" + peek().text + "'", Diagnostic::Kind::UnresolvedName);
      next();
      return it->second;
    }
    fail("expected set");
  }

  std::set<std::string> set_expr() {
    std::set<std::string> v = set_term();
    for (;;) {
      if (accept(T::Plus)) {
        auto r = set_term();
        v.insert(r.begin(), r.end());
      } else if (accept(T::Backslash)) {
        for (auto& x : set_term()) v.erase(x);
      } else {
        return v;
      }
    }
  }

  // ---- forall
  struct Binding {
    std::string var;
    long lo, hi;
  };
  std::vector<Binding> forall_bindings() {
    std::vector<Binding> bs;
    do {
      const Tok& v = expect(T::Word, "index variable");
      if (!is_ident(v.text)) fail("bad index variable '" + v.text + "'");
      // accept "i in 0..5" and "i:0..5"
      if (!accept(T::Colon)) expect_word("in");
      long lo = int_expr();
      expect(T::DotDot, "'..'");
      long hi = int_expr();
      bs.push_back({v.text, lo, hi});
    } while (accept(T::Comma));
    return bs;
  }

  // Parses "bindings [where cond] :" and calls body once per satisfying
  // assignment, rewinding the token stream in between.
  void forall(const std::function<void()>& body) {
    auto bs = forall_bindings();
    std::size_t cond_pos = 0;
    bool has_cond = false;
    if (accept_word("where")) {
      has_cond = true;
      cond_pos = pos_;
      // skip the condition once with the lower bounds bound, to find ':'
      auto saved = env_;
      for (auto& b : bs) env_[b.var] = b.lo;
      int_expr();
      env_ = saved;
    }
    expect(T::Colon, "':'");
    const std::size_t body_pos = pos_;
    std::size_t end_pos = pos_;
    auto saved = env_;
    std::size_t count = 1;
    for (auto& b : bs) {
      if (b.hi < b.lo) { count = 0; break; }
      count *= static_cast<std::size_t>(b.hi - b.lo + 1);
      if (count > kMaxExpansion) fail("forall expansion too large");
    }
    std::size_t ran = 0;
    std::vector<long> cur;
    for (auto& b : bs) cur.push_back(b.lo);
    for (std::size_t n = 0; n < count; ++n) {
      for (std::size_t k = 0; k < bs.size(); ++k) env_[bs[k].var] = cur[k];
      bool ok = true;
      if (has_cond) {
        pos_ = cond_pos;
        ok = int_expr() != 0;
      }
      if (ok) {
        pos_ = body_pos;
        body();
        end_pos = pos_;
        ++ran;
      }
      for (std::size_t k = bs.size(); k-- > 0;) {
        if (++cur[k] <= bs[k].hi) break;
        cur[k] = bs[k].lo;
      }
    }
    if (ran == 0) {
      // parse once for syntax and position, discarding effects
      for (auto& b : bs) env_[b.var] = b.lo;
      pos_ = body_pos;
      ++suppress_;
      body();
      --suppress_;
      end_pos = pos_;
    }
    env_ = saved;
    pos_ = end_pos;
  }

  // ---- formulas
  ExprPtr formula() {
    DepthGuard g(*this);
    if (accept_word("forall")) {
      std::vector<ExprPtr> parts;
      forall([&] { parts.push_back(formula()); });
      if (suppress_) return fx::t();
      return parts.empty() ? fx::t() : fx::conj(parts);
    }
    return f_impl();
  }
  ExprPtr f_impl() {
    DepthGuard g(*this);
    ExprPtr l = f_wu();
    if (accept(T::Arrow)) return fx::implies(l, f_impl());
    return l;
  }
  ExprPtr f_wu() {
    ExprPtr l = f_or();
    if (accept_word("W")) return fx::wuntil(l, f_or());
    return l;
  }
  ExprPtr f_or() {
    ExprPtr l = f_and();
    while (accept(T::Or2)) l = fx::disj(l, f_and());
    return l;
  }
  ExprPtr f_and() {
    ExprPtr l = f_unary();
    while (accept(T::And2)) l = fx::conj(l, f_unary());
    return l;
  }
  ExprPtr f_unary() {
    DepthGuard g(*this);
    if (accept(T::Not)) return fx::neg(f_unary());
    if (accept(T::Box)) return fx::always(f_unary());
    if (accept(T::Diamond)) return fx::eventually(f_unary());
    return f_primary();
  }
  ExprPtr f_primary() {
    if (accept(T::LParen)) {
      ExprPtr e = formula();
      expect(T::RParen, "')'");
      return e;
    }
    if (at(T::LBrace)) return events_any(set_literal());
    if (accept_word("true")) return fx::t();
    if (accept_word("false")) return fx::f();
    if (at(T::Word)) {
      if (peek().text == "forall") return formula();
      if (peek(1).t != T::LBrack) {
        auto it = sets_.find(peek().text);
        if (it != sets_.end()) {
          next();
          return events_any(it->second);
        }
      }
      auto ls = label_family();
      std::vector<ExprPtr> atoms;
      for (auto& l : ls) atoms.push_back(fx::atom(l));
      return fx::disj(atoms);
    }
    fail("expected formula");
  }
  static ExprPtr events_any(const std::set<std::string>& s) {
    std::vector<ExprPtr> xs;
    for (auto& l : s) xs.push_back(fx::atom(l));
    return fx::disj(xs);
  }

  // ---- process terms
  TermPtr p_body() {
    DepthGuard g(*this);
    if (accept(T::LParen)) {
      TermPtr t = p_choice();
      expect(T::RParen, "')'");
      return t;
    }
    if (at(T::Word) && is_upper_name(peek().text)) {
      std::string n = next().text;
      if (n == "STOP") return std::make_shared<const Term>(Term{Term::Kind::Stop, {}, nullptr, {}});
      return std::make_shared<const Term>(Term{Term::Kind::Ref, n, nullptr, {}});
    }
    return p_prefix();
  }
  TermPtr p_choice() {
    std::vector<TermPtr> alts{p_body()};
    while (accept(T::Bar)) alts.push_back(p_body());
    if (alts.size() == 1) return alts[0];
    return std::make_shared<const Term>(Term{Term::Kind::Choice, {}, nullptr, std::move(alts)});
  }
  TermPtr p_prefix() {
    DepthGuard g(*this);
    if (!at(T::Word)) fail("expected action label");
    auto ls = label_family();
    expect(T::Arrow, "'->'");
    TermPtr nx = p_body();
    // a family prefix go[0..3] -> P is a choice over its members
    std::vector<TermPtr> alts;
    for (auto& l : ls) alts.push_back(std::make_shared<const Term>(Term{Term::Kind::Prefix, l, nx, {}}));
    if (alts.size() == 1) return alts[0];
    return std::make_shared<const Term>(Term{Term::Kind::Choice, {}, nullptr, std::move(alts)});
  }

  // ---- declarations
  void decl() {
    std::size_t start = pos_;
    if (accept_word("forall")) {
      forall([&] { decl(); });
      return;
    }
    if (accept_word("const")) {
      std::string n = expect(T::Word, "name").text;
      expect(T::Assign, "'='");
      long v = int_expr();
      expect(T::Dot, "'.'");
      if (!suppress_) consts_[n] = v;
      return;
    }
    if (accept_word("set")) {
      std::string n = interpolate(expect(T::Word, "set name").text);
      expect(T::Assign, "'='");
      auto s = set_expr();
      expect(T::Dot, "'.'");
      if (!suppress_) {
        sets_[n] = s;
        doc().sets.push_back({n, s, span_from(start)});
      }
      return;
    }
    if (accept_word("fluent")) return fluent(start);
    if (accept_word("assert")) {
      accept_word("safety");
      std::string n = interpolate(expect(T::Word, "assertion name").text);
      expect(T::Assign, "'='");
      ExprPtr f = formula();
      expect(T::Dot, "'.'");
      if (suppress_) return;
      doc().asserts.push_back({n, f, span_from(start)});
      try {
        classify_safety(f);
      } catch (const FltlError& e) {
        result_.diagnostics.push_back({Diagnostic::Kind::FragmentError, e.what(), span_from(start)});
      }
      return;
    }
    if (accept_word("liveness")) return liveness(start);
    if (at_word("controllable")) {
      next();
      expect(T::Assign, "'='");
      auto s = set_expr();
      expect(T::Dot, "'.'");
      if (!suppress_) doc().controllable = s;
      return;
    }
    if (accept_word("problem")) return problem(start);
    if (accept(T::Or2)) {
      std::string n = expect(T::Word, "composition name").text;
      if (!is_upper_name(n)) fail("process names start with an upper-case letter");
      expect(T::Assign, "'='");
      expect(T::LParen, "'('");
      std::vector<std::string> parts;
      do {
        std::string p = expect(T::Word, "process name").text;
        if (!is_upper_name(p)) fail("expected process name, found '" + p + "'");
        parts.push_back(p);
      } while (accept(T::Or2));
      expect(T::RParen, "')'");
      expect(T::Dot, "'.'");
      if (!suppress_) doc().compositions.push_back({n, parts, span_from(start)});
      return;
    }
    if (at(T::Word) && is_upper_name(peek().text)) {
      std::string n = next().text;
      expect(T::Assign, "'='");
      if (at_word("interrupt") && peek(1).t == T::LParen) return interrupt_decl(n, start);
      ProcessDecl p{n, {}, {}, {}};
      p.locals.emplace_back(n, p_body());
      while (accept(T::Comma)) {
        std::string ln = expect(T::Word, "local process name").text;
        if (!is_upper_name(ln)) fail("expected local process name");
        expect(T::Assign, "'='");
        p.locals.emplace_back(ln, p_body());
      }
      if (accept(T::Plus)) p.extra = set_expr();
      expect(T::Dot, "'.'");
      p.span = span_from(start);
      if (!suppress_) doc().processes.push_back(std::move(p));
      return;
    }
    fail(at(T::End) ? "unexpected end of input" : "unexpected '" + peek().text + "'");
  }

  bool bool_const() {
    if (accept_word("true")) return true;
    if (accept_word("false")) return false;
    if (at(T::LParen)) return int_expr() != 0;
    fail("expected true, false or (condition)");
  }

  void fluent(std::size_t start) {
    std::string n = interpolate(expect(T::Word, "fluent name").text);
    if (!is_ident(n)) fail("bad fluent name '" + n + "'");
    expect(T::Assign, "'='");
    expect(T::Lt, "'<'");
    FluentDef d;
    d.name = n;
    d.init = set_expr();
    expect(T::Comma, "','");
    d.term = set_expr();
    if (accept(T::Comma)) {
      if (!accept_word("init")) expect_word("initially");
      d.initially = bool_const();
    }
    expect(T::Gt, "'>'");
    if (accept_word("initially")) d.initially = bool_const();
    expect(T::Dot, "'.'");
    if (!suppress_) doc().fluents.push_back({d, span_from(start)});
  }

  void live_item(std::vector<ExprPtr>& out) {
    if (accept_word("forall")) {
      forall([&] { live_item(out); });
      return;
    }
    std::size_t s = pos_;
    ExprPtr e = f_impl();
    if (suppress_) return;
    if (e->op == Expr::Op::Always && e->args[0]->op == Expr::Op::Eventually && is_boolean(*e->args[0]->args[0])) {
      out.push_back(e->args[0]->args[0]);
    } else {
      result_.diagnostics.push_back({Diagnostic::Kind::FragmentError,
                                     "GR(1) items must have the form []<>B, got " + to_string(*e), span_from(s)});
    }
  }

  void live_list(std::vector<ExprPtr>& out) {
    if (at(T::Turnstile) || at(T::RParen)) return;
    do live_item(out);
    while (accept(T::Comma));
  }

  void liveness(std::size_t start) {
    std::string n = "liveness";
    if (at(T::Word)) n = interpolate(next().text);
    expect(T::Assign, "'='");
    expect_word("gr1");
    expect(T::LParen, "'('");
    LivenessDecl l{n, {}, {}, {}};
    live_list(l.assumptions);
    expect(T::Turnstile, "'|-'");
    live_list(l.guarantees);
    expect(T::RParen, "')'");
    expect(T::Dot, "'.'");
    l.span = span_from(start);
    if (!suppress_) doc().liveness.push_back(std::move(l));
  }

  std::vector<std::string> name_list() {
    std::vector<std::string> out;
    bool braces = accept(T::LBrace);
    if (braces && accept(T::RBrace)) return out;
    if (!braces && at(T::Semi)) return out;
    do out.push_back(expect(T::Word, "name").text);
    while (accept(T::Comma));
    if (braces) expect(T::RBrace, "'}'");
    return out;
  }

  void problem(std::size_t start) {
    bool update;
    if (accept_word("control")) update = false;
    else if (accept_word("update")) update = true;
    else fail("expected 'control' or 'update'");
    std::string n = expect(T::Word, "problem name").text;
    expect(T::LBrace, "'{'");
    ControlProblemDecl c;
    UpdateProblemDecl u;
    c.name = u.name = n;
    while (!accept(T::RBrace)) {
      std::string key = expect(T::Word, "field name").text;
      expect(T::Assign, "'='");
      if (key == "env") c.env = u.env = expect(T::Word, "process name").text;
      else if (key == "old" && update) u.old = expect(T::Word, "problem name").text;
      else if (key == "safety") c.safety = u.safety = name_list();
      else if (key == "theta" && update) u.theta = name_list();
      else if (key == "liveness") c.liveness = u.liveness = expect(T::Word, "liveness name").text;
      else if (key == "controllable") c.controllable = u.controllable = set_expr();
      else if (key == "uncontrollable") c.uncontrollable = u.uncontrollable = set_expr();
      else fail("unknown field '" + key + "'");
      expect(T::Semi, "';'");
    }
    accept(T::Dot);
    if (suppress_) return;
    if (update) {
      u.span = span_from(start);
      doc().update_problems.push_back(std::move(u));
    } else {
      c.span = span_from(start);
      doc().control_problems.push_back(std::move(c));
    }
  }

  std::string state_ref() {
    if (at(T::Int)) return next().text;
    const Tok& w = expect(T::Word, "state name");
    return interpolate(w.text);
  }

  void interrupt_decl(const std::string& name, std::size_t start) {
    next();  // interrupt
    expect(T::LParen, "'('");
    InterruptDecl d;
    d.name = name;
    d.source = expect(T::Word, "process name").text;
    expect(T::Comma, "','");
    d.target = expect(T::Word, "process name").text;
    expect(T::Comma, "','");
    d.label = single_label();
    expect(T::Comma, "','");
    expect(T::LBrace, "'{'");
    if (!at(T::RBrace)) {
      do {
        if (at_word("_")) {
          next();
          expect(T::Arrow, "'->'");
          expect(T::LBrace, "'{'");
          expect(T::RBrace, "'}' (default clause must be empty)");
          d.default_disabled = true;
          continue;
        }
        MapEntryDecl e;
        e.from = state_ref();
        expect(T::Arrow, "'->'");
        auto target = [&] {
          std::string s = state_ref();
          std::string via;
          if (accept_word("via")) via = single_label();
          e.to.emplace_back(s, via);
        };
        if (accept(T::LBrace)) {
          if (!at(T::RBrace)) {
            do target();
            while (accept(T::Comma));
          }
          expect(T::RBrace, "'}'");
        } else {
          target();
        }
        d.entries.push_back(std::move(e));
      } while (accept(T::Comma));
    }
    expect(T::RBrace, "'}'");
    expect(T::RParen, "')'");
    expect(T::Dot, "'.'");
    d.span = span_from(start);
    if (!suppress_) doc().interrupts.push_back(std::move(d));
  }
};

// ---------------------------------------------------------------- emit

std::string emit_set(const std::set<std::string>& s) {
  std::string out = "{";
  bool first = true;
  for (auto& l : s) {
    if (!first) out += ", ";
    out += l;
    first = false;
  }
  return out + "}";
}

std::string emit_term(const Term& t, bool top) {
  switch (t.kind) {
    case Term::Kind::Stop: return "STOP";
    case Term::Kind::Ref: return t.name;
    case Term::Kind::Prefix: {
      std::string s = t.name + " -> " + emit_term(*t.next, false);
      return top ? "(" + s + ")" : s;
    }
    case Term::Kind::Choice: {
      std::string s = "(";
      for (std::size_t i = 0; i < t.alts.size(); ++i) {
        if (i) s += " | ";
        s += emit_term(*t.alts[i], false);
      }
      return s + ")";
    }
  }
  return "STOP";
}

std::string emit_names(const std::vector<std::string>& v) {
  std::string s = "{";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
  return s + "}";
}

}  // namespace

ParseResult parse(const std::string& text) {
  try {
    return Parser(text).run();
  } catch (const std::exception& e) {
    ParseResult r;
    r.diagnostics.push_back({Diagnostic::Kind::SyntaxError, e.what(), {1, 1, 1, 1}});
    return r;
  }
}

std::string emit(const Document& doc) {
  std::ostringstream os;
  for (auto& s : doc.sets) os << "set " << s.name << " = " << emit_set(s.labels) << ".\n";
  for (auto& p : doc.processes) {
    for (std::size_t i = 0; i < p.locals.size(); ++i) {
      os << (i ? ",\n  " : "") << p.locals[i].first << " = " << emit_term(*p.locals[i].second, true);
    }
    if (!p.extra.empty()) os << " + " << emit_set(p.extra);
    os << ".\n";
  }
  for (auto& c : doc.compositions) {
    os << "||" << c.name << " = (";
    for (std::size_t i = 0; i < c.parts.size(); ++i) os << (i ? " || " : "") << c.parts[i];
    os << ").\n";
  }
  for (auto& d : doc.interrupts) {
    os << d.name << " = interrupt(" << d.source << ", " << d.target << ", " << d.label << ", {";
    bool first = true;
    for (auto& e : d.entries) {
      os << (first ? "" : ", ") << e.from << " -> {";
      for (std::size_t i = 0; i < e.to.size(); ++i) {
        os << (i ? ", " : "") << e.to[i].first;
        if (!e.to[i].second.empty()) os << " via " << e.to[i].second;
      }
      os << "}";
      first = false;
    }
    if (d.default_disabled) os << (first ? "" : ", ") << "_ -> {}";
    os << "}).\n";
  }
  for (auto& f : doc.fluents) {
    os << "fluent " << f.def.name << " = <" << emit_set(f.def.init) << ", " << emit_set(f.def.term) << ">";
    os << " initially " << (f.def.initially ? "true" : "false") << ".\n";
  }
  for (auto& a : doc.asserts) os << "assert safety " << a.name << " = " << to_string(*a.formula) << ".\n";
  for (auto& l : doc.liveness) {
    os << "liveness " << l.name << " = gr1(";
    for (std::size_t i = 0; i < l.assumptions.size(); ++i) os << (i ? ", " : "") << "[]<>" << to_string(*l.assumptions[i]);
    os << (l.assumptions.empty() ? "|- " : " |- ");
    for (std::size_t i = 0; i < l.guarantees.size(); ++i) os << (i ? ", " : "") << "[]<>" << to_string(*l.guarantees[i]);
    os << ").\n";
  }
  if (doc.controllable) os << "controllable = " << emit_set(*doc.controllable) << ".\n";
  auto common = [&](const std::string& env, const std::vector<std::string>& safety, const std::string& live,
                    const std::optional<std::set<std::string>>& c, const std::optional<std::set<std::string>>& u) {
    if (!env.empty()) os << "  env = " << env << ";\n";
    os << "  safety = " << emit_names(safety) << ";\n";
    if (!live.empty()) os << "  liveness = " << live << ";\n";
    if (c) os << "  controllable = " << emit_set(*c) << ";\n";
    if (u) os << "  uncontrollable = " << emit_set(*u) << ";\n";
  };
  for (auto& p : doc.control_problems) {
    os << "problem control " << p.name << " {\n";
    common(p.env, p.safety, p.liveness, p.controllable, p.uncontrollable);
    os << "}\n";
  }
  for (auto& p : doc.update_problems) {
    os << "problem update " << p.name << " {\n";
    if (!p.old.empty()) os << "  old = " << p.old << ";\n";
    common(p.env, p.safety, p.liveness, p.controllable, p.uncontrollable);
    os << "  theta = " << emit_names(p.theta) << ";\n";
    os << "}\n";
  }
  return os.str();
}

// ---------------------------------------------------------------- document lookups

namespace {
template <class V>
auto find_named(const V& v, const std::string& n) -> decltype(&v[0]) {
  for (auto& x : v)
    if (x.name == n) return &x;
  return nullptr;
}
}  // namespace

const ProcessDecl* Document::process(const std::string& n) const { return find_named(processes, n); }
const CompositionDecl* Document::composition(const std::string& n) const { return find_named(compositions, n); }
const InterruptDecl* Document::interrupt_decl(const std::string& n) const { return find_named(interrupts, n); }
const AssertDecl* Document::assertion(const std::string& n) const { return find_named(asserts, n); }
const LivenessDecl* Document::liveness_decl(const std::string& n) const { return find_named(liveness, n); }
const ControlProblemDecl* Document::control_problem(const std::string& n) const {
  return find_named(control_problems, n);
}
const UpdateProblemDecl* Document::update_problem(const std::string& n) const { return find_named(update_problems, n); }
bool Document::defines_system(const std::string& n) const {
  return process(n) || composition(n) || interrupt_decl(n);
}
std::vector<FluentDef> Document::fluent_defs() const {
  std::vector<FluentDef> out;
  for (auto& f : fluents) out.push_back(f.def);
  return out;
}

// ---------------------------------------------------------------- elaboration

namespace {

[[noreturn]] void elab_fail(Diagnostic::Kind k, const std::string& msg, const SourceSpan& s) {
  throw ElaborationError(Diagnostic{k, msg, s});
}

Lts build_process(const ProcessDecl& p) {
  std::map<std::string, const Term*> bodies;
  for (auto& [n, t] : p.locals) {
    if (!bodies.emplace(n, t.get()).second)
      elab_fail(Diagnostic::Kind::UnresolvedName, "local process '" + n + "' defined twice", p.span);
  }
  // Resolve aliases (Q = P) to the local they name.
  std::map<std::string, std::string> canon;
  for (auto& [n, t] : p.locals) {
    std::string cur = n;
    std::set<std::string> seen;
    while (bodies.at(cur)->kind == Term::Kind::Ref) {
      if (!seen.insert(cur).second)
        elab_fail(Diagnostic::Kind::UnresolvedName, "cyclic alias at '" + n + "'", p.span);
      const std::string& target = bodies.at(cur)->name;
      if (!bodies.count(target))
        elab_fail(Diagnostic::Kind::UnresolvedName, "unknown local process '" + target + "' in " + p.name, p.span);
      cur = target;
    }
    canon[n] = cur;
  }
  Lts::Builder b(p.extra);
  std::map<std::string, StateId> state;
  for (auto& [n, t] : p.locals)
    if (canon[n] == n) state[n] = b.add_state(n);
  auto sid = [&](const std::string& n) {
    auto it = canon.find(n);
    if (it == canon.end())
      elab_fail(Diagnostic::Kind::UnresolvedName, "unknown local process '" + n + "' in " + p.name, p.span);
    return state.at(it->second);
  };
  std::function<void(const Term&, StateId)> build = [&](const Term& t, StateId from) {
    switch (t.kind) {
      case Term::Kind::Stop:
        return;
      case Term::Kind::Ref:
        elab_fail(Diagnostic::Kind::UnresolvedName, "choice alternatives must start with an action in " + p.name,
                  p.span);
      case Term::Kind::Prefix: {
        const Term& nx = *t.next;
        if (nx.kind == Term::Kind::Ref) {
          b.add_transition(from, t.name, sid(nx.name));
        } else {
          StateId mid = b.add_state();
          b.add_transition(from, t.name, mid);
          build(nx, mid);
        }
        return;
      }
      case Term::Kind::Choice:
        for (auto& a : t.alts) build(*a, from);
        return;
    }
  };
  for (auto& [n, t] : p.locals)
    if (canon[n] == n) build(*t, state[n]);
  b.set_initial(sid(p.locals.front().first));
  return b.build();
}

StateId resolve_state(const Lts& l, const std::string& ref, const std::string& owner, const SourceSpan& span) {
  if (!ref.empty() && std::isdigit(static_cast<unsigned char>(ref[0]))) {
    unsigned long v = std::stoul(ref);
    if (v < l.num_states()) return static_cast<StateId>(v);
  } else if (auto s = l.find_name(ref)) {
    return *s;
  }
  elab_fail(Diagnostic::Kind::UnresolvedName, "no state '" + ref + "' in " + owner, span);
}

Lts build_rec(const Document& doc, const std::string& name, std::set<std::string>& active, const SourceSpan& at) {
  if (!active.insert(name).second) elab_fail(Diagnostic::Kind::UnresolvedName, "cyclic definition of " + name, at);
  Lts out;
  if (auto p = doc.process(name)) {
    out = build_process(*p);
  } else if (auto c = doc.composition(name)) {
    std::vector<Lts> parts;
    for (auto& n : c->parts) parts.push_back(build_rec(doc, n, active, c->span));
    std::vector<const Lts*> ptrs;
    for (auto& x : parts) ptrs.push_back(&x);
    out = compose_all(ptrs);
  } else if (auto d = doc.interrupt_decl(name)) {
    Lts e = build_rec(doc, d->source, active, d->span);
    Lts e2 = build_rec(doc, d->target, active, d->span);
    StateMap m;
    m.default_disabled = d->default_disabled;
    for (auto& entry : d->entries) {
      StateId s = resolve_state(e, entry.from, d->source, d->span);
      auto& targets = m.entries[s];
      for (auto& [t, via] : entry.to) targets.push_back({resolve_state(e2, t, d->target, d->span), via});
    }
    try {
      out = interrupt(e, e2, d->label, m);
    } catch (const LtsError& err) {
      auto k = err.kind() == LtsError::Kind::PartialMap ? Diagnostic::Kind::PartialMap
                                                         : Diagnostic::Kind::AlphabetMismatch;
      elab_fail(k, std::string(err.what()) + " in " + name, d->span);
    }
  } else {
    elab_fail(Diagnostic::Kind::UnresolvedName, "undefined process '" + name + "'", at);
  }
  active.erase(name);
  return out;
}

}  // namespace

Lts build_system(const Document& doc, const std::string& name) {
  std::set<std::string> active;
  return build_rec(doc, name, active, {});
}

// ---------------------------------------------------------------- validation

std::vector<Diagnostic> validate(const Document& doc) {
  std::vector<Diagnostic> out;
  auto add = [&](Diagnostic::Kind k, const std::string& m, const SourceSpan& s) { out.push_back({k, m, s}); };

  std::set<std::string> names;
  auto declare = [&](const std::string& n, const SourceSpan& s) {
    if (!names.insert(n).second) add(Diagnostic::Kind::UnresolvedName, "'" + n + "' defined more than once", s);
  };
  for (auto& p : doc.processes) declare(p.name, p.span);
  for (auto& c : doc.compositions) declare(c.name, c.span);
  for (auto& d : doc.interrupts) declare(d.name, d.span);

  std::map<std::string, Lts> built;
  auto system = [&](const std::string& n, const SourceSpan& s) -> const Lts* {
    if (auto it = built.find(n); it != built.end()) return &it->second;
    try {
      return &built.emplace(n, build_system(doc, n)).first->second;
    } catch (const ElaborationError& e) {
      Diagnostic d = e.diagnostic();
      if (d.span.line == 0) d.span = s;
      out.push_back(d);
    } catch (const LtsError& e) {
      add(Diagnostic::Kind::AlphabetMismatch, e.what(), s);
    }
    return nullptr;
  };
  for (auto& p : doc.processes) system(p.name, p.span);
  for (auto& c : doc.compositions) system(c.name, c.span);
  for (auto& d : doc.interrupts) system(d.name, d.span);

  std::set<std::string> fluent_names;
  for (auto& f : doc.fluents) {
    if (!fluent_names.insert(f.def.name).second)
      add(Diagnostic::Kind::UnresolvedName, "fluent '" + f.def.name + "' defined more than once", f.span);
    for (auto& l : f.def.init)
      if (f.def.term.count(l))
        add(Diagnostic::Kind::PartitionOverlap, "fluent " + f.def.name + ": '" + l + "' both initiates and terminates",
            f.span);
  }
  for (auto& a : doc.asserts) {
    try {
      classify_safety(a.formula);
    } catch (const FltlError& e) {
      add(Diagnostic::Kind::FragmentError, e.what(), a.span);
    }
  }

  auto check_atoms = [&](const ExprPtr& f, const Lts& env, const std::set<std::string>& extra, const SourceSpan& s) {
    std::set<std::string> atoms;
    collect_atoms(*f, atoms);
    for (auto& a : atoms)
      if (!fluent_names.count(a) && !env.has_label(a) && !extra.count(a))
        add(Diagnostic::Kind::UnresolvedName, "'" + a + "' is neither a fluent nor an event of the environment", s);
  };
  auto check_partition = [&](const std::optional<std::set<std::string>>& c,
                             const std::optional<std::set<std::string>>& u, const Lts& env, const SourceSpan& s) {
    if (c)
      for (auto& l : *c)
        if (!env.has_label(l)) add(Diagnostic::Kind::AlphabetMismatch, "controllable '" + l + "' not in environment", s);
    if (c && u)
      for (auto& l : *c)
        if (u->count(l)) add(Diagnostic::Kind::PartitionOverlap, "'" + l + "' is both controllable and uncontrollable", s);
  };
  auto check_problem = [&](const std::string& env_name, const std::vector<std::string>& safety,
                           const std::string& live, const std::optional<std::set<std::string>>& c,
                           const std::optional<std::set<std::string>>& u, const SourceSpan& s,
                           const std::set<std::string>& extra) -> const Lts* {
    if (!doc.defines_system(env_name)) {
      add(Diagnostic::Kind::UnresolvedName, "undefined environment '" + env_name + "'", s);
      return nullptr;
    }
    const Lts* env = system(env_name, s);
    for (auto& n : safety) {
      auto a = doc.assertion(n);
      if (!a) add(Diagnostic::Kind::UnresolvedName, "undefined safety assertion '" + n + "'", s);
      else if (env) check_atoms(a->formula, *env, extra, a->span);
    }
    if (!live.empty()) {
      auto l = doc.liveness_decl(live);
      if (!l) add(Diagnostic::Kind::UnresolvedName, "undefined liveness '" + live + "'", s);
      else if (env) {
        for (auto& x : l->assumptions) check_atoms(x, *env, extra, l->span);
        for (auto& x : l->guarantees) check_atoms(x, *env, extra, l->span);
      }
    }
    if (env) check_partition(c ? c : doc.controllable, u, *env, s);
    if (!c && !doc.controllable) add(Diagnostic::Kind::UnresolvedName, "no controllable set given", s);
    return env;
  };
  for (auto& p : doc.control_problems)
    check_problem(p.env, p.safety, p.liveness, p.controllable, p.uncontrollable, p.span, {});
  for (auto& p : doc.update_problems) {
    if (!doc.control_problem(p.old)) add(Diagnostic::Kind::UnresolvedName, "undefined old problem '" + p.old + "'", p.span);
    std::set<std::string> extra{"OldStopped", "NewStarted", "Reconfigured", "HotSwap",
                                "stopOld",    "startNew",   "reconfig",     "hotSwap"};
    auto safety = p.safety;
    safety.insert(safety.end(), p.theta.begin(), p.theta.end());
    const Lts* env = check_problem(p.env, safety, p.liveness, p.controllable, p.uncontrollable, p.span, extra);
    // without reconfig the environment is reused unchanged (identity g)
    for (const char* ev : {"hotSwap", "stopOld", "startNew"})
      if (env && env->has_label(ev))
        add(Diagnostic::Kind::AlphabetMismatch, std::string("update environment uses reserved event '") + ev + "'", p.span);
  }
  return out;
}

Document parse_or_throw(const std::string& text) {
  auto r = parse(text);
  if (!r.ok()) throw ElaborationError(r.diagnostics.front());
  return std::move(r.doc);
}

Document load_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  auto r = parse(ss.str());
  if (!r.ok()) {
    Diagnostic d = r.diagnostics.front();
    d.message = format(d, path);
    throw ElaborationError(d);
  }
  return std::move(r.doc);
}

}  // namespace skyweave
