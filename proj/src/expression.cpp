#include <qlflow/expression.hpp>

#include <cctype>
#include <charconv>
#include <numbers>
#include <sstream>

namespace qlflow {

std::string format_point(const Vec& x) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ')';
  return os.str();
}

SingularMappingError::SingularMappingError(const Vec& x, double t, double jacobian)
    : Error("singular mapping at x = " + format_point(x) + ", t = " + std::to_string(t) +
            " (J = " + std::to_string(jacobian) + ")"),
      point_(x),
      time_(t) {}

// Recursive-descent parser:
//   expr  := term (('+'|'-') term)*
//   term  := unary (('*'|'/') unary)*
//   unary := ('-'|'+') unary | power
//   power := primary ('^' unary)?
//   primary := number | name | name '(' expr ')' | '(' expr ')'
class ExpressionParser {
 public:
  ExpressionParser(std::string_view text, const std::vector<std::string>& vars)
      : text_(text), vars_(vars) {}

  Expression run() {
    expr_.source_ = std::string(text_);
    expr_.variable_count_ = vars_.size();
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("empty expression", pos_);
    expr_.root_ = parse_expr();
    skip_ws();
    if (pos_ < text_.size()) throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_);
    return std::move(expr_);
  }

 private:
  using Op = Expression::Op;

  int add(Op op, double value = 0.0, int lhs = -1, int rhs = -1) {
    expr_.nodes_.push_back({op, value, lhs, rhs});
    return static_cast<int>(expr_.nodes_.size()) - 1;
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  int parse_expr() {
    int lhs = parse_term();
    for (;;) {
      if (accept('+')) {
        lhs = add(Op::add, 0.0, lhs, parse_term());
      } else if (accept('-')) {
        lhs = add(Op::sub, 0.0, lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  int parse_term() {
    int lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = add(Op::mul, 0.0, lhs, parse_unary());
      } else if (accept('/')) {
        lhs = add(Op::div, 0.0, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  int parse_unary() {
    if (accept('-')) return add(Op::neg, 0.0, parse_unary());
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  int parse_power() {
    const int base = parse_primary();
    if (accept('^')) return add(Op::pow, 0.0, base, parse_unary());
    return base;
  }

  int parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of expression", pos_);
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      const int inner = parse_expr();
      if (!accept(')')) throw ParseError("expected ')'", pos_);
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_name();
    throw ParseError(std::string("unexpected '") + c + "'", pos_);
  }

  int parse_number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) {
      ++pos_;
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
      if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
        pos_ = p;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      }
    }
    double v = 0.0;
    const auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != text_.data() + pos_) {
      throw ParseError("malformed number", start);
    }
    return add(Op::constant, v);
  }

  int parse_name() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    const std::string name(text_.substr(start, pos_ - start));
    skip_ws();
    const bool call = pos_ < text_.size() && text_[pos_] == '(';
    if (call) {
      Op op;
      if (name == "sin") {
        op = Op::sin;
      } else if (name == "cos") {
        op = Op::cos;
      } else if (name == "exp") {
        op = Op::exp;
      } else if (name == "sqrt") {
        op = Op::sqrt;
      } else {
        throw ParseError("unknown function '" + name + "'", start);
      }
      ++pos_;
      const int arg = parse_expr();
      if (accept(',')) throw ParseError("function '" + name + "' takes exactly one argument", pos_);
      if (!accept(')')) throw ParseError("expected ')'", pos_);
      return add(op, 0.0, arg);
    }
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (vars_[i] == name) return add(Op::variable, static_cast<double>(i));
    }
    if (name == "pi") return add(Op::constant, std::numbers::pi);
    if (name == "sin" || name == "cos" || name == "exp" || name == "sqrt") {
      throw ParseError("function '" + name + "' requires an argument", start);
    }
    throw ParseError("unknown identifier '" + name + "'", start);
  }

  std::string_view text_;
  const std::vector<std::string>& vars_;
  std::size_t pos_ = 0;
  Expression expr_;
};

Expression Expression::parse(std::string_view text, const std::vector<std::string>& variables) {
  return ExpressionParser(text, variables).run();
}

Expression Expression::constant(double value) {
  Expression e;
  e.nodes_.push_back({Op::constant, value, -1, -1});
  e.root_ = 0;
  std::ostringstream os;
  os.precision(17);
  os << value;
  e.source_ = os.str();
  return e;
}

bool Expression::independent_of(std::size_t index) const {
  for (const Node& n : nodes_) {
    if (n.op == Op::variable && static_cast<std::size_t>(n.value) == index) return false;
  }
  return true;
}

std::vector<std::string> split_expressions(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t end = text.find(';', start);
    std::string piece(text.substr(start, end == std::string_view::npos ? end : end - start));
    const auto first = piece.find_first_not_of(" \t\r\n");
    const auto last = piece.find_last_not_of(" \t\r\n");
    piece = first == std::string::npos ? std::string() : piece.substr(first, last - first + 1);
    if (end == std::string_view::npos) {
      if (!piece.empty() || out.empty()) out.push_back(piece);
      break;
    }
    out.push_back(piece);
    start = end + 1;
  }
  return out;
}

std::vector<std::string> space_time_variables(int dimension) {
  std::vector<std::string> names;
  for (int i = 1; i <= dimension; ++i) names.push_back("x" + std::to_string(i));
  names.emplace_back("t");
  return names;
}

ExpressionField::ExpressionField(const std::vector<std::string>& components, int dimension)
    : dimension_(dimension) {
  if (static_cast<int>(components.size()) != dimension) {
    throw ParseError("expected " + std::to_string(dimension) + " components, got " +
                         std::to_string(components.size()),
                     0);
  }
  const auto vars = space_time_variables(dimension);
  for (const auto& c : components) components_.push_back(Expression::parse(c, vars));
}

Vec ExpressionField::operator()(const Vec& x, double t) const {
  std::array<double, kMaxDim + 1> vars{};
  for (int i = 0; i < dimension_; ++i) vars[static_cast<std::size_t>(i)] = x[i];
  vars[static_cast<std::size_t>(dimension_)] = t;
  const std::span<const double> v(vars.data(), static_cast<std::size_t>(dimension_ + 1));
  Vec out(dimension_);
  for (int i = 0; i < dimension_; ++i) out[i] = components_[static_cast<std::size_t>(i)](v);
  return out;
}

std::vector<std::string> ExpressionField::sources() const {
  std::vector<std::string> s;
  for (const auto& c : components_) s.push_back(c.source());
  return s;
}

}  // namespace qlflow
