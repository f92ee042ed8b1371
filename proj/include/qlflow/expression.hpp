#pragma once

// Arithmetic expression trees over named variables, evaluable on any scalar
// type (double or Dual) so that derivatives come from forward-mode AD.

#include <qlflow/common.hpp>
#include <qlflow/dual.hpp>

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qlflow {

class Expression {
 public:
  enum class Op { constant, variable, add, sub, mul, div, pow, neg, sin, cos, exp, sqrt };

  /// Parse `text` over the given variable names. Recognized functions:
  /// sin, cos, exp, sqrt; operators + - * / ^; the constant `pi`.
  static Expression parse(std::string_view text, const std::vector<std::string>& variables);

  /// Constant-valued expression.
  static Expression constant(double value);

  const std::string& source() const { return source_; }
  std::size_t variable_count() const { return variable_count_; }

  /// True when the expression does not reference variable `index`.
  bool independent_of(std::size_t index) const;

  template <typename Scalar>
  Scalar evaluate(std::span<const Scalar> vars) const {
    return eval<Scalar>(root_, vars);
  }

  double operator()(std::span<const double> vars) const { return evaluate<double>(vars); }

 private:
  struct Node {
    Op op;
    double value = 0.0;
    int lhs = -1;
    int rhs = -1;
  };

  template <typename Scalar>
  Scalar eval(int id, std::span<const Scalar> vars) const {
    using std::cos;
    using std::exp;
    using std::pow;
    using std::sin;
    using std::sqrt;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    switch (n.op) {
      case Op::constant:
        return Scalar(n.value);
      case Op::variable:
        return vars[static_cast<std::size_t>(n.value)];
      case Op::add:
        return eval<Scalar>(n.lhs, vars) + eval<Scalar>(n.rhs, vars);
      case Op::sub:
        return eval<Scalar>(n.lhs, vars) - eval<Scalar>(n.rhs, vars);
      case Op::mul:
        return eval<Scalar>(n.lhs, vars) * eval<Scalar>(n.rhs, vars);
      case Op::div:
        return eval<Scalar>(n.lhs, vars) / eval<Scalar>(n.rhs, vars);
      case Op::pow: {
        const Node& e = nodes_[static_cast<std::size_t>(n.rhs)];
        if (e.op == Op::constant) return pow(eval<Scalar>(n.lhs, vars), e.value);
        return pow(eval<Scalar>(n.lhs, vars), eval<Scalar>(n.rhs, vars));
      }
      case Op::neg:
        return -eval<Scalar>(n.lhs, vars);
      case Op::sin:
        return sin(eval<Scalar>(n.lhs, vars));
      case Op::cos:
        return cos(eval<Scalar>(n.lhs, vars));
      case Op::exp:
        return exp(eval<Scalar>(n.lhs, vars));
      case Op::sqrt:
        return sqrt(eval<Scalar>(n.lhs, vars));
    }
    return Scalar(0);
  }

  friend class ExpressionParser;

  std::vector<Node> nodes_;
  int root_ = -1;
  std::string source_;
  std::size_t variable_count_ = 0;
};

/// Split `text` on ';' into trimmed pieces (empty trailing piece dropped).
std::vector<std::string> split_expressions(std::string_view text);

/// Standard variable names x1..xd followed by t.
std::vector<std::string> space_time_variables(int dimension);

/// A vector field given by `dimension` expressions in x1..xd, t.
class ExpressionField {
 public:
  ExpressionField() = default;
  ExpressionField(const std::vector<std::string>& components, int dimension);

  int dimension() const { return dimension_; }
  const std::vector<Expression>& components() const { return components_; }
  Vec operator()(const Vec& x, double t) const;
  std::vector<std::string> sources() const;

 private:
  int dimension_ = 0;
  std::vector<Expression> components_;
};

}  // namespace qlflow
