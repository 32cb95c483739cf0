#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dispersion/error.hpp"

namespace dispersion {

/// Small arithmetic expression language: numbers, named variables, pi, e,
/// + - * / ^ (right associative), unary minus, parentheses and the functions
/// log exp sqrt cos sin abs. Parsed once into a tree, evaluated many times.
class Expression {
public:
    Expression() = default;

    static Expression parse(const std::string& text, std::vector<std::string> variables) {
        Expression ex;
        ex.text_ = text;
        ex.vars_ = std::move(variables);
        Parser p{text, ex.vars_, ex.nodes_, 0};
        ex.root_ = p.expr();
        p.skip();
        if (p.pos != text.size()) p.fail("unexpected '" + std::string(1, text[p.pos]) + "'");
        return ex;
    }

    double operator()(std::span<const double> values) const {
        if (values.size() != vars_.size()) throw domain_error("expression: wrong number of variables");
        return eval(root_, values);
    }
    double operator()(double x) const { return (*this)(std::span<const double>(&x, 1)); }

    const std::string& text() const { return text_; }
    const std::vector<std::string>& variables() const { return vars_; }
    bool empty() const { return nodes_.empty(); }

private:
    enum class Op { num, var, add, sub, mul, div, pow, neg, log, exp, sqrt, cos, sin, abs };
    struct Node {
        Op op;
        double value = 0.0;
        int a = -1, b = -1;
    };

    struct Parser {
        const std::string& s;
        const std::vector<std::string>& vars;
        std::vector<Node>& nodes;
        std::size_t pos;

        [[noreturn]] void fail(const std::string& msg) const {
            throw domain_error("expression: " + msg + " at position " + std::to_string(pos) + " in \"" + s + "\"");
        }
        void skip() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }
        bool eat(char c) {
            skip();
            if (pos < s.size() && s[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }
        int add(Node n) {
            nodes.push_back(n);
            return static_cast<int>(nodes.size()) - 1;
        }
        int expr() {
            int lhs = term();
            for (;;) {
                if (eat('+')) lhs = add({Op::add, 0, lhs, term()});
                else if (eat('-')) lhs = add({Op::sub, 0, lhs, term()});
                else return lhs;
            }
        }
        int term() {
            int lhs = unary();
            for (;;) {
                if (eat('*')) lhs = add({Op::mul, 0, lhs, unary()});
                else if (eat('/')) lhs = add({Op::div, 0, lhs, unary()});
                else return lhs;
            }
        }
        // unary minus binds looser than ^, so -x^2 = -(x^2)
        int unary() {
            if (eat('-')) return add({Op::neg, 0, unary()});
            if (eat('+')) return unary();
            return power();
        }
        int power() {
            int base = primary();
            if (eat('^')) return add({Op::pow, 0, base, unary()});
            return base;
        }
        int primary() {
            skip();
            if (pos >= s.size()) fail("unexpected end");
            const char c = s[pos];
            if (c == '(') {
                ++pos;
                int inner = expr();
                if (!eat(')')) fail("missing ')'");
                return inner;
            }
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                const char* begin = s.c_str() + pos;
                char* end = nullptr;
                const double v = std::strtod(begin, &end);
                if (end == begin) fail("bad number");
                pos += static_cast<std::size_t>(end - begin);
                return add({Op::num, v});
            }
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                std::size_t start = pos;
                while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
                const std::string name = s.substr(start, pos - start);
                for (std::size_t i = 0; i < vars.size(); ++i) {
                    if (vars[i] == name) return add({Op::var, static_cast<double>(i)});
                }
                if (name == "pi") return add({Op::num, 3.141592653589793238462643383279502884});
                if (name == "e") return add({Op::num, 2.718281828459045235360287471352662498});
                Op fn;
                if (name == "log") fn = Op::log;
                else if (name == "exp") fn = Op::exp;
                else if (name == "sqrt") fn = Op::sqrt;
                else if (name == "cos") fn = Op::cos;
                else if (name == "sin") fn = Op::sin;
                else if (name == "abs") fn = Op::abs;
                else fail("unknown name '" + name + "'");
                if (!eat('(')) fail("expected '(' after " + name);
                int arg = expr();
                if (!eat(')')) fail("missing ')'");
                return add({fn, 0, arg});
            }
            fail("unexpected '" + std::string(1, c) + "'");
        }
    };

    double eval(int i, std::span<const double> x) const {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        switch (n.op) {
            case Op::num: return n.value;
            case Op::var: return x[static_cast<std::size_t>(n.value)];
            case Op::add: return eval(n.a, x) + eval(n.b, x);
            case Op::sub: return eval(n.a, x) - eval(n.b, x);
            case Op::mul: return eval(n.a, x) * eval(n.b, x);
            case Op::div: return eval(n.a, x) / eval(n.b, x);
            case Op::pow: return std::pow(eval(n.a, x), eval(n.b, x));
            case Op::neg: return -eval(n.a, x);
            case Op::log: return std::log(eval(n.a, x));
            case Op::exp: return std::exp(eval(n.a, x));
            case Op::sqrt: return std::sqrt(eval(n.a, x));
            case Op::cos: return std::cos(eval(n.a, x));
            case Op::sin: return std::sin(eval(n.a, x));
            case Op::abs: return std::fabs(eval(n.a, x));
        }
        return 0.0;
    }

    std::string text_;
    std::vector<std::string> vars_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace dispersion
