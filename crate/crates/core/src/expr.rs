//! Tiny arithmetic-expression parser for user-supplied densities.
//!
//! Grammar: `+ - * / ^`, parentheses, numeric literals, the variable `s`
//! (aliases `t`, `x`), the constants `pi` and `e`, and the one-argument
//! functions `exp`, `ln`, `log`, `sqrt`, `sin`, `cos`, `abs` plus the
//! two-argument `pow`. `^` binds right and tighter than unary minus.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
    Abs,
    Pow,
}

impl Expr {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var => s,
            Expr::Neg(e) => -e.eval(s),
            Expr::Add(a, b) => a.eval(s) + b.eval(s),
            Expr::Sub(a, b) => a.eval(s) - b.eval(s),
            Expr::Mul(a, b) => a.eval(s) * b.eval(s),
            Expr::Div(a, b) => a.eval(s) / b.eval(s),
            Expr::Pow(a, b) => a.eval(s).powf(b.eval(s)),
            Expr::Call(f, args) => match f {
                Func::Exp => args[0].eval(s).exp(),
                Func::Ln => args[0].eval(s).ln(),
                Func::Sqrt => args[0].eval(s).sqrt(),
                Func::Sin => args[0].eval(s).sin(),
                Func::Cos => args[0].eval(s).cos(),
                Func::Abs => args[0].eval(s).abs(),
                Func::Pow => args[0].eval(s).powf(args[1].eval(s)),
            },
        }
    }
}

pub fn parse(src: &str) -> Result<Expr> {
    let mut p = Parser {
        chars: src.chars().collect(),
        pos: 0,
        src,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.chars.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    src: &'a str,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: &str) -> Error {
        Error::InvalidSpec(format!(
            "expression `{}`: {msg} at position {}",
            self.src, self.pos
        ))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            // right associative; exponent may itself be signed
            let exp = self.unary()?;
            Ok(Expr::Pow(Box::new(base), Box::new(exp)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            _ => Err(self.error("expected a number, name or `(`")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            if c.is_ascii_digit() || c == '.' {
                self.pos += 1;
            } else if (c == 'e' || c == 'E')
                && self.pos > start
                && self
                    .chars
                    .get(self.pos + 1)
                    .is_some_and(|n| n.is_ascii_digit() || *n == '+' || *n == '-')
            {
                self.pos += 2;
            } else {
                break;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| self.error("malformed number"))
    }

    fn ident(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name: String = self.chars[start..self.pos].iter().collect();
        match name.as_str() {
            "s" | "t" | "x" => Ok(Expr::Var),
            "pi" => Ok(Expr::Num(std::f64::consts::PI)),
            "e" => Ok(Expr::Num(std::f64::consts::E)),
            "exp" => self.call(Func::Exp, 1),
            "ln" | "log" => self.call(Func::Ln, 1),
            "sqrt" => self.call(Func::Sqrt, 1),
            "sin" => self.call(Func::Sin, 1),
            "cos" => self.call(Func::Cos, 1),
            "abs" => self.call(Func::Abs, 1),
            "pow" => self.call(Func::Pow, 2),
            _ => Err(self.error(&format!("unknown name `{name}`"))),
        }
    }

    fn call(&mut self, f: Func, arity: usize) -> Result<Expr> {
        if !self.eat('(') {
            return Err(self.error("expected `(` after function name"));
        }
        let mut args = vec![self.expr()?];
        while self.eat(',') {
            args.push(self.expr()?);
        }
        if !self.eat(')') {
            return Err(self.error("expected `)`"));
        }
        if args.len() != arity {
            return Err(self.error(&format!("expected {arity} argument(s)")));
        }
        Ok(Expr::Call(f, args))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_and_precedence() {
        let e = parse("1 + 2*s^2").unwrap();
        assert_eq!(e.eval(3.0), 19.0);
        let e = parse("-s^2").unwrap();
        assert_eq!(e.eval(2.0), -4.0); // unary minus binds looser than ^
        let e = parse("2^-1").unwrap();
        assert_eq!(e.eval(0.0), 0.5);
    }

    #[test]
    fn functions() {
        let e = parse("exp(-s) / (1 + s^2)").unwrap();
        let s = 0.7;
        assert!((e.eval(s) - (-s as f64).exp() / (1.0 + s * s)).abs() < 1e-15);
        let e = parse("pow(s, 1.5) + sqrt(s)").unwrap();
        assert!((e.eval(4.0) - (8.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse("2 +").is_err());
        assert!(parse("foo(s)").is_err());
        assert!(parse("1 2").is_err());
        assert!(parse("exp(s, 1)").is_err());
    }
}
