//! Parser for the profile mini-grammar.
//!
//! ```text
//! expr   := factor ('*' factor)*
//! factor := 'pow(' num ')' | 'logp(' num ',' num ')' | 'logm(' num ',' num ')'
//!         | 'expg(' num ',' num ')' | 'const(' num ')' | 'table(' path ')'
//! ```

use std::sync::Arc;

use super::expr::{Expr, Table};
use crate::error::{Error, Result};

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, pos: usize, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, want: char) -> Result<()> {
        match self.peek() {
            Some(c) if c == want => {
                self.pos += c.len_utf8();
                Ok(())
            }
            Some(c) => self.err(self.pos, format!("expected `{want}`, found `{c}`")),
            None => self.err(self.pos, format!("expected `{want}`, found end of input")),
        }
    }

    fn ident(&mut self) -> Result<(usize, &'a str)> {
        self.skip_ws();
        let start = self.pos;
        let len = self.src[start..]
            .find(|c: char| !c.is_ascii_alphanumeric() && c != '_')
            .unwrap_or(self.src.len() - start);
        if len == 0 {
            return self.err(start, "expected a primitive name");
        }
        self.pos += len;
        Ok((start, &self.src[start..start + len]))
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let len = self.src[start..]
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
            .unwrap_or(self.src.len() - start);
        let text = &self.src[start..start + len];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos += len;
                Ok(v)
            }
            _ => self.err(start, format!("expected a number, found `{text}`")),
        }
    }

    fn path(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        let mut depth = 0usize;
        for (i, c) in self.src[start..].char_indices() {
            match c {
                '(' => depth += 1,
                ')' if depth == 0 => {
                    self.pos = start + i;
                    let p = self.src[start..start + i].trim();
                    if p.is_empty() {
                        return self.err(start, "empty table path");
                    }
                    return Ok(p.to_string());
                }
                ')' => depth -= 1,
                _ => {}
            }
        }
        self.err(self.src.len(), "unterminated table path")
    }

    fn factor(&mut self) -> Result<Expr> {
        let (at, name) = self.ident()?;
        self.expect('(')?;
        let e = match name {
            "pow" => Expr::Pow(self.number()?),
            "const" => {
                let p = self.pos;
                let c = self.number()?;
                if c <= 0.0 {
                    return self.err(p, "const(c) needs c > 0");
                }
                Expr::Const(c)
            }
            "logp" | "logm" => {
                let beta = self.number()?;
                self.expect(',')?;
                let b = self.number()?;
                if name == "logp" {
                    Expr::LogP { beta, b }
                } else {
                    Expr::LogM { beta, b }
                }
            }
            "expg" => {
                let c = self.number()?;
                self.expect(',')?;
                let gamma = self.number()?;
                Expr::ExpG { c, gamma }
            }
            "table" => {
                let p = self.pos;
                let path = self.path()?;
                let tab = Table::read_csv(&path).map_err(|e| Error::Parse { pos: p, msg: e.to_string() })?;
                Expr::Table(Arc::new(tab))
            }
            other => return self.err(at, format!("unknown primitive `{other}`")),
        };
        self.expect(')')?;
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut factors = vec![self.factor()?];
        while let Some('*') = self.peek() {
            self.pos += 1;
            factors.push(self.factor()?);
        }
        if let Some(c) = self.peek() {
            return self.err(self.pos, format!("unexpected `{c}` after expression"));
        }
        Ok(Expr::product(factors))
    }
}

/// Parses a profile expression such as `pow(-1.5)*expg(1,1)`.
pub fn parse_expr(src: &str) -> Result<Expr> {
    Parser { src, pos: 0 }.expr()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_products() {
        let e = parse_expr("pow(-1.5) * expg(1,1)").unwrap();
        assert_eq!(
            e,
            Expr::Product(vec![Expr::Pow(-1.5), Expr::ExpG { c: 1.0, gamma: 1.0 }])
        );
        assert_eq!(e.to_string(), "pow(-1.5)*expg(1,1)");
        assert_eq!(parse_expr("logm(2, 1e0)").unwrap(), Expr::LogM { beta: 2.0, b: 1.0 });
    }

    #[test]
    fn reports_positions() {
        match parse_expr("pow(-1)*foo(2)") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 8),
            other => panic!("{other:?}"),
        }
        match parse_expr("pow(x)") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("{other:?}"),
        }
        match parse_expr("pow(1) pow(2)") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 7),
            other => panic!("{other:?}"),
        }
        assert!(parse_expr("expg(1 1)").is_err());
        assert!(parse_expr("const(-2)").is_err());
    }
}
