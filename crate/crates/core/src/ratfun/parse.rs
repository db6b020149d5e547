use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::{ParamTable, RatFunError, RationalFunction};

/// Parses an arithmetic expression over declared parameters.
///
/// Grammar: `+ - * / ^ ( )`, unary minus, decimal (`0.95`) or integer
/// literals, and identifiers `[A-Za-z_][A-Za-z0-9_]*`. Exponents must be
/// integer literals.
pub fn parse_expr(text: &str, params: &ParamTable) -> Result<RationalFunction, RatFunError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, params };
    let out = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(out)
}

/// Parses a constant such as `0.95`, `3/4` or `-2`.
pub fn parse_rational(text: &str) -> Result<BigRational, RatFunError> {
    let empty = ParamTable::new();
    let f = parse_expr(text, &empty)?;
    f.constant_value().cloned().ok_or_else(|| RatFunError::Syntax { col: 0, msg: "expected a constant".into() })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    params: &'a ParamTable,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> RatFunError {
        RatFunError::Syntax { col: self.pos + 1, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<RationalFunction, RatFunError> {
        let mut acc = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if c == b'+' { acc.add(&rhs) } else { acc.sub(&rhs) };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<RationalFunction, RatFunError> {
        let mut acc = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            acc = if c == b'*' { acc.mul(&rhs) } else { acc.div(&rhs)? };
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<RationalFunction, RatFunError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(self.unary()?.neg())
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<RationalFunction, RatFunError> {
        let base = self.atom()?;
        if self.peek() != Some(b'^') {
            return Ok(base);
        }
        self.pos += 1;
        let negative = if self.peek() == Some(b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        let exp: u32 = digits.parse().map_err(|_| self.error("expected integer exponent"))?;
        let mut out = RationalFunction::one();
        for _ in 0..exp {
            out = out.mul(&base);
        }
        if negative {
            out = out.recip()?;
        }
        Ok(out)
    }

    fn atom(&mut self) -> Result<RationalFunction, RatFunError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                match self.params.id(name) {
                    Some(id) => Ok(RationalFunction::var(id)),
                    None => Err(RatFunError::UndeclaredParameter(name.to_string())),
                }
            }
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<RationalFunction, RatFunError> {
        let start = self.pos;
        let mut int_part = BigInt::zero();
        let mut scale = BigInt::one();
        let mut seen_dot = false;
        let mut digits = 0;
        while let Some(&c) = self.src.get(self.pos) {
            if c.is_ascii_digit() {
                int_part = int_part * 10u32 + u32::from(c - b'0');
                if seen_dot {
                    scale *= 10u32;
                }
                digits += 1;
            } else if c == b'.' && !seen_dot {
                seen_dot = true;
            } else {
                break;
            }
            self.pos += 1;
        }
        if digits == 0 {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        Ok(RationalFunction::constant(BigRational::new(int_part, scale)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratfun::Valuation;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn constants() {
        assert_eq!(parse_rational("0.95").unwrap(), r(19, 20));
        assert_eq!(parse_rational("(0.99 - 0.95)/(1 - 0.95)").unwrap(), r(4, 5));
        assert_eq!(parse_rational("-3/4").unwrap(), r(-3, 4));
        assert_eq!(parse_rational("2^3").unwrap(), r(8, 1));
        assert!(parse_rational("1 +").is_err());
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn parameters() {
        let t = ParamTable::from_names(["p", "r"]);
        let f = parse_expr("p / (1 - (1 - p) * r)", &t).unwrap();
        let mut v = Valuation::new(2);
        v.set(t.id("p").unwrap(), r(1, 1));
        v.set(t.id("r").unwrap(), r(3, 10));
        assert_eq!(f.eval(&v).unwrap(), r(1, 1));
        assert!(matches!(parse_expr("q", &t), Err(RatFunError::UndeclaredParameter(_))));
    }

    #[test]
    fn display_round_trip() {
        let t = ParamTable::from_names(["a", "b", "c"]);
        for src in ["a + b - a*b", "(2*a - 1)/(3*b^2 + c)", "-a/b", "1/2*a*(1 - c)^2/(b*(1 + a))", "a^-2"] {
            let f = parse_expr(src, &t).unwrap();
            let text = f.display(&t).to_string();
            let g = parse_expr(&text, &t).unwrap();
            assert_eq!(f, g, "{src} -> {text}");
        }
    }
}
