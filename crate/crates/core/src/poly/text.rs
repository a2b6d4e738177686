//! Line-oriented text form: `coeff  var^exp var^exp ...`, one term per line.

use std::fmt;
use std::str::FromStr;

use super::{Coeff, Monomial, Polynomial, VarId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct ParsePolyError {
    pub line: usize,
    pub msg: String,
}

impl<C: Coeff> Polynomial<C> {
    /// Canonical serialization, terms in graded-lex order. The zero
    /// polynomial serializes to the empty string.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (m, c) in self.terms() {
            out.push_str(&c.to_string());
            if !m.is_one() {
                out.push_str("  ");
                out.push_str(&m.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Parses the canonical form. Blank lines and `#` comments are skipped;
    /// a bare variable token means exponent 1.
    pub fn from_text(s: &str) -> Result<Self, ParsePolyError> {
        let mut terms = Vec::new();
        for (n, raw) in s.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| ParsePolyError { line: n + 1, msg };
            let mut toks = line.split_whitespace();
            let ctok = toks.next().expect("nonempty line");
            let c = C::parse_coeff(ctok).ok_or_else(|| err(format!("bad coefficient `{ctok}`")))?;
            let mut pairs = Vec::new();
            for tok in toks {
                let (name, exp) = match tok.split_once('^') {
                    Some((name, e)) => {
                        let e: u32 = e.parse().map_err(|_| err(format!("bad exponent in `{tok}`")))?;
                        (name, e)
                    }
                    None => (tok, 1),
                };
                let v = VarId::from_str(name).map_err(|e| err(e.to_string()))?;
                pairs.push((v, exp));
            }
            terms.push((Monomial::from_pairs(pairs), c));
        }
        Ok(Polynomial::from_terms(terms))
    }
}

impl<C: Coeff> fmt::Display for Polynomial<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (n, (m, c)) in self.terms().enumerate() {
            if n > 0 {
                write!(f, " + ")?;
            }
            if m.is_one() {
                write!(f, "{c}")?;
            } else {
                write!(f, "{c}*{}", m.to_string().replace(' ', "*"))?;
            }
        }
        Ok(())
    }
}
