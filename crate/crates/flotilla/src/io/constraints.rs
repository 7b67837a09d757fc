//! Constraint files: one functor per line, Prolog-style.
//!
//! Emission always uses the `d(component,flavour)` term form, with the weight
//! appended as a last argument for energy constraints only:
//!
//! ```text
//! avoid(d(frontend,large),public1).
//! avoid(d(database,large),private1,1.0).
//! affinity(d(api,large),d(redis,large),0.52).
//! ```
//!
//! Parsing additionally accepts the flat four-argument form
//! `affinity(frontend,large,load_balancer,large).` and an optional numeric
//! weight on any constraint (missing weight means 1.0). `%` and `#` start
//! comment lines.

use crate::model::{ConstraintKind, FlavourRef, Provenance, SoftConstraint};

use super::ParseError;

pub fn emit_constraints(cs: &[SoftConstraint]) -> String {
    let mut out = String::new();
    for c in cs {
        out.push_str(&c.render());
        out.push('\n');
    }
    out
}

/// Parse a constraint file, tagging every constraint with `provenance`
/// (constraint files are written per enhancer, so the file itself is the
/// provenance).
pub fn parse_constraints(
    text: &str,
    provenance: Provenance,
) -> Result<Vec<SoftConstraint>, ParseError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        out.push(parse_line(line, idx + 1, provenance)?);
    }
    Ok(out)
}

fn parse_line(
    line: &str,
    line_no: usize,
    provenance: Provenance,
) -> Result<SoftConstraint, ParseError> {
    let mut toks = Tokenizer::new(line, line_no);
    let head = toks.ident()?;
    toks.expect('(')?;
    let mut args = Vec::new();
    loop {
        args.push(toks.arg()?);
        if toks.peek_is(',') {
            toks.expect(',')?;
        } else {
            break;
        }
    }
    toks.expect(')')?;
    toks.expect('.')?;
    toks.end()?;

    // An optional trailing number is the weight.
    let weight = match args.last() {
        Some(Arg::Number(w)) => {
            let w = *w;
            if !(w > 0.0 && w <= 1.0) {
                return Err(ParseError::at(
                    line_no,
                    format!("weight {w} outside (0, 1]"),
                ));
            }
            args.pop();
            w
        }
        _ => 1.0,
    };

    let kind = match head.as_str() {
        "avoid" => match args.as_slice() {
            [Arg::Pair(c, f), Arg::Ident(n)] => ConstraintKind::avoid(c, f, n),
            [Arg::Ident(c), Arg::Ident(f), Arg::Ident(n)] => ConstraintKind::avoid(c, f, n),
            _ => {
                return Err(ParseError::at(
                    line_no,
                    "avoid expects (d(c,f),node) or (c,f,node)",
                ))
            }
        },
        "affinity" | "antiaffinity" => {
            let (a, b) = match args.as_slice() {
                [Arg::Pair(c1, f1), Arg::Pair(c2, f2)] => {
                    (FlavourRef::new(c1, f1), FlavourRef::new(c2, f2))
                }
                [Arg::Ident(c1), Arg::Ident(f1), Arg::Ident(c2), Arg::Ident(f2)] => {
                    (FlavourRef::new(c1, f1), FlavourRef::new(c2, f2))
                }
                _ => {
                    return Err(ParseError::at(
                        line_no,
                        format!("{head} expects (d(c,f),d(s,g)) or (c,f,s,g)"),
                    ))
                }
            };
            if head == "affinity" {
                ConstraintKind::affinity(a, b)
            } else {
                ConstraintKind::anti_affinity(a, b)
            }
        }
        other => {
            return Err(ParseError::at(
                line_no,
                format!("unknown constraint {other:?}"),
            ))
        }
    };

    Ok(SoftConstraint {
        kind,
        weight,
        provenance,
        estimated_impact_g: None,
    })
}

enum Arg {
    Ident(String),
    Number(f64),
    Pair(String, String),
}

struct Tokenizer<'a> {
    rest: &'a str,
    line_no: usize,
}

impl<'a> Tokenizer<'a> {
    fn new(line: &'a str, line_no: usize) -> Self {
        Tokenizer {
            rest: line,
            line_no,
        }
    }

    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start();
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError::at(self.line_no, message)
    }

    fn peek_is(&mut self, c: char) -> bool {
        self.skip_ws();
        self.rest.starts_with(c)
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        self.skip_ws();
        if let Some(rest) = self.rest.strip_prefix(c) {
            self.rest = rest;
            Ok(())
        } else {
            Err(self.err(format!("expected {c:?} at {:?}", self.rest)))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        let end = self
            .rest
            .char_indices()
            .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_' || *c == '-'))
            .map(|(i, _)| i)
            .unwrap_or(self.rest.len());
        if end == 0 {
            return Err(self.err(format!("expected a name at {:?}", self.rest)));
        }
        let (tok, rest) = self.rest.split_at(end);
        self.rest = rest;
        Ok(tok.to_string())
    }

    fn arg(&mut self) -> Result<Arg, ParseError> {
        self.skip_ws();
        if self.rest.starts_with(|c: char| c.is_ascii_digit()) {
            let end = self
                .rest
                .char_indices()
                .find(|(_, c)| !(c.is_ascii_digit() || *c == '.'))
                .map(|(i, _)| i)
                .unwrap_or(self.rest.len());
            // A weight like `1.0` is followed by `)`; the functor terminator
            // `.` must not be swallowed, so trim a trailing bare dot.
            let mut end = end;
            if self.rest[..end].ends_with('.') {
                end -= 1;
            }
            let (tok, rest) = self.rest.split_at(end);
            self.rest = rest;
            let value: f64 = tok
                .parse()
                .map_err(|_| self.err(format!("bad number {tok:?}")))?;
            return Ok(Arg::Number(value));
        }
        let name = self.ident()?;
        if name == "d" && self.peek_is('(') {
            self.expect('(')?;
            let c = self.ident()?;
            self.expect(',')?;
            let f = self.ident()?;
            self.expect(')')?;
            return Ok(Arg::Pair(c, f));
        }
        Ok(Arg::Ident(name))
    }

    fn end(&mut self) -> Result<(), ParseError> {
        self.skip_ws();
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(self.err(format!("trailing input {:?}", self.rest)))
        }
    }
}
