//! Deployment text files: one `component flavour node` line per assignment,
//! lexicographically ordered. Blank lines and `#` comments are tolerated on
//! input and never produced on output.

use crate::model::{Assignment, Deployment};

use super::ParseError;

pub fn emit_deployment(d: &Deployment) -> String {
    let mut out = String::new();
    for a in d.assignments() {
        out.push_str(&a.component);
        out.push(' ');
        out.push_str(&a.flavour);
        out.push(' ');
        out.push_str(&a.node);
        out.push('\n');
    }
    out
}

pub fn parse_deployment(text: &str) -> Result<Deployment, ParseError> {
    let mut assignments = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(ParseError::at(
                idx + 1,
                format!("expected `component flavour node`, got {line:?}"),
            ));
        }
        if assignments
            .iter()
            .any(|a: &Assignment| a.component == fields[0])
        {
            return Err(ParseError::at(
                idx + 1,
                format!("component {} assigned twice", fields[0]),
            ));
        }
        assignments.push(Assignment::new(fields[0], fields[1], fields[2]));
    }
    Ok(Deployment::new(assignments))
}
