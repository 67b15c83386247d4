//! Labeled-trace files: a header line followed by one flow per line,
//! `label,f1,f2,f3,f4,f5,f6,f7`.

use std::fmt::Write as _;

use crate::classifier::LabeledExample;
use crate::error::ParseError;
use crate::flow::{ClassLabel, FeatureVector, NUM_FEATURES};

pub const HEADER: &str = "label,f1,f2,f3,f4,f5,f6,f7";

pub fn parse_traces(text: &str) -> Result<Vec<LabeledExample>, ParseError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        Some(_) => return Err(ParseError::new(1, format!("expected header `{HEADER}`"))),
        None => return Err(ParseError::new(1, "empty trace file")),
    }
    let mut out = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != NUM_FEATURES + 1 {
            return Err(ParseError::new(
                line_no,
                format!("expected {} fields, found {}", NUM_FEATURES + 1, fields.len()),
            ));
        }
        let label = fields[0]
            .parse::<u8>()
            .ok()
            .and_then(ClassLabel::new)
            .ok_or_else(|| ParseError::new(line_no, format!("invalid label `{}`", fields[0])))?;
        let mut values = [0.0; NUM_FEATURES];
        for (i, f) in fields[1..].iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| ParseError::new(line_no, format!("invalid f{} `{f}`", i + 1)))?;
            if !v.is_finite() || v < 0.0 {
                return Err(ParseError::new(
                    line_no,
                    format!("f{} must be finite and non-negative", i + 1),
                ));
            }
            values[i] = v;
        }
        out.push(LabeledExample {
            features: FeatureVector::from_array(values),
            label,
        });
    }
    Ok(out)
}

pub fn write_traces(examples: &[LabeledExample]) -> String {
    let mut out = String::with_capacity(64 * (examples.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for e in examples {
        let _ = write!(out, "{}", e.label);
        for v in e.features.to_array() {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_writes() {
        let text = format!("{HEADER}\n1,1,0.01,0,0.01,0.01,1250,0\n\n4,2.5,1,0.5,0.1,3,1500,40\n");
        let ex = parse_traces(&text).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].label.get(), 1);
        assert_eq!(ex[1].features.mean_bwd_pkt_len, 40.0);
        assert_eq!(parse_traces(&write_traces(&ex)).unwrap(), ex);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            (String::new(), 1),
            ("label,f1\n".to_string(), 1),
            (format!("{HEADER}\n1,1,1,1,1,1,1\n"), 2),
            (format!("{HEADER}\n1,1,1,1,1,1,1,1\n5,1,1,1,1,1,1,1\n"), 3),
            (format!("{HEADER}\n1,1,1,1,x,1,1,1\n"), 2),
            (format!("{HEADER}\n1,1,1,1,-1,1,1,1\n"), 2),
            (format!("{HEADER}\n1,1,1,1,inf,1,1,1\n"), 2),
        ];
        for (text, line) in cases {
            let err = parse_traces(&text).unwrap_err();
            assert_eq!(err.line, line, "{text:?}: {err}");
        }
    }
}
