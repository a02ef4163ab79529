//! Small line-delimited record files used by the pair-labelling and
//! prediction tools. Field escaping follows [`crate::data::manifest`].
//!
//! * pair labels: `sample_id  lah_p_to_a  lah_a_to_p  laeo  sa` (flags `0`/`1`)
//! * person points: `sample_id  person  x  y`
//! * person regions: `sample_id  person  x_min  y_min  x_max  y_max`
//! * predictions: `sample_id  label  p_0 … p_{N-1}` (label is a class index or `-`)

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::manifest::{escape_field, parse_float, parse_text, record_lines};
use super::{HeadBox, PairLabel, PredictionRecord};
use crate::error::{Error, Result};

fn flag(b: bool) -> u8 {
    u8::from(b)
}

pub fn write_pair_labels(rows: &[(String, PairLabel)]) -> String {
    let mut out = String::new();
    for (id, p) in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            escape_field(id),
            flag(p.lah_p_to_a),
            flag(p.lah_a_to_p),
            flag(p.laeo),
            flag(p.sa)
        );
    }
    out
}

pub fn parse_pair_labels(text: &str) -> Result<Vec<(String, PairLabel)>> {
    let mut out = Vec::new();
    for (line, raw) in record_lines(text) {
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() != 5 {
            return Err(Error::Parse {
                line,
                message: format!("expected 5 fields, found {}", f.len()),
            });
        }
        let mut flags = [false; 4];
        for (i, v) in f[1..].iter().enumerate() {
            flags[i] = match *v {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("flag {other:?} is not 0 or 1"),
                    })
                }
            };
        }
        out.push((
            parse_text(line, "sample_id", f[0])?,
            PairLabel {
                lah_p_to_a: flags[0],
                lah_a_to_p: flags[1],
                laeo: flags[2],
                sa: flags[3],
            },
        ));
    }
    Ok(out)
}

/// Per-sample, per-person values keyed by sample id then person index.
pub type PersonTable<T> = BTreeMap<String, BTreeMap<usize, T>>;

fn parse_person_prefix(line: usize, f: &[&str]) -> Result<(String, usize)> {
    let id = parse_text(line, "sample_id", f[0])?;
    let person = f[1].parse::<usize>().map_err(|_| Error::Parse {
        line,
        message: format!("person index {:?} is not an integer", f[1]),
    })?;
    Ok((id, person))
}

pub fn parse_person_points(text: &str) -> Result<PersonTable<[f64; 2]>> {
    let mut out: PersonTable<[f64; 2]> = BTreeMap::new();
    for (line, raw) in record_lines(text) {
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", f.len()),
            });
        }
        let (id, person) = parse_person_prefix(line, &f)?;
        let p = [parse_float(line, "x", f[2])?, parse_float(line, "y", f[3])?];
        if out.entry(id.clone()).or_default().insert(person, p).is_some() {
            return Err(Error::Validation {
                line,
                field: "person".into(),
                message: format!("duplicate person {person} for {id:?}"),
            });
        }
    }
    Ok(out)
}

pub fn parse_person_boxes(text: &str) -> Result<PersonTable<HeadBox>> {
    let mut out: PersonTable<HeadBox> = BTreeMap::new();
    for (line, raw) in record_lines(text) {
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() != 6 {
            return Err(Error::Parse {
                line,
                message: format!("expected 6 fields, found {}", f.len()),
            });
        }
        let (id, person) = parse_person_prefix(line, &f)?;
        let mut v = [0.0; 4];
        for (i, name) in ["x_min", "y_min", "x_max", "y_max"].iter().enumerate() {
            v[i] = parse_float(line, name, f[2 + i])?;
        }
        let b = HeadBox::new(v[0], v[1], v[2], v[3]).map_err(|e| match e {
            Error::Invalid { field, message } => Error::Validation {
                line,
                field,
                message,
            },
            other => other,
        })?;
        if out.entry(id.clone()).or_default().insert(person, b).is_some() {
            return Err(Error::Validation {
                line,
                field: "person".into(),
                message: format!("duplicate person {person} for {id:?}"),
            });
        }
    }
    Ok(out)
}

pub fn write_predictions(rows: &[(PredictionRecord, Option<usize>)]) -> String {
    let mut out = String::new();
    for (r, label) in rows {
        out.push_str(&escape_field(&r.sample_id));
        match label {
            Some(l) => {
                let _ = write!(out, "\t{l}");
            }
            None => out.push_str("\t-"),
        }
        for p in &r.probabilities {
            let _ = write!(out, "\t{p}");
        }
        out.push('\n');
    }
    out
}

/// Parses a predictions file into `(sample_id, label, probabilities)` rows.
pub fn parse_predictions(text: &str) -> Result<Vec<(String, Option<usize>, Vec<f64>)>> {
    let mut out = Vec::new();
    let mut width = None;
    for (line, raw) in record_lines(text) {
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() < 4 {
            return Err(Error::Parse {
                line,
                message: "expected sample_id, label and at least two probabilities".into(),
            });
        }
        if *width.get_or_insert(f.len()) != f.len() {
            return Err(Error::Parse {
                line,
                message: "inconsistent number of probabilities".into(),
            });
        }
        let label = match f[1] {
            "-" => None,
            v => Some(v.parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("label {v:?} is not a class index"),
            })?),
        };
        let probs = f[2..]
            .iter()
            .map(|v| parse_float(line, "probability", v))
            .collect::<Result<Vec<_>>>()?;
        out.push((parse_text(line, "sample_id", f[0])?, label, probs));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_labels_round_trip() {
        let rows = vec![
            ("a".to_string(), PairLabel { lah_p_to_a: true, lah_a_to_p: true, laeo: true, sa: false }),
            ("b\tc".to_string(), PairLabel { sa: true, ..PairLabel::default() }),
        ];
        let text = write_pair_labels(&rows);
        assert_eq!(parse_pair_labels(&text).unwrap(), rows);
        assert!(parse_pair_labels("a\t1\t0\t2\t0\n").is_err());
    }

    #[test]
    fn person_tables_reject_duplicates() {
        let pts = parse_person_points("s\t0\t0.5\t0.5\ns\t1\t0.2\t0.3\n").unwrap();
        assert_eq!(pts["s"][&1], [0.2, 0.3]);
        assert!(parse_person_points("s\t0\t0.5\t0.5\ns\t0\t0.2\t0.3\n").is_err());
        let boxes = parse_person_boxes("s\t0\t0.1\t0.1\t0.2\t0.2\n").unwrap();
        assert_eq!(boxes["s"][&0].x_max, 0.2);
        assert!(parse_person_boxes("s\t0\t0.3\t0.1\t0.2\t0.2\n").is_err());
    }

    #[test]
    fn predictions_round_trip() {
        let r = PredictionRecord::from_logits("x", vec![0.1, 0.4, -1.0]);
        let text = write_predictions(&[(r.clone(), Some(1))]);
        let back = parse_predictions(&text).unwrap();
        assert_eq!(back[0].0, "x");
        assert_eq!(back[0].1, Some(1));
        assert_eq!(back[0].2, r.probabilities);
    }
}
