//! Line-delimited manifest files.
//!
//! Every record is one line of tab-separated fields. Text fields (sample id,
//! image path, context) escape `\` as `\\`, TAB as `\t`, LF as `\n` and CR as
//! `\r`, so a record never spans lines. Floats use Rust's shortest round-trip
//! formatting, so writing a loaded manifest reproduces it byte for byte.
//!
//! Dyad records:
//!
//! ```text
//! sample_id  image  px_min py_min px_max py_max  ax_min ay_min ax_max ay_max  label  [context]
//! ```
//!
//! `label` is a gaze class tag (`Share`, `Mutual`, `Single`, `Miss`, `Void`),
//! `LAEO` / `NotLAEO` for binary data, or `-` when unlabelled. The trailing
//! context field is omitted when there is no context text.
//!
//! Gaze-follow records:
//!
//! ```text
//! sample_id  image  x_min y_min x_max y_max  gaze_x gaze_y
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{DyadLabel, DyadSample, GazeFollowSample, HeadBox};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifestSchema {
    Dyad,
    GazeFollow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Manifest {
    Dyad(Vec<DyadSample>),
    GazeFollow(Vec<GazeFollowSample>),
}

impl Manifest {
    pub fn len(&self) -> usize {
        match self {
            Manifest::Dyad(v) => v.len(),
            Manifest::GazeFollow(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_text(&self) -> String {
        match self {
            Manifest::Dyad(v) => write_dyad_manifest(v),
            Manifest::GazeFollow(v) => write_gazefollow_manifest(v),
        }
    }
}

pub fn load_manifest(path: &Path, schema: ManifestSchema) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    match schema {
        ManifestSchema::Dyad => parse_dyad_manifest(&text).map(Manifest::Dyad),
        ManifestSchema::GazeFollow => parse_gazefollow_manifest(&text).map(Manifest::GazeFollow),
    }
}

pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => return Err(format!("unknown escape \\{other}")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(out)
}

/// Iterates non-empty lines with 1-based line numbers.
pub(crate) fn record_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.is_empty())
}

pub(crate) fn parse_float(line: usize, field: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("field {field}: {raw:?} is not a number"),
    })
}

pub(crate) fn parse_text(line: usize, field: &str, raw: &str) -> Result<String> {
    unescape_field(raw).map_err(|m| Error::Parse {
        line,
        message: format!("field {field}: {m}"),
    })
}

fn parse_box(line: usize, prefix: &str, fields: &[&str]) -> Result<HeadBox> {
    let names = ["x_min", "y_min", "x_max", "y_max"];
    let mut v = [0.0; 4];
    for i in 0..4 {
        v[i] = parse_float(line, &format!("{prefix}.{}", names[i]), fields[i])?;
    }
    let b = HeadBox {
        x_min: v[0],
        y_min: v[1],
        x_max: v[2],
        y_max: v[3],
    };
    b.validate().map_err(|e| match e {
        Error::Invalid { field, message } => Error::Validation {
            line,
            field: format!("{prefix}.{field}"),
            message,
        },
        other => other,
    })?;
    Ok(b)
}

fn check_id(line: usize, id: &str, seen: &mut BTreeSet<String>) -> Result<()> {
    if id.is_empty() {
        return Err(Error::Validation {
            line,
            field: "sample_id".into(),
            message: "empty sample id".into(),
        });
    }
    if !seen.insert(id.to_string()) {
        return Err(Error::Validation {
            line,
            field: "sample_id".into(),
            message: format!("duplicate sample id {id:?}"),
        });
    }
    Ok(())
}

pub fn parse_dyad_manifest(text: &str) -> Result<Vec<DyadSample>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, raw) in record_lines(text) {
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 11 && fields.len() != 12 {
            return Err(Error::Parse {
                line,
                message: format!("expected 11 or 12 tab-separated fields, found {}", fields.len()),
            });
        }
        let sample_id = parse_text(line, "sample_id", fields[0])?;
        check_id(line, &sample_id, &mut seen)?;
        let image = PathBuf::from(parse_text(line, "image", fields[1])?);
        let principal = parse_box(line, "principal", &fields[2..6])?;
        let associate = parse_box(line, "associate", &fields[6..10])?;
        let label = match fields[10] {
            "-" => None,
            tag => Some(DyadLabel::parse(tag).map_err(|_| Error::Validation {
                line,
                field: "label".into(),
                message: format!("unknown label {tag:?}"),
            })?),
        };
        let context = match fields.get(11) {
            Some(raw) if !raw.is_empty() => Some(parse_text(line, "context", raw)?),
            _ => None,
        };
        let sample = DyadSample {
            sample_id,
            image,
            principal,
            associate,
            label,
            context,
        };
        if sample.principal == sample.associate {
            return Err(Error::Validation {
                line,
                field: "associate".into(),
                message: "principal and associate boxes are identical".into(),
            });
        }
        out.push(sample);
    }
    Ok(out)
}

fn push_box(out: &mut String, b: &HeadBox) {
    let _ = write!(out, "\t{}\t{}\t{}\t{}", b.x_min, b.y_min, b.x_max, b.y_max);
}

pub fn write_dyad_manifest(samples: &[DyadSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&escape_field(&s.sample_id));
        out.push('\t');
        out.push_str(&escape_field(&s.image.to_string_lossy()));
        push_box(&mut out, &s.principal);
        push_box(&mut out, &s.associate);
        out.push('\t');
        out.push_str(s.label.as_ref().map_or("-", |l| l.tag()));
        if let Some(ctx) = s.context.as_deref().filter(|c| !c.is_empty()) {
            out.push('\t');
            out.push_str(&escape_field(ctx));
        }
        out.push('\n');
    }
    out
}

pub fn parse_gazefollow_manifest(text: &str) -> Result<Vec<GazeFollowSample>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, raw) in record_lines(text) {
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 8 {
            return Err(Error::Parse {
                line,
                message: format!("expected 8 tab-separated fields, found {}", fields.len()),
            });
        }
        let sample_id = parse_text(line, "sample_id", fields[0])?;
        check_id(line, &sample_id, &mut seen)?;
        let image = PathBuf::from(parse_text(line, "image", fields[1])?);
        let head = parse_box(line, "head", &fields[2..6])?;
        let gx = parse_float(line, "gaze_x", fields[6])?;
        let gy = parse_float(line, "gaze_y", fields[7])?;
        for (name, v) in [("gaze_x", gx), ("gaze_y", gy)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation {
                    line,
                    field: name.into(),
                    message: format!("{v} is outside [0, 1]"),
                });
            }
        }
        out.push(GazeFollowSample {
            sample_id,
            image,
            head,
            gaze_point: [gx, gy],
        });
    }
    Ok(out)
}

pub fn write_gazefollow_manifest(samples: &[GazeFollowSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&escape_field(&s.sample_id));
        out.push('\t');
        out.push_str(&escape_field(&s.image.to_string_lossy()));
        push_box(&mut out, &s.head);
        let _ = writeln!(out, "\t{}\t{}", s.gaze_point[0], s.gaze_point[1]);
    }
    out
}

/// Resolves a record's image path against the manifest's directory.
pub fn resolve_image(manifest: &Path, image: &Path) -> PathBuf {
    if image.is_absolute() {
        image.to_path_buf()
    } else {
        manifest
            .parent()
            .map(|d| d.join(image))
            .unwrap_or_else(|| image.to_path_buf())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GazeClass;
    use proptest::prelude::*;

    const DYAD: &str = "s0\timg/0.png\t0.1\t0.2\t0.3\t0.4\t0.6\t0.2\t0.8\t0.4\tMutual\tthe person on the left looks at the person on the right\n\
s1\timg/1.png\t0.1\t0.2\t0.3\t0.4\t0.6\t0.2\t0.8\t0.4\tVoid\n\
s2\timg/2 with\\ttab.png\t0.05\t0.5\t0.25\t0.7\t0.6\t0.1\t0.8\t0.3\t-\tline one\\nline two\n";

    #[test]
    fn dyad_manifest_loads_in_order() {
        let samples = parse_dyad_manifest(DYAD).unwrap();
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[0].sample_id, "s0");
        assert_eq!(samples[0].label, Some(DyadLabel::Gaze(GazeClass::Mutual)));
        assert_eq!(samples[1].context, None);
        assert_eq!(samples[2].label, None);
        assert_eq!(samples[2].image, PathBuf::from("img/2 with\ttab.png"));
        assert_eq!(samples[2].context.as_deref(), Some("line one\nline two"));
        assert_eq!(write_dyad_manifest(&samples), DYAD);
    }

    #[test]
    fn inverted_box_is_reported_with_line_and_field() {
        let bad = DYAD.replace("s1\timg/1.png\t0.1", "s1\timg/1.png\t0.35");
        let err = parse_dyad_manifest(&bad).unwrap_err();
        match err {
            Error::Validation { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "principal.x_min");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let bad = format!("{DYAD}s3\tonly\tthree\n");
        match parse_dyad_manifest(&bad).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected error {other}"),
        }
        let bad = DYAD.replace("0.05", "zero");
        match parse_dyad_manifest(&bad).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn gazefollow_manifest_validates_points() {
        let ok = "g0\ta.png\t0.1\t0.1\t0.2\t0.2\t0.25\t0.75\n";
        let s = parse_gazefollow_manifest(ok).unwrap();
        assert_eq!(s[0].gaze_point, [0.25, 0.75]);
        assert_eq!(write_gazefollow_manifest(&s), ok);
        let bad = "g0\ta.png\t0.1\t0.1\t0.2\t0.2\t1.25\t0.75\n";
        match parse_gazefollow_manifest(bad).unwrap_err() {
            Error::Validation { line, field, .. } => {
                assert_eq!(line, 1);
                assert_eq!(field, "gaze_x");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    fn arb_box() -> impl Strategy<Value = HeadBox> {
        (0.0f64..0.5, 0.0f64..0.5, 0.01f64..0.5, 0.01f64..0.5).prop_map(|(x, y, w, h)| HeadBox {
            x_min: x,
            y_min: y,
            x_max: x + w,
            y_max: y + h,
        })
    }

    proptest! {
        #[test]
        fn dyad_write_load_write_is_stable(
            id in "[a-z0-9\\\\\t\n é]{1,12}",
            p in arb_box(),
            a in arb_box(),
            label in 0usize..7,
            ctx in proptest::option::of("\\PC{0,40}"),
        ) {
            prop_assume!(p != a);
            let label = match label {
                5 => Some(DyadLabel::Laeo(true)),
                6 => None,
                i => Some(DyadLabel::Gaze(GazeClass::from_index(i).unwrap())),
            };
            let sample = DyadSample {
                sample_id: id,
                image: PathBuf::from("x.png"),
                principal: p,
                associate: a,
                label,
                context: ctx.filter(|c| !c.is_empty()),
            };
            let text = write_dyad_manifest(std::slice::from_ref(&sample));
            let loaded = parse_dyad_manifest(&text).unwrap();
            prop_assert_eq!(&loaded[0], &sample);
            prop_assert_eq!(write_dyad_manifest(&loaded), text);
        }
    }
}
