//! Text formats for multiclass datasets and partial-label logs.
//!
//! Both start with a header line `d=<features>,k=<actions>`. Data lines are
//! comma separated (whitespace separated also works); blank lines and lines
//! starting with `#` are skipped.
//!
//! * multiclass: `x_1, …, x_d, label` with `label` in `1..=k`
//! * partial-label log: `x_1, …, x_d, action, reward, uniform` or
//!   `x_1, …, x_d, action, reward, p_1, …, p_k`

use std::fmt::Write as _;
use std::path::Path;

use offtree_core::harness::{MulticlassDataset, MulticlassExample};
use offtree_core::{Action, FeatureVector, PartialLabelExample, Propensity};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing header line `d=<features>,k=<actions>`")]
    MissingHeader,
    #[error("no data rows")]
    Empty,
}

fn line_error(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Line { line, message: message.into() }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub d: usize,
    pub k: usize,
}

impl Header {
    pub fn render(&self) -> String {
        format!("d={},k={}", self.d, self.k)
    }
}

fn parse_header(line: usize, text: &str) -> Result<Header, FormatError> {
    let mut d = None;
    let mut k = None;
    for part in text.split([',', ' ', '\t']).filter(|p| !p.is_empty()) {
        let (key, value) =
            part.split_once('=').ok_or_else(|| line_error(line, format!("bad header field `{part}`")))?;
        let value: usize = value.trim().parse().map_err(|_| line_error(line, format!("bad header value `{part}`")))?;
        match key.trim() {
            "d" => d = Some(value),
            "k" => k = Some(value),
            other => return Err(line_error(line, format!("unknown header field `{other}`"))),
        }
    }
    match (d, k) {
        (Some(d), Some(k)) if k >= 2 => Ok(Header { d, k }),
        (Some(_), Some(k)) => Err(line_error(line, format!("k must be at least 2, got {k}"))),
        _ => Err(line_error(line, "header must give both d and k")),
    }
}

fn fields(text: &str) -> Vec<&str> {
    if text.contains(',') {
        text.split(',').map(str::trim).collect()
    } else {
        text.split_whitespace().collect()
    }
}

type Rows<'a> = Vec<(usize, Vec<&'a str>)>;

/// Numbered data lines after the header.
fn rows(text: &str) -> Result<(Header, Rows<'_>), FormatError> {
    let mut lines =
        text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (n, first) = lines.next().ok_or(FormatError::MissingHeader)?;
    if !first.starts_with("d=") && !first.starts_with("k=") {
        return Err(FormatError::MissingHeader);
    }
    let header = parse_header(n, first)?;
    Ok((header, lines.map(|(n, l)| (n, fields(l))).collect()))
}

fn number(line: usize, column: usize, s: &str) -> Result<f64, FormatError> {
    let v: f64 = s.parse().map_err(|_| line_error(line, format!("column {column}: `{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(line_error(line, format!("column {column}: value must be finite")));
    }
    Ok(v)
}

fn features(line: usize, cols: &[&str]) -> Result<FeatureVector, FormatError> {
    let values = cols.iter().enumerate().map(|(i, s)| number(line, i + 1, s)).collect::<Result<Vec<_>, _>>()?;
    FeatureVector::new(values).map_err(|e| line_error(line, e.to_string()))
}

fn action(line: usize, column: usize, s: &str, k: usize) -> Result<Action, FormatError> {
    let n: usize =
        s.parse().map_err(|_| line_error(line, format!("column {column}: `{s}` is not an action number")))?;
    if n == 0 || n > k {
        return Err(line_error(line, format!("column {column}: action {n} outside 1..={k}")));
    }
    Ok(Action::from_number(n).expect("checked above"))
}

pub fn parse_multiclass(text: &str) -> Result<MulticlassDataset, FormatError> {
    let (header, rows) = rows(text)?;
    let mut examples = Vec::with_capacity(rows.len());
    for (n, cols) in rows {
        if cols.len() != header.d + 1 {
            return Err(line_error(n, format!("expected {} columns, found {}", header.d + 1, cols.len())));
        }
        examples.push(MulticlassExample {
            x: features(n, &cols[..header.d])?,
            label: action(n, header.d + 1, cols[header.d], header.k)?,
        });
    }
    if examples.is_empty() {
        return Err(FormatError::Empty);
    }
    Ok(MulticlassDataset::new(header.k, header.d, examples).expect("rows validated against the header"))
}

pub fn render_multiclass(data: &MulticlassDataset) -> String {
    let mut out = Header { d: data.dim(), k: data.num_actions() }.render();
    out.push('\n');
    for e in data.examples() {
        for v in e.x.iter() {
            write!(out, "{v},").unwrap();
        }
        writeln!(out, "{}", e.label).unwrap();
    }
    out
}

/// A partial-label log with its declared shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Log {
    pub header: Header,
    pub examples: Vec<PartialLabelExample>,
}

pub fn parse_log(text: &str) -> Result<Log, FormatError> {
    let (header, rows) = rows(text)?;
    let (d, k) = (header.d, header.k);
    let mut examples = Vec::with_capacity(rows.len());
    for (n, cols) in rows {
        let propensity = match cols.len() {
            c if c == d + 3 && cols[d + 2].eq_ignore_ascii_case("uniform") => Propensity::Uniform(k),
            c if c == d + 2 + k => {
                let probs = cols[d + 2..]
                    .iter()
                    .enumerate()
                    .map(|(i, s)| number(n, d + 3 + i, s))
                    .collect::<Result<Vec<_>, _>>()?;
                Propensity::explicit(probs).map_err(|e| line_error(n, e.to_string()))?
            }
            c => {
                return Err(line_error(
                    n,
                    format!(
                        "expected {} columns (with `uniform`) or {} (with propensities), found {c}",
                        d + 3,
                        d + 2 + k
                    ),
                ))
            }
        };
        let e = PartialLabelExample::new(
            features(n, &cols[..d])?,
            action(n, d + 1, cols[d], k)?,
            number(n, d + 2, cols[d + 1])?,
            propensity,
        )
        .map_err(|e| line_error(n, e.to_string()))?;
        examples.push(e);
    }
    if examples.is_empty() {
        return Err(FormatError::Empty);
    }
    Ok(Log { header, examples })
}

pub fn render_log(log: &Log) -> String {
    let mut out = log.header.render();
    out.push('\n');
    for e in &log.examples {
        for v in e.x.iter() {
            write!(out, "{v},").unwrap();
        }
        write!(out, "{},{}", e.action, e.reward).unwrap();
        match &e.propensity {
            Propensity::Uniform(_) => out.push_str(",uniform"),
            Propensity::Explicit(p) => p.iter().for_each(|v| write!(out, ",{v}").unwrap()),
        }
        out.push('\n');
    }
    out
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

pub fn load_multiclass(path: &Path) -> Result<MulticlassDataset, FormatError> {
    parse_multiclass(&read_text(path)?)
}

pub fn load_log(path: &Path) -> Result<Log, FormatError> {
    parse_log(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiclass_round_trip() {
        let text = "d=2,k=3\n0.5,1,2\n# comment\n\n-1,2.25,3\n";
        let data = parse_multiclass(text).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.examples()[0].label, Action(1));
        assert_eq!(render_multiclass(&data), "d=2,k=3\n0.5,1,2\n-1,2.25,3\n");
    }

    #[test]
    fn whitespace_rows() {
        let data = parse_multiclass("d=2 k=2\n1 2 1\n3 4 2\n").unwrap();
        assert_eq!(data.examples()[1].x.as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_multiclass("d=2,k=3\n1,2,1\n1,x,2\n").unwrap_err();
        assert_eq!(err.to_string(), "line 3: column 2: `x` is not a number");
        let err = parse_multiclass("d=2,k=3\n1,2,4\n").unwrap_err();
        assert_eq!(err.to_string(), "line 2: column 3: action 4 outside 1..=3");
        let err = parse_multiclass("d=2,k=3\n\n1,2\n").unwrap_err();
        assert!(err.to_string().starts_with("line 3: expected 3 columns"));
        assert!(matches!(parse_multiclass("1,2,3\n"), Err(FormatError::MissingHeader)));
        assert!(matches!(parse_multiclass("d=1,k=2\n"), Err(FormatError::Empty)));
    }

    #[test]
    fn log_round_trip() {
        let text = "d=1,k=3\n0.5,2,1,uniform\n1,3,0,0.25,0.25,0.5\n";
        let log = parse_log(text).unwrap();
        assert_eq!(log.examples[0].propensity, Propensity::Uniform(3));
        assert_eq!(log.examples[1].chosen_propensity(), 0.5);
        assert_eq!(render_log(&log), text);
    }

    #[test]
    fn log_validation() {
        assert!(parse_log("d=1,k=2\n0,1,1.5,uniform\n").unwrap_err().to_string().starts_with("line 2:"));
        assert!(parse_log("d=1,k=2\n0,1,1,0.3,0.3\n").is_err());
        assert!(parse_log("d=1,k=2\n0,1,1,0,1\n").is_err());
        assert!(parse_log("d=1,k=2\n0,1,1\n").unwrap_err().to_string().contains("expected 4 columns"));
    }
}
