use std::path::Path;

use super::VaSeries;
use crate::error::{Error, Result};

/// Value written for frames without a usable annotation.
pub const INVALID_SENTINEL: f32 = -5.0;

/// Parses `valence,arousal` CSV text. Values outside `[-1, 1]` mark the frame invalid.
///
/// When `expected_frames` is given the series is reconciled to that length:
/// extra rows are dropped and missing rows are appended as invalid frames, with
/// a warning either way.
pub fn parse_annotations(
    text: &str,
    path: &Path,
    expected_frames: Option<usize>,
) -> Result<VaSeries> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(parse_err(1, "empty annotation file".into()));
    }
    if headers.len() != 2
        || !headers[0].eq_ignore_ascii_case("valence")
        || !headers[1].eq_ignore_ascii_case("arousal")
    {
        return Err(parse_err(
            1,
            format!("expected header `valence,arousal`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut pairs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", record.len())));
        }
        let field = |j: usize| -> Result<f32> {
            record[j]
                .parse::<f32>()
                .map_err(|_| parse_err(line, format!("cannot parse `{}` as a number", &record[j])))
        };
        pairs.push((field(0)?, field(1)?));
    }
    if pairs.is_empty() {
        return Err(parse_err(2, "annotation file has no rows".into()));
    }
    if let Some(n) = expected_frames {
        if pairs.len() != n {
            log::warn!(
                "{}: {} annotation rows for {} frames; reconciling to {}",
                path.display(),
                pairs.len(),
                n,
                n
            );
            pairs.resize(n, (INVALID_SENTINEL, INVALID_SENTINEL));
        }
    }
    Ok(VaSeries::from_pairs(&pairs))
}

pub fn load_annotations(path: impl AsRef<Path>, expected_frames: Option<usize>) -> Result<VaSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, path, expected_frames)
}

pub fn save_annotations(path: impl AsRef<Path>, series: &VaSeries) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(16 * (series.len() + 1));
    out.push_str("valence,arousal\n");
    for i in 0..series.len() {
        let (v, a) = if series.valid[i] {
            (series.valence[i], series.arousal[i])
        } else {
            (INVALID_SENTINEL, INVALID_SENTINEL)
        };
        out.push_str(&format!("{v},{a}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, n: Option<usize>) -> Result<VaSeries> {
        parse_annotations(text, Path::new("a.csv"), n)
    }

    #[test]
    fn valid_and_sentinel_rows() {
        let s = parse("valence,arousal\n0.5,-0.5\n-5,-5\n", None).unwrap();
        assert_eq!(s.valence, vec![0.5, -5.0]);
        assert_eq!(s.arousal, vec![-0.5, -5.0]);
        assert_eq!(s.valid, vec![true, false]);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(parse("", None).is_err());
        assert!(parse("valence,arousal\n", None).is_err());
    }

    #[test]
    fn bad_row_reports_line_number() {
        match parse("valence,arousal\n0.1,0.2\n0.3,abc\n", None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reconciles_row_count() {
        let s = parse("valence,arousal\n0.1,0.2\n0.3,0.4\n0.5,0.6\n", Some(2)).unwrap();
        assert_eq!(s.len(), 2);
        let s = parse("valence,arousal\n0.1,0.2\n", Some(3)).unwrap();
        assert_eq!(s.valid, vec![true, false, false]);
    }
}
