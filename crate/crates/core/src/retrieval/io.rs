//! Similarity matrix files.
//!
//! Text (`simmat-v1`): a `simmat-v1,N` header, N `query_id,video_id` lines,
//! then N rows of N comma-separated scores.
//!
//! Binary: the 8-byte magic `SIMMATB1`, N as a little-endian u32, then N*N
//! little-endian f32 scores in row-major order. Binary files carry no ids;
//! queries and videos are named by index.

use std::fs;
use std::path::Path;

use super::{default_ids, RetrievalError, SimilarityMatrix};
use crate::Scalar;

pub const TEXT_MAGIC: &str = "simmat-v1";
pub const BINARY_MAGIC: &[u8; 8] = b"SIMMATB1";

fn format_err(path: &Path, message: impl Into<String>) -> RetrievalError {
    RetrievalError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn read_matrix<T: Scalar>(path: &Path) -> Result<SimilarityMatrix<T>, RetrievalError> {
    let bytes = fs::read(path).map_err(|e| format_err(path, e.to_string()))?;
    if bytes.starts_with(BINARY_MAGIC) {
        parse_binary(path, &bytes)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|e| format_err(path, e.to_string()))?;
        parse_text(path, text)
    }
}

fn parse_binary<T: Scalar>(path: &Path, bytes: &[u8]) -> Result<SimilarityMatrix<T>, RetrievalError> {
    let body = &bytes[BINARY_MAGIC.len()..];
    if body.len() < 4 {
        return Err(format_err(path, "truncated header"));
    }
    let n = u32::from_le_bytes(body[..4].try_into().unwrap()) as usize;
    let data = &body[4..];
    if data.len() != n * n * 4 {
        return Err(format_err(
            path,
            format!("expected {} score bytes for N = {n}, found {}", n * n * 4, data.len()),
        ));
    }
    let scores = data
        .chunks_exact(4)
        .map(|c| T::from_f64_lossy(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    SimilarityMatrix::from_row_major(n, scores, default_ids("q", n), default_ids("v", n))
}

fn parse_text<T: Scalar>(path: &Path, text: &str) -> Result<SimilarityMatrix<T>, RetrievalError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| format_err(path, "empty file"))?;
    let n: usize = header
        .strip_prefix(TEXT_MAGIC)
        .and_then(|rest| rest.strip_prefix(','))
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| format_err(path, format!("line 1: expected `{TEXT_MAGIC},N`, got {header:?}")))?;
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| format_err(path, format!("unexpected end of file, expected {what}")))
    };
    let mut query_ids = Vec::with_capacity(n);
    let mut video_ids = Vec::with_capacity(n);
    for _ in 0..n {
        let (no, line) = next("an id line")?;
        let (q, v) = line
            .split_once(',')
            .ok_or_else(|| format_err(path, format!("line {}: expected query_id,video_id", no + 1)))?;
        query_ids.push(q.to_owned());
        video_ids.push(v.to_owned());
    }
    let mut scores = Vec::with_capacity(n * n);
    for _ in 0..n {
        let (no, line) = next("a score row")?;
        let before = scores.len();
        for field in line.split(',') {
            let value = field
                .trim()
                .parse::<T>()
                .map_err(|_| format_err(path, format!("line {}: bad score {field:?}", no + 1)))?;
            scores.push(value);
        }
        if scores.len() - before != n {
            return Err(format_err(
                path,
                format!("line {}: expected {n} scores, found {}", no + 1, scores.len() - before),
            ));
        }
    }
    if let Some((no, line)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(format_err(path, format!("line {}: trailing data {line:?}", no + 1)));
    }
    SimilarityMatrix::from_row_major(n, scores, query_ids, video_ids)
}

pub fn to_text<T: Scalar>(m: &SimilarityMatrix<T>) -> String {
    let n = m.size();
    let mut out = format!("{TEXT_MAGIC},{n}\n");
    for (q, v) in m.query_ids().iter().zip(m.video_ids()) {
        out.push_str(q);
        out.push(',');
        out.push_str(v);
        out.push('\n');
    }
    for i in 0..n {
        let row: Vec<String> = m.row(i).iter().map(|s| s.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn to_binary<T: Scalar>(m: &SimilarityMatrix<T>) -> Vec<u8> {
    let n = m.size();
    let mut out = Vec::with_capacity(12 + n * n * 4);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for s in m.scores() {
        out.extend_from_slice(&(s.to_f64_lossy() as f32).to_le_bytes());
    }
    out
}

pub fn write_text<T: Scalar>(m: &SimilarityMatrix<T>, path: &Path) -> std::io::Result<()> {
    fs::write(path, to_text(m))
}

pub fn write_binary<T: Scalar>(m: &SimilarityMatrix<T>, path: &Path) -> std::io::Result<()> {
    fs::write(path, to_binary(m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SimilarityMatrix<f32> {
        SimilarityMatrix::new(
            vec![vec![0.5, -1.25, 3.0], vec![0.1, 0.2, 0.3], vec![1e-3, 7.0, 0.0]],
            vec!["t0".into(), "t1".into(), "t2".into()],
            vec!["video7".into(), "video8".into(), "video9".into()],
        )
        .unwrap()
    }

    #[test]
    fn text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_text(&sample(), &path).unwrap();
        let back: SimilarityMatrix<f32> = read_matrix(&path).unwrap();
        assert_eq!(back, sample());
        assert!(fs::read_to_string(&path).unwrap().starts_with("simmat-v1,3\nt0,video7\n"));
    }

    #[test]
    fn binary_round_trip_uses_index_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        write_binary(&sample(), &path).unwrap();
        let back: SimilarityMatrix<f64> = read_matrix(&path).unwrap();
        assert_eq!(back.size(), 3);
        assert_eq!(back.query_ids()[2], "q2");
        assert_eq!(back.score(0, 1), -1.25);
        assert_eq!(back.ranks(), sample().ranks());
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            "simmat-v2,1\na,b\n1\n",
            "simmat-v1,2\na,b\nc,d\n1,2\n",
            "simmat-v1,1\na,b\n1,2\n",
            "simmat-v1,1\na,b\nx\n",
            "simmat-v1,1\na,b\nNaN\n",
            "simmat-v1,1\na,b\n1\nextra\n",
        ];
        for (i, body) in cases.iter().enumerate() {
            let path = dir.path().join(format!("bad{i}"));
            fs::write(&path, body).unwrap();
            assert!(read_matrix::<f64>(&path).is_err(), "{body:?}");
        }
        let path = dir.path().join("short.bin");
        let mut bytes = BINARY_MAGIC.to_vec();
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&[0; 12]);
        fs::write(&path, bytes).unwrap();
        assert!(read_matrix::<f32>(&path).is_err());
    }
}
