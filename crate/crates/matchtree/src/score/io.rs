/*!
Reading and writing similarity matrices.

Two on-disk representations are supported:

* **Tabular**: text, comma- or tab-separated. The first row holds the
  `n` image ids, the following `n` rows hold the full square matrix.
  The diagonal is discarded on load and any asymmetry between `(i, j)`
  and `(j, i)` is resolved by the configured [`Symmetrize`] policy.

* **Binary condensed**: the 8-byte magic `SSPACE01`, `n` as unsigned
  64-bit little-endian, `n` length-prefixed UTF-8 ids (unsigned 32-bit
  little-endian byte length, then the bytes), then `n*(n-1)/2` IEEE-754
  32-bit little-endian scores in row-major upper-triangle order.

[`load_similarity`] sniffs the format from the leading magic bytes.
*/

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::score::{condensed_len, SimilarityMatrix, SCORE_TOLERANCE};

/// Magic bytes opening the binary condensed format.
pub const BINARY_MAGIC: &[u8; 8] = b"SSPACE01";

/// How to resolve asymmetry between `(i, j)` and `(j, i)` in a full
/// square matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum Symmetrize {
    /// Replace both entries by their arithmetic mean (the default;
    /// unbiased and order-preserving for near-symmetric matchers).
    #[default]
    Mean,
    /// Error when `|s(i,j) - s(j,i)|` exceeds the tolerance; within it,
    /// the mean is used.
    Strict { tolerance: f64 },
}

/// On-disk matrix representation, selectable in the CLI via `--format`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Tsv,
    Binary,
}

/// Read a similarity matrix from a file, sniffing the format from the
/// leading bytes.
pub fn load_similarity(path: &Path, policy: Symmetrize) -> Result<SimilarityMatrix> {
    let mut file = BufReader::new(File::open(path)?);
    let head = file.fill_buf()?;
    if head.starts_with(BINARY_MAGIC) {
        read_binary(file)
    } else {
        read_tabular(file, policy)
    }
}

/// Write a similarity matrix to a file in the chosen format.
pub fn save_similarity(sim: &SimilarityMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        MatrixFormat::Tsv => write_tabular(sim, &mut out)?,
        MatrixFormat::Binary => write_binary(sim, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Read the tabular full-square format.
pub fn read_tabular<R: BufRead>(reader: R, policy: Symmetrize) -> Result<SimilarityMatrix> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let header = header?;
    let sep = if header.contains('\t') { '\t' } else { ',' };
    let ids: Vec<String> = header.split(sep).map(|s| s.trim().to_string()).collect();
    let n = ids.len();
    if n < 2 {
        return Err(Error::TooFewImages { n });
    }

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if rows.len() == n {
            return Err(parse_err(lineno + 1, format!("expected {n} matrix rows")));
        }
        let row: Vec<f64> = line
            .split(sep)
            .map(|field| {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(lineno + 1, format!("bad float {:?}", field.trim())))
            })
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(parse_err(
                lineno + 1,
                format!("expected {} columns, got {}", n, row.len()),
            ));
        }
        rows.push(row);
    }
    if rows.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected {} matrix rows, got {}",
            n,
            rows.len()
        )));
    }

    // Validate raw off-diagonal entries before symmetrizing so the
    // diagnostic names the offending cell.
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j && !(-SCORE_TOLERANCE..=1.0 + SCORE_TOLERANCE).contains(&v) {
                return Err(Error::ScoreOutOfRange {
                    row: ids[i].clone(),
                    col: ids[j].clone(),
                    value: v,
                });
            }
        }
    }

    let mut scores = Vec::with_capacity(condensed_len(n));
    for i in 0..n {
        for j in i + 1..n {
            let upper = rows[i][j];
            let lower = rows[j][i];
            if let Symmetrize::Strict { tolerance } = policy {
                if (upper - lower).abs() > tolerance {
                    return Err(Error::Asymmetric {
                        row: ids[i].clone(),
                        col: ids[j].clone(),
                        upper,
                        lower,
                        tolerance,
                    });
                }
            }
            scores.push(((upper + lower) / 2.0) as f32);
        }
    }
    SimilarityMatrix::from_condensed(ids, scores)
}

/// Write the tabular format (tab-separated, diagonal written as 1).
pub fn write_tabular<W: Write>(sim: &SimilarityMatrix, out: &mut W) -> Result<()> {
    for id in sim.image_ids() {
        if id.contains(['\t', ',', '\n', '\r']) {
            return Err(Error::InvalidImageId(id.clone()));
        }
    }
    writeln!(out, "{}", sim.image_ids().join("\t"))?;
    let n = sim.n();
    let mut line = String::new();
    for i in 0..n {
        line.clear();
        for j in 0..n {
            if j > 0 {
                line.push('\t');
            }
            if i == j {
                line.push('1');
            } else {
                line.push_str(&sim.score(i, j).to_string());
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Read the binary condensed format.
pub fn read_binary<R: Read>(mut reader: R) -> Result<SimilarityMatrix> {
    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(parse_err(1, "bad magic (not a binary score matrix)"));
    }
    let mut buf8 = [0u8; 8];
    reader.read_exact(&mut buf8)?;
    let n = u64::from_le_bytes(buf8) as usize;
    if n < 2 {
        return Err(Error::TooFewImages { n });
    }
    let mut ids = Vec::with_capacity(n);
    let mut buf4 = [0u8; 4];
    for _ in 0..n {
        reader.read_exact(&mut buf4)?;
        let len = u32::from_le_bytes(buf4) as usize;
        if len > 1 << 20 {
            return Err(parse_err(1, format!("unreasonable id length {len}")));
        }
        let mut bytes = vec![0u8; len];
        reader.read_exact(&mut bytes)?;
        let id =
            String::from_utf8(bytes).map_err(|_| parse_err(1, "image id is not valid UTF-8"))?;
        ids.push(id);
    }
    let m = condensed_len(n);
    let mut scores = Vec::with_capacity(m);
    for _ in 0..m {
        reader.read_exact(&mut buf4)?;
        scores.push(f32::from_le_bytes(buf4));
    }
    let mut rest = [0u8; 1];
    if reader.read(&mut rest)? != 0 {
        return Err(parse_err(1, "trailing data after condensed values"));
    }
    SimilarityMatrix::from_condensed(ids, scores)
}

/// Write the binary condensed format.
pub fn write_binary<W: Write>(sim: &SimilarityMatrix, out: &mut W) -> Result<()> {
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&(sim.n() as u64).to_le_bytes())?;
    for id in sim.image_ids() {
        out.write_all(&(id.len() as u32).to_le_bytes())?;
        out.write_all(id.as_bytes())?;
    }
    for &s in sim.condensed() {
        out.write_all(&s.to_le_bytes())?;
    }
    Ok(())
}
