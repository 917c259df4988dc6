use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Writes one line per sentence: the sentence index followed by the
/// posterior mean, tab separated. Floats use the shortest round-trip form.
pub fn write_means<W: Write>(mut out: W, means: &[(usize, Vec<f64>)]) -> std::io::Result<()> {
    for (id, mean) in means {
        write!(out, "{id}")?;
        for x in mean {
            write!(out, "\t{x:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_means<R: BufRead>(input: R) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rows = Vec::new();
    let mut width = None;
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<means>", e))?;
        if line.is_empty() {
            continue;
        }
        let parse_err = |column: usize, msg: String| Error::Parse {
            line: lineno + 1,
            column,
            msg,
        };
        let mut fields = line.split('\t');
        let id_field = fields.next().unwrap_or_default();
        let id = id_field
            .parse::<usize>()
            .map_err(|e| parse_err(1, format!("bad sentence id {id_field:?}: {e}")))?;
        let mut mean = Vec::new();
        for (i, f) in fields.enumerate() {
            mean.push(
                f.parse::<f64>()
                    .map_err(|e| parse_err(i + 2, format!("bad value {f:?}: {e}")))?,
            );
        }
        match width {
            None => width = Some(mean.len()),
            Some(w) if w != mean.len() => {
                return Err(parse_err(1, format!("expected {w} values, found {}", mean.len())));
            }
            _ => {}
        }
        rows.push((id, mean));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let rows = vec![(0, vec![0.1, -2.5e-300, 1.0 / 3.0]), (7, vec![f64::MAX, 0.0, -0.0])];
        let mut buf = Vec::new();
        write_means(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("0\t0.1\t"));
        let back = read_means(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        for ((a, x), (b, y)) in rows.iter().zip(&back) {
            assert_eq!(a, b);
            let xb: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = read_means(&b"0\t1.0\t2.0\n1\t1.0\n"[..]).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(matches!(read_means(&b"x\t1.0\n"[..]), Err(Error::Parse { line: 1, column: 1, .. })));
    }
}
