use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{Hyper, ModelKind, ModelParams};
use crate::error::{GuideError, Result};
use crate::graph::io::{normalize_newlines, read_text};

const HEADER: &str = "GUIDE-MODEL 1";

pub(crate) fn model_to_text(p: &ModelParams) -> String {
    let h = &p.hyper;
    let mut out = format!(
        "{HEADER}\nkind {}\nseed {}\nhyper {} {} {} {} {}\nfinal_loss {}\ntensors {}\n",
        p.kind,
        p.seed,
        h.learning_rate,
        h.epochs,
        h.weight_decay,
        h.k,
        h.hidden,
        p.final_loss.map_or("none".to_string(), |l| l.to_string()),
        p.tensors.len()
    );
    for t in &p.tensors {
        let _ = writeln!(out, "tensor {} {}", t.nrows(), t.ncols());
        for r in 0..t.nrows() {
            let row: Vec<String> = t.row(r).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

struct Lines<'a> {
    path: &'a str,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> GuideError {
        GuideError::Parse {
            path: self.path.to_string(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.trim())
            }
            None => {
                self.line += 1;
                Err(self.err("unexpected end of file"))
            }
        }
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}` line")));
        }
        Ok(parts.collect())
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("cannot parse {s:?}")))
    }
}

pub(crate) fn parse_model(text: &str, path: &str) -> Result<ModelParams> {
    let text = normalize_newlines(text);
    let mut lines = Lines {
        path,
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.next_line()?;
    if header != HEADER {
        if let Some(v) = header.strip_prefix("GUIDE-MODEL ") {
            if let Ok(found) = v.trim().parse::<u32>() {
                return Err(GuideError::Version { found, supported: 1 });
            }
        }
        return Err(lines.err(format!("expected header {HEADER:?}")));
    }
    let kind: ModelKind = match lines.keyed("kind")?.as_slice() {
        [k] => k.parse()?,
        _ => return Err(lines.err("expected `kind <name>`")),
    };
    let seed = match lines.keyed("seed")?.as_slice() {
        [s] => lines.num(s)?,
        _ => return Err(lines.err("expected `seed <u64>`")),
    };
    let hyper = match lines.keyed("hyper")?.as_slice() {
        [lr, ep, wd, k, hid] => Hyper {
            learning_rate: lines.num(lr)?,
            epochs: lines.num(ep)?,
            weight_decay: lines.num(wd)?,
            k: lines.num(k)?,
            hidden: lines.num(hid)?,
        },
        _ => return Err(lines.err("expected `hyper lr epochs weight_decay k hidden`")),
    };
    let final_loss = match lines.keyed("final_loss")?.as_slice() {
        ["none"] => None,
        [v] => Some(lines.num(v)?),
        _ => return Err(lines.err("expected `final_loss <value|none>`")),
    };
    let count: usize = match lines.keyed("tensors")?.as_slice() {
        [c] => lines.num(c)?,
        _ => return Err(lines.err("expected `tensors <count>`")),
    };
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let (rows, cols): (usize, usize) = match lines.keyed("tensor")?.as_slice() {
            [r, c] => (lines.num(r)?, lines.num(c)?),
            _ => return Err(lines.err("expected `tensor <rows> <cols>`")),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = lines.next_line()?;
            let before = data.len();
            for v in line.split_whitespace() {
                data.push(lines.num::<f64>(v)?);
            }
            if data.len() - before != cols {
                return Err(lines.err(format!("expected {cols} values")));
            }
        }
        tensors.push(DMatrix::from_row_slice(rows, cols, &data));
    }
    let params = ModelParams {
        kind,
        seed,
        hyper,
        tensors,
        final_loss,
    };
    params
        .validate_shapes()
        .map_err(|e| GuideError::Load(format!("{path}: {e}")))?;
    Ok(params)
}

pub fn write_model(p: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, model_to_text(p))?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<ModelParams> {
    parse_model(&read_text(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn same_bits(a: &ModelParams, b: &ModelParams) -> bool {
        a.kind == b.kind
            && a.seed == b.seed
            && a.hyper == b.hyper
            && a.final_loss.map(f64::to_bits) == b.final_loss.map(f64::to_bits)
            && a.tensors.len() == b.tensors.len()
            && a.tensors.iter().zip(&b.tensors).all(|(x, y)| {
                x.shape() == y.shape() && x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits())
            })
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        for kind in [ModelKind::Sgc, ModelKind::MeanGnn] {
            let hyper = Hyper { hidden: 5, ..Hyper::default() };
            let mut p = ModelParams::init(kind, 3, 4, hyper, 77).unwrap();
            p.tensors[1][(0, 2)] = 1.0 / 3.0;
            let back = parse_model(&model_to_text(&p), "m").unwrap();
            assert!(same_bits(&p, &back));
            p.final_loss = Some(0.123456789012345);
            assert!(same_bits(&p, &parse_model(&model_to_text(&p), "m").unwrap()));
        }
    }

    #[test]
    fn rejects_damage() {
        let p = ModelParams::init(ModelKind::Sgc, 2, 2, Hyper::default(), 1).unwrap();
        let text = model_to_text(&p);
        let truncated = &text[..text.len() - 10];
        assert!(parse_model(truncated, "m").is_err());
        assert!(matches!(
            parse_model(&text.replace("GUIDE-MODEL 1", "GUIDE-MODEL 2"), "m"),
            Err(GuideError::Version { found: 2, .. })
        ));
        assert!(parse_model(&text.replace("tensor 2 2", "tensor 3 2"), "m").is_err());
    }
}
