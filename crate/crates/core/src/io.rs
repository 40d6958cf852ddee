//! Text file format for delayed rough paths.
//!
//! ```text
//! roughdelay-roughpath 1
//! dim 2
//! intervals 64
//! step 0.0625
//! delay 1
//! delay_steps 16
//! first_node 16
//! gamma 0.45
//! convention ito
//! time_augmented 0
//! time_cross 1
//! nodes
//! <one row per stored node: d path values>
//! areas
//! <one row per interval: 𝕏 (d²), 𝕏(−r) (d²), then ∫(τ−s)dX, ∫X dτ,
//!  ∫X(−r) dτ (each of the noise dimension) when time_cross is 1>
//! ```
//!
//! Stored nodes run from `first_node − delay_steps` to
//! `first_node + intervals`; increments are differences of node values.
//! Numbers are written in shortest round-trip form, so reading a written
//! file reproduces the rough path bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::roughpath::{Convention, DelayedRoughPath, TimeCross};

const MAGIC: &str = "roughdelay-roughpath 1";

fn row(out: &mut String, vals: &[f64]) {
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

pub fn rough_path_to_string(rp: &DelayedRoughPath) -> String {
    let d = rp.dim;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "dim {d}");
    let _ = writeln!(out, "intervals {}", rp.n_intervals);
    let _ = writeln!(out, "step {:?}", rp.step);
    let _ = writeln!(out, "delay {:?}", rp.delay());
    let _ = writeln!(out, "delay_steps {}", rp.delay_steps);
    let _ = writeln!(out, "first_node {}", rp.first_node);
    let _ = writeln!(out, "gamma {:?}", rp.gamma);
    let _ = writeln!(out, "convention {}", rp.convention.as_str());
    let _ = writeln!(out, "time_augmented {}", u8::from(rp.time_augmented));
    let _ = writeln!(out, "time_cross {}", u8::from(rp.time_cross.is_some()));
    out.push_str("nodes\n");
    for node in rp.nodes.chunks(d) {
        row(&mut out, node);
    }
    out.push_str("areas\n");
    let base = if rp.time_augmented { d - 1 } else { d };
    let mut buf = Vec::with_capacity(2 * d * d + 3 * base);
    for k in 0..rp.n_intervals {
        buf.clear();
        buf.extend_from_slice(&rp.area[k * d * d..(k + 1) * d * d]);
        buf.extend_from_slice(&rp.delayed_area[k * d * d..(k + 1) * d * d]);
        if let Some(tc) = &rp.time_cross {
            for v in [&tc.time_dx, &tc.x_dtime, &tc.delayed_x_dtime] {
                buf.extend_from_slice(&v[k * base..(k + 1) * base]);
            }
        }
        row(&mut out, &buf);
    }
    out
}

pub fn write_rough_path(rp: &DelayedRoughPath, path: &Path) -> Result<()> {
    fs::write(path, rough_path_to_string(rp))?;
    Ok(())
}

pub fn read_rough_path(path: &Path) -> Result<DelayedRoughPath> {
    parse_rough_path(BufReader::new(fs::File::open(path)?))
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

fn numbers(line: &str, at: usize, want: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| parse_err(at, format!("`{t}`: {e}"))))
        .collect::<Result<_>>()?;
    if vals.len() != want {
        return Err(parse_err(at, format!("expected {want} numbers, found {}", vals.len())));
    }
    Ok(vals)
}

pub fn parse_rough_path(reader: impl BufRead) -> Result<DelayedRoughPath> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i, l)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(Error::Parse(format!("unexpected end of file, expected {what}"))),
        }
    };
    let (at, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(parse_err(at, "not a roughdelay rough path file"));
    }
    let mut field = |key: &str| -> Result<(usize, String)> {
        let (at, l) = next(key)?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok((at, v.trim().to_string())),
            _ => Err(parse_err(at, format!("expected `{key} <value>`"))),
        }
    };
    fn num<T: std::str::FromStr>(p: (usize, String)) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        p.1.parse::<T>().map_err(|e| parse_err(p.0, e))
    }
    let dim: usize = num(field("dim")?)?;
    let n_intervals: usize = num(field("intervals")?)?;
    let step: f64 = num(field("step")?)?;
    let _delay: f64 = num(field("delay")?)?;
    let delay_steps: usize = num(field("delay_steps")?)?;
    let first_node: i64 = num(field("first_node")?)?;
    let gamma: f64 = num(field("gamma")?)?;
    let convention = Convention::parse(&field("convention")?.1)?;
    let time_augmented = num::<u8>(field("time_augmented")?)? == 1;
    let has_cross = num::<u8>(field("time_cross")?)? == 1;
    if dim == 0 || (time_augmented && dim < 2) {
        return Err(Error::Parse("invalid dimension in header".into()));
    }
    let base = if time_augmented { dim - 1 } else { dim };

    let (at, l) = next("nodes")?;
    if l.trim() != "nodes" {
        return Err(parse_err(at, "expected `nodes`"));
    }
    let mut nodes = Vec::new();
    for _ in 0..n_intervals + delay_steps + 1 {
        let (at, l) = next("node row")?;
        nodes.extend(numbers(&l, at, dim)?);
    }
    let (at, l) = next("areas")?;
    if l.trim() != "areas" {
        return Err(parse_err(at, "expected `areas`"));
    }
    let width = 2 * dim * dim + if has_cross { 3 * base } else { 0 };
    let mut area = Vec::with_capacity(n_intervals * dim * dim);
    let mut delayed_area = Vec::with_capacity(n_intervals * dim * dim);
    let mut cross = [Vec::new(), Vec::new(), Vec::new()];
    for _ in 0..n_intervals {
        let (at, l) = next("area row")?;
        let v = numbers(&l, at, width)?;
        area.extend_from_slice(&v[..dim * dim]);
        delayed_area.extend_from_slice(&v[dim * dim..2 * dim * dim]);
        if has_cross {
            for (i, c) in cross.iter_mut().enumerate() {
                let o = 2 * dim * dim + i * base;
                c.extend_from_slice(&v[o..o + base]);
            }
        }
    }
    let [time_dx, x_dtime, delayed_x_dtime] = cross;
    let time_cross = has_cross.then_some(TimeCross { time_dx, x_dtime, delayed_x_dtime });
    DelayedRoughPath::from_parts(
        dim,
        step,
        first_node,
        n_intervals,
        delay_steps,
        gamma,
        convention,
        nodes,
        area,
        delayed_area,
        time_cross,
        time_augmented,
    )
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_brownian;
    use crate::roughpath::{lift_ito, lift_stratonovich};

    #[test]
    fn round_trip_is_exact() {
        let p = sample_brownian(2, -1.0, 3.0, 1.0 / 256.0, 11).unwrap();
        let ito = lift_ito(&p, 1.0 / 16.0, 1.0, 0.45).unwrap();
        let strat = lift_stratonovich(&p, 1.0 / 16.0, 1.0, 0.45).unwrap();
        for rp in [ito.clone(), strat, ito.augment_time().unwrap()] {
            let text = rough_path_to_string(&rp);
            let back = parse_rough_path(text.as_bytes()).unwrap();
            assert_eq!(back, rp);
            assert_eq!(rough_path_to_string(&back), text);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let p = sample_brownian(1, 0.0, 2.0, 1.0 / 64.0, 1).unwrap();
        let rp = lift_ito(&p, 1.0 / 8.0, 1.0, 0.45).unwrap();
        let text = rough_path_to_string(&rp);
        let cut = &text[..text.len() / 2];
        assert!(matches!(parse_rough_path(cut.as_bytes()), Err(Error::Parse(_))));
    }
}
