//! Plain-text storage for fields and masks.
//!
//! ```text
//! levelcap-field dim=2 shape=4,3 spacing=0.5,0.5 origin=-1,-0.75
//! 0
//! 0.25
//! ...
//! ```
//!
//! The first line names the kind (`levelcap-field` or `levelcap-mask`) and the
//! grid. Every following non-empty line holds one cell value in row-major cell
//! order; masks use `0` and `1`. Floats are written in shortest round-trip form,
//! so writing and reading a field reproduces it bit for bit.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::grid::{Field, GridDomain, Mask};

const FIELD_TAG: &str = "levelcap-field";
const MASK_TAG: &str = "levelcap-mask";

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn header(tag: &str, d: &GridDomain) -> String {
    format!(
        "{tag} dim={} shape={} spacing={} origin={}",
        d.dim(),
        join(d.shape()),
        join(d.spacing()),
        join(d.origin())
    )
}

fn parse_header(line: &str, tag: &str) -> Result<GridDomain> {
    let perr = |msg: String| Error::Parse { line: 1, msg };
    let mut parts = line.split_whitespace();
    match parts.next() {
        Some(t) if t == tag => {}
        other => return Err(perr(format!("expected `{tag}`, found {other:?}"))),
    }
    let mut dim = None;
    let mut shape = None;
    let mut spacing = None;
    let mut origin = None;
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| perr(format!("malformed header entry `{part}`")))?;
        let floats = || -> Result<Vec<f64>> {
            value
                .split(',')
                .map(|s| s.parse::<f64>().map_err(|e| perr(format!("{key}: {e}"))))
                .collect()
        };
        match key {
            "dim" => dim = Some(value.parse::<usize>().map_err(|e| perr(format!("dim: {e}")))?),
            "shape" => {
                shape = Some(
                    value
                        .split(',')
                        .map(|s| s.parse::<usize>().map_err(|e| perr(format!("shape: {e}"))))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "spacing" => spacing = Some(floats()?),
            "origin" => origin = Some(floats()?),
            _ => return Err(perr(format!("unknown header key `{key}`"))),
        }
    }
    let (Some(dim), Some(shape), Some(spacing), Some(origin)) = (dim, shape, spacing, origin) else {
        return Err(perr("header needs dim, shape, spacing and origin".into()));
    };
    let d = GridDomain::new(&shape, &spacing, &origin)?;
    if d.dim() != dim {
        return Err(perr(format!("dim={dim} disagrees with shape")));
    }
    Ok(d)
}

fn read_body<R: BufRead>(reader: R, tag: &str) -> Result<(GridDomain, Vec<(usize, String)>)> {
    let mut lines = reader.lines().enumerate();
    let first = loop {
        match lines.next() {
            Some((_, l)) => {
                let l = l?;
                if !l.trim().is_empty() {
                    break l;
                }
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "empty input".into(),
                })
            }
        }
    };
    let domain = parse_header(&first, tag)?;
    let mut body = Vec::with_capacity(domain.len());
    for (i, l) in lines {
        let l = l?;
        let t = l.trim();
        if !t.is_empty() {
            body.push((i + 1, t.to_string()));
        }
    }
    if body.len() != domain.len() {
        return Err(Error::Parse {
            line: body.last().map_or(1, |b| b.0),
            msg: format!("expected {} values, found {}", domain.len(), body.len()),
        });
    }
    Ok((domain, body))
}

pub fn write_field<W: Write>(u: &Field, mut w: W) -> Result<()> {
    let mut s = header(FIELD_TAG, u.domain());
    s.push('\n');
    for v in u.values() {
        writeln!(s, "{v}").expect("write to string");
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_field<R: BufRead>(r: R) -> Result<Field> {
    let (domain, body) = read_body(r, FIELD_TAG)?;
    let values = body
        .into_iter()
        .map(|(line, s)| {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Field::new(domain, values)
}

pub fn write_mask<W: Write>(m: &Mask, mut w: W) -> Result<()> {
    let mut s = header(MASK_TAG, m.domain());
    s.push('\n');
    for &b in m.members() {
        s.push_str(if b { "1\n" } else { "0\n" });
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_mask<R: BufRead>(r: R) -> Result<Mask> {
    let (domain, body) = read_body(r, MASK_TAG)?;
    let members = body
        .into_iter()
        .map(|(line, s)| match s.as_str() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::Parse {
                line,
                msg: format!("mask entries are 0 or 1, got `{other}`"),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    Mask::new(domain, members)
}

/// CSV with one row per cell: cell center coordinates followed by one column per
/// field. All fields must live on the same grid.
pub fn write_csv<W: Write>(names: &[&str], fields: &[&Field], mut w: W) -> Result<()> {
    let Some(first) = fields.first() else {
        return Err(Error::InvalidArgument("no fields to export".into()));
    };
    if names.len() != fields.len() {
        return Err(Error::InvalidArgument("one name per field".into()));
    }
    let d = first.domain();
    for f in fields {
        d.ensure_same(f.domain(), "csv export")?;
    }
    let mut s = String::new();
    let coords = ["x", "y"];
    let mut cols: Vec<&str> = coords[..d.dim()].to_vec();
    cols.extend_from_slice(names);
    s.push_str(&cols.join(","));
    s.push('\n');
    for c in 0..d.len() {
        let x = d.center(c);
        let mut row: Vec<String> = x[..d.dim()].iter().map(|v| v.to_string()).collect();
        row.extend(fields.iter().map(|f| f.values()[c].to_string()));
        s.push_str(&row.join(","));
        s.push('\n');
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

/// Whitespace-separated columns with a `#` header line, readable by gnuplot,
/// numpy.loadtxt and most plotting tools.
pub fn write_plot_data<W: Write>(names: &[&str], fields: &[&Field], mut w: W) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(names, fields, &mut buf)?;
    let text = String::from_utf8(buf).expect("csv is utf-8");
    let mut out = String::with_capacity(text.len() + 2);
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            out.push_str("# ");
        }
        out.push_str(&line.replace(',', " "));
        out.push('\n');
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}
