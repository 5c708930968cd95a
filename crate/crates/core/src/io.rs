//! Text serialization of torus fields.
//!
//! A field file is a single JSON header line followed by CSV:
//!
//! ```text
//! {"n":2,"M":16,"offset":true,"representation":"spectral","bandlimit":3}
//! k1,k2,re,im
//! 1,1,0.5,0
//! -1,-1,0.5,0
//! ```
//!
//! Physical rows are indexed by grid indices `0..M`, spectral rows by signed
//! frequencies in `[-M/2, M/2)`. Spectral files list only nonzero
//! coefficients; missing rows read back as zero. `offset` is a boolean when
//! every axis shares the same half-cell shift, otherwise an array of
//! per-axis flags.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{Representation, TorusField, TorusGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OffsetSpec {
    Uniform(bool),
    PerAxis(Vec<bool>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub offset: OffsetSpec,
    pub representation: Representation,
    pub bandlimit: Option<usize>,
}

impl FieldHeader {
    pub fn of(f: &TorusField) -> Self {
        let g = f.grid();
        let offset = match g.uniform_offset() {
            Some(s) => OffsetSpec::Uniform(s),
            None => OffsetSpec::PerAxis(g.shifts().to_vec()),
        };
        Self {
            n: g.dim(),
            m: g.points_per_axis(),
            offset,
            representation: f.representation(),
            bandlimit: f.bandlimit(),
        }
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        match &self.offset {
            OffsetSpec::Uniform(s) => TorusGrid::new(self.n, self.m, *s),
            OffsetSpec::PerAxis(v) => {
                if v.len() != self.n {
                    return Err(Error::ShapeMismatch(format!(
                        "header has n = {} but {} offset flags",
                        self.n,
                        v.len()
                    )));
                }
                TorusGrid::with_shifts(self.m, v.clone())
            }
        }
    }
}

pub fn write_field<W: Write>(f: &TorusField, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let header = FieldHeader::of(f);
    let line = serde_json::to_string(&header).map_err(|e| Error::Serialization(e.to_string()))?;
    writeln!(w, "{line}").map_err(io_err("<field stream>"))?;

    let g = f.grid();
    let n = g.dim();
    let mut csv = csv::Writer::from_writer(w);
    let mut names: Vec<String> = (1..=n).map(|i| format!("k{i}")).collect();
    names.push("re".into());
    names.push("im".into());
    csv.write_record(&names).map_err(csv_err)?;

    let spectral = f.representation() == Representation::Spectral;
    let mut idx = vec![0; n];
    for (flat, z) in f.values().iter().enumerate() {
        if spectral && *z == Complex64::default() {
            continue;
        }
        g.unravel(flat, &mut idx);
        let mut row: Vec<String> = idx
            .iter()
            .map(|&j| {
                if spectral {
                    g.frequency(j).to_string()
                } else {
                    j.to_string()
                }
            })
            .collect();
        row.push(z.re.to_string());
        row.push(z.im.to_string());
        csv.write_record(&row).map_err(csv_err)?;
    }
    csv.flush().map_err(io_err("<field stream>"))?;
    Ok(())
}

pub fn read_field<R: Read>(r: R) -> Result<TorusField> {
    let mut r = BufReader::new(r);
    let mut first = String::new();
    r.read_line(&mut first).map_err(io_err("<field stream>"))?;
    let header: FieldHeader = serde_json::from_str(first.trim()).map_err(|e| Error::Parse {
        position: 1,
        message: format!("bad header: {e}"),
    })?;
    let grid = header.grid()?;
    let n = grid.dim();
    let spectral = header.representation == Representation::Spectral;
    let mut values = vec![Complex64::default(); grid.len()];
    let mut seen = vec![false; grid.len()];

    let mut csv = csv::Reader::from_reader(r);
    for (row_no, record) in csv.records().enumerate() {
        let line = row_no + 3;
        let record = record.map_err(|e| Error::Parse {
            position: line,
            message: e.to_string(),
        })?;
        if record.len() != n + 2 {
            return Err(Error::Parse {
                position: line,
                message: format!("expected {} columns, found {}", n + 2, record.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            record[i].trim().parse::<f64>().map_err(|e| Error::Parse {
                position: line,
                message: format!("column {}: {e}", i + 1),
            })
        };
        let mut flat = 0;
        for a in 0..n {
            let raw: i64 = record[a].trim().parse().map_err(|e| Error::Parse {
                position: line,
                message: format!("column {}: {e}", a + 1),
            })?;
            let j = if spectral {
                grid.frequency_index(raw)
            } else {
                usize::try_from(raw).ok().filter(|&j| j < grid.points_per_axis())
            }
            .ok_or_else(|| Error::Parse {
                position: line,
                message: format!("index {raw} out of range on axis {}", a + 1),
            })?;
            flat = flat * grid.points_per_axis() + j;
        }
        if seen[flat] {
            return Err(Error::Parse {
                position: line,
                message: "duplicate row".into(),
            });
        }
        seen[flat] = true;
        values[flat] = Complex64::new(num(n)?, num(n + 1)?);
    }
    if !spectral && seen.iter().any(|s| !s) {
        return Err(Error::Parse {
            position: 0,
            message: "physical field is missing grid points".into(),
        });
    }
    let field = if spectral {
        TorusField::from_spectral(grid, values)?
    } else {
        TorusField::from_physical(grid, values)?
    };
    match header.bandlimit {
        Some(b) => {
            let limited = field.with_bandlimit(b)?;
            if limited
                .values()
                .iter()
                .zip(field.values())
                .any(|(a, b)| (a - b).norm() > 1e-12 * (1.0 + b.norm()))
            {
                return Err(Error::Parse {
                    position: 1,
                    message: format!("coefficients exceed declared bandlimit {b}"),
                });
            }
            Ok(limited)
        }
        None => Ok(field),
    }
}

pub fn save_field(f: &TorusField, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    write_field(f, file)
}

pub fn load_field(path: &Path) -> Result<TorusField> {
    let file = File::open(path).map_err(io_err(path))?;
    read_field(file)
}

fn io_err<P: AsRef<Path>>(path: P) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.as_ref().display().to_string();
    move |source| Error::Io { path, source }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serialization(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_round_trip_is_exact() {
        let g = TorusGrid::sign_safe(2, 8).unwrap();
        let f = TorusField::from_modes(
            g,
            &[
                (vec![1, 1], Complex64::new(0.1, -1.0 / 3.0)),
                (vec![-2, 3], Complex64::new(std::f64::consts::PI, 0.0)),
            ],
        )
        .unwrap()
        .with_bandlimit(3)
        .unwrap();
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"n\":2,\"M\":8,\"offset\":[true,false]"));
        let back = read_field(buf.as_slice()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn physical_round_trip_is_exact() {
        let g = TorusGrid::new(1, 8, true).unwrap();
        let f = TorusField::from_fn(g, |t| Complex64::new(t[0].sin(), t[0] * t[0]));
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        assert_eq!(read_field(buf.as_slice()).unwrap(), f);
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "{\"n\":1,\"M\":4,\"offset\":true,\"representation\":\"spectral\",\"bandlimit\":null}\nk1,re,im\n1,1,0\n9,1,0\n";
        match read_field(text.as_bytes()) {
            Err(Error::Parse { position, .. }) => assert_eq!(position, 4),
            other => panic!("unexpected {other:?}"),
        }
    }
}
