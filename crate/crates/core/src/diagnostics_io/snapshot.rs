//! The ".bqci" container: magic, version, grid size, rank tag, time metadata, then
//! little-endian f64 (re, im) coefficient pairs. A JSON sidecar carries provenance.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mikado::MikadoFamily;
use crate::torus_fields::{Field, Grid, Rank, TimeGrid, TimeSeriesField};

pub const MAGIC: &[u8; 4] = b"BQCI";
pub const VERSION: u32 = 1;
/// Rank tag of a serialized Mikado family.
pub const FAMILY_TAG: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesHeader {
    pub version: u32,
    pub n: u32,
    pub rank_tag: u32,
    pub ncomp: u32,
    pub count: u32,
    pub t0: f64,
    pub dt: f64,
}

const HEADER_LEN: usize = 4 + 5 * 4 + 2 * 8;

impl SeriesHeader {
    fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(HEADER_LEN);
        b.extend_from_slice(MAGIC);
        for v in [self.version, self.n, self.rank_tag, self.ncomp, self.count] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&self.t0.to_le_bytes());
        b.extend_from_slice(&self.dt.to_le_bytes());
        b
    }

    fn decode(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_LEN {
            return Err(Error::Format("truncated header".into()));
        }
        if &b[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let u = |i: usize| u32::from_le_bytes(b[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
        let f = |o: usize| f64::from_le_bytes(b[o..o + 8].try_into().expect("8 bytes"));
        let h = SeriesHeader {
            version: u(0),
            n: u(1),
            rank_tag: u(2),
            ncomp: u(3),
            count: u(4),
            t0: f(24),
            dt: f(32),
        };
        if h.version != VERSION {
            return Err(Error::Format(format!("unsupported version {}", h.version)));
        }
        Ok(h)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_bytes(path: &Path, header: &SeriesHeader, payload: impl Iterator<Item = Complex64>) -> Result<()> {
    let mut out = header.encode();
    for z in payload {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<(SeriesHeader, Vec<Complex64>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let h = SeriesHeader::decode(&buf)?;
    let body = &buf[HEADER_LEN..];
    if body.len() % 16 != 0 {
        return Err(Error::Format("payload is not a whole number of pairs".into()));
    }
    let vals = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    Ok((h, vals))
}

fn write_sidecar(path: &Path, sidecar: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(sidecar)?;
    text.push('\n');
    std::fs::write(sidecar_path(path), text)?;
    Ok(())
}

/// Write a time series and its sidecar.
pub fn write_series(path: &Path, series: &TimeSeriesField, sidecar: &serde_json::Value) -> Result<()> {
    let f0 = &series.snapshots[0];
    let header = SeriesHeader {
        version: VERSION,
        n: f0.grid.n as u32,
        rank_tag: f0.rank.tag(),
        ncomp: f0.ncomp() as u32,
        count: series.len() as u32,
        t0: series.t0(),
        dt: series.dt(),
    };
    let payload = series
        .snapshots
        .iter()
        .flat_map(|f| f.comps.iter().flat_map(|c| c.iter().copied()));
    write_bytes(path, &header, payload)?;
    write_sidecar(path, sidecar)
}

pub fn read_series(path: &Path) -> Result<TimeSeriesField> {
    let (h, vals) = read_bytes(path)?;
    let rank = Rank::from_tag(h.rank_tag)
        .ok_or_else(|| Error::Format(format!("rank tag {} is not a field", h.rank_tag)))?;
    if rank.components() != h.ncomp as usize || h.count == 0 {
        return Err(Error::Format("component count does not match the rank".into()));
    }
    let grid = Grid::new(h.n as usize)?;
    let per = grid.spectral_len();
    if vals.len() != per * h.ncomp as usize * h.count as usize {
        return Err(Error::Format("payload length does not match the header".into()));
    }
    let mut it = vals.chunks_exact(per);
    let mut snaps = Vec::with_capacity(h.count as usize);
    for _ in 0..h.count {
        let comps = (0..h.ncomp).map(|_| it.next().expect("length checked").to_vec()).collect();
        snaps.push(Field::from_spectral(grid, rank, comps)?);
    }
    let times = TimeGrid {
        t0: h.t0,
        dt: h.dt,
        count: h.count as usize,
    };
    TimeSeriesField::new(times, 0, snaps)
}

/// Single field, stored as a one-sample series at t = 0.
pub fn write_snapshot(path: &Path, field: &Field, sidecar: &serde_json::Value) -> Result<()> {
    let s = TimeSeriesField::new(
        TimeGrid {
            t0: 0.0,
            dt: 0.0,
            count: 1,
        },
        0,
        vec![field.clone()],
    )?;
    write_series(path, &s, sidecar)
}

pub fn read_snapshot(path: &Path) -> Result<Field> {
    let mut s = read_series(path)?;
    if s.len() != 1 {
        return Err(Error::Format(format!("expected one sample, found {}", s.len())));
    }
    Ok(s.snapshots.swap_remove(0))
}

/// Mikado family: the profile table as pairs (coefficient, 0) in table order; the
/// remaining data goes to the sidecar.
pub fn write_family(path: &Path, family: &MikadoFamily) -> Result<()> {
    let header = SeriesHeader {
        version: VERSION,
        n: family.k_max as u32,
        rank_tag: FAMILY_TAG,
        ncomp: 1,
        count: family.table.len() as u32,
        t0: 0.0,
        dt: 0.0,
    };
    write_bytes(path, &header, family.table.iter().map(|e| Complex64::new(e.coeff, 0.0)))?;
    let mut meta = family.clone();
    meta.table.clear();
    write_sidecar(path, &serde_json::to_value(&meta)?)
}

pub fn read_family(path: &Path) -> Result<MikadoFamily> {
    let (h, vals) = read_bytes(path)?;
    if h.rank_tag != FAMILY_TAG {
        return Err(Error::Format("not a Mikado family".into()));
    }
    let text = std::fs::read_to_string(sidecar_path(path))?;
    let mut fam: MikadoFamily = serde_json::from_str(&text)?;
    let k = fam.k_max as i64;
    let mut table = Vec::with_capacity(vals.len());
    let mut it = vals.iter();
    for m in -k..=k {
        for n in -k..=k {
            if 2 * m * m + n * n > k * k {
                continue;
            }
            let z = it.next().ok_or_else(|| Error::Format("table too short".into()))?;
            table.push(crate::mikado::TableEntry { m, n, coeff: z.re });
        }
    }
    if it.next().is_some() {
        return Err(Error::Format("table too long".into()));
    }
    fam.table = table;
    Ok(fam)
}
