//! Binary checkpoint format, bit-exact across round trips.
//!
//! Layout (all little-endian):
//!   magic  b"HYMF"
//!   u32    version (= 1)
//!   u32    n, u32 N, u32 rank
//!   u32    flux_count, then i64 × flux_count (frame-major, n per frame row)
//!   blocks until EOF:  u32 name_len | name bytes | u64 count |
//!                      f64 re, f64 im × count
//!
//! Named blocks: `periods`, `t`, `lambda`, `g`, then either `a`,`H`,`H0`
//! (bundle-metric state) or `alpha`,`H0` (unitary connection state). Writes
//! go to a temp file and are renamed into place.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::CliError;
use hymflow_core::bundle::{BundleState, ConnectionState};
use hymflow_core::flow::FlowState;
use hymflow_core::geometry::forms::FormField;
use hymflow_core::geometry::{build_torus_geometry, GridGeometry, MetricField};
use hymflow_core::{C64, Real};

const MAGIC: &[u8; 4] = b"HYMF";
const VERSION: u32 = 1;

pub struct Checkpoint {
    pub n: usize,
    pub npts: usize,
    pub rank: usize,
    /// flux per frame index, n entries each
    pub fluxes: Vec<Vec<i64>>,
    pub blocks: BTreeMap<String, Vec<C64>>,
}

impl Checkpoint {
    pub fn time(&self) -> f64 {
        self.blocks.get("t").map(|b| b[0].re).unwrap_or(0.0)
    }

    pub fn lambda(&self) -> f64 {
        self.blocks.get("lambda").map(|b| b[0].re).unwrap_or(0.0)
    }

    pub fn periods(&self) -> Vec<f64> {
        self.blocks
            .get("periods")
            .map(|b| b.iter().map(|v| v.re).collect())
            .unwrap_or_default()
    }

    pub fn geometry(&self) -> Result<GridGeometry<Real>, CliError> {
        Ok(build_torus_geometry(self.n, self.npts, &self.periods())?)
    }

    pub fn metric(&self, geom: &GridGeometry<Real>) -> Result<MetricField<Real>, CliError> {
        let g = self
            .blocks
            .get("g")
            .ok_or_else(|| CliError::Corrupt("missing metric block `g`".into()))?;
        if g.len() != self.n * self.n * geom.site_count() {
            return Err(CliError::Shape(format!(
                "metric block has {} entries, expected {}",
                g.len(),
                self.n * self.n * geom.site_count()
            )));
        }
        Ok(MetricField::from_entries(geom, g.clone())?)
    }

    pub fn state(&self, geom: &GridGeometry<Real>) -> Result<FlowState<Real>, CliError> {
        let sites = geom.site_count();
        let block_of_index: Vec<usize> = (0..self.rank).collect();
        let form = |name: &str, p: usize, q: usize| -> Result<FormField<Real>, CliError> {
            let data = self
                .blocks
                .get(name)
                .ok_or_else(|| CliError::Corrupt(format!("missing block `{name}`")))?;
            let mut f = FormField::zeros(self.n, p, q, self.rank, sites);
            if f.data().len() != data.len() {
                return Err(CliError::Shape(format!(
                    "block `{name}` has {} entries, expected {}",
                    data.len(),
                    f.data().len()
                )));
            }
            f.data_mut().copy_from_slice(data);
            Ok(f)
        };
        if self.blocks.contains_key("H") {
            let a = form("a", 0, 1)?;
            let h = form("H", 0, 0)?;
            let h0 = form("H0", 0, 0)?;
            Ok(FlowState::Metric(BundleState::from_parts(
                geom,
                self.fluxes.clone(),
                block_of_index,
                a,
                h,
                h0,
            )?))
        } else if self.blocks.contains_key("alpha") {
            let alpha = form("alpha", 0, 1)?;
            let h0 = form("H0", 0, 0)?;
            Ok(FlowState::Conn(ConnectionState::from_parts(
                geom,
                self.fluxes.clone(),
                block_of_index,
                alpha,
                h0,
            )?))
        } else {
            Err(CliError::Corrupt(
                "checkpoint carries neither a bundle metric nor a connection".into(),
            ))
        }
    }
}

fn push_block(out: &mut Vec<u8>, name: &str, data: &[C64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
}

fn real_block(vals: &[f64]) -> Vec<C64> {
    vals.iter().map(|&v| C64::new(v, 0.0)).collect()
}

/// Serialize a flow state with its geometry/base-metric context.
pub fn encode(
    geom: &GridGeometry<Real>,
    metric: &MetricField<Real>,
    state: &FlowState<Real>,
    t: f64,
    lambda: f64,
) -> Vec<u8> {
    let (rank, fluxes): (usize, Vec<Vec<i64>>) = match state {
        FlowState::Metric(b) => (
            b.rank(),
            (0..b.rank()).map(|i| b.frame_flux(i).to_vec()).collect(),
        ),
        FlowState::Conn(c) => (
            c.rank(),
            (0..c.rank())
                .map(|i| c.block_fluxes()[c.block_of_index()[i]].clone())
                .collect(),
        ),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(geom.complex_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(geom.sites_per_axis() as u32).to_le_bytes());
    out.extend_from_slice(&(rank as u32).to_le_bytes());
    let flat: Vec<i64> = fluxes.iter().flatten().copied().collect();
    out.extend_from_slice(&(flat.len() as u32).to_le_bytes());
    for f in &flat {
        out.extend_from_slice(&f.to_le_bytes());
    }

    let periods: Vec<f64> = geom.periods().to_vec();
    push_block(&mut out, "periods", &real_block(&periods));
    push_block(&mut out, "t", &[C64::new(t, 0.0)]);
    push_block(&mut out, "lambda", &[C64::new(lambda, 0.0)]);
    let n = geom.complex_dim();
    let sites = geom.site_count();
    let mut g = Vec::with_capacity(n * n * sites);
    for j in 0..n {
        for k in 0..n {
            for s in 0..sites {
                g.push(metric.g_at(j, k, s));
            }
        }
    }
    push_block(&mut out, "g", &g);
    match state {
        FlowState::Metric(b) => {
            push_block(&mut out, "a", b.a().data());
            push_block(&mut out, "H", b.h().data());
            push_block(&mut out, "H0", b.h0().data());
        }
        FlowState::Conn(c) => {
            push_block(&mut out, "alpha", c.alpha().data());
            push_block(&mut out, "H0", c.h0().data());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], CliError> {
        if self.bytes.len() - self.pos < len {
            return Err(CliError::Corrupt("truncated checkpoint".into()));
        }
        let head = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(head)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CliError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != MAGIC {
        return Err(CliError::Corrupt(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let rd_u32 = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
    let version = rd_u32(cur.take(4)?);
    if version != VERSION {
        return Err(CliError::Version(version));
    }
    let n = rd_u32(cur.take(4)?) as usize;
    let npts = rd_u32(cur.take(4)?) as usize;
    let rank = rd_u32(cur.take(4)?) as usize;
    let flux_count = rd_u32(cur.take(4)?) as usize;
    if n == 0 || rank == 0 || flux_count != rank * n {
        return Err(CliError::Corrupt(format!(
            "inconsistent header: n={n} rank={rank} flux_count={flux_count}"
        )));
    }
    let mut fluxes = vec![Vec::with_capacity(n); rank];
    for i in 0..flux_count {
        let v = i64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        fluxes[i / n].push(v);
    }

    let mut blocks = BTreeMap::new();
    while cur.remaining() > 0 {
        let name_len = rd_u32(cur.take(4)?) as usize;
        if name_len > 256 {
            return Err(CliError::Corrupt(format!(
                "implausible block name length {name_len}"
            )));
        }
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| CliError::Corrupt("block name is not utf-8".into()))?;
        let count = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
        let mut data = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            let re = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
            let im = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
            data.push(C64::new(re, im));
        }
        blocks.insert(name, data);
    }

    Ok(Checkpoint {
        n,
        npts,
        rank,
        fluxes,
        blocks,
    })
}

/// Write bytes to `path` via a temp file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "checkpoint".into())
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Checkpoint, CliError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
