use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::{Basis, Grid, Phys, SpectralField};

const MAGIC: &[u8; 4] = b"BNSF";
const VERSION: u32 = 1;

/// Physical samples of a field together with the grid header of the binary
/// snapshot format.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub grid: Grid,
    pub comps: usize,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn of(u: &SpectralField) -> Self {
        Self::of_phys(&u.to_phys())
    }

    pub fn of_phys(p: &Phys) -> Self {
        Self { grid: *p.space().grid(), comps: p.comps(), values: p.values().to_vec() }
    }

    /// Back to a spectral field (band truncation applies).
    pub fn to_field(&self) -> Result<SpectralField> {
        let space = Basis::new(self.grid)?;
        Ok(Phys::from_values(&space, self.comps, self.values.clone())?.to_spectral())
    }
}

/// Writes `magic "BNSF", version, n, N, components (u32), L (f64)` and the
/// row-major little-endian samples of every component.
pub fn write_snapshot<W: Write>(w: &mut W, snap: &Snapshot) -> Result<()> {
    w.write_all(MAGIC)?;
    for v in [VERSION, snap.grid.dim as u32, snap.grid.size as u32, snap.comps as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&snap.grid.length.to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * snap.values.len());
    for v in &snap.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Snapshot> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut word = [0u8; 4];
    let mut header = [0u32; 4];
    for h in header.iter_mut() {
        r.read_exact(&mut word)?;
        *h = u32::from_le_bytes(word);
    }
    if header[0] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", header[0])));
    }
    let mut dword = [0u8; 8];
    r.read_exact(&mut dword)?;
    let grid = Grid::new(header[1] as usize, header[2] as usize, f64::from_le_bytes(dword))?;
    let comps = header[3] as usize;
    let mut bytes = vec![0u8; 8 * comps * grid.points()];
    r.read_exact(&mut bytes)?;
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Snapshot { grid, comps, values })
}
