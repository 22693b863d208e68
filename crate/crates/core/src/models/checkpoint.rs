//! Binary model checkpoints.
//!
//! Layout, little-endian throughout:
//! `b"AIDCKPT\0"`, `u16` version, `u8` model kind, `u8` dimension count,
//! that many `u32` dimensions, `u64` parameter count, then the `f64` parameters.

use std::io::{Read, Write};
use std::path::Path;

use super::narx::{LinearArx, NarxModel, NarxNet, NarxPredictor};
use super::ss::{LinearSs, RnnShape, RnnSs, StateSpaceModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"AIDCKPT\0";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    LinearArx(LinearArx),
    NarxNet(NarxNet),
    RnnSs(RnnSs),
    LinearSs(LinearSs),
}

impl From<NarxModel> for Checkpoint {
    fn from(m: NarxModel) -> Self {
        match m {
            NarxModel::Linear(m) => Checkpoint::LinearArx(m),
            NarxModel::Net(m) => Checkpoint::NarxNet(m),
        }
    }
}

impl Checkpoint {
    fn kind(&self) -> u8 {
        match self {
            Checkpoint::LinearArx(_) => 0,
            Checkpoint::NarxNet(_) => 1,
            Checkpoint::RnnSs(_) => 2,
            Checkpoint::LinearSs(_) => 3,
        }
    }

    fn header(&self) -> (Vec<u32>, Vec<f64>) {
        let d = |v: usize| v as u32;
        match self {
            Checkpoint::LinearArx(m) => (vec![d(m.n_x()), d(m.n_y())], m.theta().to_vec()),
            Checkpoint::NarxNet(m) => {
                let (n1, n2) = m.hidden();
                (vec![d(m.n_x()), d(n1), d(n2), d(m.n_y())], m.theta().to_vec())
            }
            Checkpoint::RnnSs(m) => {
                let s = m.shape();
                (vec![d(s.n_x), d(s.n_u), d(s.n_y), d(s.n1x), d(s.n2x), d(s.n1y)], m.theta())
            }
            Checkpoint::LinearSs(m) => (vec![d(m.n_x()), d(m.n_u()), d(m.n_y())], m.theta()),
        }
    }

    pub fn as_narx(&self) -> Option<NarxModel> {
        match self {
            Checkpoint::LinearArx(m) => Some(NarxModel::Linear(m.clone())),
            Checkpoint::NarxNet(m) => Some(NarxModel::Net(m.clone())),
            _ => None,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let (dims, params) = self.header();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.kind(), dims.len() as u8])?;
        for d in &dims {
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&(params.len() as u64).to_le_bytes())?;
        for p in &params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        let version = u16::from_le_bytes(b2);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        r.read_exact(&mut b2)?;
        let (kind, ndims) = (b2[0], b2[1] as usize);
        let mut dims = Vec::with_capacity(ndims);
        let mut b4 = [0u8; 4];
        for _ in 0..ndims {
            r.read_exact(&mut b4)?;
            dims.push(u32::from_le_bytes(b4) as usize);
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut params = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            r.read_exact(&mut b8)?;
            params.push(f64::from_le_bytes(b8));
        }
        let want = |k: usize| {
            if ndims == k {
                Ok(())
            } else {
                Err(Error::Checkpoint(format!("kind {kind} expects {k} dimensions, found {ndims}")))
            }
        };
        let bad = |e: Error| Error::Checkpoint(e.to_string());
        Ok(match kind {
            0 => {
                want(2)?;
                Checkpoint::LinearArx(LinearArx::new(dims[0], dims[1], params).map_err(bad)?)
            }
            1 => {
                want(4)?;
                Checkpoint::NarxNet(NarxNet::from_theta(dims[0], dims[1], dims[2], dims[3], params).map_err(bad)?)
            }
            2 => {
                want(6)?;
                let shape = RnnShape { n_x: dims[0], n_u: dims[1], n_y: dims[2], n1x: dims[3], n2x: dims[4], n1y: dims[5] };
                let nx = RnnSs::zeros(shape).n_theta_x();
                if params.len() < nx {
                    return Err(Error::Checkpoint("parameter vector too short".into()));
                }
                let ty = params[nx..].to_vec();
                let mut tx = params;
                tx.truncate(nx);
                Checkpoint::RnnSs(RnnSs::from_thetas(shape, tx, ty).map_err(bad)?)
            }
            3 => {
                want(3)?;
                let (nx, nu, ny) = (dims[0], dims[1], dims[2]);
                if params.len() != nx * nx + nx * nu + ny * nx {
                    return Err(Error::Checkpoint("parameter count does not match dimensions".into()));
                }
                let z = |r, c| nalgebra::DMatrix::zeros(r, c);
                let mut m = LinearSs::new(&z(nx, nx), &z(nx, nu), &z(ny, nx)).map_err(bad)?;
                m.set_theta(&params);
                Checkpoint::LinearSs(m)
            }
            k => return Err(Error::Checkpoint(format!("unknown model kind {k}"))),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}
