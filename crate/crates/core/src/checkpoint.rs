//! Full-state checkpoints: a small little-endian binary record that
//! round-trips bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Layout, RadialGrid};
use crate::model::{FieldState, ModelParams};

const MAGIC: &[u8; 8] = b"KSBCKPT\0";
const VERSION: u32 = 1;

/// Everything needed to resume a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub r_max: f64,
    pub cells: usize,
    pub layout: Layout,
    pub state: FieldState,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, grid: &RadialGrid, state: &FieldState) -> Result<Self> {
        state.check_shape(grid)?;
        Ok(Self {
            params: *params,
            r_max: grid.r_max(),
            cells: grid.cells(),
            layout: grid.layout(),
            state: state.clone(),
        })
    }

    /// Rebuilds the grid the checkpoint was taken on.
    pub fn grid(&self) -> Result<RadialGrid> {
        RadialGrid::build(self.r_max, self.cells, self.layout, self.params.dim)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        let p = &self.params;
        for x in [p.chi, p.xi, p.lambda, p.alpha, p.beta] {
            out.write_all(&x.to_le_bytes())?;
        }
        out.write_all(&(p.dim as u64).to_le_bytes())?;
        out.write_all(&self.r_max.to_le_bytes())?;
        out.write_all(&(self.cells as u64).to_le_bytes())?;
        let (tag, ratio) = match self.layout {
            Layout::Uniform => (0u8, 0.0),
            Layout::Geometric { ratio } => (1u8, ratio),
        };
        out.write_all(&[tag])?;
        out.write_all(&ratio.to_le_bytes())?;
        out.write_all(&self.state.t.to_le_bytes())?;
        out.write_all(&(self.state.len() as u64).to_le_bytes())?;
        for f in [&self.state.u, &self.state.v, &self.state.w] {
            for x in f {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(take(&mut input)?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut f = || -> Result<f64> { Ok(f64::from_le_bytes(take(&mut input)?)) };
        let (chi, xi, lambda, alpha, beta) = (f()?, f()?, f()?, f()?, f()?);
        let dim = u64::from_le_bytes(take(&mut input)?) as usize;
        let params = ModelParams {
            chi,
            xi,
            lambda,
            alpha,
            beta,
            dim,
        };
        params.validate(false)?;
        let r_max = f64::from_le_bytes(take(&mut input)?);
        let cells = u64::from_le_bytes(take(&mut input)?) as usize;
        let [tag] = take::<1, _>(&mut input)?;
        let ratio = f64::from_le_bytes(take(&mut input)?);
        let layout = match tag {
            0 => Layout::Uniform,
            1 => Layout::Geometric { ratio },
            other => return Err(Error::Format(format!("unknown layout tag {other}"))),
        };
        let t = f64::from_le_bytes(take(&mut input)?);
        let len = u64::from_le_bytes(take(&mut input)?) as usize;
        if len != cells + 1 {
            return Err(Error::Format(format!("field length {len} does not match {cells} cells")));
        }
        let mut field = || -> Result<Vec<f64>> {
            (0..len)
                .map(|_| Ok(f64::from_le_bytes(take(&mut input)?)))
                .collect()
        };
        let (u, v, w) = (field()?, field()?, field()?);
        Ok(Self {
            params,
            r_max,
            cells,
            layout,
            state: FieldState { t, u, v, w },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn take<const K: usize, R: Read>(input: &mut R) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    input.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("checkpoint is truncated".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}
