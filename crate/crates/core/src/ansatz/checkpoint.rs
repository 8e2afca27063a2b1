//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"RVMCCKPT" | u32 version | u64 header_len | header (JSON) | u64 count | count × f64
//! ```
//!
//! The JSON header records the ansatz specification, the parameter count and
//! the seed lineage (every seed that contributed to the parameters, oldest
//! first).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Ansatz, AnsatzSpec, DensityModel};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RVMCCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub ansatz: AnsatzSpec,
    pub n_params: usize,
    pub seed_lineage: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(ansatz: AnsatzSpec, params: Vec<f64>, seed_lineage: Vec<u64>) -> Result<Self> {
        let expected = Ansatz::from_spec(&ansatz)?.n_params();
        if expected != params.len() {
            return Err(Error::Checkpoint(format!("{} parameters given, ansatz needs {expected}", params.len())));
        }
        Ok(Self { header: CheckpointHeader { ansatz, n_params: params.len(), seed_lineage }, params })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let mut header = vec![0u8; u64::from_le_bytes(b8) as usize];
        r.read_exact(&mut header)?;
        let header: CheckpointHeader = serde_json::from_slice(&header)?;
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        if count != header.n_params {
            return Err(Error::Checkpoint(format!("header announces {} parameters, body has {count}", header.n_params)));
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b8)?;
            params.push(f64::from_le_bytes(b8));
        }
        Self::new(header.ansatz, params, header.seed_lineage)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
