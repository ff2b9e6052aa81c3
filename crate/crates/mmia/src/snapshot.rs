//! MIAN snapshots of a trained WSA attack.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic     4 bytes  "MIAN"
//! version   u32      1
//! n_dims    u32      number of layer widths (layers + 1)
//! dims      u32 × n_dims
//! params    f64 × P  per layer: weights (out × in, row-major) then biases
//! mu_no     f64
//! sigma_no  f64
//! n_no      u64
//! lambda    f64
//! strategy  u8       0 threshold, 1 random
//! random    u64      pseudo-member count for the random strategy, u64::MAX if unset
//! balance   u8
//! seed      u64
//! ```

use mmia_core::attack_net::Layer;
use mmia_core::{AttackNet, NonMemberStats, PseudoStrategy, WsaConfig};

pub const MAGIC: [u8; 4] = *b"MIAN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub net: AttackNet,
    pub stats: NonMemberStats,
    pub config: WsaConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SnapshotError {
    #[error("bad magic {0:?}, expected \"MIAN\"")]
    BadMagic([u8; 4]),
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u32),
    #[error("snapshot truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after the snapshot")]
    TrailingBytes(usize),
    #[error("invalid snapshot: {0}")]
    Invalid(String),
}

pub fn encode(snap: &Snapshot) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let dims = snap.net.layer_dims();
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in &dims {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for layer in snap.net.layers() {
        for v in layer.weights.iter().chain(&layer.biases) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let s = &snap.stats;
    out.extend_from_slice(&s.mu_no.to_le_bytes());
    out.extend_from_slice(&s.sigma_no.to_le_bytes());
    out.extend_from_slice(&(s.n as u64).to_le_bytes());
    let c = &snap.config;
    out.extend_from_slice(&c.lambda.to_le_bytes());
    out.push(match c.pseudo_strategy {
        PseudoStrategy::Threshold => 0,
        PseudoStrategy::Random => 1,
    });
    out.extend_from_slice(&c.random_count.map_or(u64::MAX, |n| n as u64).to_le_bytes());
    out.push(u8::from(c.balance));
    out.extend_from_slice(&c.seed.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], SnapshotError> {
        let end = self.pos.checked_add(N).filter(|&e| e <= self.bytes.len()).ok_or(SnapshotError::Truncated(self.pos))?;
        let out = self.bytes[self.pos..end].try_into().expect("slice of length N");
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32, SnapshotError> {
        self.take().map(u32::from_le_bytes)
    }
    fn u64(&mut self) -> Result<u64, SnapshotError> {
        self.take().map(u64::from_le_bytes)
    }
    fn f64(&mut self) -> Result<f64, SnapshotError> {
        self.take().map(f64::from_le_bytes)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Snapshot, SnapshotError> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take::<4>()?;
    if magic != MAGIC {
        return Err(SnapshotError::BadMagic(magic));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(SnapshotError::UnsupportedVersion(version));
    }
    let n_dims = c.u32()? as usize;
    if n_dims < 2 {
        return Err(SnapshotError::Invalid(format!("{n_dims} layer widths")));
    }
    let dims = (0..n_dims).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
    // Reject shapes whose parameter count cannot fit in the remaining bytes
    // before allocating for them.
    let remaining = bytes.len() - c.pos;
    let mut layers = Vec::with_capacity(n_dims - 1);
    for w in dims.windows(2) {
        let (in_dim, out_dim) = (w[0], w[1]);
        let n_w = in_dim.checked_mul(out_dim).filter(|&n| n <= remaining / 8).ok_or(SnapshotError::Truncated(c.pos))?;
        let weights = (0..n_w).map(|_| c.f64()).collect::<Result<Vec<_>, _>>()?;
        let biases = (0..out_dim).map(|_| c.f64()).collect::<Result<Vec<_>, _>>()?;
        layers.push(Layer { in_dim, out_dim, weights, biases });
    }
    let net = AttackNet::from_layers(layers).map_err(|e| SnapshotError::Invalid(e.to_string()))?;
    let stats = NonMemberStats { mu_no: c.f64()?, sigma_no: c.f64()?, n: c.u64()? as usize };
    let lambda = c.f64()?;
    let pseudo_strategy = match c.u8()? {
        0 => PseudoStrategy::Threshold,
        1 => PseudoStrategy::Random,
        other => return Err(SnapshotError::Invalid(format!("pseudo-member strategy byte {other}"))),
    };
    let random_count = match c.u64()? {
        u64::MAX => None,
        n => Some(n as usize),
    };
    let balance = match c.u8()? {
        0 => false,
        1 => true,
        other => return Err(SnapshotError::Invalid(format!("balance byte {other}"))),
    };
    let seed = c.u64()?;
    if c.pos != bytes.len() {
        return Err(SnapshotError::TrailingBytes(bytes.len() - c.pos));
    }
    let config = WsaConfig { lambda, pseudo_strategy, random_count, balance, seed };
    Ok(Snapshot { net, stats, config })
}
