//! The `SDLM1` container and raw f32 tensor files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SDLM" (53 44 4C 4D) | version u8 = 1
//! K u8 | C u16 | P u16 | tensor count u32
//! per tensor:
//!   name length u16 | name (UTF-8)
//!   rank u8 | dims u64 x rank | element count u64
//!   payload length u32 | payload
//! ```
//!
//! A payload is the tensor's blocks packed back to back, LSB-first: seed
//! (K bits), exponent (4 bits), then P coefficients (4 bits each), the last two
//! in two's complement. The final byte is zero-padded.

use std::fs;
use std::path::Path;

use crate::codec::{CompressedBlock, CompressedTensor, QuantizedCoefficients, Shape};
use crate::config::{BlockConfig, COEFF_BITS, EXPONENT_BITS};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SDLM";
pub const VERSION: u8 = 1;
/// Magic, version, K, C, P and tensor count.
pub const HEADER_LEN: usize = 4 + 1 + 1 + 2 + 2 + 4;

struct BitWriter {
    bytes: Vec<u8>,
    bit: usize,
}

impl BitWriter {
    fn with_capacity(bits: usize) -> Self {
        Self {
            bytes: Vec::with_capacity(bits.div_ceil(8)),
            bit: 0,
        }
    }

    fn push(&mut self, value: u32, width: u32) {
        for i in 0..width {
            if self.bit.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if (value >> i) & 1 == 1 {
                *self.bytes.last_mut().unwrap() |= 1 << (self.bit % 8);
            }
            self.bit += 1;
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    bit: usize,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, bit: 0 }
    }

    /// Caller guarantees enough bits remain.
    fn read(&mut self, width: u32) -> u32 {
        let mut value = 0;
        for i in 0..width {
            let byte = self.bytes[self.bit / 8];
            value |= u32::from((byte >> (self.bit % 8)) & 1) << i;
            self.bit += 1;
        }
        value
    }

    fn rest_is_zero(&mut self) -> bool {
        let total = self.bytes.len() * 8;
        while self.bit < total {
            if self.read(1) != 0 {
                return false;
            }
        }
        true
    }
}

fn nibble(v: i8) -> u32 {
    u32::from(v as u8 & 0x0F)
}

fn from_nibble(v: u32) -> i8 {
    ((v as u8) << 4) as i8 >> 4
}

/// Packs a tensor's blocks into its payload bytes.
pub fn pack_payload(ct: &CompressedTensor) -> Vec<u8> {
    let k = ct.config.seed_bits();
    let mut out = BitWriter::with_capacity(ct.payload_bits());
    for block in &ct.blocks {
        out.push(block.seed, k);
        out.push(nibble(block.coeffs.e), EXPONENT_BITS);
        for &q in &block.coeffs.q {
            out.push(nibble(q), COEFF_BITS);
        }
    }
    out.bytes
}

/// Inverse of [`pack_payload`]. `name` only labels errors.
pub fn unpack_payload(
    payload: &[u8],
    config: &BlockConfig,
    shape: Shape,
    name: &str,
) -> Result<CompressedTensor> {
    let count = config.block_count(shape.numel());
    let expected = config.payload_bytes(shape.numel());
    if payload.len() != expected {
        return Err(Error::PayloadSize {
            tensor: name.to_string(),
            expected,
            found: payload.len(),
        });
    }
    let mut bits = BitReader::new(payload);
    let mut blocks = Vec::with_capacity(count);
    for index in 0..count {
        let seed = bits.read(config.seed_bits());
        if seed == 0 {
            return Err(Error::ZeroSeed {
                tensor: name.to_string(),
                block: index,
            });
        }
        let e = from_nibble(bits.read(EXPONENT_BITS));
        let q = (0..config.latent_dim())
            .map(|_| from_nibble(bits.read(COEFF_BITS)))
            .collect();
        blocks.push(CompressedBlock {
            seed,
            coeffs: QuantizedCoefficients { q, e },
        });
    }
    if !bits.rest_is_zero() {
        return Err(Error::NonZeroPadding {
            tensor: name.to_string(),
        });
    }
    CompressedTensor::new(*config, shape, blocks)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: CompressedTensor,
}

/// A set of compressed tensors sharing one block configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub config: BlockConfig,
    pub tensors: Vec<NamedTensor>,
}

impl Container {
    pub fn new(config: BlockConfig) -> Self {
        Self {
            config,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: CompressedTensor) -> Result<()> {
        let name = name.into();
        if tensor.config != self.config {
            return Err(Error::InvalidConfig(format!(
                "tensor '{name}' uses {} but the container uses {}",
                tensor.config, self.config
            )));
        }
        if name.len() > u16::MAX as usize {
            return Err(Error::InvalidConfig(format!("tensor name of {} bytes is too long", name.len())));
        }
        if self.config.payload_bytes(tensor.element_count()) > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!("tensor '{name}' payload exceeds 4 GiB")));
        }
        self.tensors.push(NamedTensor { name, tensor });
        Ok(())
    }

    /// Exact encoded length of a tensor entry, computable before compression.
    pub fn entry_len(config: &BlockConfig, name: &str, shape: &Shape) -> usize {
        2 + name.len() + 1 + 8 * shape.dims().len() + 8 + 4 + config.payload_bytes(shape.numel())
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + self
                .tensors
                .iter()
                .map(|t| Self::entry_len(&self.config, &t.name, &t.tensor.shape))
                .sum::<usize>()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.config.seed_bits() as u8);
        out.extend_from_slice(&(self.config.block_size() as u16).to_le_bytes());
        out.extend_from_slice(&(self.config.latent_dim() as u16).to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for entry in &self.tensors {
            let t = &entry.tensor;
            out.extend_from_slice(&(entry.name.len() as u16).to_le_bytes());
            out.extend_from_slice(entry.name.as_bytes());
            out.push(t.shape.dims().len() as u8);
            for &d in t.shape.dims() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&(t.element_count() as u64).to_le_bytes());
            let payload = pack_payload(t);
            out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
            out.extend_from_slice(&payload);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4, "magic").map_err(|_| Error::BadMagic)? != MAGIC {
            return Err(Error::BadMagic);
        }
        let version = cur.u8("header")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let k = u32::from(cur.u8("header")?);
        let c = usize::from(cur.u16("header")?);
        let p = usize::from(cur.u16("header")?);
        let config = BlockConfig::new(c, p, k)?;
        let count = cur.u32("header")?;

        let mut container = Container::new(config);
        for i in 0..count {
            let ctx = format!("tensor #{i} entry");
            let name_len = usize::from(cur.u16(&ctx)?);
            let name = std::str::from_utf8(cur.take(name_len, &ctx)?)
                .map_err(|_| Error::InvalidName)?
                .to_string();
            let ctx = format!("tensor '{name}' header");
            let rank = usize::from(cur.u8(&ctx)?);
            let dims = (0..rank)
                .map(|_| cur.u64(&ctx).and_then(|d| to_usize(d, &name)))
                .collect::<Result<Vec<_>>>()?;
            let shape = Shape::new(dims).map_err(|e| Error::InvalidShape(format!("tensor '{name}': {e}")))?;
            let n = to_usize(cur.u64(&ctx)?, &name)?;
            if n != shape.numel() {
                return Err(Error::ShapeMismatch {
                    shape: shape.to_string(),
                    expected: shape.numel(),
                    found: n,
                });
            }
            let len = cur.u32(&ctx)? as usize;
            let payload = cur.take(len, &format!("tensor '{name}' payload"))?;
            let tensor = unpack_payload(payload, &config, shape, &name)?;
            container.tensors.push(NamedTensor { name, tensor });
        }
        if cur.pos != bytes.len() {
            return Err(Error::TrailingBytes(bytes.len() - cur.pos));
        }
        Ok(container)
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

fn to_usize(v: u64, name: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::InvalidShape(format!("tensor '{name}': {v} does not fit in memory")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, context: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                context: context.to_string(),
            }),
        }
    }

    fn u8(&mut self, context: &str) -> Result<u8> {
        Ok(self.take(1, context)?[0])
    }

    fn u16(&mut self, context: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, context)?.try_into().unwrap()))
    }

    fn u32(&mut self, context: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, context)?.try_into().unwrap()))
    }

    fn u64(&mut self, context: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, context)?.try_into().unwrap()))
    }
}

/// Reads a headerless little-endian f32 file holding exactly `shape.numel()` values.
pub fn read_plain_tensor(path: impl AsRef<Path>, shape: &Shape) -> Result<Vec<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let expected = shape.numel() as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(Error::FileSize {
            path: path.display().to_string(),
            expected,
            found: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect())
}

pub fn write_plain_tensor(path: impl AsRef<Path>, data: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|x| x.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}
