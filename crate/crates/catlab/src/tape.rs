//! The structured catalytic tape the compression engine works on: a fixed
//! layout `τ | h_l … h_1 | tar` of exactly `c + 2ml + 3m` bits — the c-bit
//! catalytic contents, the chain of l affine hash functions (encoded 2m bits
//! each, h_l leftmost on the tape), and a 3m-bit target region whose value the
//! compression schemes spend.
//!
//! Every compressed tape is still a structurally valid tape of the same
//! (c, m, l): the schemes only rewrite the τ region, one hash slot, and tar,
//! and any 2m-bit pattern decodes as some affine function. Validity of the
//! *record* inside is the decompressor's concern, not the container's.

use std::fmt;

use thiserror::Error;

use crate::bits::{BitBuf, Bits, BitsError};
use crate::hashprg::{HashError, HashFn, PrgSpec};

#[derive(Debug, Error)]
pub enum TapeError {
    #[error("tape blob is {got} bits, want c + 2ml + 3m = {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("tau region is {got} bits, want c = {want}")]
    TauWidth { got: usize, want: usize },
    #[error("tar region is {got} bits, want 3m = {want}")]
    TarWidth { got: usize, want: usize },
    #[error("hash chain holds {got} functions, want l = {want}")]
    ChainLength { got: usize, want: usize },
    #[error("hash slot {slot} has width m = {got}, tape wants m = {want}")]
    HashWidth { slot: usize, got: u32, want: u32 },
    #[error("tar region of 3m = {0} bits exceeds the fixed-width bit limit")]
    TarTooWide(usize),
    #[error("malformed tape text: {0}")]
    Text(String),
    #[error(transparent)]
    Bits(#[from] BitsError),
    #[error(transparent)]
    Hash(#[from] HashError),
}

/// A `τ | h_l … h_1 | tar` tape. Hash functions are stored h_1-first (the
/// walk order used everywhere else); only the rendered layout is h_l-first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuredTape {
    c: usize,
    m: u32,
    l: usize,
    /// Catalytic contents, c bits.
    pub tau: Bits,
    /// hashes[k] is h_{k+1}; h_1 drives the bottom walk layer.
    hashes: Vec<HashFn>,
    /// Target region, 3m bits.
    pub tar: Bits,
}

impl StructuredTape {
    pub fn new(
        c: usize,
        m: u32,
        l: usize,
        tau: Bits,
        hashes: Vec<HashFn>,
        tar: Bits,
    ) -> Result<Self, TapeError> {
        if 3 * m as usize > Bits::MAX_LEN {
            return Err(TapeError::TarTooWide(3 * m as usize));
        }
        if tau.len() != c {
            return Err(TapeError::TauWidth { got: tau.len(), want: c });
        }
        if tar.len() != 3 * m as usize {
            return Err(TapeError::TarWidth { got: tar.len(), want: 3 * m as usize });
        }
        if hashes.len() != l {
            return Err(TapeError::ChainLength { got: hashes.len(), want: l });
        }
        for (k, h) in hashes.iter().enumerate() {
            if h.m != m {
                return Err(TapeError::HashWidth { slot: k + 1, got: h.m, want: m });
            }
        }
        Ok(StructuredTape { c, m, l, tau, hashes, tar })
    }

    /// All-zero τ and tar with the all-zero (a=0, b=0) hash chain.
    pub fn zeroed(c: usize, m: u32, l: usize) -> Result<Self, TapeError> {
        StructuredTape::new(
            c,
            m,
            l,
            Bits::zeros(c),
            vec![HashFn::new(m, 0, 0); l],
            Bits::zeros(3 * m as usize),
        )
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Total bit length c + 2ml + 3m.
    pub fn total_bits(&self) -> usize {
        self.c + 2 * self.m as usize * self.l + 3 * self.m as usize
    }

    /// The hash chain as a generator spec (h_1 first).
    pub fn prg(&self) -> PrgSpec {
        PrgSpec::new(self.m, self.hashes.clone())
    }

    /// h_j, 1-indexed.
    pub fn hash(&self, j: usize) -> &HashFn {
        &self.hashes[j - 1]
    }

    /// Replaces h_j (1-indexed). Any (a, b) is admissible: compressed tapes
    /// store relocated record bits in a hash slot.
    pub fn set_hash(&mut self, j: usize, h: HashFn) -> Result<(), TapeError> {
        if h.m != self.m {
            return Err(TapeError::HashWidth { slot: j, got: h.m, want: self.m });
        }
        self.hashes[j - 1] = h;
        Ok(())
    }

    /// Flat bit image: τ, then h_l … h_1 (2m bits each), then tar.
    pub fn to_bits(&self) -> BitBuf {
        let mut buf = BitBuf::new();
        buf.push_bits(self.tau);
        for h in self.hashes.iter().rev() {
            buf.push_bits(h.encode());
        }
        buf.push_bits(self.tar);
        buf
    }

    /// Inverse of [`StructuredTape::to_bits`] for the given shape.
    pub fn from_bits(c: usize, m: u32, l: usize, blob: &BitBuf) -> Result<Self, TapeError> {
        let want = c + 2 * m as usize * l + 3 * m as usize;
        if blob.len() != want {
            return Err(TapeError::LengthMismatch { got: blob.len(), want });
        }
        let tau = blob.read_bits(0, c);
        let mut tape_order = Vec::with_capacity(l);
        for k in 0..l {
            let at = c + k * 2 * m as usize;
            tape_order.push(HashFn::decode(m, blob.read_bits(at, 2 * m as usize))?);
        }
        tape_order.reverse(); // tape stores h_l first; we keep h_1 first
        let tar = blob.read_bits(c + 2 * m as usize * l, 3 * m as usize);
        StructuredTape::new(c, m, l, tau, tape_order, tar)
    }

    /// Text form: a `c= m= l=` header line, then hex lines for the three
    /// sections in tape order.
    pub fn render(&self) -> String {
        let mut hashes = BitBuf::new();
        for h in self.hashes.iter().rev() {
            hashes.push_bits(h.encode());
        }
        format!(
            "c={} m={} l={}\ntau={}\nhashes={}\ntar={}\n",
            self.c,
            self.m,
            self.l,
            self.tau.to_hex(),
            hashes.to_hex(),
            self.tar.to_hex(),
        )
    }

    /// Inverse of [`StructuredTape::render`]. Blank lines and `#` comment
    /// lines are ignored.
    pub fn parse(text: &str) -> Result<Self, TapeError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|ln| !ln.is_empty() && !ln.starts_with('#'));
        let header = lines.next().ok_or_else(|| TapeError::Text("empty tape text".into()))?;
        let mut c = None;
        let mut m = None;
        let mut l = None;
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| TapeError::Text(format!("header field `{field}` is not key=value")))?;
            let parsed: usize = value
                .parse()
                .map_err(|_| TapeError::Text(format!("header field `{field}` is not a number")))?;
            match key {
                "c" => c = Some(parsed),
                "m" => m = Some(parsed),
                "l" => l = Some(parsed),
                other => return Err(TapeError::Text(format!("unknown header key `{other}`"))),
            }
        }
        let (Some(c), Some(m), Some(l)) = (c, m, l) else {
            return Err(TapeError::Text("header must set c=, m=, l=".into()));
        };
        if m == 0 || m > u32::from(u8::MAX) as usize {
            return Err(TapeError::Text(format!("unsupported seed width m={m}")));
        }
        let m = m as u32;
        let mut section = |name: &str| -> Result<String, TapeError> {
            let line = lines
                .next()
                .ok_or_else(|| TapeError::Text(format!("missing `{name}=` section")))?;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| TapeError::Text(format!("section `{line}` is not key=value")))?;
            if key != name {
                return Err(TapeError::Text(format!("expected `{name}=`, found `{key}=`")));
            }
            Ok(value.to_string())
        };
        let tau_hex = section("tau")?;
        let hashes_hex = section("hashes")?;
        let tar_hex = section("tar")?;
        if 3 * m as usize > Bits::MAX_LEN {
            return Err(TapeError::TarTooWide(3 * m as usize));
        }
        let tau = Bits::from_hex(&tau_hex, c)?;
        let hash_bits = BitBuf::from_hex(&hashes_hex, 2 * m as usize * l)?;
        let mut tape_order = Vec::with_capacity(l);
        for k in 0..l {
            tape_order.push(HashFn::decode(m, hash_bits.read_bits(k * 2 * m as usize, 2 * m as usize))?);
        }
        tape_order.reverse();
        let tar = Bits::from_hex(&tar_hex, 3 * m as usize)?;
        StructuredTape::new(c, m, l, tau, tape_order, tar)
    }
}

impl fmt::Display for StructuredTape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
