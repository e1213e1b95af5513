use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hash::mix64;

const MAGIC: &[u8; 4] = b"WCBF";
const VERSION: u32 = 1;

/// Optimal bit count and hash count for `n` items at false-positive rate `p`.
pub fn bloom_params(n: u64, p: f64) -> Result<(u64, u32)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("false-positive rate must be in (0, 1), got {p}")));
    }
    if n == 0 {
        return Err(Error::invalid("expected item count must be at least 1"));
    }
    let ln2 = std::f64::consts::LN_2;
    let m = (-(n as f64) * p.ln() / (ln2 * ln2)).ceil().max(1.0) as u64;
    let k = ((m as f64 / n as f64) * ln2).round().max(1.0) as u32;
    Ok((m, k))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomFilter {
    words: Vec<u64>,
    m: u64,
    k: u32,
    seed: u64,
}

#[inline]
fn reduce(x: u64, m: u64) -> u64 {
    ((x as u128 * m as u128) >> 64) as u64
}

impl BloomFilter {
    pub fn new(m: u64, k: u32, seed: u64) -> Result<Self> {
        if m == 0 || k == 0 {
            return Err(Error::invalid("bloom filter needs m >= 1 and k >= 1"));
        }
        let n_words = usize::try_from(m.div_ceil(64)).map_err(|_| Error::invalid("bloom filter too large"))?;
        let mut words = Vec::new();
        words
            .try_reserve_exact(n_words)
            .map_err(|_| Error::invalid(format!("cannot allocate a bloom filter of {m} bits")))?;
        words.resize(n_words, 0);
        Ok(BloomFilter { words, m, k, seed })
    }

    pub fn with_capacity(n: u64, p: f64, seed: u64) -> Result<Self> {
        let (m, k) = bloom_params(n, p)?;
        Self::new(m, k, seed)
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    fn bases(&self, item: u64) -> (u64, u64) {
        let h1 = mix64(item ^ self.seed);
        let h2 = mix64(item.rotate_left(29) ^ self.seed ^ 0xa076_1d64_78bd_642f) | 1;
        (h1, h2)
    }

    #[inline]
    pub fn insert(&mut self, item: u64) {
        let (h1, h2) = self.bases(item);
        let mut h = h1;
        for _ in 0..self.k {
            let bit = reduce(h, self.m);
            self.words[(bit >> 6) as usize] |= 1 << (bit & 63);
            h = h.wrapping_add(h2);
        }
    }

    #[inline]
    pub fn contains(&self, item: u64) -> bool {
        let (h1, h2) = self.bases(item);
        let mut h = h1;
        for _ in 0..self.k {
            let bit = reduce(h, self.m);
            if self.words[(bit >> 6) as usize] & (1 << (bit & 63)) == 0 {
                return false;
            }
            h = h.wrapping_add(h2);
        }
        true
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.m.to_le_bytes())?;
        w.write_all(&self.k.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * 8192);
        for chunk in self.words.chunks(8192) {
            buf.clear();
            for word in chunk {
                buf.extend_from_slice(&word.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io_at(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io_at(path, e))
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; 28];
        r.read_exact(&mut header)
            .map_err(|_| Error::Format("bloom state: truncated header".into()))?;
        if &header[..4] != MAGIC {
            return Err(Error::Format("bloom state: bad magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("bloom state: unsupported version {version} (expected {VERSION})")));
        }
        let m = u64::from_le_bytes(header[8..16].try_into().unwrap());
        let k = u32::from_le_bytes(header[16..20].try_into().unwrap());
        let seed = u64::from_le_bytes(header[20..28].try_into().unwrap());
        let mut filter = BloomFilter::new(m, k, seed)?;
        let mut buf = vec![0u8; 8 * 8192];
        for chunk in filter.words.chunks_mut(8192) {
            let bytes = &mut buf[..chunk.len() * 8];
            r.read_exact(bytes)
                .map_err(|_| Error::Format("bloom state: truncated bit array".into()))?;
            for (word, b) in chunk.iter_mut().zip(bytes.chunks_exact(8)) {
                *word = u64::from_le_bytes(b.try_into().unwrap());
            }
        }
        Ok(filter)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }
}
