use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::hash::{hash_token_run, mix64};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSignature {
    pub values: Vec<u64>,
    pub num_perm: usize,
    pub seed: u64,
}

impl MinHashSignature {
    /// True for the signature of an empty shingle set.
    pub fn is_sentinel(&self) -> bool {
        self.values.iter().all(|&v| v == u64::MAX)
    }
}

/// A seeded family of `num_perm` bijections on u64: `hᵢ(x) = mix64(x ⊕ sᵢ)`.
#[derive(Debug, Clone)]
pub struct MinHasher {
    salts: Vec<u64>,
    seed: u64,
}

impl MinHasher {
    pub fn new(num_perm: usize, seed: u64) -> Result<Self> {
        if num_perm == 0 {
            return Err(Error::invalid("num_perm must be at least 1"));
        }
        let mut state = seed;
        let salts = (0..num_perm)
            .map(|_| {
                state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
                mix64(state)
            })
            .collect();
        Ok(MinHasher { salts, seed })
    }

    pub fn num_perm(&self) -> usize {
        self.salts.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Signature over a set of already-hashed shingles (duplicates are harmless).
    pub fn signature_of_hashes(&self, shingles: &[u64]) -> MinHashSignature {
        let mut values = vec![u64::MAX; self.salts.len()];
        for &x in shingles {
            for (v, &salt) in values.iter_mut().zip(&self.salts) {
                let h = mix64(x ^ salt);
                if h < *v {
                    *v = h;
                }
            }
        }
        MinHashSignature {
            values,
            num_perm: self.salts.len(),
            seed: self.seed,
        }
    }

    /// Signature over the `shingle`-token shingles of `tokens`.
    pub fn signature(&self, tokens: &[&str], shingle: usize) -> MinHashSignature {
        self.signature_of_hashes(&super::ngrams(tokens, shingle))
    }
}

pub fn minhash_signature(tokens: &[&str], num_perm: usize, seed: u64) -> Result<MinHashSignature> {
    Ok(MinHasher::new(num_perm, seed)?.signature(tokens, super::DEFAULT_NGRAM))
}

pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64> {
    if a.num_perm != b.num_perm || a.seed != b.seed || a.values.len() != b.values.len() {
        return Err(Error::invalid(format!(
            "cannot compare signatures with (num_perm, seed) ({}, {}) and ({}, {})",
            a.num_perm, a.seed, b.num_perm, b.seed
        )));
    }
    let equal = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
    Ok(equal as f64 / a.values.len() as f64)
}

fn check_banding(num_perm: usize, bands: usize, rows: usize) -> Result<()> {
    if bands == 0 || rows == 0 || bands * rows != num_perm {
        return Err(Error::invalid(format!(
            "bands × rows must equal num_perm: {bands} × {rows} ≠ {num_perm}"
        )));
    }
    Ok(())
}

#[inline]
fn band_key(sig: &MinHashSignature, band: usize, rows: usize) -> u64 {
    hash_token_run(&sig.values[band * rows..(band + 1) * rows], band as u64)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Links the larger root under the smaller so roots are group minima.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LshGroups {
    /// Groups of size ≥ 2, each sorted, ordered by first member.
    pub groups: Vec<Vec<usize>>,
    /// `removed[i]` is true for every non-first group member.
    pub removed: Vec<bool>,
}

/// Batch LSH: candidates share a band key, are merged when their estimated
/// Jaccard reaches `threshold`, and each group keeps its first member.
pub fn lsh_candidates(sigs: &[MinHashSignature], bands: usize, rows: usize, threshold: f64) -> Result<LshGroups> {
    let num_perm = sigs.first().map_or(bands * rows, |s| s.num_perm);
    check_banding(num_perm, bands, rows)?;
    let mut uf = UnionFind::new(sigs.len());
    for band in 0..bands {
        let mut buckets: FxHashMap<u64, Vec<usize>> = FxHashMap::default();
        for (i, sig) in sigs.iter().enumerate() {
            if sig.num_perm != num_perm {
                return Err(Error::invalid("signatures with different num_perm"));
            }
            if sig.is_sentinel() {
                continue;
            }
            buckets.entry(band_key(sig, band, rows)).or_default().push(i);
        }
        let mut keys: Vec<u64> = buckets.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let members = &buckets[&key];
            for (x, &i) in members.iter().enumerate() {
                for &j in &members[x + 1..] {
                    if uf.find(i) != uf.find(j) && estimate_jaccard(&sigs[i], &sigs[j])? >= threshold {
                        uf.union(i, j);
                    }
                }
            }
        }
    }
    let mut by_root: FxHashMap<usize, Vec<usize>> = FxHashMap::default();
    for i in 0..sigs.len() {
        let r = uf.find(i);
        by_root.entry(r).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = by_root.into_values().filter(|g| g.len() > 1).collect();
    groups.sort_unstable_by_key(|g| g[0]);
    let mut removed = vec![false; sigs.len()];
    for g in &groups {
        for &i in &g[1..] {
            removed[i] = true;
        }
    }
    Ok(LshGroups { groups, removed })
}

/// Incremental LSH index: a document is a duplicate when it matches any
/// earlier document (kept or not) on some band and in estimated Jaccard.
#[derive(Debug, Clone)]
pub struct LshIndex {
    bands: usize,
    rows: usize,
    threshold: f64,
    buckets: Vec<FxHashMap<u64, Vec<u32>>>,
    sigs: Vec<MinHashSignature>,
}

impl LshIndex {
    pub fn new(num_perm: usize, bands: usize, rows: usize, threshold: f64) -> Result<Self> {
        check_banding(num_perm, bands, rows)?;
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::invalid("LSH threshold must be in [0, 1]"));
        }
        Ok(LshIndex {
            bands,
            rows,
            threshold,
            buckets: vec![FxHashMap::default(); bands],
            sigs: Vec::new(),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Every inserted signature in insertion order.
    pub fn signatures(&self) -> &[MinHashSignature] {
        &self.sigs
    }

    pub fn clear(&mut self) {
        self.sigs.clear();
        for b in &mut self.buckets {
            b.clear();
        }
    }

    /// Inserts `sig` and reports whether it duplicates an earlier signature.
    pub fn insert(&mut self, sig: MinHashSignature) -> Result<bool> {
        if sig.is_sentinel() {
            self.sigs.push(sig);
            return Ok(false);
        }
        let id = self.sigs.len() as u32;
        let keys: Vec<u64> = (0..self.bands).map(|b| band_key(&sig, b, self.rows)).collect();
        let mut duplicate = false;
        'bands: for (b, key) in keys.iter().enumerate() {
            if let Some(members) = self.buckets[b].get(key) {
                for &j in members {
                    if estimate_jaccard(&sig, &self.sigs[j as usize])? >= self.threshold {
                        duplicate = true;
                        break 'bands;
                    }
                }
            }
        }
        for (b, key) in keys.into_iter().enumerate() {
            self.buckets[b].entry(key).or_default().push(id);
        }
        self.sigs.push(sig);
        Ok(duplicate)
    }
}
