use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dot, IndexEntry, SearchHit, VectorSet, VectorStoreError};
use crate::embedding::EmbeddingVector;

pub const KMEANS_MAX_ITERATIONS: usize = 25;
/// Lloyd iterations stop once no centroid moves farther than this (L2).
pub const KMEANS_TOLERANCE: f64 = 1e-4;

/// `ceil(sqrt(n))`, at least 1.
pub fn default_nlist(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r < n {
        r += 1;
    }
    while r > 1 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r.max(1)
}

/// Inverted-file index.
///
/// Entries are partitioned by nearest centroid (cosine); a search scores only
/// the entries filed under the `nprobe` centroids closest to the query.
#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    pub(crate) vectors: VectorSet,
    pub(crate) centroids: Vec<f32>,
    pub(crate) lists: Vec<Vec<u32>>,
    pub(crate) seed: u64,
}

/// Clusters the entries with seeded spherical k-means and files each entry
/// under its nearest centroid. Deterministic for fixed inputs and seed.
pub fn build_ivf(entries: Vec<IndexEntry>, nlist: usize, seed: u64) -> Result<IvfIndex, VectorStoreError> {
    if nlist < 1 || nlist > entries.len() {
        return Err(VectorStoreError::NlistOutOfRange {
            nlist,
            max: entries.len(),
        });
    }
    let vectors = VectorSet::from_entries(entries)?;
    let centroids = spherical_kmeans(&vectors, nlist, seed);
    let mut lists = vec![Vec::new(); nlist];
    for i in 0..vectors.len() {
        let (c, _) = nearest(&centroids, vectors.dim, vectors.row(i));
        lists[c].push(i as u32);
    }
    Ok(IvfIndex {
        vectors,
        centroids,
        lists,
        seed,
    })
}

/// Index of the best centroid by dot product (lowest index on ties) and its score.
fn nearest(centroids: &[f32], dim: usize, x: &[f32]) -> (usize, f32) {
    let mut best = (0, f32::NEG_INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let s = dot(x, centroid);
        if s > best.1 {
            best = (c, s);
        }
    }
    best
}

fn spherical_kmeans(vectors: &VectorSet, k: usize, seed: u64) -> Vec<f32> {
    let (n, dim) = (vectors.len(), vectors.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding; on the unit sphere squared L2 distance is 2(1 - cos).
    let mut chosen = vec![false; n];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.extend_from_slice(vectors.row(first));
    let mut weight: Vec<f64> = (0..n)
        .map(|i| (1.0 - dot(vectors.row(i), vectors.row(first)) as f64).max(0.0))
        .collect();
    weight[first] = 0.0;
    for _ in 1..k {
        let total: f64 = weight.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, w) in weight.iter().enumerate() {
                acc += w;
                if *w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // float slack: fall back to the last positive weight
            pick.unwrap_or_else(|| weight.iter().rposition(|w| *w > 0.0).unwrap_or(0))
        } else {
            // all remaining points coincide with a centroid
            let free: Vec<usize> = (0..n).filter(|i| !chosen[*i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let row = vectors.row(pick).to_vec();
        for (i, w) in weight.iter_mut().enumerate() {
            let d = (1.0 - dot(vectors.row(i), &row) as f64).max(0.0);
            if d < *w {
                *w = d;
            }
        }
        weight[pick] = 0.0;
        centroids.extend_from_slice(&row);
    }

    let mut assignment = vec![0usize; n];
    let mut fit = vec![0f32; n];
    for _ in 0..KMEANS_MAX_ITERATIONS {
        let mut sizes = vec![0usize; k];
        for i in 0..n {
            let (c, s) = nearest(&centroids, dim, vectors.row(i));
            assignment[i] = c;
            fit[i] = s;
            sizes[c] += 1;
        }

        // Repair empty clusters with the point farthest from its centroid.
        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| sizes[assignment[i]] > 1)
                .min_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)));
            let Some(p) = donor else { break };
            sizes[assignment[p]] -= 1;
            assignment[p] = empty;
            sizes[empty] = 1;
            fit[p] = 1.0;
            centroids[empty * dim..(empty + 1) * dim].copy_from_slice(vectors.row(p));
        }

        let mut sums = vec![0f64; k * dim];
        for (i, &cluster) in assignment.iter().enumerate() {
            let base = cluster * dim;
            for (s, &x) in sums[base..base + dim].iter_mut().zip(vectors.row(i)) {
                *s += x as f64;
            }
        }
        let mut max_shift = 0f64;
        for c in 0..k {
            let sum = &sums[c * dim..(c + 1) * dim];
            let norm = sum.iter().map(|s| s * s).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let old = &mut centroids[c * dim..(c + 1) * dim];
            let mut shift = 0f64;
            for (o, &s) in old.iter_mut().zip(sum) {
                let new = (s / norm) as f32;
                shift += ((new - *o) as f64).powi(2);
                *o = new;
            }
            max_shift = max_shift.max(shift.sqrt());
        }
        if max_shift < KMEANS_TOLERANCE {
            break;
        }
    }
    centroids
}

impl IvfIndex {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim
    }

    pub fn nlist(&self) -> usize {
        self.lists.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn centroid(&self, list: usize) -> &[f32] {
        &self.centroids[list * self.vectors.dim..(list + 1) * self.vectors.dim]
    }

    /// Chunk ids filed under each centroid, in insertion order.
    pub fn lists(&self) -> Vec<Vec<&str>> {
        self.lists
            .iter()
            .map(|l| l.iter().map(|&i| self.vectors.ids[i as usize].as_str()).collect())
            .collect()
    }

    /// Lists to scan for a query: the `nprobe` best centroids, ties by index.
    fn probe_order(&self, query: &[f32], nprobe: usize) -> Vec<usize> {
        let mut scored: Vec<(f32, usize)> = self
            .centroids
            .chunks_exact(self.vectors.dim)
            .enumerate()
            .map(|(c, centroid)| (dot(query, centroid), c))
            .collect();
        scored.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.truncate(nprobe.min(self.nlist()));
        scored.into_iter().map(|(_, c)| c).collect()
    }

    pub fn search(
        &self,
        query: &EmbeddingVector,
        k: usize,
        nprobe: usize,
    ) -> Result<Vec<SearchHit>, VectorStoreError> {
        self.vectors.check_query(query, k)?;
        if nprobe < 1 {
            return Err(VectorStoreError::InvalidNprobe);
        }
        let probes = self.probe_order(query.values(), nprobe);
        let rows = probes
            .iter()
            .flat_map(|&c| self.lists[c].iter().map(|&i| i as usize));
        Ok(self.vectors.top_k(query.values(), rows, k))
    }
}
