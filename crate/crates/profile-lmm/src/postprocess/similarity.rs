//! Posterior similarity matrix: pairwise co-clustering frequencies across
//! kept draws.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::chain::ChainStore;

const MAGIC: &[u8; 4] = b"PLMS";
const VERSION: u32 = 1;

/// S[a, b] = fraction of kept draws in which subset observations a and b
/// share a cluster. Entries lie in [0, 1], the diagonal is 1, and the
/// matrix is symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub subset_ids: Vec<usize>,
    pub s: DMatrix<f64>,
}

impl SimilarityMatrix {
    pub fn dim(&self) -> usize {
        self.subset_ids.len()
    }
}

/// Co-clustering counts for one block of draws, as a flat upper-triangular
/// accumulator.
fn accumulate_block(
    draws: &[crate::model::state::ParameterState],
    subset_ids: &[usize],
    c_max: usize,
) -> Vec<u32> {
    let k = subset_ids.len();
    let mut counts = vec![0u32; k * k];
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); c_max];
    for draw in draws {
        for b in &mut buckets {
            b.clear();
        }
        for (pos, &id) in subset_ids.iter().enumerate() {
            buckets[draw.z[id]].push(pos as u32);
        }
        for bucket in &buckets {
            for (ai, &a) in bucket.iter().enumerate() {
                let row = a as usize * k;
                for &b in &bucket[ai..] {
                    counts[row + b as usize] += 1;
                }
            }
        }
    }
    counts
}

/// Build the similarity matrix by streaming over draws; accumulation
/// parallelizes over draw blocks and the partial counts are merged exactly.
pub fn build_similarity(chain: &ChainStore, subset_ids: &[usize]) -> Result<SimilarityMatrix> {
    let h = chain.kept();
    if h == 0 {
        return Err(Error::Spec(
            "similarity matrix needs a chain with kept draws".into(),
        ));
    }
    if subset_ids.is_empty() {
        return Err(Error::Parameter("similarity subset is empty".into()));
    }
    let n = chain.meta.dims.n;
    let mut seen = vec![false; n];
    for &id in subset_ids {
        if id >= n {
            return Err(Error::Parameter(format!(
                "subset id {id} out of range for {n} observations"
            )));
        }
        if seen[id] {
            return Err(Error::Parameter(format!("duplicate subset id {id}")));
        }
        seen[id] = true;
    }
    let k = subset_ids.len();
    let c_max = chain.meta.dims.c_max;
    let block = (h / rayon::current_num_threads().max(1)).max(32);
    let total: Vec<u64> = chain
        .draws
        .par_chunks(block)
        .map(|chunk| accumulate_block(chunk, subset_ids, c_max))
        .reduce(
            || vec![0u32; k * k],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
        .into_iter()
        .map(u64::from)
        .collect();
    let hf = h as f64;
    let mut s = DMatrix::zeros(k, k);
    for a in 0..k {
        s[(a, a)] = 1.0;
        for b in (a + 1)..k {
            let v = total[a * k + b] as f64 / hf;
            s[(a, b)] = v;
            s[(b, a)] = v;
        }
    }
    Ok(SimilarityMatrix {
        subset_ids: subset_ids.to_vec(),
        s,
    })
}

/// Dissimilarity transform D = 1 - S.
pub fn dissimilarity(sim: &SimilarityMatrix) -> DMatrix<f64> {
    let k = sim.dim();
    DMatrix::from_fn(k, k, |a, b| if a == b { 0.0 } else { 1.0 - sim.s[(a, b)] })
}

/// Persist as a binary symmetric-matrix file: magic, version, dim, subset
/// ids, then the full matrix row-major little-endian.
pub fn save_similarity(sim: &SimilarityMatrix, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(sim.dim() as u64).to_le_bytes())?;
    for &id in &sim.subset_ids {
        w.write_all(&(id as u64).to_le_bytes())?;
    }
    let k = sim.dim();
    for a in 0..k {
        for b in 0..k {
            w.write_all(&sim.s[(a, b)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_similarity(path: &Path) -> Result<SimilarityMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    if u32::from_le_bytes(buf4) != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version",
            path.display()
        )));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let k = u64::from_le_bytes(buf8) as usize;
    let mut subset_ids = Vec::with_capacity(k);
    for _ in 0..k {
        r.read_exact(&mut buf8)?;
        subset_ids.push(u64::from_le_bytes(buf8) as usize);
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != k * k * 8 {
        return Err(Error::Format(format!(
            "{}: payload has {} bytes, expected {}",
            path.display(),
            payload.len(),
            k * k * 8
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(SimilarityMatrix {
        subset_ids,
        s: DMatrix::from_row_slice(k, k, &values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::chain::{ChainDims, ChainMeta, ChainStore};
    use crate::model::state::{stick_to_weights, uniform_sticks, ParameterState};
    use crate::stochastics::PsdMatrix;
    use nalgebra::DVector;

    /// Minimal chain whose draws differ only in allocations.
    pub(crate) fn chain_from_allocations(allocs: Vec<Vec<usize>>, c_max: usize) -> ChainStore {
        let n = allocs[0].len();
        let v = uniform_sticks(c_max);
        let pi = stick_to_weights(&v);
        let state_for = |z: Vec<usize>| ParameterState {
            beta: DVector::zeros(1),
            sigma2: 1.0,
            gamma: vec![DVector::zeros(1); c_max],
            w_int: PsdMatrix::identity(1),
            eta: vec![DVector::zeros(1); 1],
            w_re: PsdMatrix::identity(1),
            theta_u: vec![],
            z,
            v: v.clone(),
            pi: pi.clone(),
            zeta: 1.0,
        };
        let draws: Vec<ParameterState> = allocs.into_iter().map(state_for).collect();
        let h = draws.len();
        ChainStore {
            meta: ChainMeta {
                seed: 0,
                stream_id: 0,
                spec_hash: String::new(),
                iterations: h,
                burn_in: 0,
                thin: 1,
                dims: ChainDims {
                    n,
                    m: 1,
                    p_fe: 1,
                    p_re: 1,
                    p_int: 1,
                    q_cont: 0,
                    cat_cardinalities: vec![],
                    c_max,
                },
                rng_word_pos: "0".into(),
                final_state: state_for(vec![0; n]),
            },
            trace_zeta: vec![1.0; h],
            trace_nclus: vec![1; h],
            trace_sigma2: vec![1.0; h],
            trace_loglik: None,
            draws,
        }
    }

    #[test]
    fn constant_partition_gives_zero_one_entries() {
        let z = vec![0, 0, 1, 1, 2];
        let chain = chain_from_allocations(vec![z.clone(); 4], 3);
        let ids: Vec<usize> = (0..5).collect();
        let sim = build_similarity(&chain, &ids).unwrap();
        for a in 0..5 {
            assert_eq!(sim.s[(a, a)], 1.0);
            for b in 0..5 {
                let expect = if z[a] == z[b] { 1.0 } else { 0.0 };
                assert_eq!(sim.s[(a, b)], expect, "({a},{b})");
            }
        }
    }

    #[test]
    fn two_draw_half_cooccurrence() {
        let chain = chain_from_allocations(vec![vec![0, 0, 1], vec![0, 1, 1]], 2);
        let sim = build_similarity(&chain, &[0, 1, 2]).unwrap();
        assert_eq!(sim.s[(0, 1)], 0.5);
        assert_eq!(sim.s[(1, 2)], 0.5);
        assert_eq!(sim.s[(0, 2)], 0.0);
    }

    #[test]
    fn random_two_cluster_allocations_approach_half() {
        let mut rng = crate::stochastics::RngStream::new(31, 0);
        use rand::Rng;
        let h = 100;
        let n = 40;
        let allocs: Vec<Vec<usize>> = (0..h)
            .map(|_| (0..n).map(|_| rng.random_range(0..2usize)).collect())
            .collect();
        let chain = chain_from_allocations(allocs, 2);
        let ids: Vec<usize> = (0..n).collect();
        let sim = build_similarity(&chain, &ids).unwrap();
        // Off-diagonal entries are Binomial(h, 1/2) averages: 3 SE band.
        let se = (0.25f64 / h as f64).sqrt();
        let mut worst: f64 = 0.0;
        let mut count_off = 0;
        let mut acc = 0.0;
        for a in 0..n {
            for b in (a + 1)..n {
                worst = worst.max((sim.s[(a, b)] - 0.5).abs());
                acc += sim.s[(a, b)];
                count_off += 1;
            }
        }
        let mean_off = acc / count_off as f64;
        assert!((mean_off - 0.5).abs() < 3.0 * se, "mean {mean_off}");
        assert!(worst < 6.0 * se, "worst deviation {worst}");
    }

    #[test]
    fn subset_validation_and_file_roundtrip() {
        let chain = chain_from_allocations(vec![vec![0, 1, 0, 1]], 2);
        assert!(build_similarity(&chain, &[0, 9]).is_err());
        assert!(build_similarity(&chain, &[1, 1]).is_err());
        assert!(build_similarity(&chain, &[]).is_err());
        let sim = build_similarity(&chain, &[0, 2, 3]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("similarity.bin");
        save_similarity(&sim, &path).unwrap();
        let loaded = load_similarity(&path).unwrap();
        assert_eq!(sim, loaded);
    }

    #[test]
    fn empty_chain_is_rejected() {
        let mut chain = chain_from_allocations(vec![vec![0, 1]], 2);
        chain.draws.clear();
        chain.trace_zeta.clear();
        chain.trace_nclus.clear();
        chain.trace_sigma2.clear();
        assert!(build_similarity(&chain, &[0, 1]).is_err());
    }
}
