//! Chain persistence: a directory holding one columnar binary file per
//! parameter block plus a text metadata file.
//!
//! Tensor file layout (little-endian): magic `PLMM`, version u32, dtype u8
//! (0 = f64, 1 = i64), ndim u8, `ndim` u64 dimensions, then the payload in
//! row-major order.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::chain::{ChainMeta, ChainStore};
use crate::model::state::{stick_to_weights, ClusterAssignParams, ParameterState};
use crate::stochastics::PsdMatrix;

const MAGIC: &[u8; 4] = b"PLMM";
const VERSION: u32 = 1;

#[derive(Clone, Copy, PartialEq, Debug)]
enum Dtype {
    F64,
    I64,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F64 => 0,
            Dtype::I64 => 1,
        }
    }

    fn from_tag(tag: u8, path: &Path) -> Result<Self> {
        match tag {
            0 => Ok(Dtype::F64),
            1 => Ok(Dtype::I64),
            other => Err(Error::Format(format!(
                "{}: unknown dtype tag {other}",
                path.display()
            ))),
        }
    }
}

fn write_header(w: &mut impl Write, dtype: Dtype, dims: &[u64]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[dtype.tag(), dims.len() as u8])?;
    for &d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    Ok(())
}

fn read_header(r: &mut impl Read, path: &Path) -> Result<(Dtype, Vec<u64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic bytes",
            path.display()
        )));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version)?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let mut tags = [0u8; 2];
    r.read_exact(&mut tags)?;
    let dtype = Dtype::from_tag(tags[0], path)?;
    let mut dims = Vec::with_capacity(tags[1] as usize);
    for _ in 0..tags[1] {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        dims.push(u64::from_le_bytes(buf));
    }
    Ok((dtype, dims))
}

fn write_f64_tensor(path: &Path, dims: &[u64], values: impl Iterator<Item = f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, Dtype::F64, dims)?;
    let mut count = 0u64;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
        count += 1;
    }
    let expected: u64 = dims.iter().product();
    if count != expected {
        return Err(Error::Format(format!(
            "{}: wrote {count} values, expected {expected}",
            path.display()
        )));
    }
    w.flush()?;
    Ok(())
}

fn write_i64_tensor(path: &Path, dims: &[u64], values: impl Iterator<Item = i64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, Dtype::I64, dims)?;
    let mut count = 0u64;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
        count += 1;
    }
    let expected: u64 = dims.iter().product();
    if count != expected {
        return Err(Error::Format(format!(
            "{}: wrote {count} values, expected {expected}",
            path.display()
        )));
    }
    w.flush()?;
    Ok(())
}

fn read_tensor(path: &Path, expect_dtype: Dtype, expect_dims: &[u64]) -> Result<Vec<u8>> {
    let mut r = BufReader::new(File::open(path)?);
    let (dtype, dims) = read_header(&mut r, path)?;
    if dtype != expect_dtype {
        return Err(Error::Format(format!(
            "{}: dtype mismatch",
            path.display()
        )));
    }
    if dims != expect_dims {
        return Err(Error::Format(format!(
            "{}: dims {dims:?}, expected {expect_dims:?}",
            path.display()
        )));
    }
    let len: u64 = dims.iter().product::<u64>() * 8;
    let mut payload = Vec::with_capacity(len as usize);
    r.read_to_end(&mut payload)?;
    if payload.len() as u64 != len {
        return Err(Error::Format(format!(
            "{}: payload has {} bytes, expected {len}",
            path.display(),
            payload.len()
        )));
    }
    Ok(payload)
}

fn read_f64_tensor(path: &Path, dims: &[u64]) -> Result<Vec<f64>> {
    let bytes = read_tensor(path, Dtype::F64, dims)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_i64_tensor(path: &Path, dims: &[u64]) -> Result<Vec<i64>> {
    let bytes = read_tensor(path, Dtype::I64, dims)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// FNV-1a fingerprint used for the spec hash in chain metadata.
pub fn fingerprint(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

/// Flattened width of one cluster's assignment parameters.
fn theta_width(q: usize, cats: &[usize]) -> usize {
    q + q * q + cats.iter().sum::<usize>()
}

fn file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Persist a chain as a directory of columnar files plus `meta`.
pub fn save_chain(chain: &ChainStore, dir: &Path) -> Result<()> {
    chain.validate()?;
    fs::create_dir_all(dir)?;
    let h = chain.kept() as u64;
    let d = &chain.meta.dims;
    let meta_json = serde_json::to_string_pretty(&chain.meta)
        .map_err(|e| Error::Format(format!("meta serialization: {e}")))?;
    fs::write(file(dir, "meta"), meta_json)?;

    write_f64_tensor(
        &file(dir, "trace_zeta"),
        &[h],
        chain.trace_zeta.iter().copied(),
    )?;
    write_i64_tensor(
        &file(dir, "trace_nclus"),
        &[h],
        chain.trace_nclus.iter().map(|&v| v as i64),
    )?;
    write_f64_tensor(
        &file(dir, "sigma2"),
        &[h],
        chain.trace_sigma2.iter().copied(),
    )?;
    if let Some(ll) = &chain.trace_loglik {
        write_f64_tensor(&file(dir, "trace_loglik"), &[h], ll.iter().copied())?;
    }
    write_f64_tensor(
        &file(dir, "beta"),
        &[h, d.p_fe as u64],
        chain.draws.iter().flat_map(|s| s.beta.iter().copied()),
    )?;
    write_f64_tensor(
        &file(dir, "gamma"),
        &[h, d.c_max as u64, d.p_int as u64],
        chain
            .draws
            .iter()
            .flat_map(|s| s.gamma.iter().flat_map(|g| g.iter().copied())),
    )?;
    write_f64_tensor(
        &file(dir, "eta"),
        &[h, d.m as u64, d.p_re as u64],
        chain
            .draws
            .iter()
            .flat_map(|s| s.eta.iter().flat_map(|e| e.iter().copied())),
    )?;
    write_f64_tensor(
        &file(dir, "wre"),
        &[h, d.p_re as u64, d.p_re as u64],
        chain
            .draws
            .iter()
            .flat_map(|s| s.w_re.matrix().transpose().iter().copied().collect::<Vec<_>>()),
    )?;
    write_f64_tensor(
        &file(dir, "wint"),
        &[h, d.p_int as u64, d.p_int as u64],
        chain
            .draws
            .iter()
            .flat_map(|s| s.w_int.matrix().transpose().iter().copied().collect::<Vec<_>>()),
    )?;
    let width = theta_width(d.q_cont, &d.cat_cardinalities) as u64;
    write_f64_tensor(
        &file(dir, "theta_u"),
        &[h, d.c_max as u64, width],
        chain.draws.iter().flat_map(|s| {
            s.theta_u.iter().flat_map(|t| {
                t.mean
                    .iter()
                    .copied()
                    .chain(t.cov.matrix().transpose().iter().copied().collect::<Vec<_>>())
                    .chain(t.cat_probs.iter().flat_map(|p| p.iter().copied()))
                    .collect::<Vec<_>>()
            })
        }),
    )?;
    write_i64_tensor(
        &file(dir, "alloc"),
        &[h, d.n as u64],
        chain
            .draws
            .iter()
            .flat_map(|s| s.z.iter().map(|&z| z as i64)),
    )?;
    write_f64_tensor(
        &file(dir, "sticks"),
        &[h, d.c_max as u64],
        chain.draws.iter().flat_map(|s| s.v.iter().copied()),
    )?;
    Ok(())
}

/// Load a chain directory written by [`save_chain`].
pub fn load_chain(dir: &Path) -> Result<ChainStore> {
    let meta_path = file(dir, "meta");
    let meta_json = fs::read_to_string(&meta_path)?;
    let meta: ChainMeta = serde_json::from_str(&meta_json)
        .map_err(|e| Error::Format(format!("{}: {e}", meta_path.display())))?;
    let d = meta.dims.clone();

    let trace_zeta = read_any_len_f64(&file(dir, "trace_zeta"))?;
    let h = trace_zeta.len() as u64;
    let trace_nclus: Vec<usize> = read_i64_tensor(&file(dir, "trace_nclus"), &[h])?
        .into_iter()
        .map(|v| v as usize)
        .collect();
    let trace_sigma2 = read_f64_tensor(&file(dir, "sigma2"), &[h])?;
    let trace_loglik = if file(dir, "trace_loglik").exists() {
        Some(read_f64_tensor(&file(dir, "trace_loglik"), &[h])?)
    } else {
        None
    };

    let beta = read_f64_tensor(&file(dir, "beta"), &[h, d.p_fe as u64])?;
    let gamma = read_f64_tensor(&file(dir, "gamma"), &[h, d.c_max as u64, d.p_int as u64])?;
    let eta = read_f64_tensor(&file(dir, "eta"), &[h, d.m as u64, d.p_re as u64])?;
    let wre = read_f64_tensor(&file(dir, "wre"), &[h, d.p_re as u64, d.p_re as u64])?;
    let wint = read_f64_tensor(&file(dir, "wint"), &[h, d.p_int as u64, d.p_int as u64])?;
    let width = theta_width(d.q_cont, &d.cat_cardinalities);
    let theta = read_f64_tensor(&file(dir, "theta_u"), &[h, d.c_max as u64, width as u64])?;
    let alloc = read_i64_tensor(&file(dir, "alloc"), &[h, d.n as u64])?;
    let sticks = read_f64_tensor(&file(dir, "sticks"), &[h, d.c_max as u64])?;

    let h = h as usize;
    let mut draws = Vec::with_capacity(h);
    for t in 0..h {
        let beta_t = DVector::from_iterator(d.p_fe, beta[t * d.p_fe..(t + 1) * d.p_fe].iter().copied());
        let gamma_t: Vec<DVector<f64>> = (0..d.c_max)
            .map(|c| {
                let base = (t * d.c_max + c) * d.p_int;
                DVector::from_iterator(d.p_int, gamma[base..base + d.p_int].iter().copied())
            })
            .collect();
        let eta_t: Vec<DVector<f64>> = (0..d.m)
            .map(|j| {
                let base = (t * d.m + j) * d.p_re;
                DVector::from_iterator(d.p_re, eta[base..base + d.p_re].iter().copied())
            })
            .collect();
        let wre_t = row_major_matrix(&wre[t * d.p_re * d.p_re..(t + 1) * d.p_re * d.p_re], d.p_re);
        let wint_t =
            row_major_matrix(&wint[t * d.p_int * d.p_int..(t + 1) * d.p_int * d.p_int], d.p_int);
        let mut theta_t = Vec::with_capacity(d.c_max);
        for c in 0..d.c_max {
            let base = (t * d.c_max + c) * width;
            let slice = &theta[base..base + width];
            let mean = DVector::from_iterator(d.q_cont, slice[..d.q_cont].iter().copied());
            let cov = row_major_matrix(&slice[d.q_cont..d.q_cont + d.q_cont * d.q_cont], d.q_cont);
            let mut cat_probs = Vec::with_capacity(d.cat_cardinalities.len());
            let mut offset = d.q_cont + d.q_cont * d.q_cont;
            for &k in &d.cat_cardinalities {
                cat_probs.push(DVector::from_iterator(
                    k,
                    slice[offset..offset + k].iter().copied(),
                ));
                offset += k;
            }
            theta_t.push(ClusterAssignParams {
                mean,
                cov: PsdMatrix::new(cov, "load_chain theta_u")?,
                cat_probs,
            });
        }
        let z_t: Vec<usize> = alloc[t * d.n..(t + 1) * d.n]
            .iter()
            .map(|&v| v as usize)
            .collect();
        let v_t: Vec<f64> = sticks[t * d.c_max..(t + 1) * d.c_max].to_vec();
        let pi_t = stick_to_weights(&v_t);
        draws.push(ParameterState {
            beta: beta_t,
            sigma2: trace_sigma2[t],
            gamma: gamma_t,
            w_int: PsdMatrix::new(wint_t, "load_chain wint")?,
            eta: eta_t,
            w_re: PsdMatrix::new(wre_t, "load_chain wre")?,
            theta_u: theta_t,
            z: z_t,
            v: v_t,
            pi: pi_t,
            zeta: trace_zeta[t],
        });
    }

    let chain = ChainStore {
        meta,
        draws,
        trace_zeta,
        trace_nclus,
        trace_sigma2,
        trace_loglik,
    };
    chain.validate()?;
    Ok(chain)
}

fn row_major_matrix(slice: &[f64], dim: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(dim, dim, slice)
}

/// Read a rank-1 f64 tensor of unknown length.
fn read_any_len_f64(path: &Path) -> Result<Vec<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let (dtype, dims) = read_header(&mut r, path)?;
    if dtype != Dtype::F64 || dims.len() != 1 {
        return Err(Error::Format(format!(
            "{}: expected rank-1 f64 tensor",
            path.display()
        )));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() as u64 != dims[0] * 8 {
        return Err(Error::Format(format!(
            "{}: truncated payload",
            path.display()
        )));
    }
    Ok(payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
