//! Synthetic test systems and the on-disk instance layout.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::sparsemat::{
    check_cap, normalize_rows, read_matrix_market, read_vector, to_dense, write_matrix_market,
    write_vector, CsrMatrix, DEFAULT_DENSE_CAP, RANK_TOL,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub m: usize,
    pub n: usize,
    /// Fraction of entries that are nonzero.
    pub delta: f64,
    pub seed: u64,
    pub consistent: bool,
    /// Norm of the component of `b` outside `range(A)` when inconsistent.
    pub noise_level: f64,
}

impl GenSpec {
    pub fn new(m: usize, n: usize, delta: f64, seed: u64) -> Self {
        GenSpec {
            m,
            n,
            delta,
            seed,
            consistent: true,
            noise_level: 0.0,
        }
    }

    pub fn nnz_target(&self) -> usize {
        (self.delta * self.m as f64 * self.n as f64).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InfeasibleSpec("m and n must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InfeasibleSpec(format!("delta {} not in (0, 1]", self.delta)));
        }
        if self.nnz_target() < self.m {
            return Err(Error::InfeasibleSpec(format!(
                "delta*m*n = {} is below m = {}; some row would stay empty",
                self.nnz_target(),
                self.m
            )));
        }
        if !self.consistent && !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::InfeasibleSpec(format!("bad noise level {}", self.noise_level)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    /// The vector `b` was generated from.
    pub x_star: Option<Vec<f64>>,
    /// Generation parameters echoed into `meta.json`.
    pub meta: serde_json::Value,
}

/// Sparse matrix with `round(δ m n)` standard normal entries at uniformly
/// random positions, rows normalized.
///
/// A row left empty by the placement receives an entry moved from the
/// fullest row, so the nonzero count is exact.
pub fn gen_sparse_gaussian(spec: &GenSpec) -> Result<Instance> {
    spec.validate()?;
    let (m, n) = (spec.m, spec.n);
    let mut rng = seeded(spec.seed);
    let total = m * n;
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); m];
    for pos in index::sample(&mut rng, total, spec.nnz_target()) {
        rows[pos / n].push(pos % n);
    }
    for i in 0..m {
        if rows[i].is_empty() {
            let donor = (0..m).max_by_key(|&r| rows[r].len()).expect("m > 0");
            let k = rng.random_range(0..rows[donor].len());
            let col = rows[donor].swap_remove(k);
            rows[i].push(col);
        }
    }
    let mut triplets = Vec::with_capacity(spec.nnz_target());
    for (i, cols) in rows.iter_mut().enumerate() {
        cols.sort_unstable();
        for &j in cols.iter() {
            let v: f64 = StandardNormal.sample(&mut rng);
            // a literal zero draw would silently drop the entry
            triplets.push((i, j, if v == 0.0 { f64::MIN_POSITIVE } else { v }));
        }
    }
    let raw = CsrMatrix::from_triplets(&triplets, m, n)?;
    let (a, _) = normalize_rows(&raw, &vec![0.0; m])?;

    let x_star: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut b = a.matvec(&x_star)?;
    if !spec.consistent {
        let w = range_complement_direction(&a, &mut rng)?;
        for (bi, wi) in b.iter_mut().zip(&w) {
            *bi += spec.noise_level * wi;
        }
    }
    Ok(Instance {
        a,
        b,
        x_star: Some(x_star),
        meta: json!({ "generator": "sparse_gaussian", "spec": spec }),
    })
}

/// Unit vector orthogonal to `range(A)`, from a dense SVD.
fn range_complement_direction(a: &CsrMatrix, rng: &mut crate::rng::SolverRng) -> Result<Vec<f64>> {
    let m = a.nrows();
    check_cap(m, a.ncols().max(m), DEFAULT_DENSE_CAP)?;
    let d = to_dense(a);
    // full U via the eigenvectors of A A^T
    let aat = &d * d.transpose();
    let eig = aat.symmetric_eigen();
    let top = eig.eigenvalues.max();
    let mut w = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
    for k in 0..m {
        if eig.eigenvalues[k] > RANK_TOL * top {
            let u = eig.eigenvectors.column(k);
            let c = u.dot(&w);
            w.axpy(-c, &u, 1.0);
        }
    }
    let norm = w.norm();
    if norm < 1e-8 {
        return Err(Error::InfeasibleSpec(
            "range(A) is all of R^m; an inconsistent right-hand side needs m > rank(A)".into(),
        ));
    }
    Ok((w / norm).as_slice().to_vec())
}

/// Haar-random `n x n` orthogonal matrix.
fn random_orthogonal(n: usize, rng: &mut crate::rng::SolverRng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `blocks` independent random orthogonal `n x n` matrices stacked
/// vertically: a tight frame with `A^T A = blocks * I` and unit rows.
///
/// Each orthogonal block is block-diagonal with Haar blocks of size `width`
/// (the last one possibly smaller), under random row and column
/// permutations, so every row has at most `width` nonzeros. `width = n`
/// gives dense Haar blocks.
pub fn stacked_orthogonal(blocks: usize, n: usize, width: usize, seed: u64) -> Result<Instance> {
    if blocks == 0 || n == 0 || width == 0 {
        return Err(Error::InfeasibleSpec("blocks, n and width must be positive".into()));
    }
    let width = width.min(n);
    check_cap(blocks * width, n, DEFAULT_DENSE_CAP)?;
    let mut rng = seeded(seed);
    let mut triplets = Vec::with_capacity(blocks * n * width);
    for blk in 0..blocks {
        let mut rows: Vec<usize> = (0..n).collect();
        let mut cols: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        cols.shuffle(&mut rng);
        let mut start = 0;
        while start < n {
            let w = width.min(n - start);
            let q = random_orthogonal(w, &mut rng);
            for i in 0..w {
                for j in 0..w {
                    if q[(i, j)] != 0.0 {
                        triplets.push((blk * n + rows[start + i], cols[start + j], q[(i, j)]));
                    }
                }
            }
            start += w;
        }
    }
    let raw = CsrMatrix::from_triplets(&triplets, blocks * n, n)?;
    // rows are unit up to rounding; renormalize so the flag is exact
    let (a, _) = normalize_rows(&raw, &vec![0.0; blocks * n])?;
    let x_star: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let b = a.matvec(&x_star)?;
    Ok(Instance {
        a,
        b,
        x_star: Some(x_star),
        meta: json!({
            "generator": "stacked_orthogonal",
            "blocks": blocks,
            "n": n,
            "width": width,
            "seed": seed,
        }),
    })
}

pub fn write_instance(inst: &Instance, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("A.mtx"))?);
    write_matrix_market(&inst.a, &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("b.txt"))?);
    write_vector(&inst.b, &mut w)?;
    w.flush()?;
    let xs_path = dir.join("xstar.txt");
    match &inst.x_star {
        Some(x) => {
            let mut w = BufWriter::new(File::create(&xs_path)?);
            write_vector(x, &mut w)?;
            w.flush()?;
        }
        None if xs_path.exists() => fs::remove_file(&xs_path)?,
        None => {}
    }
    let meta = json!({
        "instance": inst.meta,
        "m": inst.a.nrows(),
        "n": inst.a.ncols(),
        "nnz": inst.a.nnz(),
        "frob_sq": inst.a.frob_sq(),
    });
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_instance(dir: &Path) -> Result<Instance> {
    let a = read_matrix_market(BufReader::new(File::open(dir.join("A.mtx"))?))?;
    let b = read_vector(BufReader::new(File::open(dir.join("b.txt"))?))?;
    crate::error::check_len("b", b.len(), a.nrows())?;
    let xs_path = dir.join("xstar.txt");
    let x_star = if xs_path.exists() {
        let x = read_vector(BufReader::new(File::open(xs_path)?))?;
        crate::error::check_len("xstar", x.len(), a.ncols())?;
        Some(x)
    } else {
        None
    };
    let meta_path = dir.join("meta.json");
    let meta = if meta_path.exists() {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(meta_path)?)?;
        v.get("instance").cloned().unwrap_or(v)
    } else {
        serde_json::Value::Null
    };
    Ok(Instance { a, b, x_star, meta })
}
